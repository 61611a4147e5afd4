use std::cmp::Ordering;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geometry::{Point2, Point3, Polygon};
use crate::scenario::{group_snapshot, DeviceGroup, DeviceSnapshot, Fleet, Scenario};

use super::lifetime::lifetime_from_energy;
use super::oracle::enumerate_levels;
use super::plan::{build_plan, DeploymentPlan, PlanContext, PlacedUav};
use super::{DimensionConfig, DimensionError, Objectives, Term};
use crate::geometry::leg_length;

/// One evaluated plan.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontPoint {
    pub plan: DeploymentPlan,
    pub objectives: Objectives,
    pub plan_id: String,
}

impl FrontPoint {
    pub fn new(plan: DeploymentPlan, objectives: Objectives) -> Self {
        let plan_id = plan.plan_id();
        Self {
            plan,
            objectives,
            plan_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DimensionResult {
    /// Non-dominated zero-violation plans, ascending by UAV count.
    pub front: Vec<FrontPoint>,
    /// Best plan found at counts where the rate targets could not be met.
    pub flagged: Vec<FrontPoint>,
    pub diagnostics: Vec<String>,
}

impl DimensionResult {
    /// Plan with the fewest UAVs on the front.
    pub fn min_count_plan(&self) -> Option<&FrontPoint> {
        self.front.first()
    }
}

fn front_order(a: &FrontPoint, b: &FrontPoint) -> Ordering {
    a.objectives
        .uav_count
        .cmp(&b.objectives.uav_count)
        .then(b.objectives.min_lifetime.total_cmp(&a.objectives.min_lifetime))
        .then(a.plan_id.cmp(&b.plan_id))
}

/// Mutually non-dominated subset in (count ↓, lifetime ↑); duplicates in
/// both objectives are kept once (lowest plan id).
pub fn pareto_filter(points: Vec<FrontPoint>) -> Vec<FrontPoint> {
    let mut points = points;
    points.sort_by(front_order);
    let mut out: Vec<FrontPoint> = Vec::new();
    for p in points {
        let beaten = out.iter().any(|q| {
            q.objectives.dominates(&p.objectives)
                || (q.objectives.uav_count == p.objectives.uav_count
                    && q.objectives.min_lifetime == p.objectives.min_lifetime)
        });
        if !beaten {
            out.push(p);
        }
    }
    out
}

pub fn dimension_short_term(
    scenario: &Scenario,
    fleet: &Fleet,
    config: &DimensionConfig,
) -> Result<DimensionResult, DimensionError> {
    dimension(scenario, fleet, Term::Short, config)
}

pub fn dimension_long_term(
    scenario: &Scenario,
    fleet: &Fleet,
    config: &DimensionConfig,
) -> Result<DimensionResult, DimensionError> {
    dimension(scenario, fleet, Term::Long, config)
}

/// Front for the scenario's demand using only the fleet's `term` platforms.
pub fn dimension(
    scenario: &Scenario,
    fleet: &Fleet,
    term: Term,
    config: &DimensionConfig,
) -> Result<DimensionResult, DimensionError> {
    let fleet = fleet.restricted_to(term);
    if fleet.uavs.is_empty() {
        return Err(DimensionError::NoFleet(term));
    }
    let t = config.time.unwrap_or(scenario.request.start());
    let snapshot = scenario.demand_at(t)?;
    let ctx = PlanContext::new(scenario, config);
    let zones = scenario.geography.zone_polygons();
    dimension_snapshot(&snapshot, &fleet, &ctx, &zones, config)
}

/// k-sweep over a fixed demand snapshot.
pub fn dimension_snapshot(
    snapshot: &DeviceSnapshot,
    fleet: &Fleet,
    ctx: &PlanContext,
    zones: &[Polygon],
    config: &DimensionConfig,
) -> Result<DimensionResult, DimensionError> {
    if snapshot.is_empty() {
        let plan = DeploymentPlan::empty();
        let (plan, obj) = build_plan(plan.uavs, snapshot, ctx)?;
        return Ok(DimensionResult {
            front: vec![FrontPoint::new(plan, obj)],
            ..Default::default()
        });
    }
    if fleet.uavs.is_empty() {
        return Err(DimensionError::InfeasibleAssociation("empty fleet".into()));
    }
    let groups = group_snapshot(snapshot, config.group_radius);
    let k_hi = config
        .k_max
        .unwrap_or(fleet.uavs.len())
        .min(fleet.uavs.len())
        .min(groups.len());
    let k_lo = config.k_min.max(1);
    let search = Search {
        snapshot,
        fleet,
        ctx,
        zones,
        config,
        groups: &groups,
    };
    let jobs: Vec<(usize, usize)> = (k_lo..=k_hi)
        .flat_map(|k| (0..config.restarts.max(1)).map(move |r| (k, r)))
        .collect();
    let mut outcomes: Vec<(usize, usize, Result<Option<Candidate>, String>)> = jobs
        .par_iter()
        .map(|&(k, r)| (k, r, search.restart(k, r)))
        .collect();
    outcomes.sort_by_key(|o| (o.0, o.1));

    let mut result = DimensionResult::default();
    let mut feasible = Vec::new();
    for k in k_lo..=k_hi {
        let mut best: Option<Candidate> = None;
        for (_, r, out) in outcomes.iter().filter(|o| o.0 == k) {
            match out {
                Ok(Some(c)) => {
                    if best.as_ref().map_or(true, |b| c.key_cmp(b) == Ordering::Less) {
                        best = Some(c.clone());
                    }
                }
                Ok(None) => {}
                Err(e) => result.diagnostics.push(format!("k={k} restart {r}: {e}")),
            }
        }
        match best {
            Some(c) if c.objectives.feasible() => feasible.push(FrontPoint::new(c.plan, c.objectives)),
            Some(c) => {
                result.diagnostics.push(format!(
                    "k={k}: best plan misses rates by {:.3} bit/s",
                    c.objectives.max_rate_violation
                ));
                result.flagged.push(FrontPoint::new(c.plan, c.objectives));
            }
            None => result.diagnostics.push(format!("k={k}: no valid placement")),
        }
    }
    result.front = pareto_filter(feasible);
    result.flagged.sort_by(front_order);
    Ok(result)
}

#[derive(Debug, Clone)]
struct Candidate {
    plan: DeploymentPlan,
    objectives: Objectives,
}

impl Candidate {
    fn key_cmp(&self, other: &Candidate) -> Ordering {
        let (a, b) = (&self.objectives, &other.objectives);
        a.max_rate_violation
            .total_cmp(&b.max_rate_violation)
            .then(b.min_lifetime.total_cmp(&a.min_lifetime))
            .then(a.uav_count.cmp(&b.uav_count))
            .then_with(|| self.plan.plan_id().cmp(&other.plan.plan_id()))
    }
}

struct Search<'a> {
    snapshot: &'a DeviceSnapshot,
    fleet: &'a Fleet,
    ctx: &'a PlanContext,
    zones: &'a [Polygon],
    config: &'a DimensionConfig,
    groups: &'a [DeviceGroup],
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Weighted k-means with k-means++ seeding. Returns cluster centers.
pub(crate) fn weighted_kmeans(
    points: &[Point2],
    weights: &[f64],
    k: usize,
    iterations: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Point2> {
    let n = points.len();
    let pick = |rng: &mut ChaCha8Rng, mass: &[f64]| -> usize {
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return 0;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, m) in mass.iter().enumerate() {
            if u < *m {
                return i;
            }
            u -= m;
        }
        n - 1
    };
    let mut centers = vec![points[pick(rng, weights)]];
    while centers.len() < k {
        let mass: Vec<f64> = (0..n)
            .map(|i| {
                let d = centers
                    .iter()
                    .map(|c| c.distance(&points[i]))
                    .fold(f64::INFINITY, f64::min);
                weights[i] * d * d
            })
            .collect();
        if mass.iter().sum::<f64>() > 0.0 {
            centers.push(points[pick(rng, &mass)]);
        } else {
            // every point already coincides with a center
            centers.push(points[centers.len() % n]);
        }
    }
    let mut label = vec![usize::MAX; n];
    for _ in 0..iterations {
        let mut changed = false;
        for i in 0..n {
            let best = (0..k)
                .min_by(|&a, &b| {
                    centers[a]
                        .distance(&points[i])
                        .total_cmp(&centers[b].distance(&points[i]))
                        .then(a.cmp(&b))
                })
                .unwrap_or(0);
            if label[i] != best {
                label[i] = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for i in (0..n).filter(|&i| label[i] == c) {
                sx += weights[i] * points[i].x;
                sy += weights[i] * points[i].y;
                sw += weights[i];
            }
            if sw > 0.0 {
                *center = Point2::new(sx / sw, sy / sw);
            }
        }
        if !changed {
            break;
        }
    }
    centers
}

impl<'a> Search<'a> {
    fn altitudes(&self) -> Vec<f64> {
        if let Some(a) = &self.config.altitude_candidates {
            return a.clone();
        }
        let mut alts: Vec<f64> = self
            .fleet
            .specs
            .iter()
            .filter(|s| self.fleet.uavs.iter().any(|u| u.spec == s.name))
            .flat_map(|s| s.default_altitudes())
            .collect();
        alts.sort_by(f64::total_cmp);
        alts.dedup();
        alts
    }

    fn blocked(&self, p: &Point3) -> bool {
        self.zones.iter().any(|z| z.contains(&p.xy()))
    }

    fn restart(&self, k: usize, r: usize) -> Result<Option<Candidate>, String> {
        let seed = splitmix(self.config.seed ^ splitmix((k as u64) << 32 | r as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Point2> = self.groups.iter().map(|g| g.centroid).collect();
        let weights: Vec<f64> = self.groups.iter().map(|g| g.rate.max(1e-9)).collect();
        let centers = weighted_kmeans(&points, &weights, k, self.config.kmeans_iterations, &mut rng);

        let initial: Vec<Vec<Point3>> = match &self.config.candidate_locations {
            Some(pool) => vec![snap_to_pool(&centers, pool, r)],
            None => self
                .altitudes()
                .into_iter()
                .map(|h| centers.iter().map(|c| c.with_z(h)).collect())
                .collect(),
        };
        let mut best: Option<Candidate> = None;
        for start in initial {
            if let Some(c) = self.evaluate(&start)? {
                if best.as_ref().map_or(true, |b| c.key_cmp(b) == Ordering::Less) {
                    best = Some(c);
                }
            }
        }
        let Some(mut current) = best else {
            return Ok(None);
        };
        let mut locations: Vec<Point3> = current.plan.uavs.iter().map(|u| u.location).collect();
        if locations.len() < k {
            return Ok(Some(current));
        }

        let mut step = 25.0;
        for _ in 0..self.config.local_search_rounds {
            let mut improved: Option<(Candidate, Vec<Point3>)> = None;
            for moved in self.neighbours(&locations, step) {
                if let Some(c) = self.evaluate(&moved)? {
                    let reference = improved.as_ref().map(|x| &x.0).unwrap_or(&current);
                    if c.plan.uavs.len() == k && c.key_cmp(reference) == Ordering::Less {
                        improved = Some((c, moved));
                    }
                }
            }
            match improved {
                Some((c, l)) => {
                    current = c;
                    locations = l;
                }
                None if self.config.candidate_locations.is_none() && step > 5.0 => step /= 2.0,
                None => break,
            }
        }
        Ok(Some(current))
    }

    fn neighbours(&self, locations: &[Point3], step: f64) -> Vec<Vec<Point3>> {
        let mut out = Vec::new();
        match &self.config.candidate_locations {
            Some(pool) => {
                for i in 0..locations.len() {
                    for p in pool {
                        if !locations.contains(p) {
                            let mut m = locations.to_vec();
                            m[i] = *p;
                            out.push(m);
                        }
                    }
                }
            }
            None => {
                let alts = self.altitudes();
                for i in 0..locations.len() {
                    for (dx, dy) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                        let mut m = locations.to_vec();
                        m[i].x += dx;
                        m[i].y += dy;
                        out.push(m);
                    }
                    for &h in &alts {
                        if h != locations[i].z {
                            let mut m = locations.to_vec();
                            m[i].z = h;
                            out.push(m);
                        }
                    }
                }
            }
        }
        out
    }

    /// Assigns fleet UAVs to the hover points and evaluates the plan.
    fn build(&self, uavs: Vec<PlacedUav>) -> Result<(DeploymentPlan, Objectives), DimensionError> {
        let Some(levels) = &self.config.power_levels else {
            return build_plan(uavs, self.snapshot, self.ctx);
        };
        enumerate_levels(&uavs, self.snapshot, levels, self.ctx, true)?
            .into_iter()
            .map(|p| Candidate {
                plan: p.plan,
                objectives: p.objectives,
            })
            .min_by(|a, b| a.key_cmp(b))
            .map(|c| (c.plan, c.objectives))
            .ok_or_else(|| DimensionError::InfeasibleAssociation("no power level combination meets the rates".into()))
    }

    fn evaluate(&self, locations: &[Point3]) -> Result<Option<Candidate>, String> {
        if locations.iter().any(|p| self.blocked(p)) {
            return Ok(None);
        }
        let zero = vec![0.0; locations.len()];
        let Some(uavs) = assign_fleet(self.fleet, locations, &zero) else {
            return Ok(None);
        };
        let (plan, objectives) = match self.build(uavs) {
            Ok(x) => x,
            Err(DimensionError::InfeasibleAssociation(_)) | Err(DimensionError::NonConvergence { .. }) => {
                return Ok(None)
            }
            Err(e) => return Err(e.to_string()),
        };
        // reassign with the actual per-cell radio load, which can reorder lifetimes
        let located: Vec<Point3> = plan.uavs.iter().map(|u| u.location).collect();
        let loads: Vec<f64> = (0..plan.uavs.len()).map(|j| plan.comm_power(j)).collect();
        if let Some(uavs) = assign_fleet(self.fleet, &located, &loads) {
            let same = uavs.iter().zip(&plan.uavs).all(|(a, b)| a.uav_id == b.uav_id);
            if !same {
                if let Ok((p2, o2)) = self.build(uavs) {
                    let c2 = Candidate {
                        plan: p2,
                        objectives: o2,
                    };
                    let c1 = Candidate { plan, objectives };
                    return Ok(Some(if c2.key_cmp(&c1) == Ordering::Less { c2 } else { c1 }));
                }
            }
        }
        Ok(Some(Candidate { plan, objectives }))
    }
}

/// Each centroid takes the `offset`-th nearest pool point not yet taken,
/// heaviest first in declaration order.
fn snap_to_pool(centers: &[Point2], pool: &[Point3], offset: usize) -> Vec<Point3> {
    let mut taken = vec![false; pool.len()];
    let mut out = Vec::new();
    for c in centers {
        let mut free: Vec<usize> = (0..pool.len()).filter(|&j| !taken[j]).collect();
        free.sort_by(|&a, &b| pool[a].xy().distance(c).total_cmp(&pool[b].xy().distance(c)).then(a.cmp(&b)));
        if let Some(&j) = free.get(offset % free.len().max(1)) {
            taken[j] = true;
            out.push(pool[j]);
        }
    }
    out
}

/// Injective fleet-to-location map maximising the smallest lifetime estimate,
/// exhaustive when small, greedy otherwise. Pairs whose altitude falls outside
/// the UAV's range are excluded.
pub(crate) fn assign_fleet(fleet: &Fleet, locations: &[Point3], loads: &[f64]) -> Option<Vec<PlacedUav>> {
    let n = fleet.uavs.len();
    let k = locations.len();
    if k > n {
        return None;
    }
    let score = |u: usize, c: usize| -> f64 {
        let fu = &fleet.uavs[u];
        let spec = fleet.spec_of(fu);
        let at = locations[c];
        let [lo, hi] = spec.altitude_range;
        if at.z < lo - 1e-9 || at.z > hi + 1e-9 || loads[c] > spec.comm_power_max * (1.0 + 1e-9) {
            return f64::NEG_INFINITY;
        }
        let legs = 2.0 * leg_length(&fu.start, &at) / spec.speed_max;
        lifetime_from_energy(spec.battery_energy, spec.travel_power * legs, spec.hover_power, loads[c])
    };
    let table: Vec<Vec<f64>> = (0..n).map(|u| (0..k).map(|c| score(u, c)).collect()).collect();

    let permutations: f64 = (0..k).map(|i| (n - i) as f64).product();
    let chosen: Vec<usize> = if permutations <= 5040.0 {
        let mut best: Option<(f64, f64, Vec<usize>)> = None;
        let mut current = Vec::with_capacity(k);
        let mut used = vec![false; n];
        fn rec(
            c: usize,
            k: usize,
            table: &[Vec<f64>],
            used: &mut [bool],
            current: &mut Vec<usize>,
            best: &mut Option<(f64, f64, Vec<usize>)>,
        ) {
            if c == k {
                let vals: Vec<f64> = current.iter().enumerate().map(|(c, &u)| table[u][c]).collect();
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let sum: f64 = vals.iter().map(|v| v.min(1e12)).sum();
                let better = match best {
                    None => true,
                    Some((bm, bs, _)) => min > *bm || (min == *bm && sum > *bs),
                };
                if better {
                    *best = Some((min, sum, current.clone()));
                }
                return;
            }
            for u in 0..used.len() {
                if !used[u] {
                    used[u] = true;
                    current.push(u);
                    rec(c + 1, k, table, used, current, best);
                    current.pop();
                    used[u] = false;
                }
            }
        }
        rec(0, k, &table, &mut used, &mut current, &mut best);
        best?.2
    } else {
        let mut used = vec![false; n];
        let mut out = vec![usize::MAX; k];
        for _ in 0..k {
            let mut pick: Option<(usize, usize, f64)> = None;
            for c in (0..k).filter(|&c| out[c] == usize::MAX) {
                for u in (0..n).filter(|&u| !used[u]) {
                    if pick.map_or(true, |(_, _, s)| table[u][c] > s) {
                        pick = Some((u, c, table[u][c]));
                    }
                }
            }
            let (u, c, _) = pick?;
            used[u] = true;
            out[c] = u;
        }
        out
    };
    if chosen.iter().enumerate().any(|(c, &u)| table[u][c] == f64::NEG_INFINITY) {
        return None;
    }
    Some(
        chosen
            .iter()
            .zip(locations)
            .map(|(&u, &loc)| {
                let fu = &fleet.uavs[u];
                PlacedUav {
                    uav_id: fu.id.clone(),
                    spec: fleet.spec_of(fu).clone(),
                    start: fu.start,
                    location: loc,
                }
            })
            .collect(),
    )
}
