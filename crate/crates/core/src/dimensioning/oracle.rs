use crate::geometry::Point3;
use crate::scenario::{DeviceSnapshot, Fleet, Scenario};

use super::assoc::associate_devices;
use super::heuristic::{pareto_filter, FrontPoint};
use super::plan::{assemble, evaluate_with_snapshot, PlanContext, PlacedUav};
use super::power::{allocate_power, PowerAllocation};
use super::{DimensionConfig, DimensionError};

/// Largest instance the exhaustive oracle accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleLimits {
    pub candidates: usize,
    pub fleet: usize,
    pub devices: usize,
    pub power_levels: usize,
}

pub const ORACLE_LIMITS: OracleLimits = OracleLimits {
    candidates: 6,
    fleet: 3,
    devices: 5,
    power_levels: 4,
};

/// Exact front by enumeration of fleet subsets, injective location maps and a
/// total radio power level per UAV. Device powers at level `ℓ` follow the
/// shape of the minimum-power vector, scaled so the UAV's device links sum to `ℓ`.
pub fn brute_force_front(
    scenario: &Scenario,
    fleet: &Fleet,
    candidates: &[Point3],
    power_levels: &[f64],
) -> Result<Vec<FrontPoint>, DimensionError> {
    let snapshot = scenario.demand_at(scenario.request.start())?;
    let ctx = PlanContext::new(scenario, &DimensionConfig::default());
    brute_force_snapshot(&snapshot, fleet, candidates, power_levels, &ctx)
}

pub(crate) fn brute_force_snapshot(
    snapshot: &DeviceSnapshot,
    fleet: &Fleet,
    candidates: &[Point3],
    power_levels: &[f64],
    ctx: &PlanContext,
) -> Result<Vec<FrontPoint>, DimensionError> {
    let l = ORACLE_LIMITS;
    let checks = [
        ("candidate locations", candidates.len(), l.candidates),
        ("fleet UAVs", fleet.uavs.len(), l.fleet),
        ("devices", snapshot.len(), l.devices),
        ("power levels", power_levels.len(), l.power_levels),
    ];
    for (what, have, max) in checks {
        if have > max {
            return Err(DimensionError::Size(format!("{have} {what}, limit {max}")));
        }
    }
    if fleet.uavs.is_empty() {
        return Ok(Vec::new());
    }
    if snapshot.is_empty() {
        let plan = super::plan::DeploymentPlan::empty();
        let obj = evaluate_with_snapshot(&plan, snapshot, ctx)?;
        return Ok(vec![FrontPoint::new(plan, obj)]);
    }

    let mut points = Vec::new();
    let n = fleet.uavs.len();
    for mask in 1u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|&u| mask >> u & 1 == 1).collect();
        if members.len() > candidates.len() {
            continue;
        }
        for map in injective_maps(members.len(), candidates.len()) {
            let uavs: Vec<PlacedUav> = members
                .iter()
                .zip(&map)
                .map(|(&u, &c)| {
                    let fu = &fleet.uavs[u];
                    PlacedUav {
                        uav_id: fu.id.clone(),
                        spec: fleet.spec_of(fu).clone(),
                        start: fu.start,
                        location: candidates[c],
                    }
                })
                .collect();
            if uavs.iter().any(|u| {
                let [lo, hi] = u.spec.altitude_range;
                u.location.z < lo - 1e-9 || u.location.z > hi + 1e-9
            }) {
                continue;
            }
            points.extend(enumerate_levels(&uavs, snapshot, power_levels, ctx, false)?);
        }
    }
    Ok(pareto_filter(points))
}

/// Every level combination within budget; violating ones only if `keep_violating`.
pub(crate) fn enumerate_levels(
    uavs: &[PlacedUav],
    snapshot: &DeviceSnapshot,
    power_levels: &[f64],
    ctx: &PlanContext,
    keep_violating: bool,
) -> Result<Vec<FrontPoint>, DimensionError> {
    let positions: Vec<Point3> = uavs.iter().map(|u| u.location).collect();
    let assoc = match associate_devices(snapshot, &positions, &ctx.channels, &ctx.radio) {
        Ok(a) => a,
        Err(DimensionError::InfeasibleAssociation(_)) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    // a UAV without devices belongs to a smaller subset, enumerated on its own
    if assoc.load(uavs.len()).contains(&0) {
        return Ok(Vec::new());
    }
    let unbounded: Vec<PlacedUav> = uavs
        .iter()
        .map(|u| {
            let mut u = u.clone();
            u.spec.comm_power_max = f64::INFINITY;
            u
        })
        .collect();
    let shape = match allocate_power(&assoc, snapshot, &unbounded, ctx) {
        Ok(a) => a,
        Err(DimensionError::NonConvergence { .. }) => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut shape_sum = vec![0.0; uavs.len()];
    for (i, &u) in assoc.uav_of.iter().enumerate() {
        shape_sum[u] += shape.device[i];
    }
    let backbone_load: Vec<f64> = (0..uavs.len())
        .map(|j| {
            shape.backbone[j].iter().sum::<f64>()
                + shape.gateway.iter().filter(|g| g.0 == j).map(|g| g.2).sum::<f64>()
        })
        .collect();

    let mut out = Vec::new();
    let s = uavs.len();
    let combos = power_levels.len().pow(s as u32);
    for code in 0..combos {
        let mut rest = code;
        let levels: Vec<f64> = (0..s)
            .map(|_| {
                let l = power_levels[rest % power_levels.len()];
                rest /= power_levels.len();
                l
            })
            .collect();
        if (0..s).any(|j| levels[j] + backbone_load[j] > uavs[j].spec.comm_power_max * (1.0 + 1e-9)) {
            continue;
        }
        let device: Vec<f64> = assoc
            .uav_of
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                if shape_sum[u] > 0.0 {
                    shape.device[i] * levels[u] / shape_sum[u]
                } else {
                    0.0
                }
            })
            .collect();
        let alloc = PowerAllocation {
            device,
            budget_limited: false,
            ..shape.clone()
        };
        let plan = assemble(uavs.to_vec(), snapshot, &assoc, &alloc, ctx);
        let obj = evaluate_with_snapshot(&plan, snapshot, ctx)?;
        if keep_violating || obj.feasible() {
            out.push(FrontPoint::new(plan, obj));
        }
    }
    Ok(out)
}

/// All ordered selections of `k` distinct indices out of `m`.
fn injective_maps(k: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(k: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for c in 0..m {
            if !cur.contains(&c) {
                cur.push(c);
                rec(k, m, cur, out);
                cur.pop();
            }
        }
    }
    rec(k, m, &mut cur, &mut out);
    out
}
