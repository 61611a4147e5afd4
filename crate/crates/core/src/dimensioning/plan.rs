use crate::geometry::{Point2, Point3};
use crate::radio::{achievable_rate, channel_gain, required_sinr, sinr, Link, RadioConfig};
use crate::scenario::{ChannelSet, DeviceSnapshot, Scenario};

use super::assoc::{associate_devices, Association};
use super::lifetime::{uav_lifetime, MissionGeometry};
use super::power::{allocate_power, PowerAllocation, PowerOptions};
use super::{DimensionConfig, DimensionError, Objectives, UavSpec};

/// Height of a GBS antenna above ground, meters.
pub const GBS_ANTENNA_HEIGHT: f64 = 25.0;

/// Relative rate shortfall below which a device counts as served.
pub const RATE_TOLERANCE: f64 = 1e-9;

/// One fleet UAV committed to a hover location.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedUav {
    pub uav_id: String,
    pub spec: UavSpec,
    pub start: Point3,
    pub location: Point3,
}

/// Backbone edge between a UAV and the root ground station.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayLink {
    pub uav: usize,
    pub gbs_id: String,
    pub power: f64,
}

/// Chosen UAVs, associations, channels and powers.
///
/// Matrices are indexed `[device][uav]` (A, P) and `[uav][uav]` (Ã, P̃), with
/// devices in `device_ids` order.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentPlan {
    pub uavs: Vec<PlacedUav>,
    pub device_ids: Vec<String>,
    pub assoc_device: Vec<Vec<bool>>,
    pub assoc_uav: Vec<Vec<bool>>,
    pub power_device: Vec<Vec<f64>>,
    pub power_uav: Vec<Vec<f64>>,
    pub gateways: Vec<GatewayLink>,
    /// Channel of each device link.
    pub channel_assignment: Vec<usize>,
}

impl DeploymentPlan {
    pub fn empty() -> Self {
        Self {
            uavs: Vec::new(),
            device_ids: Vec::new(),
            assoc_device: Vec::new(),
            assoc_uav: Vec::new(),
            power_device: Vec::new(),
            power_uav: Vec::new(),
            gateways: Vec::new(),
            channel_assignment: Vec::new(),
        }
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.uavs.iter().map(|u| u.location).collect()
    }

    pub fn association(&self) -> Association {
        Association {
            uav_of: self
                .assoc_device
                .iter()
                .map(|row| row.iter().position(|&a| a).unwrap_or(0))
                .collect(),
            channel_of: self.channel_assignment.clone(),
        }
    }

    /// Per-device transmit power (the nonzero entry of each P row).
    pub fn device_powers(&self) -> Vec<f64> {
        self.power_device.iter().map(|row| row.iter().sum()).collect()
    }

    pub fn device_power_of(&self, uav: usize) -> f64 {
        self.power_device.iter().map(|row| row[uav]).sum()
    }

    pub fn backbone_power_of(&self, uav: usize) -> f64 {
        self.power_uav[uav].iter().sum::<f64>()
            + self.gateways.iter().filter(|g| g.uav == uav).map(|g| g.power).sum::<f64>()
    }

    /// Total radio power drawn by `uav`.
    pub fn comm_power(&self, uav: usize) -> f64 {
        self.device_power_of(uav) + self.backbone_power_of(uav)
    }

    fn is_used(&self, uav: usize) -> bool {
        self.assoc_device.iter().any(|row| row[uav])
            || self.assoc_uav[uav].iter().any(|&a| a)
            || self.gateways.iter().any(|g| g.uav == uav)
    }

    pub fn uav_count(&self) -> usize {
        (0..self.uavs.len()).filter(|&j| self.is_used(j)).count()
    }

    /// Short stable identifier (FNV-1a over UAV ids, locations and associations).
    pub fn plan_id(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for u in &self.uavs {
            feed(u.uav_id.as_bytes());
            for c in [u.location.x, u.location.y, u.location.z] {
                feed(&c.to_bits().to_le_bytes());
            }
        }
        for (i, row) in self.assoc_device.iter().enumerate() {
            feed(self.device_ids[i].as_bytes());
            for &a in row {
                feed(&[a as u8]);
            }
        }
        format!("{h:016x}")
    }

    pub fn validate(&self) -> Result<(), DimensionError> {
        let n_u = self.uavs.len();
        let bad = |m: String| Err(DimensionError::InvalidPlan(m));
        if self.assoc_device.len() != self.device_ids.len()
            || self.power_device.len() != self.device_ids.len()
            || self.channel_assignment.len() != self.device_ids.len()
        {
            return bad("device matrices do not match the device list".into());
        }
        for (i, row) in self.assoc_device.iter().enumerate() {
            if row.len() != n_u || self.power_device[i].len() != n_u {
                return bad(format!("row of device {} has wrong width", self.device_ids[i]));
            }
            if row.iter().filter(|&&a| a).count() != 1 {
                return bad(format!("device {} is not served by exactly one UAV", self.device_ids[i]));
            }
            for j in 0..n_u {
                let p = self.power_device[i][j];
                if !(p >= 0.0 && p.is_finite()) || (p > 0.0 && !row[j]) {
                    return bad(format!("power to device {} from unassociated UAV", self.device_ids[i]));
                }
            }
        }
        if self.assoc_uav.len() != n_u || self.power_uav.len() != n_u {
            return bad("UAV matrices do not match the UAV list".into());
        }
        for m in 0..n_u {
            if self.assoc_uav[m][m] {
                return bad(format!("UAV {} linked to itself", self.uavs[m].uav_id));
            }
            for n in 0..n_u {
                if self.assoc_uav[m][n] != self.assoc_uav[n][m] {
                    return bad("UAV association matrix is not symmetric".into());
                }
                let p = self.power_uav[m][n];
                if !(p >= 0.0) || (p > 0.0 && !self.assoc_uav[m][n]) {
                    return bad("backbone power on a missing link".into());
                }
            }
        }
        for (j, u) in self.uavs.iter().enumerate() {
            let [lo, hi] = u.spec.altitude_range;
            if u.location.z < lo - 1e-9 || u.location.z > hi + 1e-9 {
                return bad(format!("UAV {} hovers outside its altitude range", u.uav_id));
            }
            let load = self.comm_power(j);
            if load > u.spec.comm_power_max * (1.0 + 1e-9) {
                return bad(format!(
                    "UAV {} draws {load} W over its {} W budget",
                    u.uav_id, u.spec.comm_power_max
                ));
            }
        }
        Ok(())
    }
}

/// Fixed inputs shared by every candidate evaluated for one demand snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanContext {
    pub radio: RadioConfig,
    pub channels: ChannelSet,
    /// Operational ground stations that can root the backbone, antenna position.
    pub gateways: Vec<(String, Point3)>,
    pub stations: Vec<Point2>,
    pub backbone_bandwidth: f64,
    pub power: PowerOptions,
}

impl PlanContext {
    pub fn new(scenario: &Scenario, config: &DimensionConfig) -> Self {
        Self {
            radio: scenario.radio,
            channels: scenario.channels.clone(),
            gateways: scenario
                .geography
                .gbs
                .iter()
                .filter(|g| g.operational)
                .map(|g| (g.id.clone(), g.position.with_z(GBS_ANTENNA_HEIGHT)))
                .collect(),
            stations: scenario.geography.charging_stations.iter().map(|s| s.position).collect(),
            backbone_bandwidth: config.backbone_bandwidth,
            power: config.power,
        }
    }

    pub fn mission(&self) -> MissionGeometry {
        MissionGeometry {
            stations: self.stations.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeParent {
    Uav(usize),
    Gateway(usize),
}

/// Backbone spanning tree; `parent[j]` is `None` only for a root UAV when no
/// gateway exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackboneTree {
    pub parent: Vec<Option<TreeParent>>,
}

/// Minimum spanning tree (Euclidean) over the UAVs plus the single ground
/// station closest to any UAV, which acts as the root.
pub fn backbone_tree(positions: &[Point3], gateways: &[(String, Point3)]) -> BackboneTree {
    let n = positions.len();
    let mut parent = vec![None; n];
    if n == 0 {
        return BackboneTree { parent };
    }
    let mut best = vec![f64::INFINITY; n];
    let mut in_tree = vec![false; n];
    let root = gateways
        .iter()
        .enumerate()
        .map(|(g, (_, gp))| {
            let d = positions.iter().map(|p| p.distance(gp)).fold(f64::INFINITY, f64::min);
            (g, d)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    match root {
        Some((g, _)) => {
            for j in 0..n {
                best[j] = positions[j].distance(&gateways[g].1);
                parent[j] = Some(TreeParent::Gateway(g));
            }
        }
        None => {
            in_tree[0] = true;
            for j in 1..n {
                best[j] = positions[j].distance(&positions[0]);
                parent[j] = Some(TreeParent::Uav(0));
            }
        }
    }
    while let Some(next) = (0..n)
        .filter(|&j| !in_tree[j])
        .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
    {
        in_tree[next] = true;
        for j in 0..n {
            if !in_tree[j] {
                let d = positions[j].distance(&positions[next]);
                if d < best[j] {
                    best[j] = d;
                    parent[j] = Some(TreeParent::Uav(next));
                }
            }
        }
    }
    BackboneTree { parent }
}

impl BackboneTree {
    /// Sum of `own[j]` over `j`'s subtree, for every UAV.
    pub fn subtree_sums(&self, own: &[f64]) -> Vec<f64> {
        let mut sums = own.to_vec();
        for j in 0..self.parent.len() {
            let mut at = j;
            while let Some(TreeParent::Uav(p)) = self.parent[at] {
                sums[p] += own[j];
                at = p;
            }
        }
        sums
    }
}

/// Backbone powers: each edge carries the summed target rate of the subtree
/// below it over a dedicated noise-limited band. Returns P̃ and gateway links
/// as `(uav, gateway, watts)`.
pub(crate) fn backbone_powers(
    tree: &BackboneTree,
    positions: &[Point3],
    gateways: &[(String, Point3)],
    assoc: &Association,
    targets: &[f64],
    ctx: &PlanContext,
) -> Result<(Vec<Vec<f64>>, Vec<(usize, usize, f64)>), DimensionError> {
    let n = positions.len();
    let mut own = vec![0.0; n];
    for (i, &u) in assoc.uav_of.iter().enumerate() {
        own[u] += targets[i];
    }
    let carried = tree.subtree_sums(&own);
    let noise = ctx.radio.noise_power(ctx.backbone_bandwidth);
    let mut backbone = vec![vec![0.0; n]; n];
    let mut gateway = Vec::new();
    for j in 0..n {
        let (other, p) = match tree.parent[j] {
            None => continue,
            Some(TreeParent::Uav(p)) => (positions[p], Some(p)),
            Some(TreeParent::Gateway(g)) => (gateways[g].1, None),
        };
        let power = if carried[j] > 0.0 {
            let g = channel_gain(&positions[j], &other, &ctx.radio)?;
            required_sinr(carried[j], ctx.backbone_bandwidth) * noise / g
        } else {
            0.0
        };
        match (p, tree.parent[j]) {
            (Some(p), _) => {
                backbone[j][p] = power;
                backbone[p][j] = power;
            }
            (None, Some(TreeParent::Gateway(g))) => gateway.push((j, g, power)),
            _ => unreachable!(),
        }
    }
    Ok((backbone, gateway))
}

/// Achieved rate of every device under the given per-device powers, via the
/// SINR of each link against the co-channel links of other UAVs. Devices of one
/// UAV sharing a channel split it in time.
pub fn device_rates(
    uav_positions: &[Point3],
    snapshot: &DeviceSnapshot,
    assoc: &Association,
    powers: &[f64],
    radio: &RadioConfig,
    channels: &ChannelSet,
) -> Result<Vec<f64>, DimensionError> {
    let n_u = uav_positions.len();
    let n_c = channels.channels.len();
    let mut mean_power = vec![vec![0.0; n_c]; n_u];
    let mut share = vec![vec![0usize; n_c]; n_u];
    for (i, (&u, &c)) in assoc.uav_of.iter().zip(&assoc.channel_of).enumerate() {
        mean_power[u][c] += powers[i];
        share[u][c] += 1;
    }
    let mut rates = Vec::with_capacity(snapshot.len());
    for (i, d) in snapshot.devices.iter().enumerate() {
        let (u, c) = (assoc.uav_of[i], assoc.channel_of[i]);
        let rx = d.position.with_z(0.0);
        let target = Link {
            tx_position: uav_positions[u],
            rx_position: rx,
            tx_power: powers[i],
            channel: c,
        };
        let interferers: Vec<Link> = (0..n_u)
            .filter(|&k| k != u && share[k][c] > 0)
            .map(|k| Link {
                tx_position: uav_positions[k],
                rx_position: rx,
                tx_power: mean_power[k][c] / share[k][c] as f64,
                channel: c,
            })
            .collect();
        let s = sinr(&target, &interferers, radio, channels)?;
        rates.push(achievable_rate(channels.channels[c].width, s) / share[u][c] as f64);
    }
    Ok(rates)
}

pub(crate) fn assemble(
    uavs: Vec<PlacedUav>,
    snapshot: &DeviceSnapshot,
    assoc: &Association,
    alloc: &PowerAllocation,
    ctx: &PlanContext,
) -> DeploymentPlan {
    let n_u = uavs.len();
    let mut assoc_device = vec![vec![false; n_u]; snapshot.len()];
    let mut power_device = vec![vec![0.0; n_u]; snapshot.len()];
    for (i, &u) in assoc.uav_of.iter().enumerate() {
        assoc_device[i][u] = true;
        power_device[i][u] = alloc.device[i];
    }
    let positions: Vec<Point3> = uavs.iter().map(|u| u.location).collect();
    let tree = backbone_tree(&positions, &ctx.gateways);
    let mut assoc_uav = vec![vec![false; n_u]; n_u];
    for (j, p) in tree.parent.iter().enumerate() {
        if let Some(TreeParent::Uav(p)) = p {
            assoc_uav[j][*p] = true;
            assoc_uav[*p][j] = true;
        }
    }
    DeploymentPlan {
        uavs,
        device_ids: snapshot.devices.iter().map(|d| d.id.clone()).collect(),
        assoc_device,
        assoc_uav,
        power_device,
        power_uav: alloc.backbone.clone(),
        gateways: alloc
            .gateway
            .iter()
            .map(|&(uav, g, power)| GatewayLink {
                uav,
                gbs_id: ctx.gateways[g].0.clone(),
                power,
            })
            .collect(),
        channel_assignment: assoc.channel_of.clone(),
    }
}

/// Associates, prunes UAVs left without devices, allocates power and evaluates.
pub fn build_plan(
    uavs: Vec<PlacedUav>,
    snapshot: &DeviceSnapshot,
    ctx: &PlanContext,
) -> Result<(DeploymentPlan, Objectives), DimensionError> {
    if snapshot.is_empty() {
        let plan = DeploymentPlan::empty();
        let obj = evaluate_with_snapshot(&plan, snapshot, ctx)?;
        return Ok((plan, obj));
    }
    let mut uavs = uavs;
    let assoc = loop {
        let positions: Vec<Point3> = uavs.iter().map(|u| u.location).collect();
        let assoc = associate_devices(snapshot, &positions, &ctx.channels, &ctx.radio)?;
        let load = assoc.load(uavs.len());
        if load.iter().all(|&l| l > 0) {
            break assoc;
        }
        uavs = uavs
            .into_iter()
            .zip(load)
            .filter(|(_, l)| *l > 0)
            .map(|(u, _)| u)
            .collect();
    };
    let alloc = allocate_power(&assoc, snapshot, &uavs, ctx)?;
    let plan = assemble(uavs, snapshot, &assoc, &alloc, ctx);
    let obj = evaluate_with_snapshot(&plan, snapshot, ctx)?;
    Ok((plan, obj))
}

/// Objectives of `plan` against the demand of `scenario` at time `t`.
pub fn evaluate_plan(plan: &DeploymentPlan, scenario: &Scenario, t: f64) -> Result<Objectives, DimensionError> {
    let snapshot = scenario.demand_at(t)?;
    let ctx = PlanContext::new(scenario, &DimensionConfig::default());
    evaluate_with_snapshot(plan, &snapshot, &ctx)
}

/// Per-device rates of a plan against a snapshot (devices matched by id).
pub(crate) fn plan_rates(
    plan: &DeploymentPlan,
    snapshot: &DeviceSnapshot,
    ctx: &PlanContext,
) -> Result<Vec<f64>, DimensionError> {
    if plan.device_ids.len() != snapshot.len() {
        return Err(DimensionError::InvalidPlan(format!(
            "plan serves {} devices, demand has {}",
            plan.device_ids.len(),
            snapshot.len()
        )));
    }
    let mut ordered = snapshot.clone();
    ordered.devices.clear();
    for id in &plan.device_ids {
        let d = snapshot
            .devices
            .iter()
            .find(|d| &d.id == id)
            .ok_or_else(|| DimensionError::InvalidPlan(format!("plan serves unknown device {id}")))?;
        ordered.devices.push(d.clone());
    }
    for &c in &plan.channel_assignment {
        if c >= ctx.channels.channels.len() {
            return Err(DimensionError::InvalidPlan(format!("channel {c} does not exist")));
        }
    }
    let rates = device_rates(
        &plan.positions(),
        &ordered,
        &plan.association(),
        &plan.device_powers(),
        &ctx.radio,
        &ctx.channels,
    )?;
    let mut out = vec![0.0; snapshot.len()];
    for (k, id) in plan.device_ids.iter().enumerate() {
        let i = snapshot.devices.iter().position(|d| &d.id == id).unwrap_or(k);
        out[i] = rates[k];
    }
    Ok(out)
}

/// Shortfall below `min_rate`, with floating-point dust treated as zero.
pub fn rate_violation(min_rate: f64, rate: f64) -> f64 {
    let v = (min_rate - rate).max(0.0);
    if v <= RATE_TOLERANCE * min_rate {
        0.0
    } else {
        v
    }
}

pub fn evaluate_with_snapshot(
    plan: &DeploymentPlan,
    snapshot: &DeviceSnapshot,
    ctx: &PlanContext,
) -> Result<Objectives, DimensionError> {
    plan.validate()?;
    let rates = plan_rates(plan, snapshot, ctx)?;
    let max_rate_violation = snapshot
        .devices
        .iter()
        .zip(&rates)
        .map(|(d, &r)| rate_violation(d.min_rate, r))
        .fold(0.0, f64::max);
    let mission = ctx.mission();
    let min_lifetime = (0..plan.uavs.len())
        .filter(|&j| plan.is_used(j))
        .map(|j| uav_lifetime(plan, j, &mission))
        .fold(f64::INFINITY, f64::min);
    Ok(Objectives {
        uav_count: plan.uav_count(),
        min_lifetime,
        max_rate_violation,
    })
}
