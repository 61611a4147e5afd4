use crate::geometry::Point3;
use crate::radio::{channel_gain, required_sinr};
use crate::scenario::{DeviceSnapshot, SpectrumMode};

use super::assoc::Association;
use super::plan::{backbone_powers, backbone_tree, PlanContext};
use super::{DimensionError, PlacedUav};

/// Iterates beyond this many watts are taken as a diverging fixed point.
const DIVERGENCE_WATTS: f64 = 1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub max_iterations: usize,
    /// Relative change below which the fixed point is considered converged.
    pub tolerance: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            tolerance: 1e-12,
        }
    }
}

/// Transmit powers for one association: device links (P), the symmetric
/// UAV-UAV matrix (P̃) and the UAV-gateway links of the backbone tree.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub device: Vec<f64>,
    pub backbone: Vec<Vec<f64>>,
    /// `(uav index, gateway index, watts)` per gateway link.
    pub gateway: Vec<(usize, usize, f64)>,
    /// True when some UAV's budget forced powers below the rate-meeting minimum.
    pub budget_limited: bool,
    pub iterations: usize,
}

/// Precomputed per-device link quantities for the fixed point.
pub(crate) struct LinkTable {
    /// gain[uav][device]
    pub gain: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
    pub share: Vec<usize>,
    pub bandwidth: Vec<f64>,
}

impl LinkTable {
    pub fn new(
        uav_positions: &[Point3],
        snapshot: &DeviceSnapshot,
        assoc: &Association,
        ctx: &PlanContext,
    ) -> Result<Self, DimensionError> {
        let mut gain = Vec::with_capacity(uav_positions.len());
        for p in uav_positions {
            let row = snapshot
                .devices
                .iter()
                .map(|d| channel_gain(p, &d.position.with_z(0.0), &ctx.radio))
                .collect::<Result<Vec<_>, _>>()?;
            gain.push(row);
        }
        let bandwidth: Vec<f64> = assoc
            .channel_of
            .iter()
            .map(|&c| ctx.channels.channels[c].width)
            .collect();
        let noise = bandwidth.iter().map(|&b| ctx.radio.noise_power(b)).collect();
        let share = (0..assoc.uav_of.len())
            .map(|i| assoc.share_count(assoc.uav_of[i], assoc.channel_of[i]))
            .collect();
        Ok(Self {
            gain,
            noise,
            share,
            bandwidth,
        })
    }

    /// Co-channel interference at each device from other UAVs' mean channel power.
    pub fn interference(&self, assoc: &Association, powers: &[f64], mode: SpectrumMode) -> Vec<f64> {
        let n = powers.len();
        if mode == SpectrumMode::Ofdma {
            return vec![0.0; n];
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            let (u, c) = (assoc.uav_of[i], assoc.channel_of[i]);
            for k in 0..n {
                let uk = assoc.uav_of[k];
                if uk != u && assoc.channel_of[k] == c {
                    out[i] += powers[k] / self.share[k] as f64 * self.gain[uk][i];
                }
            }
        }
        out
    }
}

/// Minimum device powers meeting every device's `min_rate`, plus backbone
/// powers sized for the rate each tree edge carries.
///
/// Shared spectrum uses the standard interference fixed point started from
/// zero, which converges to the componentwise-minimal feasible vector when one
/// exists. OFDMA has no inter-cell interference, so the inversion is closed
/// form. A UAV whose budget cannot cover its minimum powers has its vector
/// scaled onto the budget; the resulting shortfall shows up as rate violation.
pub fn allocate_power(
    assoc: &Association,
    snapshot: &DeviceSnapshot,
    uavs: &[PlacedUav],
    ctx: &PlanContext,
) -> Result<PowerAllocation, DimensionError> {
    let positions: Vec<Point3> = uavs.iter().map(|u| u.location).collect();
    let targets: Vec<f64> = snapshot.devices.iter().map(|d| d.min_rate).collect();

    let tree = backbone_tree(&positions, &ctx.gateways);
    let (backbone, gateway) = backbone_powers(&tree, &positions, &ctx.gateways, assoc, &targets, ctx)?;
    let budgets: Vec<f64> = uavs
        .iter()
        .enumerate()
        .map(|(j, u)| {
            let bb: f64 = backbone[j].iter().sum::<f64>()
                + gateway.iter().filter(|g| g.0 == j).map(|g| g.2).sum::<f64>();
            (u.spec.comm_power_max - bb).max(0.0)
        })
        .collect();

    let table = LinkTable::new(&positions, snapshot, assoc, ctx)?;
    let (device, budget_limited, iterations) =
        device_fixed_point(assoc, &targets, &budgets, &table, ctx)?;
    Ok(PowerAllocation {
        device,
        backbone,
        gateway,
        budget_limited,
        iterations,
    })
}

fn device_fixed_point(
    assoc: &Association,
    targets: &[f64],
    budgets: &[f64],
    table: &LinkTable,
    ctx: &PlanContext,
) -> Result<(Vec<f64>, bool, usize), DimensionError> {
    let n = targets.len();
    let mode = ctx.channels.mode;
    let opts = ctx.power;
    let gamma: Vec<f64> = (0..n)
        .map(|i| {
            if targets[i] <= 0.0 {
                0.0
            } else {
                required_sinr(targets[i] * table.share[i] as f64, table.bandwidth[i])
            }
        })
        .collect();
    let step = |p: &[f64]| -> Vec<f64> {
        let interference = table.interference(assoc, p, mode);
        (0..n)
            .map(|i| gamma[i] * (table.noise[i] + interference[i]) / table.gain[assoc.uav_of[i]][i])
            .collect()
    };
    let over_budget = |p: &[f64]| {
        let mut sums = vec![0.0; budgets.len()];
        for i in 0..n {
            sums[assoc.uav_of[i]] += p[i];
        }
        sums.iter().zip(budgets).any(|(s, b)| *s > *b * (1.0 + 1e-12))
    };
    let project = |p: Vec<f64>| -> Vec<f64> {
        let mut sums = vec![0.0; budgets.len()];
        for i in 0..n {
            sums[assoc.uav_of[i]] += p[i];
        }
        (0..n)
            .map(|i| {
                let j = assoc.uav_of[i];
                if sums[j] > budgets[j] {
                    p[i] * budgets[j] / sums[j]
                } else {
                    p[i]
                }
            })
            .collect()
    };
    let converged = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= opts.tolerance * x.abs().max(y.abs()) || (x - y).abs() < 1e-300)
    };

    let mut p = step(&vec![0.0; n]);
    if mode == SpectrumMode::Ofdma {
        return if over_budget(&p) {
            Ok((project(p), true, 1))
        } else {
            Ok((p, false, 1))
        };
    }

    let mut iterations = 1;
    let mut limited = false;
    while iterations < opts.max_iterations {
        if over_budget(&p) {
            limited = true;
            break;
        }
        let next = step(&p);
        iterations += 1;
        if next.iter().any(|x| !(*x < DIVERGENCE_WATTS)) {
            return Err(DimensionError::NonConvergence {
                iterations,
                last_iterate: p,
            });
        }
        if converged(&p, &next) {
            p = next;
            if over_budget(&p) {
                limited = true;
                break;
            }
            return Ok((p, false, iterations));
        }
        p = next;
    }
    if !limited {
        return Err(DimensionError::NonConvergence {
            iterations,
            last_iterate: p,
        });
    }

    // Budget-constrained phase: damped projected iteration.
    p = project(p);
    while iterations < opts.max_iterations {
        let target = project(step(&p));
        let next: Vec<f64> = p.iter().zip(&target).map(|(a, b)| 0.5 * (a + b)).collect();
        iterations += 1;
        if converged(&p, &next) {
            return Ok((next, true, iterations));
        }
        p = next;
    }
    Err(DimensionError::NonConvergence {
        iterations,
        last_iterate: p,
    })
}

/// Largest common rate every device can be given within the UAV budgets, by
/// bisection over [`allocate_power`] feasibility.
pub fn max_min_rate(
    assoc: &Association,
    snapshot: &DeviceSnapshot,
    uavs: &[PlacedUav],
    ctx: &PlanContext,
) -> Result<f64, DimensionError> {
    if snapshot.is_empty() {
        return Ok(f64::INFINITY);
    }
    let feasible = |rate: f64| -> bool {
        let mut s = snapshot.clone();
        for d in &mut s.devices {
            d.min_rate = rate;
        }
        matches!(allocate_power(assoc, &s, uavs, ctx), Ok(a) if !a.budget_limited)
    };
    let mut lo = 0.0;
    let mut hi = 1e6;
    while feasible(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e13 {
            return Ok(lo);
        }
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    Ok(lo)
}
