//! Deployment phase: slotted flight plans, charging schedules and their checks.

mod path;
mod planner;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::dimensioning::UavSpec;
use crate::geometry::{Point3, GEOM_EPS};
use crate::scenario::ChargingStation;

pub use path::{plan_path, sample_path, slots_to_cover};
pub use planner::{plan_trajectories, PlannedDeployment, SchedulePolicy};
pub use validate::{validate_trajectory, Violation};

/// Longest slot accepted; radio conditions are treated as frozen within a slot.
pub const MAX_SLOT_LENGTH: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub slot_length: f64,
    pub horizon: usize,
}

impl TimeGrid {
    pub fn new(slot_length: f64, horizon: usize) -> Result<Self, TrajectoryError> {
        if !(slot_length > 0.0 && slot_length <= MAX_SLOT_LENGTH) {
            return Err(TrajectoryError::InvalidGrid(format!(
                "slot length {slot_length} s outside (0, {MAX_SLOT_LENGTH}]"
            )));
        }
        Ok(Self { slot_length, horizon })
    }

    /// Grid covering `duration` seconds.
    pub fn covering(slot_length: f64, duration: f64) -> Result<Self, TrajectoryError> {
        let horizon = (duration / slot_length - 1e-9).ceil().max(0.0) as usize;
        Self::new(slot_length, horizon)
    }

    /// First slot starting at or after `t` seconds.
    pub fn slot_at_or_after(&self, t: f64) -> usize {
        (t / self.slot_length - 1e-9).ceil().max(0.0) as usize
    }

    pub fn slot_start(&self, slot: usize) -> f64 {
        slot as f64 * self.slot_length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Action {
    Travel,
    ServeHover,
    ReturnToCharge,
    Charging,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Action::Travel => "Travel",
            Action::ServeHover => "ServeHover",
            Action::ReturnToCharge => "ReturnToCharge",
            Action::Charging => "Charging",
        };
        f.write_str(s)
    }
}

/// State of a UAV at the end of a slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotState {
    pub position: Point3,
    pub action: Action,
    /// Joules left; infinite for tethered platforms.
    pub battery: f64,
    /// Radio power drawn while hovering in this slot.
    pub comm_power: f64,
}

/// Per-slot plan of one UAV. `None` means parked and powered down.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub uav_id: String,
    pub spec: UavSpec,
    pub start: Point3,
    /// Joules on board before slot 0.
    pub initial_battery: f64,
    pub slots: Vec<Option<SlotState>>,
}

impl Trajectory {
    pub fn parked(uav_id: &str, spec: &UavSpec, start: Point3, horizon: usize) -> Self {
        Self {
            uav_id: uav_id.to_string(),
            spec: spec.clone(),
            start,
            initial_battery: spec.battery_energy.unwrap_or(f64::INFINITY),
            slots: vec![None; horizon],
        }
    }

    pub fn full_battery(&self) -> f64 {
        self.spec.battery_energy.unwrap_or(f64::INFINITY)
    }

    /// Position at the end of each slot, parked slots included.
    pub fn positions(&self) -> Vec<Point3> {
        let mut at = self.start;
        self.slots
            .iter()
            .map(|s| {
                if let Some(s) = s {
                    at = s.position;
                }
                at
            })
            .collect()
    }

    /// First slot in which the UAV is hovering on station.
    pub fn first_service_slot(&self) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| matches!(s, Some(s) if s.action == Action::ServeHover))
    }
}

/// Which UAVs sit on each station pad, slot by slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChargingSchedule {
    pub occupancy: BTreeMap<String, Vec<Vec<String>>>,
}

impl ChargingSchedule {
    /// Occupancy derived from trajectories: every active UAV landed on a pad.
    pub fn from_trajectories(trajectories: &[Trajectory], stations: &[ChargingStation], horizon: usize) -> Self {
        let mut occupancy = BTreeMap::new();
        for st in stations {
            let mut per_slot = vec![Vec::new(); horizon];
            for t in trajectories {
                for (k, s) in t.slots.iter().enumerate().take(horizon) {
                    if let Some(s) = s {
                        if at_station(&s.position, st) {
                            per_slot[k].push(t.uav_id.clone());
                        }
                    }
                }
            }
            occupancy.insert(st.id.clone(), per_slot);
        }
        Self { occupancy }
    }
}

pub(crate) fn at_station(p: &Point3, st: &ChargingStation) -> bool {
    p.z.abs() <= GEOM_EPS && p.xy().distance(&st.position) <= 1e-6
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("schedule infeasible at slot {slot}: {reason}")]
    ScheduleInfeasible { slot: usize, reason: String },
    #[error("UAV {uav_id} runs out of energy in slot {slot}")]
    EnergyInfeasible { uav_id: String, slot: usize },
    #[error("unknown UAV {0}")]
    UnknownUav(String),
}

/// Battery level at the end of every slot, replaying the actions from the
/// initial level. Recharge rates are looked up by the pad the UAV sits on.
pub fn battery_profile(
    trajectory: &Trajectory,
    grid: &TimeGrid,
    stations: &[ChargingStation],
) -> Result<Vec<f64>, TrajectoryError> {
    let spec = &trajectory.spec;
    let capacity = trajectory.full_battery();
    let dt = grid.slot_length;
    let mut level = trajectory.initial_battery.min(capacity);
    let mut out = Vec::with_capacity(trajectory.slots.len());
    for (k, s) in trajectory.slots.iter().enumerate() {
        if let (Some(s), true) = (s, capacity.is_finite()) {
            match s.action {
                Action::Travel | Action::ReturnToCharge => level -= spec.travel_power * dt,
                Action::ServeHover => level -= (spec.hover_power + s.comm_power) * dt,
                Action::Charging => {
                    let rate = stations
                        .iter()
                        .find(|st| at_station(&s.position, st))
                        .map(|st| st.recharge_rate)
                        .unwrap_or(0.0);
                    level = (level + rate * dt).min(capacity);
                }
            }
            if level < 0.0 {
                return Err(TrajectoryError::EnergyInfeasible {
                    uav_id: trajectory.uav_id.clone(),
                    slot: k,
                });
            }
        }
        out.push(level);
    }
    Ok(out)
}

pub const TRAJECTORY_CSV_HEADER: &str = "uav_id,slot,x,y,z,action,battery_J";

/// One row per UAV per active slot, UAVs in the given order.
pub fn write_trajectory_csv<W: Write>(trajectories: &[Trajectory], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_CSV_HEADER}")?;
    for t in trajectories {
        for (k, s) in t.slots.iter().enumerate() {
            if let Some(s) = s {
                writeln!(
                    out,
                    "{},{},{:.3},{:.3},{:.3},{},{:.3}",
                    t.uav_id, k, s.position.x, s.position.y, s.position.z, s.action, s.battery
                )?;
            }
        }
    }
    Ok(())
}
