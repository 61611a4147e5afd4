//! Decision phase: how many UAVs, of which type, hovering where, serving whom
//! and at what power.
//!
//! The dual objective is the pair (UAV count, minimum UAV lifetime). Counts are
//! swept exactly (one candidate per `k`), and rate shortfall acts as a
//! feasibility filter: plans with a positive violation are returned separately
//! as flagged.

mod assoc;
mod heuristic;
mod lifetime;
mod oracle;
mod plan;
mod power;
mod transition;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point3;
use crate::radio::RadioError;
use crate::scenario::ScenarioError;

pub use assoc::{associate_devices, Association};
pub use heuristic::{
    dimension, dimension_long_term, dimension_short_term, dimension_snapshot, pareto_filter,
    DimensionResult, FrontPoint,
};
pub use lifetime::{lifetime_from_energy, uav_lifetime, MissionGeometry};
pub use oracle::{brute_force_front, OracleLimits, ORACLE_LIMITS};
pub use plan::{
    backbone_tree, build_plan, device_rates, evaluate_plan, evaluate_with_snapshot, rate_violation,
    BackboneTree, DeploymentPlan, GatewayLink, PlacedUav, PlanContext, TreeParent, GBS_ANTENNA_HEIGHT,
};
pub(crate) use plan::plan_rates;
pub use power::{allocate_power, max_min_rate, PowerAllocation, PowerOptions};
pub use transition::{activation_delay, transition_plan, TransitionError, TransitionSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UavKind {
    RotaryDrone,
    Helikite,
    Airship,
    Balloon,
}

/// Service horizon a UAV type is suited for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Short,
    Long,
}

/// Helikite launch-to-service delay, seconds.
pub const HELIKITE_DEPLOY_DELAY: f64 = 2700.0;

/// Physical, energy and radio parameters of one UAV type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpec {
    pub name: String,
    pub kind: UavKind,
    /// Joules; absent for tethered platforms (unbounded energy).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub battery_energy: Option<f64>,
    /// Watts drawn while hovering in place.
    pub hover_power: f64,
    /// Watts drawn while flying.
    pub travel_power: f64,
    /// m/s
    pub speed_max: f64,
    /// `[min, max]` hover altitude in meters.
    pub altitude_range: [f64; 2],
    /// Total radio power budget, watts.
    pub comm_power_max: f64,
    /// Seconds from dispatch order until the platform can serve.
    pub deploy_delay: f64,
    pub term: Term,
}

impl UavSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.comm_power_max > 0.0) {
            return Err("comm_power_max must be > 0".into());
        }
        if self.term == Term::Short && self.battery_energy.is_none() {
            return Err("short-term platforms need a finite battery_energy".into());
        }
        if let Some(e) = self.battery_energy {
            if !(e > 0.0 && e.is_finite()) {
                return Err("battery_energy must be finite and > 0".into());
            }
        }
        if !(self.speed_max > 0.0) {
            return Err("speed_max must be > 0".into());
        }
        if !(self.hover_power >= 0.0 && self.travel_power >= 0.0) {
            return Err("hover_power and travel_power must be >= 0".into());
        }
        let [lo, hi] = self.altitude_range;
        if !(lo >= 0.0 && hi >= lo) {
            return Err("altitude_range must satisfy 0 <= min <= max".into());
        }
        if !(self.deploy_delay >= 0.0) {
            return Err("deploy_delay must be >= 0".into());
        }
        Ok(())
    }

    pub fn is_tethered(&self) -> bool {
        self.battery_energy.is_none()
    }

    /// Default hover altitudes: low tiers for drones, high for aerostats.
    pub fn default_altitudes(&self) -> Vec<f64> {
        let tiers: &[f64] = match self.kind {
            UavKind::RotaryDrone => &[50.0, 100.0, 200.0],
            UavKind::Helikite | UavKind::Airship | UavKind::Balloon => &[300.0],
        };
        let [lo, hi] = self.altitude_range;
        let mut alts: Vec<f64> = tiers.iter().copied().filter(|a| *a >= lo && *a <= hi).collect();
        if alts.is_empty() {
            alts.push(lo);
        }
        alts
    }
}

/// The two objectives plus the rate-shortfall feasibility measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objectives {
    pub uav_count: usize,
    /// Minimum lifetime over used UAVs in seconds; infinite when every UAV is tethered.
    pub min_lifetime: f64,
    /// Largest per-device shortfall below its minimum rate, bit/s.
    pub max_rate_violation: f64,
}

impl Objectives {
    pub fn feasible(&self) -> bool {
        self.max_rate_violation == 0.0
    }

    /// Weak Pareto dominance on (count ↓, lifetime ↑), strict in at least one.
    pub fn dominates(&self, other: &Objectives) -> bool {
        self.uav_count <= other.uav_count
            && self.min_lifetime >= other.min_lifetime
            && (self.uav_count < other.uav_count || self.min_lifetime > other.min_lifetime)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimensionConfig {
    pub seed: u64,
    /// Clustering restarts per candidate count.
    pub restarts: usize,
    pub k_min: usize,
    pub k_max: Option<usize>,
    /// Devices closer than this are clustered as one weighted point.
    pub group_radius: f64,
    /// Overrides the per-type default hover altitudes.
    pub altitude_candidates: Option<Vec<f64>>,
    /// When set, hover locations are restricted to these points.
    pub candidate_locations: Option<Vec<Point3>>,
    /// When set, each UAV's total device power is one of these levels, as in
    /// the exhaustive oracle.
    pub power_levels: Option<Vec<f64>>,
    /// Dedicated backhaul bandwidth for UAV-UAV and UAV-GBS links, Hz.
    pub backbone_bandwidth: f64,
    pub power: PowerOptions,
    pub kmeans_iterations: usize,
    pub local_search_rounds: usize,
    /// Demand snapshot time; defaults to the start of the service window.
    pub time: Option<f64>,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            restarts: 8,
            k_min: 1,
            k_max: None,
            group_radius: 0.0,
            altitude_candidates: None,
            candidate_locations: None,
            power_levels: None,
            backbone_bandwidth: 20e6,
            power: PowerOptions::default(),
            kmeans_iterations: 100,
            local_search_rounds: 50,
            time: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimensionError {
    #[error("no device can be associated: {0}")]
    InfeasibleAssociation(String),
    #[error("power fixed point did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        last_iterate: Vec<f64>,
    },
    #[error("fleet has no {0:?}-term UAV")]
    NoFleet(Term),
    #[error("oracle instance exceeds guardrails: {0}")]
    Size(String),
    #[error("plan violates invariant: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Radio(#[from] RadioError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}
