use thiserror::Error;

use crate::geometry::leg_length;

use super::lifetime::{uav_lifetime, MissionGeometry};
use super::plan::DeploymentPlan;

/// When each plan serves during a short-to-long handover.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSchedule {
    /// Dispatch time of both plans.
    pub t0: f64,
    /// `[start, end)` of short-term service; `None` when the long plan is
    /// active immediately.
    pub short_window: Option<[f64; 2]>,
    /// Time the long-term plan starts serving.
    pub long_active: f64,
    /// Time the short-term UAVs are ordered home.
    pub withdraw_at: f64,
}

impl TransitionSchedule {
    pub fn short_needed(&self) -> bool {
        self.short_window.is_some()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransitionError {
    #[error("long-term plan becomes active at {active_at} s, after the window ends at {window_end} s")]
    NeverActive { active_at: f64, window_end: f64 },
    #[error("short-term UAV {uav_id} lasts {lifetime:.1} s but must bridge {needed:.1} s")]
    ShortLifetime {
        uav_id: String,
        lifetime: f64,
        needed: f64,
    },
}

/// Seconds after dispatch until `plan.uavs[j]` can serve: its deploy delay or its
/// flight to the hover point, whichever is longer.
pub fn activation_delay(plan: &DeploymentPlan, j: usize) -> f64 {
    let u = &plan.uavs[j];
    let travel = leg_length(&u.start, &u.location) / u.spec.speed_max;
    u.spec.deploy_delay.max(travel)
}

/// Deploy everything at `t0`, switch to the long plan once all its UAVs are up,
/// then withdraw the short plan.
pub fn transition_plan(
    short: &DeploymentPlan,
    long: &DeploymentPlan,
    t0: f64,
    window_end: f64,
    mission: &MissionGeometry,
) -> Result<TransitionSchedule, TransitionError> {
    let delay = (0..long.uavs.len())
        .map(|j| activation_delay(long, j))
        .fold(0.0, f64::max);
    let long_active = t0 + delay;
    if long_active > window_end {
        return Err(TransitionError::NeverActive {
            active_at: long_active,
            window_end,
        });
    }
    if delay == 0.0 {
        return Ok(TransitionSchedule {
            t0,
            short_window: None,
            long_active,
            withdraw_at: t0,
        });
    }
    for j in 0..short.uavs.len() {
        let lifetime = uav_lifetime(short, j, mission);
        if lifetime < delay {
            return Err(TransitionError::ShortLifetime {
                uav_id: short.uavs[j].uav_id.clone(),
                lifetime,
                needed: delay,
            });
        }
    }
    Ok(TransitionSchedule {
        t0,
        short_window: Some([t0, long_active]),
        long_active,
        withdraw_at: long_active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimensioning::{PlacedUav, Term, UavKind, UavSpec, HELIKITE_DEPLOY_DELAY};
    use crate::geometry::Point3;

    fn one(spec: UavSpec, at: Point3) -> DeploymentPlan {
        let mut p = DeploymentPlan::empty();
        p.uavs.push(PlacedUav {
            uav_id: spec.name.clone(),
            spec,
            start: Point3::new(at.x, at.y, 0.0),
            location: at,
        });
        p.assoc_uav = vec![vec![false]];
        p.power_uav = vec![vec![0.0]];
        p
    }

    fn drone(battery: f64) -> UavSpec {
        UavSpec {
            name: "drone".into(),
            kind: UavKind::RotaryDrone,
            battery_energy: Some(battery),
            hover_power: 150.0,
            travel_power: 150.0,
            speed_max: 10.0,
            altitude_range: [50.0, 200.0],
            comm_power_max: 1.0,
            deploy_delay: 0.0,
            term: Term::Short,
        }
    }

    fn helikite(delay: f64) -> UavSpec {
        UavSpec {
            name: "kite".into(),
            kind: UavKind::Helikite,
            battery_energy: None,
            hover_power: 0.0,
            travel_power: 0.0,
            speed_max: 2.0,
            altitude_range: [300.0, 300.0],
            comm_power_max: 2.25,
            deploy_delay: delay,
            term: Term::Long,
        }
    }

    #[test]
    fn drones_bridge_until_helikite() {
        let s = one(drone(600e3), Point3::new(0.0, 0.0, 50.0));
        // climbing 300 m at 2 m/s takes 150 s, well within the launch delay
        let l = one(helikite(HELIKITE_DEPLOY_DELAY), Point3::new(0.0, 0.0, 300.0));
        let t = transition_plan(&s, &l, 0.0, 86400.0, &MissionGeometry::default()).unwrap();
        assert_eq!(t.short_window, Some([0.0, 2700.0]));
        assert_eq!(t.long_active, 2700.0);
        assert_eq!(t.withdraw_at, 2700.0);
    }

    #[test]
    fn zero_delay_needs_no_bridge() {
        let s = one(drone(600e3), Point3::new(0.0, 0.0, 50.0));
        let mut l = one(helikite(0.0), Point3::new(0.0, 0.0, 300.0));
        l.uavs[0].start = l.uavs[0].location;
        let t = transition_plan(&s, &l, 10.0, 100.0, &MissionGeometry::default()).unwrap();
        assert!(!t.short_needed());
        assert_eq!(t.long_active, 10.0);
    }

    #[test]
    fn short_lifetime_is_reported() {
        // 300 kJ battery, 10 s of legs at 150 W = 1.5 kJ, hover 150 W: 1990 s < 2700 s
        let s = one(drone(300e3), Point3::new(0.0, 0.0, 50.0));
        let l = one(helikite(2700.0), Point3::new(0.0, 0.0, 300.0));
        match transition_plan(&s, &l, 0.0, 86400.0, &MissionGeometry::default()) {
            Err(TransitionError::ShortLifetime { lifetime, needed, .. }) => {
                assert!((lifetime - 1990.0).abs() < 1e-9);
                assert_eq!(needed, 2700.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn late_activation_is_an_error() {
        let s = one(drone(600e3), Point3::new(0.0, 0.0, 50.0));
        let l = one(helikite(2700.0), Point3::new(0.0, 0.0, 300.0));
        assert!(matches!(
            transition_plan(&s, &l, 0.0, 1000.0, &MissionGeometry::default()),
            Err(TransitionError::NeverActive { .. })
        ));
    }
}
