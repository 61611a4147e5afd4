use crate::geometry::{leg_length, Point2, Point3};

use super::plan::DeploymentPlan;

/// Where a UAV can go to recharge after its service.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MissionGeometry {
    pub stations: Vec<Point2>,
}

impl MissionGeometry {
    /// Ground point a UAV hovering at `at` returns to: the nearest station,
    /// else its own start.
    pub fn return_point(&self, at: &Point3, start: &Point3) -> Point3 {
        self.stations
            .iter()
            .min_by(|a, b| a.distance(&at.xy()).total_cmp(&b.distance(&at.xy())))
            .map(|s| s.with_z(0.0))
            .unwrap_or(*start)
    }
}

/// Seconds of service left after paying for the flight legs.
/// `None` battery (tethered) means unbounded.
pub fn lifetime_from_energy(
    battery_energy: Option<f64>,
    travel_energy: f64,
    hover_power: f64,
    comm_power: f64,
) -> f64 {
    match battery_energy {
        None => f64::INFINITY,
        Some(e) => {
            let remaining = (e - travel_energy).max(0.0);
            let draw = hover_power + comm_power;
            if draw > 0.0 {
                remaining / draw
            } else if remaining > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        }
    }
}

/// Lifetime of `plan.uavs[uav]` at its hover point given its total radio load.
pub fn uav_lifetime(plan: &DeploymentPlan, uav: usize, geometry: &MissionGeometry) -> f64 {
    let u = &plan.uavs[uav];
    let spec = &u.spec;
    let back = geometry.return_point(&u.location, &u.start);
    let t_in = leg_length(&u.start, &u.location) / spec.speed_max;
    let t_out = leg_length(&u.location, &back) / spec.speed_max;
    lifetime_from_energy(
        spec.battery_energy,
        spec.travel_power * (t_in + t_out),
        spec.hover_power,
        plan.comm_power(uav),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_lifetimes() {
        assert_eq!(lifetime_from_energy(Some(360e3), 60e3, 150.0, 0.0), 2000.0);
        assert_eq!(lifetime_from_energy(Some(360e3), 60e3, 150.0, 50.0), 1500.0);
        assert_eq!(lifetime_from_energy(None, 1e9, 150.0, 50.0), f64::INFINITY);
        assert_eq!(lifetime_from_energy(Some(10.0), 60e3, 150.0, 0.0), 0.0);
    }

    #[test]
    fn returns_to_nearest_station_or_start() {
        let g = MissionGeometry {
            stations: vec![Point2::new(0.0, 0.0), Point2::new(100.0, 0.0)],
        };
        let at = Point3::new(90.0, 0.0, 50.0);
        let start = Point3::new(-5.0, 0.0, 0.0);
        assert_eq!(g.return_point(&at, &start), Point3::new(100.0, 0.0, 0.0));
        assert_eq!(MissionGeometry::default().return_point(&at, &start), start);
    }

    proptest! {
        #[test]
        fn monotone_in_comm_power(e in 1e3f64..1e6, travel in 0.0f64..1e5, hover in 1.0f64..300.0,
                                  c in 0.0f64..10.0, dc in 1e-3f64..10.0) {
            let a = lifetime_from_energy(Some(e), travel, hover, c);
            let b = lifetime_from_energy(Some(e), travel, hover, c + dc);
            prop_assert!(b <= a);
            if e > travel { prop_assert!(b < a); }
        }
    }
}
