use std::collections::BTreeMap;
use std::fmt;

use crate::geometry::GEOM_EPS;
use crate::scenario::Scenario;

use super::{at_station, Action, ChargingSchedule, TimeGrid, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SpeedLimit {
        uav_id: String,
        slot: usize,
        distance: f64,
        limit: f64,
    },
    Zone {
        uav_id: String,
        slot: usize,
        zone_id: String,
    },
    Collision {
        first: String,
        second: String,
        slot: usize,
        distance: f64,
    },
    Capacity {
        station_id: String,
        slot: usize,
        occupants: usize,
        capacity: u32,
    },
    MultiStation {
        uav_id: String,
        slot: usize,
    },
    NegativeBattery {
        uav_id: String,
        slot: usize,
        battery: f64,
    },
    ActionPosition {
        uav_id: String,
        slot: usize,
        reason: String,
    },
}

impl Violation {
    pub fn class(&self) -> &'static str {
        match self {
            Violation::SpeedLimit { .. } => "speed",
            Violation::Zone { .. } => "zone",
            Violation::Collision { .. } => "collision",
            Violation::Capacity { .. } => "capacity",
            Violation::MultiStation { .. } => "multi-station",
            Violation::NegativeBattery { .. } => "battery",
            Violation::ActionPosition { .. } => "action-position",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SpeedLimit { uav_id, slot, distance, limit } => {
                write!(f, "slot {slot}: {uav_id} moved {distance:.2} m, limit {limit:.2} m")
            }
            Violation::Zone { uav_id, slot, zone_id } => write!(f, "slot {slot}: {uav_id} inside zone {zone_id}"),
            Violation::Collision { first, second, slot, distance } => {
                write!(f, "slot {slot}: {first} and {second} {distance:.2} m apart")
            }
            Violation::Capacity { station_id, slot, occupants, capacity } => {
                write!(f, "slot {slot}: station {station_id} holds {occupants} > {capacity}")
            }
            Violation::MultiStation { uav_id, slot } => write!(f, "slot {slot}: {uav_id} on several stations"),
            Violation::NegativeBattery { uav_id, slot, battery } => {
                write!(f, "slot {slot}: {uav_id} battery {battery:.1} J")
            }
            Violation::ActionPosition { uav_id, slot, reason } => write!(f, "slot {slot}: {uav_id} {reason}"),
        }
    }
}

/// Every constraint breach in a set of trajectories, in slot order within
/// each check. Occupancy is taken from both `schedule` and the trajectories.
pub fn validate_trajectory(
    trajectories: &[Trajectory],
    schedule: &ChargingSchedule,
    scenario: &Scenario,
    grid: &TimeGrid,
    min_separation: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let dt = grid.slot_length;
    let stations = &scenario.geography.charging_stations;
    let zones = &scenario.geography.restricted_zones;

    for t in trajectories {
        let limit = t.spec.speed_max * dt;
        let capacity = t.full_battery();
        let mut prev = t.start;
        for (k, s) in t.slots.iter().enumerate() {
            let Some(s) = s else { continue };
            let moved = prev.distance(&s.position);
            if moved > limit * (1.0 + 1e-9) + GEOM_EPS {
                out.push(Violation::SpeedLimit {
                    uav_id: t.uav_id.clone(),
                    slot: k,
                    distance: moved,
                    limit,
                });
            }
            for z in zones {
                if z.polygon.contains(&s.position.xy()) {
                    out.push(Violation::Zone {
                        uav_id: t.uav_id.clone(),
                        slot: k,
                        zone_id: z.id.clone(),
                    });
                }
            }
            if s.battery < 0.0 {
                out.push(Violation::NegativeBattery {
                    uav_id: t.uav_id.clone(),
                    slot: k,
                    battery: s.battery,
                });
            }
            let reason = match s.action {
                _ if s.battery > capacity * (1.0 + 1e-12) => Some("battery above capacity".to_string()),
                Action::Charging if !stations.iter().any(|st| at_station(&s.position, st)) => {
                    Some("charging away from a station".to_string())
                }
                Action::ServeHover if moved > GEOM_EPS => Some(format!("moved {moved:.2} m while hovering")),
                Action::ServeHover | Action::Travel | Action::ReturnToCharge | Action::Charging => None,
            };
            if let Some(reason) = reason {
                out.push(Violation::ActionPosition {
                    uav_id: t.uav_id.clone(),
                    slot: k,
                    reason,
                });
            }
            prev = s.position;
        }
    }

    for k in 0..grid.horizon {
        let active: Vec<(&str, _)> = trajectories
            .iter()
            .filter_map(|t| t.slots.get(k).copied().flatten().map(|s| (t.uav_id.as_str(), s.position)))
            .collect();
        for i in 0..active.len() {
            for j in (i + 1)..active.len() {
                let (a, pa) = active[i];
                let (b, pb) = active[j];
                let landed_together = pa.z.abs() <= GEOM_EPS
                    && pb.z.abs() <= GEOM_EPS
                    && pa.distance(&pb) <= 1e-6
                    && stations.iter().any(|st| at_station(&pa, st));
                let d = pa.distance(&pb);
                if d < min_separation && !landed_together {
                    out.push(Violation::Collision {
                        first: a.to_string(),
                        second: b.to_string(),
                        slot: k,
                        distance: d,
                    });
                }
            }
        }
    }

    let derived = ChargingSchedule::from_trajectories(trajectories, stations, grid.horizon);
    for st in stations {
        for k in 0..grid.horizon {
            let listed = schedule.occupancy.get(&st.id).and_then(|v| v.get(k)).map_or(0, Vec::len);
            let landed = derived.occupancy[&st.id][k].len();
            let occupants = listed.max(landed);
            if occupants > st.capacity as usize {
                out.push(Violation::Capacity {
                    station_id: st.id.clone(),
                    slot: k,
                    occupants,
                    capacity: st.capacity,
                });
            }
        }
    }
    let mut seen: BTreeMap<(usize, &str), usize> = BTreeMap::new();
    for per_slot in schedule.occupancy.values() {
        for (k, ids) in per_slot.iter().enumerate() {
            for id in ids {
                *seen.entry((k, id.as_str())).or_default() += 1;
            }
        }
    }
    for ((k, id), n) in seen {
        if n > 1 {
            out.push(Violation::MultiStation {
                uav_id: id.to_string(),
                slot: k,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casestudy::{base_scenario, drone_spec};
    use crate::geometry::Point3;
    use crate::trajectory::SlotState;

    fn hovering(id: &str, at: Point3, slots: usize) -> Trajectory {
        let mut t = Trajectory::parked(id, &drone_spec(), at, slots);
        let full = t.full_battery();
        for (k, s) in t.slots.iter_mut().enumerate() {
            *s = Some(SlotState {
                position: at,
                action: Action::ServeHover,
                battery: full - 1000.0 * (k + 1) as f64,
                comm_power: 0.0,
            });
        }
        t
    }

    fn classes(v: &[Violation]) -> Vec<&'static str> {
        let mut c: Vec<_> = v.iter().map(Violation::class).collect();
        c.dedup();
        c
    }

    #[test]
    fn same_cell_same_slot_is_one_collision() {
        let sc = base_scenario(0);
        let grid = TimeGrid::new(30.0, 1).unwrap();
        let at = Point3::new(200.0, 200.0, 50.0);
        let v = validate_trajectory(
            &[hovering("a", at, 1), hovering("b", at, 1)],
            &ChargingSchedule::default(),
            &sc,
            &grid,
            10.0,
        );
        assert_eq!(v.len(), 1, "{v:?}");
        match &v[0] {
            Violation::Collision { first, second, slot, .. } => {
                assert_eq!((first.as_str(), second.as_str(), *slot), ("a", "b", 0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overspeed_step_is_one_speed_violation() {
        let sc = base_scenario(0);
        let grid = TimeGrid::new(30.0, 2).unwrap();
        let spec = drone_spec();
        let start = Point3::new(100.0, 100.0, 50.0);
        let mut t = hovering("a", start, 2);
        let hop = 1.1 * spec.speed_max * grid.slot_length;
        let moved = Point3::new(start.x + hop, start.y, start.z);
        for s in t.slots.iter_mut().flatten() {
            s.position = moved;
            s.action = Action::Travel;
        }
        t.slots[1].as_mut().unwrap().action = Action::ServeHover;
        let v = validate_trajectory(&[t], &ChargingSchedule::default(), &sc, &grid, 10.0);
        assert_eq!(v.len(), 1, "{v:?}");
        match &v[0] {
            Violation::SpeedLimit { slot, distance, limit, .. } => {
                assert_eq!(*slot, 0);
                assert!((distance - 495.0).abs() < 1e-9);
                assert_eq!(*limit, 450.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pad_and_action_checks() {
        let sc = base_scenario(0);
        let grid = TimeGrid::new(30.0, 1).unwrap();
        let pad = sc.geography.charging_stations[0].position.with_z(0.0);
        let mut a = hovering("a", pad, 1);
        let mut b = hovering("b", pad, 1);
        for t in [&mut a, &mut b] {
            t.slots[0].as_mut().unwrap().action = Action::Charging;
        }
        // both on a capacity-1 pad: over capacity but not a collision
        let v = validate_trajectory(&[a.clone(), b], &ChargingSchedule::default(), &sc, &grid, 10.0);
        assert_eq!(classes(&v), vec!["capacity"]);

        let mut away = hovering("c", Point3::new(200.0, 200.0, 0.0), 1);
        away.slots[0].as_mut().unwrap().action = Action::Charging;
        let v = validate_trajectory(&[away], &ChargingSchedule::default(), &sc, &grid, 10.0);
        assert_eq!(classes(&v), vec!["action-position"]);

        let mut twice = ChargingSchedule::default();
        twice.occupancy.insert("pad1".into(), vec![vec!["a".into()]]);
        twice.occupancy.insert("pad2".into(), vec![vec!["a".into()]]);
        let v = validate_trajectory(&[a], &twice, &sc, &grid, 10.0);
        assert_eq!(classes(&v), vec!["multi-station"]);
    }

    #[test]
    fn negative_battery_and_zone() {
        let mut sc = base_scenario(0);
        sc.geography.restricted_zones.push(crate::scenario::RestrictedZone {
            id: "z".into(),
            polygon: crate::geometry::Polygon::square(crate::geometry::Point2::new(300.0, 300.0), 20.0),
        });
        let grid = TimeGrid::new(30.0, 1).unwrap();
        let mut t = hovering("a", Point3::new(300.0, 300.0, 50.0), 1);
        let v = validate_trajectory(std::slice::from_ref(&t), &ChargingSchedule::default(), &sc, &grid, 10.0);
        assert_eq!(classes(&v), vec!["zone"]);
        t.start = Point3::new(100.0, 100.0, 50.0);
        t.slots[0] = Some(SlotState {
            position: t.start,
            action: Action::Travel,
            battery: -1.0,
            comm_power: 0.0,
        });
        let v = validate_trajectory(&[t], &ChargingSchedule::default(), &sc, &grid, 10.0);
        assert_eq!(classes(&v), vec!["battery"]);
    }
}
