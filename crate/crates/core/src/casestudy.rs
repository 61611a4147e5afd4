//! Self-healing case study: a 400 m × 400 m heterogeneous network where the
//! central GBS fails and is healed first by standby drones, then by a helikite.
//! Also generators for small randomized instances used by tests and the CLI.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dimensioning::{Term, UavKind, UavSpec, HELIKITE_DEPLOY_DELAY};
use crate::geometry::{Point2, Point3, Polygon, Rect};
use crate::radio::RadioConfig;
use crate::scenario::{
    ChannelSet, ChargingStation, Continuity, FailureClass, Fleet, FleetUav, Geography, GroundBaseStation,
    OracleInstance, RequestType, RestrictedZone, Scenario, ScenarioError, ServiceRequest, SpectrumMode,
    StationaryDevice,
};

pub const FAILED_GBS: &str = "gbs3";
pub const AREA_SIDE: f64 = 400.0;
pub const UE_COUNT: usize = 10;
/// Radius of the disc around the failed GBS in which UEs are placed.
pub const UE_RADIUS: f64 = 150.0;
pub const UE_MIN_RATE: f64 = 16e6;
pub const DRONE_COMM_POWER: f64 = 0.06;
pub const HELIKITE_COMM_POWER: f64 = 2.25;
pub const SHORT_FAILURE: f64 = 1800.0;
pub const LONG_FAILURE: f64 = 3.0 * 86400.0;
/// Slot length used for case-study simulations, seconds.
pub const SLOT_LENGTH: f64 = 30.0;
/// Drone comm budgets of the rate-versus-power sweep, watts.
pub const POWER_SWEEP: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

pub fn drone_spec() -> UavSpec {
    UavSpec {
        name: "drone".into(),
        kind: UavKind::RotaryDrone,
        battery_energy: Some(600e3),
        hover_power: 150.0,
        travel_power: 180.0,
        speed_max: 15.0,
        altitude_range: [50.0, 200.0],
        comm_power_max: DRONE_COMM_POWER,
        deploy_delay: 0.0,
        term: Term::Short,
    }
}

pub fn helikite_spec() -> UavSpec {
    UavSpec {
        name: "helikite".into(),
        kind: UavKind::Helikite,
        battery_energy: None,
        hover_power: 0.0,
        travel_power: 0.0,
        speed_max: 2.0,
        altitude_range: [300.0, 300.0],
        comm_power_max: HELIKITE_COMM_POWER,
        deploy_delay: HELIKITE_DEPLOY_DELAY,
        term: Term::Long,
    }
}

/// Pre-failure network: five GBSs, standby drones on the four healthy ones,
/// a helikite depot on the south edge, and ten UEs served by the central GBS.
pub fn base_scenario(seed: u64) -> Scenario {
    let center = Point2::new(AREA_SIDE / 2.0, AREA_SIDE / 2.0);
    let corners = [
        ("gbs1", Point2::new(60.0, 60.0)),
        ("gbs2", Point2::new(340.0, 60.0)),
        ("gbs4", Point2::new(60.0, 340.0)),
        ("gbs5", Point2::new(340.0, 340.0)),
    ];
    let mut gbs = vec![GroundBaseStation {
        id: FAILED_GBS.into(),
        position: center,
        coverage_radius: UE_RADIUS,
        operational: true,
        outage: None,
    }];
    let mut stations = Vec::new();
    let mut uavs = Vec::new();
    for (i, (id, p)) in corners.iter().enumerate() {
        gbs.push(GroundBaseStation {
            id: (*id).into(),
            position: *p,
            coverage_radius: 120.0,
            operational: true,
            outage: None,
        });
        stations.push(ChargingStation {
            id: format!("pad{}", i + 1),
            position: *p,
            capacity: 1,
            recharge_rate: 1000.0,
        });
        uavs.push(FleetUav {
            id: format!("drone{}", i + 1),
            spec: "drone".into(),
            start: p.with_z(0.0),
        });
    }
    gbs.sort_by(|a, b| a.id.cmp(&b.id));
    uavs.push(FleetUav {
        id: "helikite1".into(),
        spec: "helikite".into(),
        start: Point3::new(center.x, 10.0, 0.0),
    });

    let mut scenario = Scenario {
        seed,
        request: ServiceRequest {
            request_type: RequestType::BandwidthBoost,
            epicenter: center,
            coverage_radius: UE_RADIUS,
            required_bandwidth: 10e6,
            service_window: [0.0, LONG_FAILURE],
            continuity: Continuity::Continuous,
            failure_class: None,
            failed_gbs: None,
            demand: None,
        },
        devices: Vec::new(),
        mobiles: Vec::new(),
        channels: ChannelSet::uniform(10, 1e6, 2.0e9, SpectrumMode::SharedSpectrum),
        geography: Geography {
            area: Rect::new(Point2::new(0.0, 0.0), Point2::new(AREA_SIDE, AREA_SIDE)),
            charging_stations: stations,
            restricted_zones: Vec::new(),
            gbs,
        },
        fleet: Fleet {
            specs: vec![drone_spec(), helikite_spec()],
            uavs,
        },
        radio: RadioConfig::default(),
        oracle: None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while scenario.devices.len() < UE_COUNT {
        let r = UE_RADIUS * rng.random::<f64>().sqrt();
        let a = std::f64::consts::TAU * rng.random::<f64>();
        let p = Point2::new(center.x + r * a.cos(), center.y + r * a.sin());
        scenario.devices.push(StationaryDevice {
            id: format!("ue{:02}", scenario.devices.len() + 1),
            position: p,
            min_rate: UE_MIN_RATE,
            group_id: None,
        });
        let served_by_center = scenario
            .gbs_associations(0.0)
            .iter()
            .any(|(g, ues)| g == FAILED_GBS && ues.contains(&scenario.devices.last().unwrap().id));
        if !served_by_center {
            scenario.devices.pop();
        }
    }
    scenario
}

/// Central GBS down for half an hour.
pub fn short_failure(seed: u64) -> Result<Scenario, ScenarioError> {
    base_scenario(seed).inject_failure(FAILED_GBS, FailureClass::ShortTerm, 0.0, SHORT_FAILURE)
}

/// Central GBS down for three days.
pub fn long_failure(seed: u64) -> Result<Scenario, ScenarioError> {
    base_scenario(seed).inject_failure(FAILED_GBS, FailureClass::LongTerm, 0.0, LONG_FAILURE)
}

/// Small instance within the oracle guardrails: 2–5 devices, 2–3 drones,
/// 6 candidate hover points and 4 power levels ending at the drone budget.
/// Every device has its own channel so power levels scale independently.
pub fn guardrail_instance(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f72_6163_6c65);
    let side = 300.0;
    let n_dev = rng.random_range(2..=5usize);
    let n_uav = rng.random_range(2..=3usize);
    let budget = 0.02;
    let mut spec = drone_spec();
    spec.comm_power_max = budget;
    spec.altitude_range = [50.0, 100.0];

    let devices = (0..n_dev)
        .map(|i| StationaryDevice {
            id: format!("ue{}", i + 1),
            position: Point2::new(rng.random_range(10.0..side - 10.0), rng.random_range(10.0..side - 10.0)),
            min_rate: rng.random_range(4e6..16e6),
            group_id: None,
        })
        .collect();
    let candidates = (0..6)
        .map(|_| {
            Point3::new(
                rng.random_range(20.0..side - 20.0),
                rng.random_range(20.0..side - 20.0),
                if rng.random::<f64>() < 0.5 { 50.0 } else { 100.0 },
            )
        })
        .collect();
    let uavs = (0..n_uav)
        .map(|i| FleetUav {
            id: format!("drone{}", i + 1),
            spec: "drone".into(),
            start: Point3::new(rng.random_range(0.0..side), rng.random_range(0.0..side), 0.0),
        })
        .collect();
    Scenario {
        seed,
        request: ServiceRequest {
            request_type: RequestType::DisasterRecovery,
            epicenter: Point2::new(side / 2.0, side / 2.0),
            coverage_radius: side / 2.0,
            required_bandwidth: 5e6,
            service_window: [0.0, 3600.0],
            continuity: Continuity::Continuous,
            failure_class: None,
            failed_gbs: None,
            demand: None,
        },
        devices,
        mobiles: Vec::new(),
        channels: ChannelSet::uniform(5, 1e6, 2.0e9, SpectrumMode::SharedSpectrum),
        geography: Geography {
            area: Rect::new(Point2::new(0.0, 0.0), Point2::new(side, side)),
            charging_stations: vec![ChargingStation {
                id: "pad".into(),
                position: Point2::new(0.0, 0.0),
                capacity: 2,
                recharge_rate: 1000.0,
            }],
            restricted_zones: Vec::new(),
            gbs: vec![GroundBaseStation {
                id: "gbs".into(),
                position: Point2::new(side, side),
                coverage_radius: 100.0,
                operational: true,
                outage: None,
            }],
        },
        fleet: Fleet {
            specs: vec![spec],
            uavs,
        },
        radio: RadioConfig::default(),
        oracle: Some(OracleInstance {
            candidates,
            power_levels: vec![budget * 0.25, budget * 0.5, budget * 0.75, budget],
        }),
    }
}

/// Randomized deployment instance: 2 stations (capacity 1–2), 3–5 drones,
/// one restricted zone and a handful of UEs.
pub fn deployment_instance(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6465_706c_6f79);
    let side = 500.0;
    let n_uav = rng.random_range(3..=5usize);
    let mut spec = drone_spec();
    spec.battery_energy = Some(rng.random_range(150e3..400e3));
    spec.comm_power_max = 0.5;
    let stations = vec![
        ChargingStation {
            id: "st1".into(),
            position: Point2::new(20.0, 20.0),
            capacity: rng.random_range(1..=2u32),
            recharge_rate: rng.random_range(500.0..2000.0),
        },
        ChargingStation {
            id: "st2".into(),
            position: Point2::new(side - 20.0, 20.0),
            capacity: rng.random_range(1..=2u32),
            recharge_rate: rng.random_range(500.0..2000.0),
        },
    ];
    let zone_center = Point2::new(rng.random_range(200.0..300.0), rng.random_range(120.0..200.0));
    let zone = Polygon::square(zone_center, rng.random_range(20.0..50.0));
    let n_dev = rng.random_range(3..=8usize);
    let mut devices = Vec::new();
    while devices.len() < n_dev {
        let p = Point2::new(rng.random_range(30.0..side - 30.0), rng.random_range(250.0..side - 30.0));
        devices.push(StationaryDevice {
            id: format!("ue{}", devices.len() + 1),
            position: p,
            min_rate: rng.random_range(1e6..8e6),
            group_id: None,
        });
    }
    let uavs = (0..n_uav)
        .map(|i| FleetUav {
            id: format!("drone{}", i + 1),
            spec: "drone".into(),
            start: stations[i % 2].position.with_z(0.0),
        })
        .collect();
    Scenario {
        seed,
        request: ServiceRequest {
            request_type: RequestType::DisasterRecovery,
            epicenter: Point2::new(side / 2.0, 380.0),
            coverage_radius: 200.0,
            required_bandwidth: 10e6,
            service_window: [0.0, 7200.0],
            continuity: Continuity::Continuous,
            failure_class: None,
            failed_gbs: None,
            demand: None,
        },
        devices,
        mobiles: Vec::new(),
        channels: ChannelSet::uniform(8, 1e6, 2.0e9, SpectrumMode::SharedSpectrum),
        geography: Geography {
            area: Rect::new(Point2::new(0.0, 0.0), Point2::new(side, side)),
            charging_stations: stations,
            restricted_zones: vec![RestrictedZone {
                id: "zone1".into(),
                polygon: zone,
            }],
            gbs: vec![GroundBaseStation {
                id: "gbs".into(),
                position: Point2::new(side / 2.0, 10.0),
                coverage_radius: 150.0,
                operational: true,
                outage: None,
            }],
        },
        fleet: Fleet {
            specs: vec![spec],
            uavs,
        },
        radio: RadioConfig::default(),
        oracle: None,
    }
}
