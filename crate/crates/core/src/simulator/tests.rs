use super::*;
use crate::casestudy::{base_scenario, deployment_instance, long_failure, short_failure};
use crate::geometry::leg_length;

fn config(label: &str, slots: usize) -> SimConfig {
    SimConfig {
        label: label.into(),
        horizon_slots: Some(slots),
        ..SimConfig::default()
    }
}

#[test]
fn ample_static_scenario_never_drops_below_minimum() {
    let mut sc = base_scenario(3);
    for s in &mut sc.fleet.specs {
        s.comm_power_max = 1.0;
    }
    let r = run(&sc, &config("static", 20)).unwrap();
    let start = r.service_start.unwrap();
    assert_eq!(r.violation_count(), 0);
    assert_eq!(r.below_min_between(start, 20), 0);
    assert!(r.violations.is_empty());
    assert!(r.energy_closes());
}

#[test]
fn short_healing_matches_travel_time() {
    let sc = short_failure(2).unwrap();
    let mut state = SimState::new(&sc, &config("short", 30)).unwrap();
    let plan = state.phases[0].plan.clone();
    // launches are staggered so every drone arrives with the farthest one
    let dt = state.grid.slot_length;
    let slowest = plan
        .uavs
        .iter()
        .map(|u| (leg_length(&u.start, &u.location) / u.spec.speed_max / dt - 1e-9).ceil() as usize)
        .max()
        .unwrap();
    while !state.done() {
        advance_slot(&mut state).unwrap();
    }
    let r = state.finish();
    assert_eq!(r.event(EventKind::ShortServing).unwrap().slot, slowest);
    assert_eq!(r.below_min[..slowest].iter().min(), Some(&r.device_ids.len()));
    assert_eq!(r.below_min_between(slowest, 30), 0);
}

#[test]
fn long_failure_bridges_until_the_helikite() {
    let r = run(&long_failure(0).unwrap(), &config("long", 120)).unwrap();
    let first = r.event(EventKind::ShortServing).unwrap().slot;
    let kite = r.event(EventKind::LongServing).unwrap().slot;
    let out = r.event(EventKind::Withdraw).unwrap().slot;
    assert_eq!(kite, 90);
    assert_eq!(out, 90);
    assert_eq!(r.below_min_between(first, 120), 0);
    let order: Vec<_> = r.timeline.iter().map(|e| e.slot).collect();
    assert!(order.windows(2).all(|w| w[0] <= w[1]));
    assert!(r.violations.is_empty(), "{:?}", r.violations);
}

#[test]
fn hovering_step_drains_hover_and_comm() {
    let sc = short_failure(1).unwrap();
    let mut state = SimState::new(&sc, &config("hover", 10)).unwrap();
    for _ in 0..5 {
        advance_slot(&mut state).unwrap();
    }
    let before: Vec<_> = state.trajectories.iter().map(|t| t.slots[4]).collect();
    let ledger_before = state.report().ledgers.clone();
    advance_slot(&mut state).unwrap();
    let dt = state.grid.slot_length;
    for (u, t) in state.trajectories.iter().enumerate() {
        let (Some(a), Some(b)) = (before[u], t.slots[5]) else { continue };
        if a.action != Action::ServeHover || b.action != Action::ServeHover {
            continue;
        }
        assert_eq!(a.position, b.position);
        let row = state.report().energy.iter().rev().find(|r| r.uav == u).unwrap();
        assert_eq!(row.slot, 5);
        let comm = row.drain_uj as f64 / 1e6 / dt - t.spec.hover_power;
        assert!(comm > 0.0 && comm <= t.spec.comm_power_max + 1e-6, "{comm}");
        let drop = ledger_before[u].battery_uj.unwrap() - state.report().ledgers[u].battery_uj.unwrap();
        assert_eq!(drop, row.drain_uj);
    }
}

#[test]
fn withdraw_happens_exactly_at_the_boundary_slot() {
    let sc = long_failure(4).unwrap();
    let mut state = SimState::new(&sc, &config("edge", 100)).unwrap();
    let short = state.phases.iter().find(|p| p.term == Term::Short).unwrap().clone();
    let edge = short.withdraw.unwrap();
    for c in 0..short.plan.uavs.len() {
        let u = short.deployment.server_of(c, edge - 1).unwrap() + short.offset;
        let t = &state.trajectories[u];
        assert_eq!(t.slots[edge - 1].unwrap().action, Action::ServeHover);
        assert_ne!(t.slots[edge].unwrap().action, Action::ServeHover);
    }
    while !state.done() {
        advance_slot(&mut state).unwrap();
    }
    let r = state.finish();
    assert_eq!(r.event(EventKind::Withdraw).unwrap().slot, edge);
    assert_eq!(r.below_min[edge], 0);
}

#[test]
fn replay_from_checkpoint_is_identical() {
    let sc = long_failure(5).unwrap();
    let mut state = SimState::new(&sc, &config("replay", 100)).unwrap();
    for _ in 0..50 {
        advance_slot(&mut state).unwrap();
    }
    let mut twin = state.clone();
    while !state.done() {
        advance_slot(&mut state).unwrap();
    }
    while !twin.done() {
        advance_slot(&mut twin).unwrap();
    }
    assert_eq!(state.finish(), twin.finish());
}

#[test]
fn charging_runs_close_the_ledger_exactly() {
    for seed in 0..4 {
        let sc = deployment_instance(seed);
        let r = run(&sc, &config("deploy", 240)).unwrap();
        assert!(r.energy.iter().any(|e| e.charge_uj > 0), "seed {seed} never charged");
        assert!(r.energy_closes());
        assert!(r.min_battery_uj().unwrap() >= 0);
        for l in &r.ledgers {
            if let (Some(a), Some(b)) = (l.initial_uj, l.battery_uj) {
                let drained: i64 = r
                    .energy
                    .iter()
                    .filter(|e| r.ledgers[e.uav].uav_id == l.uav_id)
                    .map(|e| e.drain_uj)
                    .sum();
                assert_eq!(drained, l.drained_uj);
                assert_eq!(a - drained + l.charged_uj, b);
            }
        }
    }
}

#[test]
fn bundles_are_byte_identical() {
    let sc = long_failure(1).unwrap();
    let dir = std::env::temp_dir().join(format!("d3s-sim-{}", std::process::id()));
    let a = run(&sc, &config("twice", 100)).unwrap().write_bundle(&dir.join("a")).unwrap();
    let b = run(&sc, &config("twice", 100)).unwrap().write_bundle(&dir.join("b")).unwrap();
    assert!(a.ends_with("twice_seed1"));
    for f in ["rates.csv", "energy.csv", "routing.csv", "timeline.csv", "trajectories.csv", "summary.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn joules_render_exactly() {
    assert_eq!(format_joules(1_500_000), "1.500000");
    assert_eq!(format_joules(-7), "-0.000007");
    assert_eq!(format_joules(0), "0.000000");
}
