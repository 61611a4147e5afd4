//! Slot engine tying the four phases together: demand snapshots, dimensioning,
//! trajectory execution and backbone routing, with the short-to-long handover.

mod report;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::dimensioning::{
    build_plan, dimension_long_term, dimension_short_term, plan_rates, rate_violation, transition_plan,
    DeploymentPlan, DimensionConfig, PlacedUav, PlanContext, Term, TransitionError,
};
use crate::routing::{
    route_metrics, step_backpressure, Arrivals, BackpressureState, Flow, MeshLink, MeshNode, MeshTopology,
    RouteTrace,
};
use crate::scenario::{Scenario, ScenarioError};
use crate::trajectory::{
    plan_trajectories, validate_trajectory, Action, ChargingSchedule, PlannedDeployment, SchedulePolicy, TimeGrid,
    Trajectory, Violation,
};

pub use report::{
    format_joules, EnergyRow, EventKind, SimReport, TimelineEvent, UavLedger, ENERGY_CSV_HEADER, RATES_CSV_HEADER,
    TIMELINE_CSV_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Demand,
    Decision,
    Deployment,
    Service,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Demand => "demand",
            Phase::Decision => "decision",
            Phase::Deployment => "deployment",
            Phase::Service => "service",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("{phase} phase, slot {slot}: {message}")]
    Phase { phase: Phase, slot: usize, message: String },
    #[error("simulation invariant broken at slot {slot}: {message}")]
    Invariant { slot: usize, message: String },
}

fn phase_err(phase: Phase, slot: usize, e: impl fmt::Display) -> SimError {
    SimError::Phase {
        phase,
        slot,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Prefix of the output directory name.
    pub label: String,
    pub slot_length: f64,
    /// Defaults to the whole service window.
    pub horizon_slots: Option<usize>,
    /// Momentum weight of the back-pressure router.
    pub beta: f64,
    pub dimension: DimensionConfig,
    pub policy: SchedulePolicy,
    /// UAV pairs closer than this get a backbone link even off the tree, metres.
    pub backbone_range: f64,
    /// Transmit power of such off-tree links, watts.
    pub spare_power: f64,
    /// Slots a mobile UE may stay below its minimum before re-dimensioning is requested.
    pub persistence: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            label: "run".into(),
            slot_length: crate::casestudy::SLOT_LENGTH,
            horizon_slots: None,
            beta: 0.5,
            dimension: DimensionConfig::default(),
            policy: SchedulePolicy::default(),
            backbone_range: 250.0,
            spare_power: 0.1,
            persistence: 10,
        }
    }
}

/// One plan together with its executed trajectories. `offset` is the index of
/// its first trajectory in the run's combined list.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanPhase {
    pub term: Term,
    pub plan: DeploymentPlan,
    pub deployment: PlannedDeployment,
    pub offset: usize,
    pub withdraw: Option<usize>,
    serving_since: Option<usize>,
    servers: Vec<Option<usize>>,
}

impl PlanPhase {
    fn all_cells_served(&self, slot: usize) -> bool {
        !self.plan.uavs.is_empty() && (0..self.plan.uavs.len()).all(|c| self.deployment.server_of(c, slot).is_some())
    }
}

/// Service outcome for one set of hovering UAVs.
#[derive(Debug, Clone, PartialEq)]
struct Served {
    rates: Vec<f64>,
    /// Per combined UAV index: transmit power and the devices it serves.
    comm: Vec<f64>,
    load: Vec<Vec<usize>>,
    topology: MeshTopology,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: usize,
    pub scenario: Scenario,
    pub config: SimConfig,
    pub grid: TimeGrid,
    pub t0: f64,
    pub phases: Vec<PlanPhase>,
    pub trajectories: Vec<Trajectory>,
    ctx: PlanContext,
    nodes: Vec<MeshNode>,
    links: Vec<MeshLink>,
    routing: BackpressureState,
    cache: BTreeMap<Vec<usize>, Served>,
    level: Vec<Option<i64>>,
    streak: Vec<usize>,
    report: SimReport,
}

fn to_uj(joules: f64) -> i64 {
    (joules * 1e6).round() as i64
}

impl SimState {
    /// Runs the demand, decision and deployment phases and readies the slot loop.
    pub fn new(scenario: &Scenario, config: &SimConfig) -> Result<Self, SimError> {
        scenario.validate()?;
        let req = &scenario.request;
        let t0 = req.start();
        let dt = config.slot_length;
        let horizon = config
            .horizon_slots
            .unwrap_or(((req.end() - t0) / dt - 1e-9).ceil().max(1.0) as usize);
        let grid = TimeGrid::new(dt, horizon).map_err(|e| phase_err(Phase::Deployment, 0, e))?;
        let snapshot = scenario.demand_at(t0).map_err(|e| phase_err(Phase::Demand, 0, e))?;

        let dim = DimensionConfig {
            seed: scenario.seed,
            time: Some(t0),
            ..config.dimension.clone()
        };
        let ctx = PlanContext::new(scenario, &dim);
        let term = req.failure_class.map_or(Term::Short, |c| c.term());
        let mut events = Vec::new();
        if let (Some(gbs), Some(class)) = (&req.failed_gbs, req.failure_class) {
            events.push(TimelineEvent::new(0, t0, EventKind::Failure, format!("{gbs} {class:?}")));
        }

        let pick = |r: Result<crate::dimensioning::DimensionResult, _>| -> Result<Option<DeploymentPlan>, SimError> {
            let r = r.map_err(|e| phase_err(Phase::Decision, 0, e))?;
            Ok(r.min_count_plan().map(|p| p.plan.clone()))
        };
        let long = match term {
            Term::Long => Some(
                pick(dimension_long_term(scenario, &scenario.fleet, &dim))?
                    .ok_or_else(|| phase_err(Phase::Decision, 0, "no feasible long-term plan"))?,
            ),
            Term::Short => None,
        };
        let has_short = scenario
            .fleet
            .uavs
            .iter()
            .any(|u| scenario.fleet.spec_of(u).term == Term::Short);
        let short = if has_short {
            match pick(dimension_short_term(scenario, &scenario.fleet, &dim)) {
                Ok(p) => p,
                Err(e) if long.is_some() => {
                    events.push(TimelineEvent::new(0, t0, EventKind::Note, format!("no drone bridge: {e}")));
                    None
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        if short.is_none() && long.is_none() {
            return Err(phase_err(Phase::Decision, 0, "no feasible short-term plan"));
        }

        let slot_of = |t: f64| (((t - t0) / dt) - 1e-9).ceil().max(0.0) as usize;
        let mut phases = Vec::new();
        let mut handover = None;
        if let Some(long) = long {
            let active = match &short {
                Some(s) => match transition_plan(s, &long, t0, req.end(), &ctx.mission()) {
                    Ok(sched) => sched.long_active,
                    Err(TransitionError::ShortLifetime { uav_id, lifetime, needed }) => {
                        events.push(TimelineEvent::new(
                            0,
                            t0,
                            EventKind::Note,
                            format!("{uav_id} lasts {lifetime:.0} s of {needed:.0} s; relying on relief"),
                        ));
                        t0 + (0..long.uavs.len())
                            .map(|j| crate::dimensioning::activation_delay(&long, j))
                            .fold(0.0, f64::max)
                    }
                    Err(e) => return Err(phase_err(Phase::Decision, 0, e)),
                },
                None => {
                    t0 + (0..long.uavs.len())
                        .map(|j| crate::dimensioning::activation_delay(&long, j))
                        .fold(0.0, f64::max)
                }
            };
            let policy = SchedulePolicy {
                arrive_by: Some(slot_of(active)),
                ..config.policy.clone()
            };
            let dep =
                plan_trajectories(&long, scenario, &grid, &policy).map_err(|e| phase_err(Phase::Deployment, 0, e))?;
            let phase = PlanPhase {
                term: Term::Long,
                servers: vec![None; long.uavs.len()],
                plan: long,
                deployment: dep,
                offset: 0,
                withdraw: None,
                serving_since: None,
            };
            handover = (0..horizon).find(|&k| phase.all_cells_served(k)).or(Some(slot_of(active)));
            phases.push(phase);
        }
        if let Some(short) = short {
            let policy = SchedulePolicy {
                sync_arrival: config.policy.arrive_by.is_none(),
                withdraw_slot: handover.or(config.policy.withdraw_slot),
                ..config.policy.clone()
            };
            let dep =
                plan_trajectories(&short, scenario, &grid, &policy).map_err(|e| phase_err(Phase::Deployment, 0, e))?;
            phases.insert(
                0,
                PlanPhase {
                    term: Term::Short,
                    servers: vec![None; short.uavs.len()],
                    plan: short,
                    deployment: dep,
                    offset: 0,
                    withdraw: policy.withdraw_slot,
                    serving_since: None,
                },
            );
        }

        let mut trajectories = Vec::new();
        for p in &mut phases {
            p.offset = trajectories.len();
            for t in &p.deployment.trajectories {
                if trajectories.iter().any(|u: &Trajectory| u.uav_id == t.uav_id) {
                    return Err(phase_err(Phase::Deployment, 0, format!("{} flies in two plans", t.uav_id)));
                }
                trajectories.push(t.clone());
            }
        }

        // UAVs, then gateways, then a core node feeding every gateway
        let mut nodes: Vec<MeshNode> = trajectories
            .iter()
            .map(|t| MeshNode {
                id: t.uav_id.clone(),
                gateway: false,
            })
            .collect();
        nodes.extend(ctx.gateways.iter().map(|(id, _)| MeshNode {
            id: id.clone(),
            gateway: true,
        }));
        nodes.push(MeshNode {
            id: "core".into(),
            gateway: false,
        });
        let n_uav = trajectories.len();
        let core = nodes.len() - 1;
        let mut links = Vec::new();
        for a in 0..core {
            for b in 0..core {
                if a != b && (a < n_uav || b < n_uav) {
                    links.push(MeshLink {
                        from: a,
                        to: b,
                        capacity: 0.0,
                        success: 1.0,
                    });
                }
            }
        }
        for g in n_uav..core {
            links.push(MeshLink {
                from: core,
                to: g,
                capacity: f64::MAX / 4.0,
                success: 1.0,
            });
        }
        let flows = (0..n_uav)
            .map(|u| Flow {
                source: core,
                sink: u,
                rate: 0.0,
            })
            .collect();
        let routing = BackpressureState::new(nodes.len(), links.len(), flows, Arrivals::Constant);

        let level = trajectories
            .iter()
            .map(|t| t.full_battery().is_finite().then(|| to_uj(t.initial_battery.min(t.full_battery()))))
            .collect::<Vec<_>>();
        let report = SimReport {
            label: config.label.clone(),
            seed: scenario.seed,
            slot_length: dt,
            t0,
            slots: 0,
            device_ids: snapshot.devices.iter().map(|d| d.id.clone()).collect(),
            min_rates: snapshot.devices.iter().map(|d| d.min_rate).collect(),
            rates: Vec::new(),
            below_min: Vec::new(),
            energy: Vec::new(),
            ledgers: trajectories
                .iter()
                .zip(&level)
                .map(|(t, l)| UavLedger {
                    uav_id: t.uav_id.clone(),
                    initial_uj: *l,
                    drained_uj: 0,
                    charged_uj: 0,
                    battery_uj: *l,
                })
                .collect(),
            routing: route_metrics(&RouteTrace::new(n_uav)),
            routing_trace: RouteTrace::new(n_uav),
            routing_nodes: MeshTopology::new(nodes.clone()),
            timeline: events,
            trajectories: Vec::new(),
            violations: Vec::new(),
            plan_ids: phases.iter().map(|p| (p.term, p.plan.plan_id())).collect(),
            service_start: None,
        };
        Ok(Self {
            clock: 0,
            scenario: scenario.clone(),
            config: config.clone(),
            grid,
            t0,
            streak: vec![0; snapshot.len()],
            phases,
            trajectories,
            ctx,
            nodes,
            links,
            routing,
            cache: BTreeMap::new(),
            level,
            report,
        })
    }

    pub fn horizon(&self) -> usize {
        self.grid.horizon
    }

    pub fn done(&self) -> bool {
        self.clock >= self.grid.horizon
    }

    /// Associates the demand with the hovering UAVs, allocates power and
    /// evaluates the rates; pairs within range also get backbone links.
    fn serve(&self, serving: &[usize], slot: usize) -> Result<Served, SimError> {
        let t = self.t0 + slot as f64 * self.grid.slot_length;
        let snapshot = self.scenario.demand_at(t).map_err(|e| phase_err(Phase::Demand, slot, e))?;
        let n = self.trajectories.len();
        let mut out = Served {
            rates: vec![0.0; snapshot.len()],
            comm: vec![0.0; n],
            load: vec![Vec::new(); n],
            topology: MeshTopology::default(),
        };
        if serving.is_empty() || snapshot.is_empty() {
            return Ok(out);
        }
        let uavs: Vec<PlacedUav> = serving
            .iter()
            .map(|&u| {
                let tr = &self.trajectories[u];
                let at = tr.slots[slot].expect("serving UAVs are active").position;
                PlacedUav {
                    uav_id: tr.uav_id.clone(),
                    spec: tr.spec.clone(),
                    start: tr.start,
                    location: at,
                }
            })
            .collect();
        let (plan, _) = build_plan(uavs, &snapshot, &self.ctx).map_err(|e| phase_err(Phase::Service, slot, e))?;
        out.rates = plan_rates(&plan, &snapshot, &self.ctx).map_err(|e| phase_err(Phase::Service, slot, e))?;
        let index: Vec<usize> = plan
            .uavs
            .iter()
            .map(|p| self.trajectories.iter().position(|t| t.uav_id == p.uav_id).expect("plan UAV is flying"))
            .collect();
        for (j, &u) in index.iter().enumerate() {
            out.comm[u] = plan.comm_power(j);
        }
        for (i, row) in plan.assoc_device.iter().enumerate() {
            if let Some(j) = row.iter().position(|&a| a) {
                let d = snapshot.devices.iter().position(|d| d.id == plan.device_ids[i]).unwrap_or(i);
                out.load[index[j]].push(d);
            }
        }
        let sub = MeshTopology::from_plan(
            &plan,
            &self.ctx,
            self.grid.slot_length,
            self.config.backbone_range,
            self.config.spare_power,
        );
        let map = |v: usize| -> usize {
            if v < index.len() {
                index[v]
            } else {
                n + self.ctx.gateways.iter().position(|(id, _)| *id == sub.nodes[v].id).expect("known gateway")
            }
        };
        let mut topo = MeshTopology::new(self.nodes.clone());
        topo.links = self.links.clone();
        for l in &sub.links {
            let (a, b) = (map(l.from), map(l.to));
            if let Some(m) = topo.links.iter_mut().find(|m| m.from == a && m.to == b) {
                m.capacity = l.capacity;
            }
        }
        out.topology = topo;
        Ok(out)
    }

    pub fn report(&self) -> &SimReport {
        &self.report
    }

    /// Final report, with the combined trajectories and their violations.
    pub fn finish(mut self) -> SimReport {
        let stations = &self.scenario.geography.charging_stations;
        let schedule = ChargingSchedule::from_trajectories(&self.trajectories, stations, self.grid.horizon);
        self.report.violations = validate_trajectory(
            &self.trajectories,
            &schedule,
            &self.scenario,
            &self.grid,
            self.config.policy.min_separation,
        );
        self.report.trajectories = self.trajectories;
        self.report.routing_trace = self.routing.trace.clone();
        self.report.routing = route_metrics(&self.routing.trace);
        self.report.timeline.sort_by_key(|e| e.slot);
        self.report
    }
}

/// One slot: move UAVs along their trajectories, re-associate and serve the
/// demand, drain or charge batteries, route the served traffic and log phase
/// changes.
pub fn advance_slot(state: &mut SimState) -> Result<(), SimError> {
    let k = state.clock;
    if state.done() {
        return Err(SimError::Invariant {
            slot: k,
            message: "advanced past the horizon".into(),
        });
    }
    let dt = state.grid.slot_length;
    let t = state.t0 + k as f64 * dt;

    let serving: Vec<usize> = (0..state.trajectories.len())
        .filter(|&u| matches!(state.trajectories[u].slots[k], Some(s) if s.action == Action::ServeHover))
        .collect();
    let served = if state.scenario.mobiles.is_empty() {
        match state.cache.get(&serving) {
            Some(s) => s.clone(),
            None => {
                let s = state.serve(&serving, k)?;
                state.cache.insert(serving.clone(), s.clone());
                s
            }
        }
    } else {
        state.serve(&serving, k)?
    };

    if served.rates.iter().any(|r| !(*r >= 0.0)) {
        return Err(SimError::Invariant {
            slot: k,
            message: "negative or undefined rate".into(),
        });
    }
    let below: Vec<bool> = served
        .rates
        .iter()
        .zip(&state.report.min_rates)
        .map(|(&r, &m)| rate_violation(m, r) > 0.0)
        .collect();
    state.report.below_min.push(below.iter().filter(|&&b| b).count());
    state.report.rates.push(served.rates.clone());

    if !state.scenario.mobiles.is_empty() && state.report.service_start.is_some() {
        for (i, &b) in below.iter().enumerate() {
            state.streak[i] = if b { state.streak[i] + 1 } else { 0 };
            if state.streak[i] == state.config.persistence {
                let id = state.report.device_ids[i].clone();
                state
                    .report
                    .timeline
                    .push(TimelineEvent::new(k, t, EventKind::Redimension, format!("{id} below minimum")));
            }
        }
    }

    let stations = &state.scenario.geography.charging_stations;
    for (u, tr) in state.trajectories.iter().enumerate() {
        let Some(s) = tr.slots[k] else { continue };
        let spec = &tr.spec;
        let (drain, mut charge) = match s.action {
            Action::Travel | Action::ReturnToCharge => (to_uj(spec.travel_power * dt), 0),
            Action::ServeHover => (to_uj((spec.hover_power + served.comm[u]) * dt), 0),
            Action::Charging => {
                let rate = stations
                    .iter()
                    .find(|st| crate::trajectory::at_station(&s.position, st))
                    .map_or(0.0, |st| st.recharge_rate);
                (0, to_uj(rate * dt))
            }
        };
        let ledger = &mut state.report.ledgers[u];
        let battery = match state.level[u] {
            Some(level) => {
                let cap = to_uj(tr.full_battery());
                charge = charge.min(cap - (level - drain)).max(0);
                let next = level - drain + charge;
                if next < 0 {
                    return Err(SimError::Invariant {
                        slot: k,
                        message: format!("{} battery below zero", tr.uav_id),
                    });
                }
                state.level[u] = Some(next);
                Some(next)
            }
            None => None,
        };
        ledger.drained_uj += drain;
        ledger.charged_uj += charge;
        ledger.battery_uj = battery;
        state.report.energy.push(EnergyRow {
            slot: k,
            uav: u,
            action: s.action,
            drain_uj: drain,
            charge_uj: charge,
            battery_uj: battery,
        });
    }

    for (f, flow) in state.routing.flows.iter_mut().enumerate() {
        flow.rate = served.load[f].iter().map(|&d| served.rates[d]).sum::<f64>() * dt;
    }
    let topo = if served.topology.nodes.is_empty() {
        let mut t = MeshTopology::new(state.nodes.clone());
        t.links = state.links.clone();
        t
    } else {
        served.topology
    };
    step_backpressure(&mut state.routing, &topo, state.config.beta);

    for p in &mut state.phases {
        if p.serving_since.is_none() && p.all_cells_served(k) {
            p.serving_since = Some(k);
            let kind = match p.term {
                Term::Short => EventKind::ShortServing,
                Term::Long => EventKind::LongServing,
            };
            state.report.timeline.push(TimelineEvent::new(k, t, kind, p.plan.plan_id()));
            if state.report.service_start.is_none() {
                state.report.service_start = Some(k);
            }
        }
        for c in 0..p.plan.uavs.len() {
            let now = p.deployment.server_of(c, k).map(|i| i + p.offset);
            if let (Some(a), Some(b)) = (p.servers[c], now) {
                if a != b {
                    let detail = format!(
                        "{} -> {}",
                        state.trajectories[a].uav_id, state.trajectories[b].uav_id
                    );
                    state.report.timeline.push(TimelineEvent::new(k, t, EventKind::Handover, detail));
                }
            }
            if now.is_some() {
                p.servers[c] = now;
            }
        }
        if p.withdraw == Some(k) {
            state
                .report
                .timeline
                .push(TimelineEvent::new(k, t, EventKind::Withdraw, p.plan.plan_id()));
        }
    }

    state.clock += 1;
    state.report.slots = state.clock;
    Ok(())
}

/// Plans and simulates `scenario` over the configured horizon.
pub fn run(scenario: &Scenario, config: &SimConfig) -> Result<SimReport, SimError> {
    let mut state = SimState::new(scenario, config)?;
    while !state.done() {
        advance_slot(&mut state)?;
    }
    Ok(state.finish())
}

/// Violations found in a finished report's trajectories, by class.
pub fn violation_classes(report: &SimReport) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for v in &report.violations {
        *out.entry(Violation::class(v)).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests;
