use crate::dimensioning::{DeploymentPlan, UavSpec};
use crate::geometry::{polyline_length, point_along, Point3, Polygon, GEOM_EPS};
use crate::scenario::{ChargingStation, Scenario};

use super::path::{plan_path, slots_to_cover};
use super::{at_station, Action, ChargingSchedule, SlotState, TimeGrid, Trajectory, TrajectoryError};

/// Knobs of the deployment scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePolicy {
    /// Minimum 3-D distance between airborne UAVs, metres.
    pub min_separation: f64,
    /// Multiplier on the energy needed to reach a station.
    pub reserve_factor: f64,
    /// Clearance kept from restricted-zone corners, metres.
    pub zone_margin: f64,
    /// Earliest slot any UAV may take off.
    pub dispatch_slot: usize,
    /// Slot by which the plan should be hovering; launches are delayed to match.
    pub arrive_by: Option<usize>,
    /// Without `arrive_by`, delay launches so the whole plan starts hovering
    /// in the slot the farthest UAV arrives.
    pub sync_arrival: bool,
    /// Slot at which every UAV of the plan is sent home.
    pub withdraw_slot: Option<usize>,
    /// Use idle fleet UAVs to relieve ones that leave to charge.
    pub replacements: bool,
}

impl Default for SchedulePolicy {
    fn default() -> Self {
        Self {
            min_separation: 10.0,
            reserve_factor: 1.2,
            zone_margin: 5.0,
            dispatch_slot: 0,
            arrive_by: None,
            sync_arrival: false,
            withdraw_slot: None,
            replacements: true,
        }
    }
}

/// Trajectories (sorted by UAV id), pad occupancy and which plan cell each
/// UAV covers in each slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedDeployment {
    pub trajectories: Vec<Trajectory>,
    pub schedule: ChargingSchedule,
    pub cell_of: Vec<Vec<Option<usize>>>,
}

impl PlannedDeployment {
    /// UAV serving plan cell `cell` in `slot`, if any.
    pub fn server_of(&self, cell: usize, slot: usize) -> Option<usize> {
        self.cell_of.iter().position(|c| c.get(slot).copied().flatten() == Some(cell))
    }
}

#[derive(Debug, Clone)]
enum Mode {
    Idle,
    Outbound { path: Vec<Point3>, done: f64, cell: usize },
    Serving { cell: usize },
    Returning { path: Vec<Point3>, done: f64, station: Option<usize> },
    Charging { station: usize },
}

struct Agent {
    traj: Trajectory,
    pos: Point3,
    battery: f64,
    mode: Mode,
    retired: bool,
    leave_at: usize,
    cells: Vec<Option<usize>>,
}

struct Cell {
    hover: Point3,
    comm: f64,
    owner: usize,
    dispatch: usize,
    occupant: Option<usize>,
    incoming: Option<usize>,
    live: bool,
}

struct Booking {
    agent: usize,
    from: usize,
    to: usize,
}

struct Planner<'a> {
    grid: &'a TimeGrid,
    policy: &'a SchedulePolicy,
    zones: Vec<Polygon>,
    stations: &'a [ChargingStation],
    agents: Vec<Agent>,
    cells: Vec<Cell>,
    bookings: Vec<Vec<Booking>>,
}

struct StationOption {
    station: usize,
    path: Vec<Point3>,
    slots: usize,
    energy: f64,
}

impl<'a> Planner<'a> {
    fn spec(&self, a: usize) -> &UavSpec {
        &self.agents[a].traj.spec
    }

    fn step(&self, a: usize) -> f64 {
        self.spec(a).speed_max * self.grid.slot_length
    }

    fn leg(&self, a: usize, from: &Point3, to: &Point3) -> Result<(Vec<Point3>, usize), TrajectoryError> {
        let path = plan_path(from, to, &self.zones, self.policy.zone_margin)?;
        let slots = slots_to_cover(polyline_length(&path), self.step(a));
        Ok((path, slots))
    }

    fn travel_energy(&self, a: usize, slots: usize) -> f64 {
        self.spec(a).travel_power * self.grid.slot_length * slots as f64
    }

    fn hover_drain(&self, a: usize, cell: usize) -> f64 {
        (self.spec(a).hover_power + self.cells[cell].comm) * self.grid.slot_length
    }

    fn station_options(&self, a: usize, from: &Point3) -> Vec<StationOption> {
        let mut out: Vec<StationOption> = self
            .stations
            .iter()
            .enumerate()
            .filter_map(|(i, st)| {
                let (path, slots) = self.leg(a, from, &st.position.with_z(0.0)).ok()?;
                Some(StationOption {
                    station: i,
                    path,
                    slots,
                    energy: self.travel_energy(a, slots),
                })
            })
            .collect();
        out.sort_by(|x, y| x.energy.total_cmp(&y.energy).then(x.station.cmp(&y.station)));
        out
    }

    /// Slots on the pad (landing slot included) to refill from `arrival_level`.
    fn pad_slots(&self, a: usize, station: usize, arrival_level: f64) -> usize {
        let missing = (self.agents[a].traj.full_battery() - arrival_level).max(0.0);
        let per_slot = self.stations[station].recharge_rate * self.grid.slot_length;
        1 + if per_slot > 0.0 { (missing / per_slot - 1e-9).ceil().max(0.0) as usize } else { 0 }
    }

    fn pad_free(&self, station: usize, from: usize, to: usize) -> bool {
        let cap = self.stations[station].capacity as usize;
        (from..=to).all(|k| self.bookings[station].iter().filter(|b| b.from <= k && k <= b.to).count() < cap)
    }

    /// First station, cheapest to reach, that is reachable on `level` joules
    /// and has a free pad for the whole stay when leaving at `depart`.
    fn pick_station(&self, a: usize, from: &Point3, level: f64, depart: usize, reserve: f64) -> Option<(StationOption, usize, usize)> {
        self.station_options(a, from).into_iter().find_map(|o| {
            if level < reserve * o.energy {
                return None;
            }
            let land = depart + o.slots.max(1) - 1;
            let to = land + self.pad_slots(a, o.station, level - o.energy) - 1;
            self.pad_free(o.station, land, to).then_some((o, land, to))
        })
    }

    fn send_to_pad(&mut self, a: usize, t: usize, reserve: f64) -> Result<bool, TrajectoryError> {
        let from = self.agents[a].pos;
        let level = self.agents[a].battery;
        if let Some((o, land, to)) = self.pick_station(a, &from, level, t, reserve) {
            self.bookings[o.station].push(Booking { agent: a, from: land, to });
            self.agents[a].mode = Mode::Returning {
                path: o.path,
                done: 0.0,
                station: Some(o.station),
            };
            return Ok(true);
        }
        Ok(false)
    }

    fn send_home(&mut self, a: usize) -> Result<(), TrajectoryError> {
        let from = self.agents[a].pos;
        let start = self.agents[a].traj.start;
        let (path, _) = self.leg(a, &from, &start)?;
        self.agents[a].mode = Mode::Returning {
            path,
            done: 0.0,
            station: None,
        };
        Ok(())
    }

    fn clear_future(&mut self, a: usize, t: usize) {
        for list in &mut self.bookings {
            list.retain(|b| !(b.agent == a && b.from >= t));
        }
    }

    /// Latest departure slot from which a hovering UAV still reaches a free
    /// pad with its reserve intact; departing now only needs the bare trip.
    /// `Some((d, None))` with `d == horizon` means no return is needed.
    fn latest_departure(&self, a: usize, cell: usize, t: usize) -> Option<(usize, Option<(StationOption, usize, usize)>)> {
        let ag = &self.agents[a];
        let horizon = self.grid.horizon;
        if !ag.battery.is_finite() {
            return Some((horizon, None));
        }
        let drain = self.hover_drain(a, cell);
        let reserve = self.policy.reserve_factor;
        if self.stations.is_empty() {
            let home = self.leg(a, &ag.pos, &ag.traj.start).map(|(_, s)| s).ok()?;
            let need = reserve * self.travel_energy(a, home);
            if ag.battery < self.travel_energy(a, home) {
                return None;
            }
            let spare = ((ag.battery - need) / drain).floor().max(0.0) as usize;
            return Some(((t + spare).min(horizon), None));
        }
        let nearest = self.station_options(a, &ag.pos).first().map(|o| o.energy)?;
        let max_stay = if drain > 0.0 {
            ((ag.battery - reserve * nearest).max(0.0) / drain).floor() as usize
        } else {
            horizon
        };
        if t + max_stay >= horizon && ag.battery - (horizon - t) as f64 * drain >= reserve * nearest {
            return Some((horizon, None));
        }
        for d in (t + 1..=(t + max_stay).min(horizon)).rev() {
            let level = ag.battery - (d - t) as f64 * drain;
            if let Some(found) = self.pick_station(a, &ag.pos, level, d, reserve) {
                return Some((d, Some(found)));
            }
        }
        self.pick_station(a, &ag.pos, ag.battery, t, 1.0).map(|f| (t, Some(f)))
    }

    /// Idle UAV that can reach `cell` soonest, with its arrival slot count.
    fn best_relief(&self, cell: usize) -> Option<(usize, Vec<Point3>, usize)> {
        let c = &self.cells[cell];
        let mut best: Option<(usize, Vec<Point3>, usize)> = None;
        for (i, ag) in self.agents.iter().enumerate() {
            if ag.retired || !matches!(ag.mode, Mode::Idle) {
                continue;
            }
            let spec = &ag.traj.spec;
            let [lo, hi] = spec.altitude_range;
            if spec.comm_power_max < c.comm - 1e-12 || c.hover.z < lo - 1e-9 || c.hover.z > hi + 1e-9 {
                continue;
            }
            if ag.battery < ag.traj.full_battery() {
                continue;
            }
            let Ok((path, slots)) = self.leg(i, &ag.pos, &c.hover) else { continue };
            if ag.battery.is_finite() {
                let back = self.station_options(i, &c.hover).first().map(|o| o.energy).unwrap_or(0.0);
                let need = self.travel_energy(i, slots) + self.policy.reserve_factor * back + self.hover_drain(i, cell);
                if ag.battery < need {
                    continue;
                }
            }
            if best.as_ref().is_none_or(|b| slots < b.2) {
                best = Some((i, path, slots));
            }
        }
        best
    }

    fn launch(&mut self, a: usize, cell: usize, path: Vec<Point3>) {
        self.agents[a].mode = Mode::Outbound { path, done: 0.0, cell };
        self.cells[cell].incoming = Some(a);
    }

    fn decide(&mut self, t: usize) -> Result<(), TrajectoryError> {
        // arrivals and completed charges from the previous slot
        for a in 0..self.agents.len() {
            let full = self.agents[a].traj.full_battery();
            match self.agents[a].mode.clone() {
                Mode::Outbound { path, done, cell } if done >= polyline_length(&path) - GEOM_EPS => {
                    self.agents[a].mode = Mode::Serving { cell };
                    self.cells[cell].occupant = Some(a);
                    self.cells[cell].incoming = None;
                }
                Mode::Returning { path, done, station } if done >= polyline_length(&path) - GEOM_EPS => {
                    self.agents[a].mode = match station {
                        Some(s) => Mode::Charging { station: s },
                        None => Mode::Idle,
                    };
                }
                Mode::Charging { station } if self.agents[a].battery >= full => {
                    self.agents[a].mode = Mode::Idle;
                    for b in self.bookings[station].iter_mut().filter(|b| b.agent == a && b.to >= t) {
                        b.to = t.saturating_sub(1).max(b.from);
                    }
                }
                _ => {}
            }
        }

        if self.policy.withdraw_slot == Some(t) {
            for c in &mut self.cells {
                c.live = false;
                c.occupant = None;
                c.incoming = None;
            }
            for a in 0..self.agents.len() {
                self.agents[a].retired = true;
                if matches!(self.agents[a].mode, Mode::Outbound { .. } | Mode::Serving { .. }) {
                    self.clear_future(a, t);
                    if self.agents[a].battery.is_finite() {
                        if !self.send_to_pad(a, t, 1.0)? {
                            self.send_home(a)?;
                        }
                    } else {
                        self.send_home(a)?;
                    }
                }
            }
            return Ok(());
        }

        for list in &mut self.bookings {
            list.retain(|b| b.to >= t);
        }
        for cell in 0..self.cells.len() {
            let Some(a) = self.cells[cell].occupant else { continue };
            self.clear_future(a, t);
            let Some((depart, pad)) = self.latest_departure(a, cell, t) else {
                return Err(TrajectoryError::ScheduleInfeasible {
                    slot: t,
                    reason: format!("no free charging pad reachable by {}", self.agents[a].traj.uav_id),
                });
            };
            self.agents[a].leave_at = depart;
            if let Some((o, land, to)) = pad {
                self.bookings[o.station].push(Booking { agent: a, from: land, to });
                if depart == t {
                    self.cells[cell].occupant = None;
                    self.agents[a].mode = Mode::Returning {
                        path: o.path,
                        done: 0.0,
                        station: Some(o.station),
                    };
                }
            } else if depart == t {
                self.cells[cell].occupant = None;
                self.send_home(a)?;
            }
        }

        for cell in 0..self.cells.len() {
            let c = &self.cells[cell];
            if !c.live || c.incoming.is_some() || t < c.dispatch {
                continue;
            }
            if c.occupant.is_none() && t == c.dispatch && matches!(self.agents[c.owner].mode, Mode::Idle) {
                let owner = c.owner;
                let hover = c.hover;
                let from = self.agents[owner].pos;
                let (path, _) = self.leg(owner, &from, &hover)?;
                self.launch(owner, cell, path);
                continue;
            }
            if !self.policy.replacements && t > c.dispatch {
                continue;
            }
            let leave = match c.occupant {
                None => t,
                Some(o) => self.agents[o].leave_at,
            };
            if let Some((r, path, slots)) = self.best_relief(cell) {
                if c.occupant.is_none() || t + slots > leave {
                    self.launch(r, cell, path);
                }
            }
        }
        Ok(())
    }

    fn landed_at(&self, p: &Point3) -> Option<usize> {
        self.stations.iter().position(|st| at_station(p, st))
    }

    fn conflicts(&self, p: &Point3, placed: &[(usize, Point3)]) -> bool {
        let pad = self.landed_at(p);
        if let Some(s) = pad {
            let on_pad = placed.iter().filter(|(_, q)| self.landed_at(q) == Some(s)).count();
            if on_pad >= self.stations[s].capacity as usize {
                return true;
            }
        }
        placed.iter().any(|(_, q)| {
            let together = pad.is_some() && q.distance(p) <= 1e-6;
            !together && q.distance(p) < self.policy.min_separation
        })
    }

    fn advance(&mut self, t: usize) -> Result<(), TrajectoryError> {
        let dt = self.grid.slot_length;
        let mut placed: Vec<(usize, Point3)> = Vec::new();
        for (i, ag) in self.agents.iter().enumerate() {
            if matches!(ag.mode, Mode::Serving { .. } | Mode::Charging { .. }) {
                placed.push((i, ag.pos));
            }
        }
        for a in 0..self.agents.len() {
            let step = self.step(a);
            let (path, done) = match &self.agents[a].mode {
                Mode::Outbound { path, done, .. } | Mode::Returning { path, done, .. } => (path, *done),
                _ => continue,
            };
            let len = polyline_length(path);
            let next_done = (done + step).min(len);
            let want = if next_done >= len - GEOM_EPS {
                *path.last().expect("non-empty path")
            } else {
                point_along(path, next_done)
            };
            let here = self.agents[a].pos;
            let (pos, moved) = if self.conflicts(&want, &placed) && !self.conflicts(&here, &placed) {
                (here, false)
            } else {
                (want, true)
            };
            if moved {
                match &mut self.agents[a].mode {
                    Mode::Outbound { done, .. } | Mode::Returning { done, .. } => *done = next_done,
                    _ => {}
                }
            }
            self.agents[a].pos = pos;
            placed.push((a, pos));
        }

        for a in 0..self.agents.len() {
            let spec = self.agents[a].traj.spec.clone();
            let full = self.agents[a].traj.full_battery();
            let (action, comm, cell) = match self.agents[a].mode {
                Mode::Idle => {
                    self.agents[a].cells.push(None);
                    continue;
                }
                Mode::Outbound { .. } => (Action::Travel, 0.0, None),
                Mode::Returning { station: Some(_), .. } => (Action::ReturnToCharge, 0.0, None),
                Mode::Returning { station: None, .. } => (Action::Travel, 0.0, None),
                Mode::Serving { cell } => (Action::ServeHover, self.cells[cell].comm, Some(cell)),
                Mode::Charging { .. } => (Action::Charging, 0.0, None),
            };
            let ag = &mut self.agents[a];
            if ag.battery.is_finite() {
                match action {
                    Action::Travel | Action::ReturnToCharge => ag.battery -= spec.travel_power * dt,
                    Action::ServeHover => ag.battery -= (spec.hover_power + comm) * dt,
                    Action::Charging => {
                        let Mode::Charging { station } = ag.mode else { unreachable!() };
                        ag.battery = (ag.battery + self.stations[station].recharge_rate * dt).min(full);
                    }
                }
                if ag.battery < 0.0 {
                    return Err(TrajectoryError::EnergyInfeasible {
                        uav_id: ag.traj.uav_id.clone(),
                        slot: t,
                    });
                }
            }
            ag.traj.slots[t] = Some(SlotState {
                position: ag.pos,
                action,
                battery: ag.battery,
                comm_power: comm,
            });
            ag.cells.push(cell);
        }
        Ok(())
    }
}

/// Slot-by-slot flight, hover, return and charging plan for `plan`, relieving
/// UAVs that run low with idle fleet members of the same specs.
pub fn plan_trajectories(
    plan: &DeploymentPlan,
    scenario: &Scenario,
    grid: &TimeGrid,
    policy: &SchedulePolicy,
) -> Result<PlannedDeployment, TrajectoryError> {
    let horizon = grid.horizon;
    let mut agents = Vec::new();
    let mut add = |id: &str, spec: &UavSpec, start: Point3| {
        let traj = Trajectory::parked(id, spec, start, horizon);
        agents.push(Agent {
            battery: traj.initial_battery,
            traj,
            pos: start,
            mode: Mode::Idle,
            retired: false,
            leave_at: usize::MAX,
            cells: Vec::with_capacity(horizon),
        });
    };
    for u in &plan.uavs {
        add(&u.uav_id, &u.spec, u.start);
    }
    if policy.replacements {
        let specs: Vec<&str> = plan.uavs.iter().map(|u| u.spec.name.as_str()).collect();
        let mut spares: Vec<_> = scenario
            .fleet
            .uavs
            .iter()
            .filter(|f| specs.contains(&f.spec.as_str()) && !plan.uavs.iter().any(|u| u.uav_id == f.id))
            .collect();
        spares.sort_by(|a, b| a.id.cmp(&b.id));
        for f in spares {
            add(&f.id, scenario.fleet.spec_of(f), f.start);
        }
    }

    let stations = &scenario.geography.charging_stations;
    let mut planner = Planner {
        grid,
        policy,
        zones: scenario.geography.zone_polygons(),
        stations,
        agents,
        cells: Vec::new(),
        bookings: stations.iter().map(|_| Vec::new()).collect(),
    };
    let mut legs = Vec::with_capacity(plan.uavs.len());
    for (j, u) in plan.uavs.iter().enumerate() {
        legs.push(planner.leg(j, &u.start, &u.location)?.1);
    }
    let arrive_by = match policy.arrive_by {
        Some(by) => Some(by),
        None if policy.sync_arrival => legs.iter().max().map(|m| policy.dispatch_slot + m),
        None => None,
    };
    for (j, u) in plan.uavs.iter().enumerate() {
        let slots = legs[j];
        let dispatch = match arrive_by {
            Some(by) => by.saturating_sub(slots).max(policy.dispatch_slot),
            None => policy.dispatch_slot,
        };
        planner.cells.push(Cell {
            hover: u.location,
            comm: plan.comm_power(j),
            owner: j,
            dispatch,
            occupant: None,
            incoming: None,
            live: true,
        });
    }
    for i in 0..planner.cells.len() {
        for j in (i + 1)..planner.cells.len() {
            let d = planner.cells[i].hover.distance(&planner.cells[j].hover);
            if d < policy.min_separation {
                return Err(TrajectoryError::ScheduleInfeasible {
                    slot: policy.dispatch_slot,
                    reason: format!("hover points of {} and {} are {d:.1} m apart", plan.uavs[i].uav_id, plan.uavs[j].uav_id),
                });
            }
        }
    }

    for t in 0..horizon {
        planner.decide(t)?;
        planner.advance(t)?;
    }

    let mut pairs: Vec<(Trajectory, Vec<Option<usize>>)> =
        planner.agents.into_iter().map(|a| (a.traj, a.cells)).collect();
    pairs.sort_by(|a, b| a.0.uav_id.cmp(&b.0.uav_id));
    let (trajectories, cell_of): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let schedule = ChargingSchedule::from_trajectories(&trajectories, stations, horizon);
    Ok(PlannedDeployment {
        trajectories,
        schedule,
        cell_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casestudy::{base_scenario, drone_spec};
    use crate::dimensioning::PlacedUav;
    use crate::geometry::Point2;
    use crate::scenario::{FleetUav, Fleet};
    use crate::trajectory::{battery_profile, validate_trajectory};

    fn plan_of(uavs: Vec<PlacedUav>) -> DeploymentPlan {
        let n = uavs.len();
        let mut p = DeploymentPlan::empty();
        p.uavs = uavs;
        p.assoc_uav = vec![vec![false; n]; n];
        p.power_uav = vec![vec![0.0; n]; n];
        p
    }

    fn toy_spec(name: &str, battery: f64) -> UavSpec {
        let mut s = drone_spec();
        s.name = name.into();
        s.battery_energy = Some(battery);
        s.hover_power = 100.0;
        s.travel_power = 100.0;
        s.speed_max = 10.0;
        s
    }

    fn toy_scenario(specs: Vec<UavSpec>) -> Scenario {
        let mut sc = base_scenario(0);
        sc.geography.charging_stations = vec![ChargingStation {
            id: "s".into(),
            position: Point2::new(0.0, 0.0),
            capacity: 1,
            recharge_rate: 300.0,
        }];
        sc.fleet = Fleet {
            uavs: specs
                .iter()
                .map(|s| FleetUav {
                    id: s.name.clone(),
                    spec: s.name.clone(),
                    start: Point3::new(0.0, 0.0, 0.0),
                })
                .collect(),
            specs,
        };
        sc
    }

    fn actions(t: &Trajectory) -> Vec<Option<Action>> {
        t.slots.iter().map(|s| s.map(|s| s.action)).collect()
    }

    #[test]
    fn ample_battery_only_travels_and_hovers() {
        let spec = toy_spec("d1", 1e6);
        let sc = toy_scenario(vec![spec.clone()]);
        let plan = plan_of(vec![PlacedUav {
            uav_id: "d1".into(),
            spec,
            start: Point3::new(0.0, 0.0, 0.0),
            location: Point3::new(150.0, 0.0, 50.0),
        }]);
        let grid = TimeGrid::new(10.0, 8).unwrap();
        let out = plan_trajectories(&plan, &sc, &grid, &SchedulePolicy::default()).unwrap();
        use Action::*;
        // 200 m of climb and cruise at 100 m per slot
        let want: Vec<Option<Action>> = [Travel, Travel, ServeHover, ServeHover, ServeHover, ServeHover, ServeHover, ServeHover]
            .into_iter()
            .map(Some)
            .collect();
        assert_eq!(actions(&out.trajectories[0]), want);
        assert!(validate_trajectory(&out.trajectories, &out.schedule, &sc, &grid, 10.0).is_empty());
        assert_eq!(out.server_of(0, 2), Some(0));
        assert_eq!(out.server_of(0, 1), None);
    }

    #[test]
    fn shared_pad_is_used_in_turn() {
        // one slot to each hover point and back; 1 kJ per slot flying or hovering,
        // 3 kJ per slot on the pad
        let a = toy_spec("d1", 4000.0);
        let b = toy_spec("d2", 6000.0);
        let sc = toy_scenario(vec![a.clone(), b.clone()]);
        let plan = plan_of(vec![
            PlacedUav {
                uav_id: "d1".into(),
                spec: a,
                start: Point3::new(0.0, 0.0, 0.0),
                location: Point3::new(50.0, 0.0, 50.0),
            },
            PlacedUav {
                uav_id: "d2".into(),
                spec: b,
                start: Point3::new(0.0, 0.0, 0.0),
                location: Point3::new(-50.0, 0.0, 50.0),
            },
        ]);
        let grid = TimeGrid::new(10.0, 10).unwrap();
        let policy = SchedulePolicy {
            replacements: false,
            ..SchedulePolicy::default()
        };
        let out = plan_trajectories(&plan, &sc, &grid, &policy).unwrap();
        use Action::*;
        let d1 = [Some(Travel), Some(ServeHover), Some(ReturnToCharge), Some(Charging), None, None, None, None, None, None];
        let d2 = [
            Some(Travel),
            Some(ServeHover),
            Some(ServeHover),
            Some(ServeHover),
            Some(ReturnToCharge),
            Some(Charging),
            Some(Charging),
            None,
            None,
            None,
        ];
        assert_eq!(actions(&out.trajectories[0]), d1);
        assert_eq!(actions(&out.trajectories[1]), d2);
        let pad = &out.schedule.occupancy["s"];
        let on_pad: Vec<usize> = pad.iter().map(Vec::len).collect();
        assert_eq!(on_pad, vec![0, 0, 1, 1, 1, 1, 1, 0, 0, 0]);
        assert_eq!(pad[3], vec!["d1".to_string()]);
        assert_eq!(pad[4], vec!["d2".to_string()]);
        assert!(validate_trajectory(&out.trajectories, &out.schedule, &sc, &grid, 10.0).is_empty());
        for t in &out.trajectories {
            let profile = battery_profile(t, &grid, &sc.geography.charging_stations).unwrap();
            let recorded: Vec<f64> = t.slots.iter().zip(&profile).map(|(s, p)| s.map_or(*p, |s| s.battery)).collect();
            assert_eq!(profile, recorded);
        }
        assert_eq!(out.trajectories[1].slots[6].unwrap().battery, 6000.0);
    }

    #[test]
    fn standby_drone_travel_time() {
        let sc = base_scenario(0);
        let spec = drone_spec();
        let start = Point3::new(60.0, 60.0, 0.0);
        let hover = Point3::new(200.0, 200.0, 100.0);
        let plan = plan_of(vec![PlacedUav {
            uav_id: "drone1".into(),
            spec: spec.clone(),
            start,
            location: hover,
        }]);
        let grid = TimeGrid::new(5.0, 20).unwrap();
        let out = plan_trajectories(&plan, &sc, &grid, &SchedulePolicy::default()).unwrap();
        let t = out.trajectories.iter().find(|t| t.uav_id == "drone1").unwrap();
        // 100 m climb plus 140·√2 m cruise at 15 m/s is 19.87 s: four 5 s slots
        let travel = (100.0 + 140.0 * 2f64.sqrt()) / spec.speed_max;
        assert!((travel - 19.866).abs() < 1e-3);
        assert_eq!(t.first_service_slot(), Some((travel / grid.slot_length).ceil() as usize));
        assert_eq!(t.slots[3].unwrap().position, hover);
    }

    #[test]
    fn late_arrival_target_delays_launch() {
        let sc = base_scenario(0);
        let spec = drone_spec();
        let plan = plan_of(vec![PlacedUav {
            uav_id: "drone1".into(),
            spec,
            start: Point3::new(60.0, 60.0, 0.0),
            location: Point3::new(200.0, 200.0, 100.0),
        }]);
        let grid = TimeGrid::new(5.0, 20).unwrap();
        let policy = SchedulePolicy {
            arrive_by: Some(10),
            withdraw_slot: Some(15),
            ..SchedulePolicy::default()
        };
        let out = plan_trajectories(&plan, &sc, &grid, &policy).unwrap();
        let t = out.trajectories.iter().find(|t| t.uav_id == "drone1").unwrap();
        assert!(t.slots[5].is_none());
        assert_eq!(t.first_service_slot(), Some(10));
        assert_eq!(t.slots[14].unwrap().action, Action::ServeHover);
        assert_eq!(t.slots[15].unwrap().action, Action::ReturnToCharge);
        assert!(validate_trajectory(&out.trajectories, &out.schedule, &sc, &grid, 10.0).is_empty());
    }

    #[test]
    fn synchronized_arrival_waits_for_the_farthest() {
        let sc = base_scenario(0);
        let spec = drone_spec();
        let plan = plan_of(vec![
            PlacedUav {
                uav_id: "drone1".into(),
                spec: spec.clone(),
                start: Point3::new(60.0, 60.0, 0.0),
                location: Point3::new(80.0, 80.0, 100.0),
            },
            PlacedUav {
                uav_id: "drone2".into(),
                spec,
                start: Point3::new(340.0, 60.0, 0.0),
                location: Point3::new(100.0, 300.0, 100.0),
            },
        ]);
        let grid = TimeGrid::new(5.0, 30).unwrap();
        let policy = SchedulePolicy {
            sync_arrival: true,
            replacements: false,
            ..SchedulePolicy::default()
        };
        let out = plan_trajectories(&plan, &sc, &grid, &policy).unwrap();
        // 100 m climb plus 240·√2 m at 15 m/s: 29.3 s, six 5 s slots
        let far = ((100.0 + 240.0 * 2f64.sqrt()) / 15.0 / 5.0f64).ceil() as usize;
        let first: Vec<_> = out.trajectories.iter().map(|t| t.first_service_slot()).collect();
        assert_eq!(first, vec![Some(far), Some(far)]);
        assert!(out.trajectories[0].slots[far - 3].is_none());
        assert!(out.trajectories[0].slots[far - 2].is_some());
    }

    #[test]
    fn relief_covers_a_cell_while_the_first_uav_charges() {
        let a = toy_spec("d1", 5000.0);
        let mut sc = toy_scenario(vec![a.clone()]);
        sc.fleet.uavs.push(FleetUav {
            id: "d2".into(),
            spec: "d1".into(),
            start: Point3::new(0.0, 0.0, 0.0),
        });
        let plan = plan_of(vec![PlacedUav {
            uav_id: "d1".into(),
            spec: a,
            start: Point3::new(0.0, 0.0, 0.0),
            location: Point3::new(50.0, 0.0, 50.0),
        }]);
        let grid = TimeGrid::new(10.0, 12).unwrap();
        let out = plan_trajectories(&plan, &sc, &grid, &SchedulePolicy::default()).unwrap();
        assert!(validate_trajectory(&out.trajectories, &out.schedule, &sc, &grid, 10.0).is_empty());
        let spare = &out.trajectories[1];
        assert_eq!(spare.uav_id, "d2");
        assert!(spare.first_service_slot().is_some());
        // every hand-over leaves the cell uncovered for a single slot
        let gaps: Vec<usize> = (1..12).filter(|&k| out.server_of(0, k).is_none()).collect();
        assert_eq!(gaps, vec![3, 6, 9], "{:?}", out.cell_of);
    }

    #[test]
    fn close_hover_points_are_rejected() {
        let sc = base_scenario(0);
        let spec = drone_spec();
        let mk = |id: &str, x: f64| PlacedUav {
            uav_id: id.into(),
            spec: spec.clone(),
            start: Point3::new(60.0, 60.0, 0.0),
            location: Point3::new(x, 200.0, 100.0),
        };
        let plan = plan_of(vec![mk("drone1", 200.0), mk("drone2", 205.0)]);
        let grid = TimeGrid::new(5.0, 4).unwrap();
        assert!(matches!(
            plan_trajectories(&plan, &sc, &grid, &SchedulePolicy::default()),
            Err(TrajectoryError::ScheduleInfeasible { .. })
        ));
    }
}
