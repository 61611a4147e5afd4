use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::dimensioning::Term;
use crate::routing::{write_trace_csv, MeshTopology, RouteMetrics, RouteTrace};
use crate::trajectory::{write_trajectory_csv, Action, Trajectory, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EventKind {
    Failure,
    ShortServing,
    LongServing,
    Handover,
    Withdraw,
    Redimension,
    Note,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Failure => "failure",
            EventKind::ShortServing => "short_serving",
            EventKind::LongServing => "long_serving",
            EventKind::Handover => "handover",
            EventKind::Withdraw => "withdraw",
            EventKind::Redimension => "redimension_requested",
            EventKind::Note => "note",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEvent {
    pub slot: usize,
    pub time: f64,
    pub kind: EventKind,
    pub detail: String,
}

impl TimelineEvent {
    pub fn new(slot: usize, time: f64, kind: EventKind, detail: impl Into<String>) -> Self {
        Self {
            slot,
            time,
            kind,
            detail: detail.into(),
        }
    }
}

/// Energy of one UAV in one active slot, in microjoules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub slot: usize,
    pub uav: usize,
    pub action: Action,
    pub drain_uj: i64,
    pub charge_uj: i64,
    /// `None` for tethered UAVs.
    pub battery_uj: Option<i64>,
}

/// Running totals per UAV, in microjoules.
#[derive(Debug, Clone, PartialEq)]
pub struct UavLedger {
    pub uav_id: String,
    pub initial_uj: Option<i64>,
    pub drained_uj: i64,
    pub charged_uj: i64,
    pub battery_uj: Option<i64>,
}

impl UavLedger {
    /// Start minus drains plus charges equals the final level.
    pub fn closes(&self) -> bool {
        match (self.initial_uj, self.battery_uj) {
            (Some(a), Some(b)) => a - self.drained_uj + self.charged_uj == b,
            (None, None) => true,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub label: String,
    pub seed: u64,
    pub slot_length: f64,
    pub t0: f64,
    pub slots: usize,
    pub device_ids: Vec<String>,
    pub min_rates: Vec<f64>,
    /// Achieved rate per slot per device, bit/s.
    pub rates: Vec<Vec<f64>>,
    /// Devices below their minimum, per slot.
    pub below_min: Vec<usize>,
    pub energy: Vec<EnergyRow>,
    pub ledgers: Vec<UavLedger>,
    pub routing: RouteMetrics,
    pub routing_trace: RouteTrace,
    pub routing_nodes: MeshTopology,
    pub timeline: Vec<TimelineEvent>,
    pub trajectories: Vec<Trajectory>,
    pub violations: Vec<Violation>,
    pub plan_ids: Vec<(Term, String)>,
    /// First slot in which some plan had every hover point covered.
    pub service_start: Option<usize>,
}

pub const RATES_CSV_HEADER: &str = "slot,time_s,device,rate_bps,min_rate_bps,below_min";
pub const ENERGY_CSV_HEADER: &str = "slot,uav_id,action,drain_J,charge_J,battery_J";
pub const TIMELINE_CSV_HEADER: &str = "slot,time_s,event,detail";

/// Exact decimal rendering of a microjoule count.
pub fn format_joules(uj: i64) -> String {
    let sign = if uj < 0 { "-" } else { "" };
    let a = uj.unsigned_abs();
    format!("{sign}{}.{:06}", a / 1_000_000, a % 1_000_000)
}

impl SimReport {
    /// Device-slots below minimum from the start of service on.
    pub fn violation_count(&self) -> usize {
        match self.service_start {
            Some(s) => self.below_min[s..].iter().sum(),
            None => self.below_min.iter().sum(),
        }
    }

    /// Device-slots below minimum in `[from, to)`.
    pub fn below_min_between(&self, from: usize, to: usize) -> usize {
        self.below_min[from.min(self.below_min.len())..to.min(self.below_min.len())]
            .iter()
            .sum()
    }

    pub fn event(&self, kind: EventKind) -> Option<&TimelineEvent> {
        self.timeline.iter().find(|e| e.kind == kind)
    }

    pub fn energy_closes(&self) -> bool {
        self.ledgers.iter().all(UavLedger::closes)
    }

    pub fn min_battery_uj(&self) -> Option<i64> {
        self.energy.iter().filter_map(|r| r.battery_uj).min()
    }

    pub fn bundle_name(&self) -> String {
        format!("{}_seed{}", self.label, self.seed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "run {} seed {}: {} slots of {} s", self.label, self.seed, self.slots, self.slot_length);
        for (term, id) in &self.plan_ids {
            let _ = writeln!(s, "  {term:?}-term plan {id}");
        }
        let _ = writeln!(
            s,
            "  service from slot {}, device-slots below minimum after that: {}",
            self.service_start.map_or("-".to_string(), |k| k.to_string()),
            self.violation_count()
        );
        let _ = writeln!(
            s,
            "  energy ledger closes: {}, lowest battery {} J",
            self.energy_closes(),
            self.min_battery_uj().map_or("-".to_string(), format_joules)
        );
        let a = &self.routing.aggregate;
        let _ = writeln!(
            s,
            "  routing: throughput {:.1} bit/slot, delivery {:.4}, mean delay {}, max queue {:.1} bit",
            a.throughput,
            a.delivery_ratio,
            a.mean_delay.map_or("-".to_string(), |d| format!("{d:.3} slots")),
            a.max_queue
        );
        let _ = writeln!(s, "  trajectory violations: {}", self.violations.len());
        for e in &self.timeline {
            let _ = writeln!(s, "  slot {:>5} ({:>9.1} s) {} {}", e.slot, e.time, e.kind.as_str(), e.detail);
        }
        s
    }

    pub fn write_rates_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{RATES_CSV_HEADER}")?;
        for (k, row) in self.rates.iter().enumerate() {
            let t = self.t0 + k as f64 * self.slot_length;
            for (i, r) in row.iter().enumerate() {
                let below = crate::dimensioning::rate_violation(self.min_rates[i], *r) > 0.0;
                writeln!(out, "{k},{t:.1},{},{r:.3},{:.3},{}", self.device_ids[i], self.min_rates[i], u8::from(below))?;
            }
        }
        Ok(())
    }

    pub fn write_energy_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{ENERGY_CSV_HEADER}")?;
        for r in &self.energy {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.slot,
                self.ledgers[r.uav].uav_id,
                r.action,
                format_joules(r.drain_uj),
                format_joules(r.charge_uj),
                r.battery_uj.map_or(String::new(), format_joules)
            )?;
        }
        Ok(())
    }

    pub fn write_timeline_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{TIMELINE_CSV_HEADER}")?;
        for e in &self.timeline {
            writeln!(out, "{},{:.1},{},{}", e.slot, e.time, e.kind.as_str(), e.detail.replace(',', ";"))?;
        }
        Ok(())
    }

    /// Writes the CSV bundle and summary under `dir/<label>_seed<seed>`.
    pub fn write_bundle(&self, dir: &Path) -> io::Result<PathBuf> {
        let root = dir.join(self.bundle_name());
        fs::create_dir_all(&root)?;
        let emit = |name: &str, f: &dyn Fn(&mut io::BufWriter<fs::File>) -> io::Result<()>| -> io::Result<()> {
            let mut w = io::BufWriter::new(fs::File::create(root.join(name))?);
            f(&mut w)?;
            w.flush()
        };
        emit("rates.csv", &|w| self.write_rates_csv(w))?;
        emit("energy.csv", &|w| self.write_energy_csv(w))?;
        emit("routing.csv", &|w| write_trace_csv(&self.routing_trace, &self.routing_nodes, w))?;
        emit("timeline.csv", &|w| self.write_timeline_csv(w))?;
        emit("trajectories.csv", &|w| write_trajectory_csv(&self.trajectories, w))?;
        fs::write(root.join("summary.txt"), self.summary())?;
        Ok(root)
    }
}
