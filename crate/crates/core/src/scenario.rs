//! Demand-phase inputs: the service request, device sets, channels, geography
//! and fleet, plus the scenario file format and failure injection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dimensioning::{Term, UavSpec};
use crate::geometry::{Point2, Point3, Polygon, Rect};
use crate::radio::RadioConfig;

/// Slack allowed when checking waypoint speeds, in meters.
const SPEED_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid {field}{}: {message}", id.as_ref().map(|i| format!(" `{i}`")).unwrap_or_default())]
    Validation {
        field: String,
        id: Option<String>,
        message: String,
    },
    #[error("time {t} s is outside the service window [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("unknown ground base station `{0}`")]
    UnknownGbs(String),
    #[error("ground base station `{0}` has already failed")]
    AlreadyFailed(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

fn invalid(field: &str, id: Option<&str>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        id: id.map(str::to_string),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestType {
    DisasterRecovery,
    SelfHealing,
    BandwidthBoost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuity {
    Continuous,
    Intermittent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    ShortTerm,
    LongTerm,
}

impl FailureClass {
    pub fn term(self) -> Term {
        match self {
            FailureClass::ShortTerm => Term::Short,
            FailureClass::LongTerm => Term::Long,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceRequest {
    pub request_type: RequestType,
    pub epicenter: Point2,
    pub coverage_radius: f64,
    pub required_bandwidth: f64,
    /// `[start, end]` in seconds.
    pub service_window: [f64; 2],
    pub continuity: Continuity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_class: Option<FailureClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_gbs: Option<String>,
    /// Device ids this request covers; `None` means every device.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demand: Option<Vec<String>>,
}

impl ServiceRequest {
    pub fn start(&self) -> f64 {
        self.service_window[0]
    }

    pub fn end(&self) -> f64 {
        self.service_window[1]
    }

    pub fn duration(&self) -> f64 {
        self.end() - self.start()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryDevice {
    pub id: String,
    pub position: Point2,
    pub min_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub time: f64,
    pub position: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobileDevice {
    pub id: String,
    pub track: Vec<Waypoint>,
    pub speed_max: f64,
    pub min_rate: f64,
}

impl MobileDevice {
    /// Position at `t`, linearly interpolated and held constant outside the track.
    pub fn position_at(&self, t: f64) -> Point2 {
        let first = &self.track[0];
        if t <= first.time {
            return first.position;
        }
        for w in self.track.windows(2) {
            if t <= w[1].time {
                let frac = (t - w[0].time) / (w[1].time - w[0].time);
                let a = w[0].position;
                let b = w[1].position;
                return Point2::new(a.x + (b.x - a.x) * frac, a.y + (b.y - a.y) * frac);
            }
        }
        self.track.last().map(|w| w.position).unwrap_or(first.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    SharedSpectrum,
    Ofdma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSet {
    pub mode: SpectrumMode,
    pub channels: Vec<Channel>,
}

impl ChannelSet {
    pub fn uniform(count: usize, width: f64, first_center: f64, mode: SpectrumMode) -> Self {
        let channels = (0..count)
            .map(|i| Channel {
                center: first_center + width * i as f64,
                width,
            })
            .collect();
        Self { mode, channels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChargingStation {
    pub id: String,
    pub position: Point2,
    pub capacity: u32,
    /// Watts delivered to each docked UAV.
    pub recharge_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestrictedZone {
    pub id: String,
    pub polygon: Polygon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundBaseStation {
    pub id: String,
    pub position: Point2,
    pub coverage_radius: f64,
    pub operational: bool,
    /// `[start, end]` seconds during which the station is down.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outage: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geography {
    pub area: Rect,
    #[serde(default)]
    pub charging_stations: Vec<ChargingStation>,
    #[serde(default)]
    pub restricted_zones: Vec<RestrictedZone>,
    #[serde(default)]
    pub gbs: Vec<GroundBaseStation>,
}

impl Geography {
    pub fn zone_polygons(&self) -> Vec<Polygon> {
        self.restricted_zones.iter().map(|z| z.polygon.clone()).collect()
    }

    pub fn station(&self, id: &str) -> Option<&ChargingStation> {
        self.charging_stations.iter().find(|s| s.id == id)
    }

    /// Nearest station to `p` (ties broken by declaration order).
    pub fn nearest_station(&self, p: &Point2) -> Option<&ChargingStation> {
        self.charging_stations
            .iter()
            .min_by(|a, b| a.position.distance(p).total_cmp(&b.position.distance(p)))
    }

    /// Nearest operational GBS to `p` (ties broken by declaration order).
    pub fn nearest_operational_gbs(&self, p: &Point2) -> Option<&GroundBaseStation> {
        self.gbs
            .iter()
            .filter(|g| g.operational)
            .min_by(|a, b| a.position.distance(p).total_cmp(&b.position.distance(p)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetUav {
    pub id: String,
    /// Name of the [`UavSpec`] this airframe uses.
    pub spec: String,
    /// Standby position (pad, station or depot).
    pub start: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Fleet {
    #[serde(default)]
    pub specs: Vec<UavSpec>,
    #[serde(default)]
    pub uavs: Vec<FleetUav>,
}

impl Fleet {
    pub fn spec_of(&self, uav: &FleetUav) -> &UavSpec {
        self.specs
            .iter()
            .find(|s| s.name == uav.spec)
            .expect("fleet validated: spec reference exists")
    }

    pub fn uav(&self, id: &str) -> Option<&FleetUav> {
        self.uavs.iter().find(|u| u.id == id)
    }

    /// Subset of the fleet whose spec serves the given term.
    pub fn restricted_to(&self, term: Term) -> Fleet {
        let specs: Vec<UavSpec> = self.specs.iter().filter(|s| s.term == term).cloned().collect();
        let uavs = self
            .uavs
            .iter()
            .filter(|u| specs.iter().any(|s| s.name == u.spec))
            .cloned()
            .collect();
        Fleet { specs, uavs }
    }
}

/// Candidate locations and power levels for the exhaustive dimensioning oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleInstance {
    pub candidates: Vec<Point3>,
    pub power_levels: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub request: ServiceRequest,
    #[serde(default)]
    pub devices: Vec<StationaryDevice>,
    #[serde(default)]
    pub mobiles: Vec<MobileDevice>,
    pub channels: ChannelSet,
    pub geography: Geography,
    #[serde(default)]
    pub fleet: Fleet,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleInstance>,
}

/// Position and demand of one device at an instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceState {
    pub id: String,
    pub position: Point2,
    pub min_rate: f64,
    pub mobile: bool,
}

/// All device positions at one instant, stationary devices first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeviceSnapshot {
    pub time: f64,
    pub devices: Vec<DeviceState>,
}

impl DeviceSnapshot {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn total_rate(&self) -> f64 {
        self.devices.iter().map(|d| d.min_rate).sum()
    }

    /// Keeps only the listed device ids (order preserved).
    pub fn restricted_to(&self, ids: Option<&[String]>) -> DeviceSnapshot {
        match ids {
            None => self.clone(),
            Some(ids) => DeviceSnapshot {
                time: self.time,
                devices: self
                    .devices
                    .iter()
                    .filter(|d| ids.contains(&d.id))
                    .cloned()
                    .collect(),
            },
        }
    }
}

/// A set of nearby devices served as one point.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGroup {
    pub members: Vec<String>,
    pub centroid: Point2,
    pub rate: f64,
}

/// Reads and validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| line_col(text, span.start))
            .unwrap_or((0, 0));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    scenario.validate()?;
    Ok(scenario)
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let prefix = &text[..offset.min(text.len())];
    let line = prefix.matches('\n').count() + 1;
    let column = prefix.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    (line, column)
}

impl Scenario {
    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Serialize(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let area = &self.geography.area;
        if !(area.width() > 0.0 && area.height() > 0.0) {
            return Err(invalid("geography.area", None, "area must have positive extent"));
        }

        let req = &self.request;
        if !(req.coverage_radius > 0.0) {
            return Err(invalid("request.coverage_radius", None, "must be > 0"));
        }
        if !(req.end() > req.start()) {
            return Err(invalid("request.service_window", None, "end must exceed start"));
        }
        if !(req.required_bandwidth > 0.0) {
            return Err(invalid("request.required_bandwidth", None, "must be > 0"));
        }

        let mut ids = BTreeSet::new();
        for d in &self.devices {
            if !ids.insert(d.id.as_str()) {
                return Err(invalid("devices.id", Some(&d.id), "duplicate device id"));
            }
            if !(d.min_rate > 0.0) {
                return Err(invalid("devices.min_rate", Some(&d.id), "must be > 0"));
            }
            if !area.contains(&d.position) {
                return Err(invalid("devices.position", Some(&d.id), "outside the area"));
            }
        }
        for m in &self.mobiles {
            if !ids.insert(m.id.as_str()) {
                return Err(invalid("mobiles.id", Some(&m.id), "duplicate device id"));
            }
            self.validate_mobile(m)?;
        }
        if let Some(demand) = &req.demand {
            for id in demand {
                if !ids.contains(id.as_str()) {
                    return Err(invalid("request.demand", Some(id), "unknown device"));
                }
            }
        }

        let ch = &self.channels;
        if ch.channels.is_empty() {
            return Err(invalid("channels.channels", None, "at least one channel required"));
        }
        for (i, c) in ch.channels.iter().enumerate() {
            if !(c.width > 0.0) || !(c.center > 0.0) {
                return Err(invalid("channels.channels", Some(&i.to_string()), "width and center must be > 0"));
            }
        }
        if ch.mode == SpectrumMode::Ofdma {
            let mut spans: Vec<(f64, f64)> = ch
                .channels
                .iter()
                .map(|c| (c.center - c.width / 2.0, c.center + c.width / 2.0))
                .collect();
            spans.sort_by(|a, b| a.0.total_cmp(&b.0));
            if spans.windows(2).any(|w| w[1].0 < w[0].1 - 1e-6) {
                return Err(invalid("channels.channels", None, "OFDMA channels must be disjoint"));
            }
        }

        let geo = &self.geography;
        let mut station_ids = BTreeSet::new();
        for s in &geo.charging_stations {
            if !station_ids.insert(s.id.as_str()) {
                return Err(invalid("geography.charging_stations.id", Some(&s.id), "duplicate id"));
            }
            if !area.contains(&s.position) {
                return Err(invalid("geography.charging_stations.position", Some(&s.id), "outside the area"));
            }
            if s.capacity < 1 {
                return Err(invalid("geography.charging_stations.capacity", Some(&s.id), "must be >= 1"));
            }
            if !(s.recharge_rate > 0.0) {
                return Err(invalid("geography.charging_stations.recharge_rate", Some(&s.id), "must be > 0"));
            }
        }
        let mut gbs_ids = BTreeSet::new();
        for g in &geo.gbs {
            if !gbs_ids.insert(g.id.as_str()) {
                return Err(invalid("geography.gbs.id", Some(&g.id), "duplicate id"));
            }
            if !area.contains(&g.position) {
                return Err(invalid("geography.gbs.position", Some(&g.id), "outside the area"));
            }
            if !(g.coverage_radius > 0.0) {
                return Err(invalid("geography.gbs.coverage_radius", Some(&g.id), "must be > 0"));
            }
        }
        if let Some(failed) = &req.failed_gbs {
            if !gbs_ids.contains(failed.as_str()) {
                return Err(invalid("request.failed_gbs", Some(failed), "unknown ground base station"));
            }
        }
        for z in &geo.restricted_zones {
            if !z.polygon.is_simple() {
                return Err(invalid("geography.restricted_zones", Some(&z.id), "polygon is not simple"));
            }
        }

        let mut spec_names = BTreeSet::new();
        for s in &self.fleet.specs {
            if !spec_names.insert(s.name.as_str()) {
                return Err(invalid("fleet.specs.name", Some(&s.name), "duplicate spec name"));
            }
            s.validate().map_err(|msg| invalid("fleet.specs", Some(&s.name), msg))?;
        }
        let mut uav_ids = BTreeSet::new();
        for u in &self.fleet.uavs {
            if !uav_ids.insert(u.id.as_str()) {
                return Err(invalid("fleet.uavs.id", Some(&u.id), "duplicate uav id"));
            }
            if !spec_names.contains(u.spec.as_str()) {
                return Err(invalid("fleet.uavs.spec", Some(&u.id), format!("unknown spec `{}`", u.spec)));
            }
            if !area.contains(&u.start.xy()) {
                return Err(invalid("fleet.uavs.start", Some(&u.id), "outside the area"));
            }
        }

        self.radio.validate().map_err(|msg| invalid("radio", None, msg))?;

        if let Some(oracle) = &self.oracle {
            if oracle.power_levels.iter().any(|p| !(*p >= 0.0)) {
                return Err(invalid("oracle.power_levels", None, "levels must be >= 0"));
            }
        }
        Ok(())
    }

    fn validate_mobile(&self, m: &MobileDevice) -> Result<(), ScenarioError> {
        if !(m.min_rate > 0.0) {
            return Err(invalid("mobiles.min_rate", Some(&m.id), "must be > 0"));
        }
        if !(m.speed_max >= 0.0) {
            return Err(invalid("mobiles.speed_max", Some(&m.id), "must be >= 0"));
        }
        if m.track.is_empty() {
            return Err(invalid("mobiles.track", Some(&m.id), "track needs at least one waypoint"));
        }
        for w in &m.track {
            if !self.geography.area.contains(&w.position) {
                return Err(invalid("mobiles.track", Some(&m.id), "waypoint outside the area"));
            }
        }
        for w in m.track.windows(2) {
            let dt = w[1].time - w[0].time;
            if !(dt > 0.0) {
                return Err(invalid("mobiles.track", Some(&m.id), "waypoint times must increase"));
            }
            let dist = w[0].position.distance(&w[1].position);
            if dist > m.speed_max * dt + SPEED_SLACK {
                return Err(invalid(
                    "mobiles.track",
                    Some(&m.id),
                    format!(
                        "displacement {dist} m in {dt} s exceeds speed_max {} m/s",
                        m.speed_max
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Device positions and rates at `t`.
    pub fn devices_at(&self, t: f64) -> Result<DeviceSnapshot, ScenarioError> {
        let (start, end) = (self.request.start(), self.request.end());
        if !(t >= start && t <= end) {
            return Err(ScenarioError::OutOfRange { t, start, end });
        }
        Ok(self.snapshot_unchecked(t))
    }

    fn snapshot_unchecked(&self, t: f64) -> DeviceSnapshot {
        let stationary = self.devices.iter().map(|d| DeviceState {
            id: d.id.clone(),
            position: d.position,
            min_rate: d.min_rate,
            mobile: false,
        });
        let mobile = self.mobiles.iter().map(|m| DeviceState {
            id: m.id.clone(),
            position: m.position_at(t),
            min_rate: m.min_rate,
            mobile: true,
        });
        DeviceSnapshot {
            time: t,
            devices: stationary.chain(mobile).collect(),
        }
    }

    /// Devices the current request asks to serve, at `t`.
    pub fn demand_at(&self, t: f64) -> Result<DeviceSnapshot, ScenarioError> {
        Ok(self.devices_at(t)?.restricted_to(self.request.demand.as_deref()))
    }

    /// Device ids associated with each GBS: each device within coverage picks the
    /// nearest operational GBS, ties going to the earlier-declared one.
    pub fn gbs_associations(&self, t: f64) -> Vec<(String, Vec<String>)> {
        let snapshot = self.snapshot_unchecked(t);
        let mut out: Vec<(String, Vec<String>)> =
            self.geography.gbs.iter().map(|g| (g.id.clone(), Vec::new())).collect();
        for d in &snapshot.devices {
            let mut best: Option<(usize, f64)> = None;
            for (i, g) in self.geography.gbs.iter().enumerate() {
                if !g.operational {
                    continue;
                }
                let dist = g.position.distance(&d.position);
                if dist > g.coverage_radius {
                    continue;
                }
                if best.map_or(true, |(_, bd)| dist < bd) {
                    best = Some((i, dist));
                }
            }
            if let Some((i, _)) = best {
                out[i].1.push(d.id.clone());
            }
        }
        out
    }

    /// Marks `gbs_id` failed from `at` for `duration` seconds and replaces the
    /// request with a self-healing request covering the station's devices.
    pub fn inject_failure(
        &self,
        gbs_id: &str,
        class: FailureClass,
        at: f64,
        duration: f64,
    ) -> Result<Scenario, ScenarioError> {
        let idx = self
            .geography
            .gbs
            .iter()
            .position(|g| g.id == gbs_id)
            .ok_or_else(|| ScenarioError::UnknownGbs(gbs_id.to_string()))?;
        let gbs = &self.geography.gbs[idx];
        if !gbs.operational {
            return Err(ScenarioError::AlreadyFailed(gbs_id.to_string()));
        }
        if !(duration > 0.0) {
            return Err(invalid("failure.duration", Some(gbs_id), "must be > 0"));
        }
        let demand = self
            .gbs_associations(at)
            .into_iter()
            .find(|(id, _)| id == gbs_id)
            .map(|(_, ues)| ues)
            .unwrap_or_default();

        let mut out = self.clone();
        let failed = &mut out.geography.gbs[idx];
        failed.operational = false;
        failed.outage = Some([at, at + duration]);
        out.request = ServiceRequest {
            request_type: RequestType::SelfHealing,
            epicenter: gbs.position,
            coverage_radius: gbs.coverage_radius,
            required_bandwidth: self.request.required_bandwidth,
            service_window: [at, at + duration],
            continuity: Continuity::Continuous,
            failure_class: Some(class),
            failed_gbs: Some(gbs_id.to_string()),
            demand: Some(demand),
        };
        Ok(out)
    }

    /// Greedy leader clustering of the demand devices: each device joins the
    /// first group whose members all stay strictly within `max_group_radius` of
    /// the updated centroid, otherwise it opens a new group.
    pub fn group_devices(&self, max_group_radius: f64) -> Vec<DeviceGroup> {
        let snapshot = self
            .snapshot_unchecked(self.request.start())
            .restricted_to(self.request.demand.as_deref());
        group_snapshot(&snapshot, max_group_radius)
    }
}

/// Grouping rule shared with the dimensioning stage.
pub fn group_snapshot(snapshot: &DeviceSnapshot, max_group_radius: f64) -> Vec<DeviceGroup> {
    struct Acc {
        members: Vec<usize>,
        rate_sum: f64,
    }
    let devices = &snapshot.devices;
    let centroid = |members: &[usize]| {
        let n = members.len() as f64;
        let (sx, sy) = members.iter().fold((0.0, 0.0), |(sx, sy), &i| {
            (sx + devices[i].position.x, sy + devices[i].position.y)
        });
        Point2::new(sx / n, sy / n)
    };
    let mut groups: Vec<Acc> = Vec::new();
    for (i, d) in devices.iter().enumerate() {
        let mut joined = false;
        for g in groups.iter_mut() {
            let mut candidate = g.members.clone();
            candidate.push(i);
            let c = centroid(&candidate);
            if candidate
                .iter()
                .all(|&m| devices[m].position.distance(&c) < max_group_radius)
            {
                g.members.push(i);
                g.rate_sum += d.min_rate;
                joined = true;
                break;
            }
        }
        if !joined {
            groups.push(Acc {
                members: vec![i],
                rate_sum: d.min_rate,
            });
        }
    }
    groups
        .into_iter()
        .map(|g| DeviceGroup {
            centroid: centroid(&g.members),
            members: g.members.iter().map(|&i| devices[i].id.clone()).collect(),
            rate: g.rate_sum,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casestudy;

    const MINIMAL: &str = r#"
seed = 1

[request]
request_type = "bandwidth_boost"
epicenter = [50.0, 50.0]
coverage_radius = 40.0
required_bandwidth = 1e6
service_window = [0.0, 100.0]
continuity = "continuous"

[[devices]]
id = "ue1"
position = [10.0, 10.0]
min_rate = 1e6

[channels]
mode = "shared_spectrum"
channels = [{ center = 2.0e9, width = 1e6 }]

[geography]
area = { min = [0.0, 0.0], max = [100.0, 100.0] }
"#;

    #[test]
    fn minimal_file_parses() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.devices.len(), 1);
        assert_eq!(s.mobiles.len(), 0);
        assert!(s.geography.restricted_zones.is_empty());
        assert_eq!(s.radio, RadioConfig::default());
    }

    #[test]
    fn unknown_field_names_field_and_line() {
        let text = MINIMAL.replace("min_rate = 1e6", "min_rate = 1e6\ncolour = \"red\"");
        match parse_scenario(&text) {
            Err(ScenarioError::Parse { line, message, .. }) => {
                assert!(message.contains("colour"), "{message}");
                assert_eq!(line, 16);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn device_outside_area_names_device() {
        let text = MINIMAL.replace("[10.0, 10.0]", "[150.0, 10.0]");
        let err = parse_scenario(&text).unwrap_err();
        match &err {
            ScenarioError::Validation { id, .. } => assert_eq!(id.as_deref(), Some("ue1")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("ue1"));
    }

    #[test]
    fn invariant_violations_are_validation_errors() {
        for (from, to) in [
            ("coverage_radius = 40.0", "coverage_radius = 0.0"),
            ("service_window = [0.0, 100.0]", "service_window = [5.0, 5.0]"),
            ("required_bandwidth = 1e6", "required_bandwidth = -1.0"),
            ("min_rate = 1e6", "min_rate = 0.0"),
        ] {
            let err = parse_scenario(&MINIMAL.replace(from, to)).unwrap_err();
            assert!(matches!(err, ScenarioError::Validation { .. }), "{to}: {err}");
        }
    }

    #[test]
    fn case_study_file_matches_published_setup() {
        let s = casestudy::base_scenario(7);
        let text = s.to_toml_string().unwrap();
        let parsed = parse_scenario(&text).unwrap();
        assert_eq!(parsed, s);
        let area = parsed.geography.area;
        assert_eq!((area.width(), area.height()), (400.0, 400.0));
        assert_eq!(parsed.devices.len(), 10);
        let drones = parsed.fleet.restricted_to(Term::Short).uavs.len();
        let kites = parsed.fleet.restricted_to(Term::Long).uavs.len();
        assert_eq!((drones, kites), (4, 1));
    }

    fn mobile(track: Vec<(f64, [f64; 2])>, speed_max: f64) -> MobileDevice {
        MobileDevice {
            id: "m1".into(),
            track: track
                .into_iter()
                .map(|(time, p)| Waypoint {
                    time,
                    position: p.into(),
                })
                .collect(),
            speed_max,
            min_rate: 1e6,
        }
    }

    #[test]
    fn devices_at_interpolates_and_holds() {
        let mut s = parse_scenario(MINIMAL).unwrap();
        s.mobiles.push(mobile(vec![(0.0, [0.0, 0.0]), (10.0, [10.0, 0.0])], 1.0));
        s.validate().unwrap();
        let snap = s.devices_at(5.0).unwrap();
        assert_eq!(snap.devices[0].position, Point2::new(10.0, 10.0));
        assert_eq!(snap.devices[1].position, Point2::new(5.0, 0.0));
        assert_eq!(s.devices_at(0.0).unwrap().devices[1].position, Point2::new(0.0, 0.0));
        assert_eq!(s.devices_at(10.0).unwrap().devices[1].position, Point2::new(10.0, 0.0));
        assert!(matches!(s.devices_at(101.0), Err(ScenarioError::OutOfRange { .. })));
        assert!(matches!(s.devices_at(-1.0), Err(ScenarioError::OutOfRange { .. })));
    }

    #[test]
    fn mobile_speed_limit_checked_at_parse() {
        let mut s = parse_scenario(MINIMAL).unwrap();
        // 10 m in 10 s at 1 m/s: exactly at the limit
        s.mobiles.push(mobile(vec![(0.0, [0.0, 0.0]), (10.0, [10.0, 0.0])], 1.0));
        assert!(s.validate().is_ok());
        s.mobiles[0] = mobile(vec![(0.0, [0.0, 0.0]), (10.0, [11.0, 0.0])], 1.0);
        assert!(matches!(s.validate(), Err(ScenarioError::Validation { .. })));
        // a zero-speed mobile is a stationary device
        s.mobiles[0] = mobile(vec![(0.0, [3.0, 3.0]), (10.0, [3.0, 3.0])], 0.0);
        assert!(s.validate().is_ok());
    }

    #[test]
    fn failure_synthesizes_self_healing_request() {
        let s = casestudy::base_scenario(7);
        let failed = s
            .inject_failure(casestudy::FAILED_GBS, FailureClass::ShortTerm, 0.0, 1800.0)
            .unwrap();
        assert_eq!(failed.request.request_type, RequestType::SelfHealing);
        assert_eq!(failed.request.failure_class, Some(FailureClass::ShortTerm));
        assert_eq!(failed.request.demand.as_ref().unwrap().len(), 10);
        assert_eq!(failed.devices, s.devices);
        assert_eq!(failed.channels, s.channels);
        let g = failed.geography.gbs.iter().find(|g| g.id == casestudy::FAILED_GBS).unwrap();
        assert!(!g.operational);
        assert_eq!(g.outage, Some([0.0, 1800.0]));

        let long = s
            .inject_failure(casestudy::FAILED_GBS, FailureClass::LongTerm, 0.0, 3.0 * 86400.0)
            .unwrap();
        assert_eq!(long.request.demand, failed.request.demand);
        assert_eq!(long.request.failure_class, Some(FailureClass::LongTerm));

        assert_eq!(
            failed.inject_failure(casestudy::FAILED_GBS, FailureClass::ShortTerm, 0.0, 10.0),
            Err(ScenarioError::AlreadyFailed(casestudy::FAILED_GBS.into()))
        );
        assert_eq!(
            s.inject_failure("nope", FailureClass::ShortTerm, 0.0, 10.0),
            Err(ScenarioError::UnknownGbs("nope".into()))
        );
    }

    #[test]
    fn failure_of_idle_gbs_has_empty_demand() {
        let s = casestudy::base_scenario(7);
        let idle = s.geography.gbs.iter().find(|g| g.id != casestudy::FAILED_GBS).unwrap();
        let failed = s.inject_failure(&idle.id, FailureClass::ShortTerm, 0.0, 60.0).unwrap();
        assert_eq!(failed.request.demand, Some(vec![]));
    }

    #[test]
    fn grouping_edge_cases() {
        let mut s = parse_scenario(MINIMAL).unwrap();
        s.devices.push(StationaryDevice {
            id: "ue2".into(),
            position: Point2::new(15.0, 10.0),
            min_rate: 2e6,
            group_id: None,
        });
        let singles = s.group_devices(0.0);
        assert_eq!(singles.len(), 2);
        let merged = s.group_devices(10.0);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].rate, 3e6);
        assert_eq!(merged[0].centroid, Point2::new(12.5, 10.0));
    }
}
