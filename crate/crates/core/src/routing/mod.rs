//! Service phase: slotted multi-hop routing over the UAV backbone.

mod backpressure;
mod opportunistic;
mod proactive;

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dimensioning::{DeploymentPlan, PlanContext};
use crate::geometry::Point3;
use crate::radio::{achievable_rate, channel_gain};

pub use backpressure::{run_backpressure, step_backpressure, Arrivals, BackpressureState};
pub use opportunistic::{
    delivery_probability, run_opportunistic, step_opportunistic, ForwardDecision, OpportunisticConfig,
};
pub use proactive::{build_proactive_routes, hop_distances, run_proactive, RouteTable};

#[derive(Debug, Clone, PartialEq)]
pub struct MeshNode {
    pub id: String,
    pub gateway: bool,
}

/// Directed link; `capacity` in bits per slot, `success` the per-slot
/// delivery probability used by the opportunistic engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshLink {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
    pub success: f64,
}

/// Nodes are ordered; a node's index is its id for tie-breaking.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeshTopology {
    pub nodes: Vec<MeshNode>,
    pub links: Vec<MeshLink>,
}

impl MeshTopology {
    pub fn new(nodes: Vec<MeshNode>) -> Self {
        Self { nodes, links: Vec::new() }
    }

    /// Adds a link each way with the same capacity and success probability.
    pub fn connect(&mut self, a: usize, b: usize, capacity: f64, success: f64) {
        self.links.push(MeshLink { from: a, to: b, capacity, success });
        self.links.push(MeshLink { from: b, to: a, capacity, success });
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Neighbours reachable over a positive-capacity link, in index order.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .links
            .iter()
            .filter(|l| l.from == v && l.capacity > 0.0)
            .map(|l| l.to)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn link(&self, from: usize, to: usize) -> Option<&MeshLink> {
        self.links.iter().find(|l| l.from == from && l.to == to)
    }

    /// Backbone of a deployment plan: UAVs in plan order followed by the
    /// gateways the plan uses. Tree links run at their planned power; other
    /// UAV pairs within `range` metres get `spare_power` watts.
    pub fn from_plan(plan: &DeploymentPlan, ctx: &PlanContext, slot_length: f64, range: f64, spare_power: f64) -> Self {
        let n = plan.uavs.len();
        let mut nodes: Vec<MeshNode> = plan
            .uavs
            .iter()
            .map(|u| MeshNode {
                id: u.uav_id.clone(),
                gateway: false,
            })
            .collect();
        let mut gw_pos: Vec<Point3> = Vec::new();
        for g in &plan.gateways {
            if nodes.iter().all(|m| m.id != g.gbs_id) {
                nodes.push(MeshNode {
                    id: g.gbs_id.clone(),
                    gateway: true,
                });
                let pos = ctx
                    .gateways
                    .iter()
                    .find(|(id, _)| *id == g.gbs_id)
                    .map(|(_, p)| *p)
                    .unwrap_or_default();
                gw_pos.push(pos);
            }
        }
        let mut topo = MeshTopology::new(nodes);
        let noise = ctx.radio.noise_power(ctx.backbone_bandwidth);
        let cap = |a: &Point3, b: &Point3, power: f64| -> f64 {
            let g = channel_gain(a, b, &ctx.radio).unwrap_or(0.0);
            achievable_rate(ctx.backbone_bandwidth, power * g / noise) * slot_length
        };
        for j in 0..n {
            for k in (j + 1)..n {
                let (a, b) = (plan.uavs[j].location, plan.uavs[k].location);
                let tree = plan.power_uav[j][k].max(plan.power_uav[k][j]);
                let power = if a.distance(&b) <= range { tree.max(spare_power) } else { tree };
                if power > 0.0 {
                    topo.connect(j, k, cap(&a, &b, power), 1.0);
                }
            }
        }
        for g in &plan.gateways {
            let gi = topo.index_of(&g.gbs_id).expect("gateway node added above");
            let pos = gw_pos[gi - n];
            topo.connect(g.uav, gi, cap(&plan.uavs[g.uav].location, &pos, g.power), 1.0);
        }
        topo
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub source: usize,
    pub sink: usize,
    /// Mean offered load, bits per slot.
    pub rate: f64,
}

/// Bits of one flow waiting at a node, oldest first, tagged with the slot
/// they entered the network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FifoQueue {
    chunks: VecDeque<(f64, usize)>,
    total: f64,
}

impl FifoQueue {
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn push(&mut self, bits: f64, created: usize) {
        if bits <= 0.0 {
            return;
        }
        match self.chunks.back_mut() {
            Some(last) if last.1 == created => last.0 += bits,
            _ => self.chunks.push_back((bits, created)),
        }
        self.total += bits;
    }

    /// Removes up to `bits` from the head.
    pub fn pop(&mut self, bits: f64) -> Vec<(f64, usize)> {
        let mut want = bits.min(self.total);
        let mut out = Vec::new();
        while want > 0.0 {
            let Some(front) = self.chunks.front_mut() else { break };
            let take = front.0.min(want);
            out.push((take, front.1));
            front.0 -= take;
            want -= take;
            self.total -= take;
            if front.0 <= 1e-12 {
                self.chunks.pop_front();
            }
        }
        if self.chunks.is_empty() {
            self.total = 0.0;
        }
        out
    }
}

/// Seeded per-slot arrival amounts: uniform on `[0, 2·rate]`, or exactly
/// `rate` when unseeded.
pub(crate) fn arrival_amount(rate: f64, rng: Option<&mut ChaCha8Rng>) -> f64 {
    match rng {
        Some(r) => 2.0 * rate * r.random::<f64>(),
        None => rate,
    }
}

pub(crate) fn seeded(seed: Option<u64>) -> Option<ChaCha8Rng> {
    seed.map(ChaCha8Rng::seed_from_u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub slot: usize,
    pub node: usize,
    pub flow: usize,
    pub queue_bits: f64,
    pub tx_bits: f64,
}

/// Everything a routing run produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RouteTrace {
    pub slots: usize,
    pub offered: Vec<f64>,
    pub delivered: Vec<f64>,
    /// Σ bits × delay in slots, per flow.
    pub delay_bits: Vec<f64>,
    /// Total backlog at the end of each slot.
    pub backlog: Vec<f64>,
    /// Bits delivered in each slot, all flows.
    pub delivered_per_slot: Vec<f64>,
    pub rows: Vec<TraceRow>,
}

impl RouteTrace {
    pub fn new(flows: usize) -> Self {
        Self {
            offered: vec![0.0; flows],
            delivered: vec![0.0; flows],
            delay_bits: vec![0.0; flows],
            ..Self::default()
        }
    }

    pub fn deliver(&mut self, flow: usize, bits: f64, delay: usize) {
        self.delivered[flow] += bits;
        self.delay_bits[flow] += bits * delay as f64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMetrics {
    pub throughput: f64,
    /// `None` when nothing was delivered.
    pub mean_delay: Option<f64>,
    pub delivery_ratio: f64,
    pub max_queue: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteMetrics {
    pub per_flow: Vec<FlowMetrics>,
    pub aggregate: FlowMetrics,
    /// Set when the trace covered no slots.
    pub empty: bool,
}

pub fn route_metrics(trace: &RouteTrace) -> RouteMetrics {
    let zero = FlowMetrics {
        throughput: 0.0,
        mean_delay: None,
        delivery_ratio: 0.0,
        max_queue: 0.0,
    };
    if trace.slots == 0 {
        return RouteMetrics {
            per_flow: vec![zero; trace.offered.len()],
            aggregate: zero,
            empty: true,
        };
    }
    let slots = trace.slots as f64;
    let metrics = |offered: f64, delivered: f64, delay_bits: f64, max_queue: f64| FlowMetrics {
        throughput: delivered / slots,
        mean_delay: (delivered > 0.0).then(|| delay_bits / delivered),
        delivery_ratio: if offered > 0.0 { delivered / offered } else { 0.0 },
        max_queue,
    };
    let mut max_q = vec![0.0f64; trace.offered.len()];
    let mut per_slot_node: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for r in &trace.rows {
        max_q[r.flow] = max_q[r.flow].max(r.queue_bits);
        *per_slot_node.entry((r.slot, r.node)).or_default() += r.queue_bits;
    }
    let per_flow = (0..trace.offered.len())
        .map(|f| metrics(trace.offered[f], trace.delivered[f], trace.delay_bits[f], max_q[f]))
        .collect();
    let aggregate = metrics(
        trace.offered.iter().sum(),
        trace.delivered.iter().sum(),
        trace.delay_bits.iter().sum(),
        per_slot_node.values().copied().fold(0.0, f64::max),
    );
    RouteMetrics {
        per_flow,
        aggregate,
        empty: false,
    }
}

/// Least-squares slope of `series` against its index.
pub fn growth_slope(series: &[f64]) -> f64 {
    let n = series.len() as f64;
    if series.len() < 2 {
        return 0.0;
    }
    let mx = (n - 1.0) / 2.0;
    let my = series.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in series.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Largest multiple of `demand` (bits per slot per node) that the mesh can
/// carry to `sink`: the minimum over node sets `S` excluding the sink of
/// outgoing capacity over enclosed demand.
pub fn capacity_scale(topology: &MeshTopology, demand: &[f64], sink: usize) -> f64 {
    let n = topology.nodes.len();
    assert!(n <= 20, "cut enumeration over {n} nodes");
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << n) {
        if mask >> sink & 1 == 1 {
            continue;
        }
        let inside = |v: usize| mask >> v & 1 == 1;
        let d: f64 = (0..n).filter(|&v| inside(v)).map(|v| demand[v]).sum();
        if d <= 0.0 {
            continue;
        }
        let cut: f64 = topology
            .links
            .iter()
            .filter(|l| inside(l.from) && !inside(l.to))
            .map(|l| l.capacity)
            .sum();
        best = best.min(cut / d);
    }
    best
}

pub const TRACE_CSV_HEADER: &str = "slot,node,flow,queue_bits,tx_bits";

pub fn write_trace_csv<W: Write>(trace: &RouteTrace, topology: &MeshTopology, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in &trace.rows {
        writeln!(
            out,
            "{},{},{},{:.3},{:.3}",
            r.slot, topology.nodes[r.node].id, r.flow, r.queue_bits, r.tx_bits
        )?;
    }
    Ok(())
}

/// Four relays and a gateway (index 4): a chain 0-1-2-3 whose ends and
/// middle reach the gateway. Capacities in bits per slot.
pub fn fixed_mesh() -> MeshTopology {
    let nodes = (0..5)
        .map(|i| MeshNode {
            id: if i == 4 { "gw".to_string() } else { format!("u{i}") },
            gateway: i == 4,
        })
        .collect();
    let mut t = MeshTopology::new(nodes);
    t.connect(0, 1, 6000.0, 1.0);
    t.connect(1, 2, 6000.0, 1.0);
    t.connect(2, 3, 6000.0, 1.0);
    t.connect(0, 4, 5000.0, 1.0);
    t.connect(3, 4, 5000.0, 1.0);
    t.connect(1, 4, 3000.0, 1.0);
    t
}

/// First slot at which the trailing `window`-slot mean of delivered bits
/// reaches `fraction` of the mean over the second half of the run.
pub fn slots_to_steady(delivered_per_slot: &[f64], window: usize, fraction: f64) -> Option<usize> {
    let n = delivered_per_slot.len();
    if n < 2 || window == 0 {
        return None;
    }
    let tail = &delivered_per_slot[n / 2..];
    let steady = tail.iter().sum::<f64>() / tail.len() as f64;
    let mut sum = 0.0;
    for (k, d) in delivered_per_slot.iter().enumerate() {
        sum += d;
        if k >= window {
            sum -= delivered_per_slot[k - window];
        }
        let len = (k + 1).min(window);
        if k + 1 >= window && sum / len as f64 >= fraction * steady {
            return Some(k);
        }
    }
    None
}

/// Seeded random connected mesh on `n` nodes; node 0 is the gateway.
pub fn random_mesh(n: usize, edge_prob: f64, capacity: f64, seed: u64) -> MeshTopology {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n)
        .map(|i| MeshNode {
            id: format!("n{i}"),
            gateway: i == 0,
        })
        .collect();
    let mut topo = MeshTopology::new(nodes);
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.random::<f64>() < edge_prob {
                topo.connect(a, b, capacity, 1.0);
            }
        }
    }
    // chain any stragglers to the lowest node already reachable
    for v in 1..n {
        let dist = hop_distances(&topo, 0);
        if dist[v].is_none() {
            let anchor = (0..n).find(|&u| dist[u].is_some()).unwrap_or(0);
            topo.connect(anchor, v, capacity, 1.0);
        }
    }
    topo
}
