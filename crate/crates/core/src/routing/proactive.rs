use std::collections::{BTreeMap, VecDeque};

use super::backpressure::Arrivals;
use super::{arrival_amount, seeded, FifoQueue, Flow, MeshTopology, RouteTrace, TraceRow};

/// Hop count from every node to `sink` over positive-capacity links.
pub fn hop_distances(topology: &MeshTopology, sink: usize) -> Vec<Option<usize>> {
    let n = topology.nodes.len();
    let mut dist = vec![None; n];
    dist[sink] = Some(0);
    let mut queue = VecDeque::from([sink]);
    while let Some(w) = queue.pop_front() {
        let d = dist[w].expect("queued nodes have a distance");
        for l in topology.links.iter().filter(|l| l.to == w && l.capacity > 0.0) {
            if dist[l.from].is_none() {
                dist[l.from] = Some(d + 1);
                queue.push_back(l.from);
            }
        }
    }
    dist
}

/// Next hop per (node, sink); absent when the sink is unreachable.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RouteTable {
    pub next: BTreeMap<(usize, usize), usize>,
}

impl RouteTable {
    pub fn next_hop(&self, node: usize, sink: usize) -> Option<usize> {
        self.next.get(&(node, sink)).copied()
    }
}

/// Shortest-hop routes to every node, ties going to the lowest-index neighbour.
pub fn build_proactive_routes(topology: &MeshTopology) -> RouteTable {
    let mut next = BTreeMap::new();
    for sink in 0..topology.nodes.len() {
        let dist = hop_distances(topology, sink);
        for v in 0..topology.nodes.len() {
            let Some(dv) = dist[v] else { continue };
            if v == sink {
                continue;
            }
            if let Some(w) = topology
                .neighbors(v)
                .into_iter()
                .find(|&w| dist[w] == Some(dv - 1))
            {
                next.insert((v, sink), w);
            }
        }
    }
    RouteTable { next }
}

/// Fluid forwarding along fixed shortest-hop routes: each link serves the
/// flows routed over it in flow order, oldest bits first.
pub fn run_proactive(topology: &MeshTopology, flows: &[Flow], slots: usize, arrivals: Arrivals) -> RouteTrace {
    let table = build_proactive_routes(topology);
    let nf = flows.len();
    let n = topology.nodes.len();
    let mut rng = seeded(match arrivals {
        Arrivals::Constant => None,
        Arrivals::Seeded(s) => Some(s),
    });
    let mut queues = vec![vec![FifoQueue::default(); nf]; n];
    let mut trace = RouteTrace::new(nf);
    for slot in 0..slots {
        for (f, fl) in flows.iter().enumerate() {
            let a = arrival_amount(fl.rate, rng.as_mut());
            trace.offered[f] += a;
            queues[fl.source][f].push(a, slot);
        }
        let mut left: BTreeMap<(usize, usize), f64> = topology
            .links
            .iter()
            .map(|l| ((l.from, l.to), l.capacity))
            .collect();
        let mut moved = Vec::new();
        let mut tx = vec![vec![0.0; nf]; n];
        for v in 0..n {
            for (f, fl) in flows.iter().enumerate() {
                let Some(w) = table.next_hop(v, fl.sink) else { continue };
                let cap = left.entry((v, w)).or_insert(0.0);
                let send = cap.min(queues[v][f].total());
                if send > 0.0 {
                    *cap -= send;
                    tx[v][f] += send;
                    moved.push((w, f, queues[v][f].pop(send)));
                }
            }
        }
        let mut delivered = 0.0;
        for (w, f, chunks) in moved {
            for (bits, created) in chunks {
                if w == flows[f].sink {
                    trace.deliver(f, bits, slot + 1 - created);
                    delivered += bits;
                } else {
                    queues[w][f].push(bits, created);
                }
            }
        }
        for v in 0..n {
            for f in 0..nf {
                let queue_bits = queues[v][f].total();
                if queue_bits > 0.0 || tx[v][f] > 0.0 {
                    trace.rows.push(TraceRow {
                        slot,
                        node: v,
                        flow: f,
                        queue_bits,
                        tx_bits: tx[v][f],
                    });
                }
            }
        }
        trace.backlog.push(queues.iter().flatten().map(FifoQueue::total).sum());
        trace.delivered_per_slot.push(delivered);
    }
    trace.slots = slots;
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{random_mesh, MeshNode};

    fn nodes(n: usize) -> Vec<MeshNode> {
        (0..n)
            .map(|i| MeshNode {
                id: format!("n{i}"),
                gateway: false,
            })
            .collect()
    }

    #[test]
    fn two_nodes_route_directly() {
        let mut t = MeshTopology::new(nodes(2));
        t.connect(0, 1, 1.0, 1.0);
        let r = build_proactive_routes(&t);
        assert_eq!(r.next_hop(0, 1), Some(1));
        assert_eq!(r.next_hop(1, 0), Some(0));
    }

    #[test]
    fn ring_ties_go_to_lower_neighbour() {
        let mut t = MeshTopology::new(nodes(4));
        for i in 0..4 {
            t.connect(i, (i + 1) % 4, 1.0, 1.0);
        }
        let r = build_proactive_routes(&t);
        assert_eq!(r.next_hop(0, 2), Some(1));
        assert_eq!(r.next_hop(2, 0), Some(1));
        assert_eq!(r.next_hop(1, 3), Some(0));
        assert_eq!(r.next_hop(3, 1), Some(0));
        assert_eq!(hop_distances(&t, 2)[0], Some(2));
    }

    #[test]
    fn disconnected_sink_has_no_entry() {
        let mut t = MeshTopology::new(nodes(3));
        t.connect(0, 1, 1.0, 1.0);
        let r = build_proactive_routes(&t);
        assert_eq!(r.next_hop(0, 2), None);
    }

    #[test]
    fn seeded_mesh_matches_floyd_warshall() {
        for seed in 0..10 {
            let t = random_mesh(5, 0.4, 1.0, seed);
            let n = 5;
            let inf = usize::MAX / 4;
            let mut d = vec![vec![inf; n]; n];
            for (i, row) in d.iter_mut().enumerate() {
                row[i] = 0;
            }
            for l in &t.links {
                d[l.from][l.to] = 1;
            }
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
                    }
                }
            }
            let r = build_proactive_routes(&t);
            for v in 0..n {
                for s in 0..n {
                    if v == s {
                        continue;
                    }
                    let expect = (0..n).find(|&w| d[v][w] == 1 && d[w][s] + 1 == d[v][s]);
                    assert_eq!(r.next_hop(v, s), expect, "seed {seed} {v}->{s}");
                }
            }
        }
    }

    #[test]
    fn ideal_link_delivers_with_one_slot_delay() {
        let mut t = MeshTopology::new(nodes(2));
        t.connect(0, 1, 10.0, 1.0);
        let flows = [Flow { source: 0, sink: 1, rate: 4.0 }];
        let tr = run_proactive(&t, &flows, 100, Arrivals::Constant);
        let m = crate::routing::route_metrics(&tr);
        assert_eq!(m.per_flow[0].throughput, 4.0);
        assert_eq!(m.per_flow[0].mean_delay, Some(1.0));
        assert_eq!(m.per_flow[0].delivery_ratio, 1.0);
    }
}
