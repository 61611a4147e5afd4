use rand_chacha::ChaCha8Rng;

use super::{arrival_amount, seeded, FifoQueue, Flow, MeshTopology, RouteTrace, TraceRow};

/// How offered load enters the network each slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrivals {
    /// Exactly `rate` bits per slot.
    Constant,
    /// Uniform on `[0, 2·rate]`, drawn from a seeded stream.
    Seeded(u64),
}

/// Per-node per-flow backlog plus last slot's allocation, which the momentum
/// term reuses.
#[derive(Debug, Clone)]
pub struct BackpressureState {
    pub flows: Vec<Flow>,
    pub queues: Vec<Vec<FifoQueue>>,
    /// Bits sent per (link index, flow) in the previous slot.
    pub last_alloc: Vec<Vec<f64>>,
    pub slot: usize,
    pub trace: RouteTrace,
    rng: Option<ChaCha8Rng>,
}

impl BackpressureState {
    pub fn new(nodes: usize, links: usize, flows: Vec<Flow>, arrivals: Arrivals) -> Self {
        let f = flows.len();
        let seed = match arrivals {
            Arrivals::Constant => None,
            Arrivals::Seeded(s) => Some(s),
        };
        Self {
            queues: vec![vec![FifoQueue::default(); f]; nodes],
            last_alloc: vec![vec![0.0; f]; links],
            slot: 0,
            trace: RouteTrace::new(f),
            rng: seeded(seed),
            flows,
        }
    }

    pub fn backlog(&self) -> f64 {
        self.queues.iter().flatten().map(FifoQueue::total).sum()
    }

    /// Keeps queues but forgets the previous allocation, for a new link set.
    pub fn reset_links(&mut self, links: usize) {
        self.last_alloc = vec![vec![0.0; self.flows.len()]; links];
    }
}

/// One slot of max-weight scheduling, after this slot's arrivals. Link
/// weight for flow `f` is the backlog differential plus `beta` times what the
/// link carried for `f` last slot; each link serves its heaviest flow when
/// that weight is positive, and a node fills its heaviest links first.
/// Returns bits sent per (link, flow).
pub fn step_backpressure(state: &mut BackpressureState, topology: &MeshTopology, beta: f64) -> Vec<Vec<f64>> {
    let nf = state.flows.len();
    if state.last_alloc.len() != topology.links.len() {
        state.reset_links(topology.links.len());
    }
    let slot = state.slot;
    for f in 0..nf {
        let fl = state.flows[f];
        let a = arrival_amount(fl.rate, state.rng.as_mut());
        state.trace.offered[f] += a;
        state.queues[fl.source][f].push(a, slot);
    }
    let q = |state: &BackpressureState, v: usize, f: usize| -> f64 {
        if v == state.flows[f].sink {
            0.0
        } else {
            state.queues[v][f].total()
        }
    };

    let mut avail: Vec<Vec<f64>> = (0..state.queues.len())
        .map(|v| (0..nf).map(|f| q(state, v, f)).collect())
        .collect();
    let mut alloc = vec![vec![0.0; nf]; topology.links.len()];
    let mut chosen: Vec<(usize, usize, f64)> = Vec::new();
    for (li, l) in topology.links.iter().enumerate() {
        if l.capacity <= 0.0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for f in 0..nf {
            if l.from == state.flows[f].sink {
                continue;
            }
            let w = q(state, l.from, f) - q(state, l.to, f) + beta * state.last_alloc[li][f];
            if w > 0.0 && best.is_none_or(|(_, bw)| w > bw) {
                best = Some((f, w));
            }
        }
        if let Some((f, w)) = best {
            chosen.push((li, f, w));
        }
    }
    // a node's backlog goes to its heaviest links first
    chosen.sort_by(|a, b| {
        let (la, lb) = (&topology.links[a.0], &topology.links[b.0]);
        la.from.cmp(&lb.from).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0))
    });
    for (li, f, _) in chosen {
        let l = &topology.links[li];
        let send = l.capacity.min(avail[l.from][f]);
        avail[l.from][f] -= send;
        alloc[li][f] = send;
    }

    let mut moved = Vec::new();
    let mut tx = vec![vec![0.0; nf]; state.queues.len()];
    for (li, l) in topology.links.iter().enumerate() {
        for f in 0..nf {
            if alloc[li][f] > 0.0 {
                tx[l.from][f] += alloc[li][f];
                moved.push((l.to, f, state.queues[l.from][f].pop(alloc[li][f])));
            }
        }
    }
    let mut delivered = 0.0;
    for (to, f, chunks) in moved {
        for (bits, created) in chunks {
            if to == state.flows[f].sink {
                state.trace.deliver(f, bits, slot + 1 - created);
                delivered += bits;
            } else {
                state.queues[to][f].push(bits, created);
            }
        }
    }

    for v in 0..state.queues.len() {
        for f in 0..nf {
            let queue_bits = state.queues[v][f].total();
            if queue_bits > 0.0 || tx[v][f] > 0.0 {
                state.trace.rows.push(TraceRow {
                    slot,
                    node: v,
                    flow: f,
                    queue_bits,
                    tx_bits: tx[v][f],
                });
            }
        }
    }
    state.trace.backlog.push(state.backlog());
    state.trace.delivered_per_slot.push(delivered);
    state.slot += 1;
    state.trace.slots = state.slot;
    state.last_alloc = alloc.clone();
    alloc
}

/// `slots` steps of back-pressure on a fixed topology from empty queues.
pub fn run_backpressure(topology: &MeshTopology, flows: &[Flow], beta: f64, slots: usize, arrivals: Arrivals) -> RouteTrace {
    let mut st = BackpressureState::new(topology.nodes.len(), topology.links.len(), flows.to_vec(), arrivals);
    for _ in 0..slots {
        step_backpressure(&mut st, topology, beta);
    }
    st.trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{random_mesh, route_metrics, MeshNode};
    use proptest::prelude::*;

    fn line(caps: &[f64]) -> MeshTopology {
        let nodes = (0..=caps.len())
            .map(|i| MeshNode {
                id: format!("n{i}"),
                gateway: false,
            })
            .collect();
        let mut t = MeshTopology::new(nodes);
        for (i, &c) in caps.iter().enumerate() {
            t.connect(i, i + 1, c, 1.0);
        }
        t
    }

    /// Queue totals only, same weights and fill order.
    fn scalar_oracle(t: &MeshTopology, flows: &[Flow], beta: f64, slots: usize) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
        let n = t.nodes.len();
        let nf = flows.len();
        let mut q = vec![vec![0.0; nf]; n];
        let mut last = vec![vec![0.0; nf]; t.links.len()];
        let mut allocs = Vec::new();
        let mut delivered = Vec::new();
        for _ in 0..slots {
            for (f, fl) in flows.iter().enumerate() {
                q[fl.source][f] += fl.rate;
            }
            let qq = |q: &Vec<Vec<f64>>, v: usize, f: usize| if v == flows[f].sink { 0.0 } else { q[v][f] };
            let mut picks = Vec::new();
            for (li, l) in t.links.iter().enumerate() {
                let mut best = (usize::MAX, 0.0);
                for f in 0..nf {
                    if l.from == flows[f].sink {
                        continue;
                    }
                    let w = qq(&q, l.from, f) - qq(&q, l.to, f) + beta * last[li][f];
                    if w > best.1 {
                        best = (f, w);
                    }
                }
                if best.0 != usize::MAX {
                    picks.push((l.from, -best.1, li, best.0));
                }
            }
            picks.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut avail = q.clone();
            let mut a = vec![vec![0.0; nf]; t.links.len()];
            for (from, _, li, f) in picks {
                let s = t.links[li].capacity.min(avail[from][f]);
                avail[from][f] -= s;
                a[li][f] = s;
            }
            let mut got = 0.0;
            for (li, l) in t.links.iter().enumerate() {
                for f in 0..nf {
                    q[l.from][f] -= a[li][f];
                    if l.to == flows[f].sink {
                        got += a[li][f];
                    } else {
                        q[l.to][f] += a[li][f];
                    }
                }
            }
            delivered.push(got);
            last = a.clone();
            allocs.push(a);
        }
        (allocs, delivered)
    }

    #[test]
    fn single_step_moves_capacity() {
        let t = line(&[4.0, 4.0]);
        let mut st = BackpressureState::new(3, t.links.len(), vec![Flow { source: 0, sink: 2, rate: 0.0 }], Arrivals::Constant);
        st.queues[0][0].push(10.0, 0);
        let a = step_backpressure(&mut st, &t, 0.0);
        assert_eq!(a[0][0], 4.0);
        assert_eq!((st.queues[0][0].total(), st.queues[1][0].total()), (6.0, 4.0));

        // the far end is the sink: the 4 bits leave the network
        let t = line(&[4.0]);
        let mut st = BackpressureState::new(2, t.links.len(), vec![Flow { source: 0, sink: 1, rate: 0.0 }], Arrivals::Constant);
        st.queues[0][0].push(10.0, 0);
        step_backpressure(&mut st, &t, 0.0);
        assert_eq!((st.queues[0][0].total(), st.queues[1][0].total()), (6.0, 0.0));
        assert_eq!(st.trace.delivered[0], 4.0);
    }

    #[test]
    fn balanced_queues_leave_link_idle() {
        let t = line(&[4.0, 4.0]);
        let mut st = BackpressureState::new(3, t.links.len(), vec![Flow { source: 0, sink: 2, rate: 0.0 }], Arrivals::Constant);
        st.queues[0][0].push(5.0, 0);
        st.queues[1][0].push(5.0, 0);
        let a = step_backpressure(&mut st, &t, 0.0);
        assert_eq!(a[0][0], 0.0);
        assert_eq!(a[1][0], 0.0);
    }

    #[test]
    fn relay_with_momentum_by_hand() {
        // links: 0 = 0→1, 1 = 1→0, 2 = 1→2, 3 = 2→1
        let mut t = line(&[5.0, 3.0]);
        t.links[1].capacity = 5.0;
        let flows = vec![Flow { source: 0, sink: 2, rate: 4.0 }];
        let mut st = BackpressureState::new(3, t.links.len(), flows.clone(), Arrivals::Constant);
        let mut seen = Vec::new();
        for _ in 0..20 {
            seen.push(step_backpressure(&mut st, &t, 0.5));
        }
        let col = |li: usize| seen.iter().take(4).map(|a| a[li][0]).collect::<Vec<_>>();
        assert_eq!(col(0), vec![4.0, 4.0, 4.0, 5.0]);
        assert_eq!(col(1), vec![0.0, 0.0, 2.0, 0.0]);
        assert_eq!(col(2), vec![0.0, 3.0, 3.0, 3.0]);

        let (allocs, delivered) = scalar_oracle(&t, &flows, 0.5, 20);
        assert_eq!(seen, allocs);
        assert_eq!(st.trace.delivered_per_slot, delivered);

        let m = route_metrics(&st.trace);
        let total: f64 = delivered.iter().sum();
        assert_eq!(m.per_flow[0].throughput, total / 20.0);
        assert_eq!(m.per_flow[0].delivery_ratio, total / 80.0);
        // the 3-bit exit caps throughput; everything else piles up
        assert_eq!(total, 57.0);
    }

    proptest! {
        #[test]
        fn matches_scalar_oracle_and_conserves_bits(seed in 0u64..500, beta in prop_oneof![Just(0.0), Just(0.5)]) {
            let t = random_mesh(5, 0.4, 3.0, seed);
            let flows = vec![
                Flow { source: 1, sink: 0, rate: 1.0 },
                Flow { source: 3, sink: 0, rate: 2.0 },
                Flow { source: 0, sink: 4, rate: 1.5 },
            ];
            let mut st = BackpressureState::new(5, t.links.len(), flows.clone(), Arrivals::Constant);
            let (allocs, _) = scalar_oracle(&t, &flows, beta, 30);
            for a in &allocs {
                let got = step_backpressure(&mut st, &t, beta);
                for (x, y) in got.iter().flatten().zip(a.iter().flatten()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
                for row in &st.queues {
                    for q in row {
                        prop_assert!(q.total() >= 0.0);
                    }
                }
                let offered: f64 = st.trace.offered.iter().sum();
                let delivered: f64 = st.trace.delivered.iter().sum();
                prop_assert!((offered - delivered - st.backlog()).abs() < 1e-9);
            }
        }
    }
}
