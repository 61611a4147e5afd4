use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{hop_distances, MeshTopology, RouteTrace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpportunisticConfig {
    /// Slots a packet may spend in the network before it is dropped.
    pub ttl: usize,
    pub packets: usize,
    pub packet_bits: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardDecision {
    /// Neighbours strictly closer to the sink, best first.
    pub candidates: Vec<usize>,
    /// Candidates whose link succeeded this slot.
    pub receivers: Vec<usize>,
    /// Who holds the packet after the slot.
    pub custodian: usize,
}

/// Candidates of `holder` ordered by hop distance, then index.
fn candidates(topology: &MeshTopology, distances: &[Option<usize>], holder: usize) -> Vec<usize> {
    let Some(dh) = distances[holder] else { return Vec::new() };
    let mut c: Vec<usize> = topology
        .neighbors(holder)
        .into_iter()
        .filter(|&w| distances[w].is_some_and(|d| d < dh))
        .collect();
    c.sort_by_key(|&w| (distances[w], w));
    c
}

/// One transmission attempt. `draws[i]` is the uniform draw for the i-th
/// candidate; the link succeeds when it is below the link's success
/// probability.
pub fn step_opportunistic(
    topology: &MeshTopology,
    distances: &[Option<usize>],
    holder: usize,
    draws: &[f64],
) -> ForwardDecision {
    let candidates = candidates(topology, distances, holder);
    let receivers: Vec<usize> = candidates
        .iter()
        .zip(draws)
        .filter(|&(&w, &u)| topology.link(holder, w).is_some_and(|l| u < l.success))
        .map(|(&w, _)| w)
        .collect();
    let custodian = receivers.first().copied().unwrap_or(holder);
    ForwardDecision {
        candidates,
        receivers,
        custodian,
    }
}

/// Sends `config.packets` packets one after another from `source` to `sink`.
/// Each packet draws from its own stream of the seeded generator, so runs
/// with different link probabilities see the same uniforms.
pub fn run_opportunistic(topology: &MeshTopology, source: usize, sink: usize, config: &OpportunisticConfig) -> RouteTrace {
    let dist = hop_distances(topology, sink);
    let mut trace = RouteTrace::new(1);
    for p in 0..config.packets {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(p as u64);
        trace.offered[0] += config.packet_bits;
        let mut holder = source;
        let mut delivered = 0.0;
        for age in 1..=config.ttl {
            let n = candidates(topology, &dist, holder).len();
            if n == 0 {
                break;
            }
            let draws: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            holder = step_opportunistic(topology, &dist, holder, &draws).custodian;
            if holder == sink {
                trace.deliver(0, config.packet_bits, age);
                delivered = config.packet_bits;
                break;
            }
        }
        trace.delivered_per_slot.push(delivered);
        trace.backlog.push(0.0);
    }
    trace.slots = config.packets;
    trace
}

/// Probability that a packet at `source` reaches `sink` within `ttl` slots
/// under the same forwarding rule.
pub fn delivery_probability(topology: &MeshTopology, source: usize, sink: usize, ttl: usize) -> f64 {
    let dist = hop_distances(topology, sink);
    let mut memo = BTreeMap::new();
    absorb(topology, &dist, source, sink, ttl, &mut memo)
}

fn absorb(
    topology: &MeshTopology,
    dist: &[Option<usize>],
    v: usize,
    sink: usize,
    t: usize,
    memo: &mut BTreeMap<(usize, usize), f64>,
) -> f64 {
    if v == sink {
        return 1.0;
    }
    if t == 0 {
        return 0.0;
    }
    if let Some(&f) = memo.get(&(v, t)) {
        return f;
    }
    let mut none = 1.0;
    let mut f = 0.0;
    for w in candidates(topology, dist, v) {
        let p = topology.link(v, w).map_or(0.0, |l| l.success);
        f += none * p * absorb(topology, dist, w, sink, t - 1, memo);
        none *= 1.0 - p;
    }
    if none < 1.0 {
        f += none * absorb(topology, dist, v, sink, t - 1, memo);
    }
    memo.insert((v, t), f);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::MeshNode;

    fn diamond(p: f64) -> MeshTopology {
        let nodes = ["S", "A", "B", "D"]
            .iter()
            .map(|id| MeshNode {
                id: id.to_string(),
                gateway: *id == "D",
            })
            .collect();
        let mut t = MeshTopology::new(nodes);
        t.connect(0, 1, 1.0, p);
        t.connect(0, 2, 1.0, p);
        t.connect(1, 3, 1.0, p);
        t.connect(2, 3, 1.0, p);
        t
    }

    #[test]
    fn failed_links_keep_custody() {
        let t = diamond(0.5);
        let d = hop_distances(&t, 3);
        let dec = step_opportunistic(&t, &d, 0, &[0.9, 0.7]);
        assert_eq!(dec.candidates, vec![1, 2]);
        assert!(dec.receivers.is_empty());
        assert_eq!(dec.custodian, 0);
    }

    #[test]
    fn lowest_id_receiver_takes_custody() {
        let t = diamond(0.5);
        let d = hop_distances(&t, 3);
        let dec = step_opportunistic(&t, &d, 0, &[0.1, 0.2]);
        assert_eq!(dec.receivers, vec![1, 2]);
        assert_eq!(dec.custodian, 1);
        let dec = step_opportunistic(&t, &d, 0, &[0.6, 0.2]);
        assert_eq!(dec.custodian, 2);
    }

    #[test]
    fn diamond_recursion_by_hand() {
        let t = diamond(0.5);
        // one slot per hop at best; both first hops fail with 1/4
        assert_eq!(delivery_probability(&t, 0, 3, 1), 0.0);
        assert!((delivery_probability(&t, 0, 3, 2) - 0.375).abs() < 1e-12);
        assert!((delivery_probability(&t, 0, 3, 3) - 0.65625).abs() < 1e-12);
        assert_eq!(delivery_probability(&t, 3, 3, 0), 1.0);
    }

    #[test]
    fn empirical_ratio_matches_recursion() {
        let t = diamond(0.5);
        let cfg = OpportunisticConfig {
            ttl: 3,
            packets: 10_000,
            packet_bits: 1.0,
            seed: 11,
        };
        let m = crate::routing::route_metrics(&run_opportunistic(&t, 0, 3, &cfg));
        let f = delivery_probability(&t, 0, 3, 3);
        let se = (f * (1.0 - f) / 10_000.0).sqrt();
        assert!((m.aggregate.delivery_ratio - f).abs() < 3.0 * se);
    }

    #[test]
    fn coupled_runs_are_monotone_in_success() {
        let mut last = -1.0;
        for i in 1..10 {
            let p = i as f64 / 10.0;
            let cfg = OpportunisticConfig {
                ttl: 4,
                packets: 2000,
                packet_bits: 1.0,
                seed: 3,
            };
            let r = crate::routing::route_metrics(&run_opportunistic(&diamond(p), 0, 3, &cfg)).aggregate.delivery_ratio;
            assert!(r >= last, "p={p}: {r} < {last}");
            last = r;
        }
    }
}
