use super::{SimConfig, SimError, BATCHES};
use crate::model::{EdgeId, NetworkSpec, NodeId};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Packet {
    id: u64,
    /// Epoch of the source's first transmission attempt.
    birth: u64,
}

#[derive(Debug, Clone, Copy)]
struct Tender {
    sender: NodeId,
    /// Position of the packet in the sender's buffer.
    slot: usize,
    edge: EdgeId,
}

#[derive(Debug, Default)]
struct NodeState {
    buffer: VecDeque<Packet>,
    /// Per buffer position: accepted downstream this epoch.
    delivered: Vec<bool>,
    order: Vec<EdgeId>,
    tenders: Vec<Tender>,
}

/// Where every packet ever created is at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketLedger {
    pub created: u64,
    pub delivered: u64,
    /// In intermediate buffers.
    pub buffered: u64,
    /// Attempted by the source but not yet accepted anywhere.
    pub pending_at_source: u64,
}

impl PacketLedger {
    pub fn balances(&self) -> bool {
        self.created == self.delivered + self.buffered + self.pending_at_source
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Occupancy after acceptance, per node (`None` at the endpoints).
    pub theta: Vec<Option<Vec<f64>>>,
    /// Occupancy after departures, before acceptance.
    pub theta_dagger: Vec<Option<Vec<f64>>>,
    /// Occupancy found by each accepted packet.
    pub seat: Vec<Option<Vec<f64>>>,
    pub delivered_count: u64,
    pub measured_epochs: u64,
    pub throughput: f64,
    /// Batch-means standard error of `throughput`.
    pub throughput_se: f64,
    /// Mean delivery delay in epochs, counting both the first attempt and
    /// the delivering epoch. Only packets born after warmup count.
    pub mean_delay: Option<f64>,
    pub delay_se: Option<f64>,
    pub delay_samples: u64,
    /// Packets born after warmup and still undelivered at the end.
    pub censored: u64,
    pub edge_rates: Vec<f64>,
    pub ledger: PacketLedger,
}

fn normalized(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn batch_se(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var / n).sqrt()
}

pub fn run(spec: &NetworkSpec, cfg: &SimConfig) -> Result<SimResult, SimError> {
    run_stream(spec, cfg, 0)
}

/// One replication on RNG stream `stream`.
///
/// Each epoch has two phases. In the first, every node shuffles its outgoing
/// edges and walks them, offering its stored packets in FIFO order; an
/// erased attempt retries the same packet on the next edge, a surviving one
/// tenders the packet and moves on. The source tenders fresh packets once
/// its retained ones run out. In the second phase nodes are resolved in
/// reverse topological order: each first drops the packets its successors
/// accepted, then keeps a uniformly random subset of its tenders as large as
/// its free space allows. Unaccepted packets stay with their senders.
pub fn run_stream(spec: &NetworkSpec, cfg: &SimConfig, stream: u64) -> Result<SimResult, SimError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let source = spec.source();
    let destination = spec.destination();
    let capacity: Vec<usize> = spec
        .node_ids()
        .map(|v| if spec.is_intermediate(v) { spec.capacity(v) } else { usize::MAX })
        .collect();
    let mut nodes: Vec<NodeState> = spec
        .node_ids()
        .map(|v| NodeState {
            order: spec.out_edges(v).to_vec(),
            ..Default::default()
        })
        .collect();
    let reverse: Vec<NodeId> = spec.topo_order().iter().rev().collect();
    let senders: Vec<NodeId> = spec.node_ids().filter(|&v| v != destination).collect();

    let hist = |v: NodeId| spec.is_intermediate(v).then(|| vec![0u64; capacity[v.index()] + 1]);
    let mut theta_counts: Vec<Option<Vec<u64>>> = spec.node_ids().map(hist).collect();
    let mut dagger_counts = theta_counts.clone();
    let mut seat_counts = theta_counts.clone();
    let mut edge_accepts = vec![0u64; spec.edges().len()];

    let measured = cfg.measured_epochs();
    let batches = BATCHES.min(measured);
    let mut batch_delivered = vec![0u64; batches as usize];
    let mut batch_delay = vec![(0u64, 0u64); batches as usize];

    let mut scratch: Vec<(NodeId, Tender)> = Vec::new();
    let mut next_id = 0u64;
    let mut delivered_total = 0u64;
    let mut delivered_measured = 0u64;
    let mut delay_sum = 0u64;
    let mut delay_count = 0u64;

    for epoch in 0..cfg.epochs {
        let measuring = epoch >= cfg.warmup;
        let batch = if measuring {
            ((epoch - cfg.warmup) * batches / measured) as usize
        } else {
            0
        };

        // phase 1: tender
        for &u in &senders {
            let state = &mut nodes[u.index()];
            state.order.shuffle(&mut rng);
            let mut slot = 0;
            for &e in &state.order {
                if slot == state.buffer.len() {
                    if u != source {
                        break;
                    }
                    state.buffer.push_back(Packet { id: next_id, birth: epoch });
                    next_id += 1;
                }
                if rng.random::<f64>() < spec.edge(e).erasure {
                    continue;
                }
                scratch.push((spec.edge(e).head, Tender { sender: u, slot, edge: e }));
                slot += 1;
            }
            let len = state.buffer.len();
            state.delivered.clear();
            state.delivered.resize(len, false);
            for (head, t) in scratch.drain(..) {
                nodes[head.index()].tenders.push(t);
            }
        }

        // phase 2: accept, downstream first
        for &v in &reverse {
            let vi = v.index();
            {
                let state = &mut nodes[vi];
                if state.delivered.iter().any(|&d| d) {
                    let mut k = 0;
                    let flags = std::mem::take(&mut state.delivered);
                    state.buffer.retain(|_| {
                        let keep = !flags[k];
                        k += 1;
                        keep
                    });
                    state.delivered = flags;
                }
            }
            if v == source {
                continue;
            }
            let stored = nodes[vi].buffer.len();
            if measuring {
                if let Some(h) = dagger_counts[vi].as_mut() {
                    h[stored] += 1;
                }
            }
            let mut tenders = std::mem::take(&mut nodes[vi].tenders);
            tenders.shuffle(&mut rng);
            let free = capacity[vi].saturating_sub(stored);
            for t in tenders.iter().take(free) {
                let sender = &mut nodes[t.sender.index()];
                sender.delivered[t.slot] = true;
                let packet = sender.buffer[t.slot];
                if measuring {
                    edge_accepts[t.edge.index()] += 1;
                }
                if v == destination {
                    delivered_total += 1;
                    if measuring {
                        delivered_measured += 1;
                        batch_delivered[batch] += 1;
                        if packet.birth >= cfg.warmup {
                            let delay = epoch - packet.birth + 1;
                            delay_sum += delay;
                            delay_count += 1;
                            batch_delay[batch].0 += delay;
                            batch_delay[batch].1 += 1;
                        }
                    }
                } else {
                    let here = &mut nodes[vi];
                    if measuring {
                        if let Some(h) = seat_counts[vi].as_mut() {
                            h[here.buffer.len()] += 1;
                        }
                    }
                    here.buffer.push_back(packet);
                }
            }
            tenders.clear();
            nodes[vi].tenders = tenders;
            if measuring {
                if let Some(h) = theta_counts[vi].as_mut() {
                    h[nodes[vi].buffer.len()] += 1;
                }
            }
            debug_assert!(nodes[vi].buffer.len() <= capacity[vi]);
        }
    }

    let buffered: u64 = spec
        .intermediates()
        .map(|v| nodes[v.index()].buffer.len() as u64)
        .sum();
    let pending = nodes[source.index()].buffer.len() as u64;
    debug_assert!({
        let mut ids: Vec<u64> = nodes.iter().flat_map(|s| s.buffer.iter().map(|p| p.id)).collect();
        let before = ids.len();
        ids.sort_unstable();
        ids.dedup();
        ids.len() == before
    });
    let censored = spec
        .node_ids()
        .filter(|&v| v != destination)
        .flat_map(|v| nodes[v.index()].buffer.iter())
        .filter(|p| p.birth >= cfg.warmup)
        .count() as u64;

    let batch_len = |b: usize| {
        let lo = (b as u64 * measured).div_ceil(batches);
        let hi = ((b as u64 + 1) * measured).div_ceil(batches);
        (hi - lo) as f64
    };
    let batch_thr: Vec<f64> = (0..batches as usize)
        .map(|b| batch_delivered[b] as f64 / batch_len(b))
        .collect();
    let batch_delays: Vec<f64> = batch_delay
        .iter()
        .filter(|(_, c)| *c > 0)
        .map(|(s, c)| *s as f64 / *c as f64)
        .collect();

    let mean_delay = (delay_count > 0).then(|| delay_sum as f64 / delay_count as f64);
    let hists = |counts: Vec<Option<Vec<u64>>>| -> Vec<Option<Vec<f64>>> {
        counts.into_iter().map(|c| c.map(|c| normalized(&c))).collect()
    };
    Ok(SimResult {
        theta: hists(theta_counts),
        theta_dagger: hists(dagger_counts),
        seat: hists(seat_counts),
        delivered_count: delivered_measured,
        measured_epochs: measured,
        throughput: delivered_measured as f64 / measured as f64,
        throughput_se: batch_se(&batch_thr),
        mean_delay,
        delay_se: mean_delay.map(|_| batch_se(&batch_delays)),
        delay_samples: delay_count,
        censored,
        edge_rates: edge_accepts.iter().map(|&c| c as f64 / measured as f64).collect(),
        ledger: PacketLedger {
            created: next_id,
            delivered: delivered_total,
            buffered,
            pending_at_source: pending,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network_from_parts;

    fn cfg(epochs: u64, seed: u64) -> SimConfig {
        SimConfig {
            epochs,
            warmup: epochs / 100,
            seed,
            replications: 1,
        }
    }

    #[test]
    fn coin_flip_link() {
        let spec = network_from_parts(&[None, None], &[(0, 1, 0.5)], 0, 1).unwrap();
        let res = run(&spec, &cfg(1_000_000, 7)).unwrap();
        assert!((res.throughput - 0.5).abs() < 0.002, "{}", res.throughput);
        // geometric wait with mean 2
        assert!((res.mean_delay.unwrap() - 2.0).abs() < 0.02);
        assert!(res.ledger.balances());
    }

    #[test]
    fn dead_links_deliver_nothing() {
        let spec = network_from_parts(
            &[None, Some(3), Some(2), None],
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (0, 2, 1.0)],
            0,
            3,
        )
        .unwrap();
        let res = run(&spec, &cfg(10_000, 3)).unwrap();
        assert_eq!(res.delivered_count, 0);
        assert_eq!(res.mean_delay, None);
        for v in [1, 2] {
            assert_eq!(res.theta[v].as_ref().unwrap()[0], 1.0);
        }
    }

    #[test]
    fn lossless_pipeline_has_unit_throughput() {
        let spec = network_from_parts(&[None, Some(1), None], &[(0, 1, 0.0), (1, 2, 0.0)], 0, 2).unwrap();
        let res = run(&spec, &cfg(1_000, 1)).unwrap();
        assert_eq!(res.throughput, 1.0);
        assert_eq!(res.mean_delay, Some(2.0));
        assert_eq!(res.theta[1].as_deref(), Some(&[0.0, 1.0][..]));
    }

    #[test]
    fn buffers_and_packets_are_conserved() {
        let spec = network_from_parts(
            &[None, Some(2), Some(1), Some(3), None],
            &[(0, 1, 0.2), (0, 2, 0.1), (1, 3, 0.5), (2, 3, 0.3), (1, 4, 0.6), (3, 4, 0.4), (2, 4, 0.7)],
            0,
            4,
        )
        .unwrap();
        let res = run(&spec, &cfg(50_000, 5)).unwrap();
        assert!(res.ledger.balances());
        for h in res.theta.iter().chain(&res.theta_dagger).chain(&res.seat).flatten() {
            assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        // seats never see a full buffer
        for v in [1usize, 2, 3] {
            let seat = res.seat[v].as_ref().unwrap();
            assert_eq!(*seat.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn same_seed_same_result() {
        let spec = network_from_parts(&[None, Some(2), None], &[(0, 1, 0.3), (1, 2, 0.4)], 0, 2).unwrap();
        assert_eq!(run(&spec, &cfg(20_000, 9)).unwrap(), run(&spec, &cfg(20_000, 9)).unwrap());
        assert_ne!(run(&spec, &cfg(20_000, 9)).unwrap(), run(&spec, &cfg(20_000, 10)).unwrap());
    }
}
