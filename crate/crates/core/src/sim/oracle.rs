//! Exact joint occupancy chain for tiny networks.
//!
//! The state is the vector of intermediate-node occupancies at the end of
//! an epoch. One epoch is expanded into every combination of edge orderings,
//! erasures and acceptance lotteries with the same semantics as the
//! simulator, and the resulting chain is solved for its stationary law.

use crate::model::{EdgeId, NetworkSpec, NodeId};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

/// Upper bound on the number of joint states.
pub const ORACLE_STATE_CAP: usize = 4096;
/// Orderings × erasure patterns per node grow as `d! 2^d`.
const MAX_ORACLE_OUT_DEGREE: usize = 6;
const DENSE_LIMIT: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("joint state space has {states} states, above the cap of {cap}")]
    StateSpaceTooLarge { states: u128, cap: usize },
    #[error("node {node} has out-degree {degree}; the oracle enumerates orderings only up to {MAX_ORACLE_OUT_DEGREE}")]
    OutcomeSpaceTooLarge { node: i64, degree: usize },
    #[error("stationary solve did not converge (residual {0:e})")]
    NoConvergence(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Intermediate nodes in topological order; state vectors follow this order.
    pub nodes: Vec<NodeId>,
    /// Stationary probability of every joint state.
    pub states: Vec<(Vec<usize>, f64)>,
    /// Expected packets absorbed by the destination per epoch.
    pub throughput: f64,
    /// Per node (indexed by node id), the marginal post-acceptance occupancy.
    pub marginals: Vec<Option<Vec<f64>>>,
}

struct Space {
    nodes: Vec<NodeId>,
    caps: Vec<usize>,
    slot: Vec<Option<usize>>,
}

impl Space {
    fn size(&self) -> usize {
        self.caps.iter().map(|m| m + 1).product()
    }

    fn decode(&self, mut index: usize) -> Vec<usize> {
        self.caps
            .iter()
            .map(|m| {
                let x = index % (m + 1);
                index /= m + 1;
                x
            })
            .collect()
    }

    fn encode(&self, occ: &[usize]) -> usize {
        occ.iter()
            .zip(&self.caps)
            .rev()
            .fold(0, |acc, (x, m)| acc * (m + 1) + x)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Distribution of the set of outgoing edges (as a global edge bitmask)
/// that receive a tendered packet, for a node holding `stored` packets
/// (`None` for the saturated source).
fn tender_outcomes(spec: &NetworkSpec, u: NodeId, stored: Option<usize>) -> Vec<(u64, f64)> {
    let out = spec.out_edges(u);
    let d = out.len();
    let orders = permutations(d);
    let mut acc: BTreeMap<u64, f64> = BTreeMap::new();
    for order in &orders {
        for survive in 0u32..(1 << d) {
            let mut p = 1.0 / orders.len() as f64;
            for (k, &e) in out.iter().enumerate() {
                let eps = spec.edge(e).erasure;
                p *= if survive >> k & 1 == 1 { 1.0 - eps } else { eps };
            }
            if p == 0.0 {
                continue;
            }
            let mut sent = 0;
            let mut mask = 0u64;
            for &k in order {
                if stored.is_some_and(|n| sent == n) {
                    break;
                }
                if survive >> k & 1 == 1 {
                    mask |= 1 << out[k].index();
                    sent += 1;
                }
            }
            *acc.entry(mask).or_insert(0.0) += p;
        }
    }
    acc.into_iter().collect()
}

fn subsets_of_size(items: &[EdgeId], k: usize) -> Vec<u64> {
    fn go(items: &[EdgeId], k: usize, start: usize, mask: u64, out: &mut Vec<u64>) {
        if k == 0 {
            out.push(mask);
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k {
                break;
            }
            go(items, k - 1, i + 1, mask | 1 << items[i].index(), out);
        }
    }
    let mut out = Vec::new();
    go(items, k, 0, 0, &mut out);
    out
}

struct Epoch<'a> {
    spec: &'a NetworkSpec,
    space: &'a Space,
    /// Resolution order: every node except the source, downstream first.
    resolve: Vec<NodeId>,
}

impl Epoch<'_> {
    /// Expand the acceptance lotteries of `resolve[pos..]`.
    fn accept(
        &self,
        pos: usize,
        occ: &[usize],
        tendered: u64,
        accepted: u64,
        p: f64,
        emit: &mut dyn FnMut(u64, f64),
    ) {
        if pos == self.resolve.len() {
            emit(accepted, p);
            return;
        }
        let v = self.resolve[pos];
        let offers: Vec<EdgeId> = self
            .spec
            .in_edges(v)
            .iter()
            .copied()
            .filter(|e| tendered >> e.index() & 1 == 1)
            .collect();
        let take = match self.space.slot[v.index()] {
            Some(i) => {
                let departed = self
                    .spec
                    .out_edges(v)
                    .iter()
                    .filter(|e| accepted >> e.index() & 1 == 1)
                    .count();
                let free = self.space.caps[i] - (occ[i] - departed);
                free.min(offers.len())
            }
            None => offers.len(),
        };
        let choices = subsets_of_size(&offers, take);
        let share = p / choices.len() as f64;
        for chosen in choices {
            self.accept(pos + 1, occ, tendered, accepted | chosen, share, emit);
        }
    }
}

pub fn exact_oracle(spec: &NetworkSpec) -> Result<OracleResult, OracleError> {
    let nodes: Vec<NodeId> = spec.intermediates().collect();
    let caps: Vec<usize> = nodes.iter().map(|&v| spec.capacity(v)).collect();
    let states: u128 = caps.iter().map(|&m| m as u128 + 1).product();
    if states > ORACLE_STATE_CAP as u128 {
        return Err(OracleError::StateSpaceTooLarge {
            states,
            cap: ORACLE_STATE_CAP,
        });
    }
    if spec.edges().len() > 64 {
        return Err(OracleError::StateSpaceTooLarge {
            states: u128::MAX,
            cap: ORACLE_STATE_CAP,
        });
    }
    for v in spec.node_ids() {
        let degree = spec.out_edges(v).len();
        if degree > MAX_ORACLE_OUT_DEGREE {
            return Err(OracleError::OutcomeSpaceTooLarge {
                node: spec.label(v),
                degree,
            });
        }
    }

    let mut slot = vec![None; spec.node_count()];
    for (i, v) in nodes.iter().enumerate() {
        slot[v.index()] = Some(i);
    }
    let space = Space { nodes, caps, slot };
    let n = space.size();
    let epoch = Epoch {
        spec,
        space: &space,
        resolve: spec.topo_order().iter().rev().filter(|&v| v != spec.source()).collect(),
    };
    let source_tenders = tender_outcomes(spec, spec.source(), None);
    let dest_in: u64 = spec
        .in_edges(spec.destination())
        .iter()
        .fold(0, |m, e| m | 1 << e.index());

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut absorbed = vec![0.0; n];
    for (s, slot) in absorbed.iter_mut().enumerate() {
        let occ = space.decode(s);
        // joint tender distribution: source first, then every intermediate
        let mut joint: Vec<(u64, f64)> = source_tenders.clone();
        for (i, &v) in space.nodes.iter().enumerate() {
            let local = tender_outcomes(spec, v, Some(occ[i]));
            joint = joint
                .iter()
                .flat_map(|&(m, p)| local.iter().map(move |&(m2, p2)| (m | m2, p * p2)))
                .collect();
        }
        let mut next: BTreeMap<usize, f64> = BTreeMap::new();
        let mut delivered = 0.0;
        for (tendered, p) in joint {
            epoch.accept(0, &occ, tendered, 0, p, &mut |accepted, q| {
                let mut after = occ.clone();
                for (i, &v) in space.nodes.iter().enumerate() {
                    let gained = spec.in_edges(v).iter().filter(|e| accepted >> e.index() & 1 == 1).count();
                    let lost = spec.out_edges(v).iter().filter(|e| accepted >> e.index() & 1 == 1).count();
                    after[i] = after[i] + gained - lost;
                }
                *next.entry(space.encode(&after)).or_insert(0.0) += q;
                delivered += q * (accepted & dest_in).count_ones() as f64;
            });
        }
        rows.push(next.into_iter().collect());
        *slot = delivered;
    }

    let pi = stationary(&rows)?;
    let throughput = pi.iter().zip(&absorbed).map(|(p, a)| p * a).sum();
    let mut marginals: Vec<Option<Vec<f64>>> = vec![None; spec.node_count()];
    for (i, &v) in space.nodes.iter().enumerate() {
        let mut hist = vec![0.0; space.caps[i] + 1];
        for (s, &p) in pi.iter().enumerate() {
            hist[space.decode(s)[i]] += p;
        }
        marginals[v.index()] = Some(hist);
    }
    Ok(OracleResult {
        nodes: space.nodes.clone(),
        states: pi.iter().enumerate().map(|(s, &p)| (space.decode(s), p)).collect(),
        throughput,
        marginals,
    })
}

fn residual(rows: &[Vec<(usize, f64)>], x: &[f64]) -> f64 {
    let next = step(rows, x);
    next.iter().zip(x).map(|(a, b)| (a - b).abs()).sum()
}

fn step(rows: &[Vec<(usize, f64)>], x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (s, row) in rows.iter().enumerate() {
        for &(t, p) in row {
            out[t] += x[s] * p;
        }
    }
    out
}

/// Direct solve when small and unique, otherwise a lazy power iteration
/// from the all-empty state.
fn stationary(rows: &[Vec<(usize, f64)>]) -> Result<Vec<f64>, OracleError> {
    let n = rows.len();
    if n <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (s, row) in rows.iter().enumerate() {
            for &(t, p) in row {
                a[(t, s)] += p;
            }
        }
        for i in 0..n {
            a[(i, i)] -= 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        if let Some(x) = a.lu().solve(&b) {
            if x.iter().all(|v| v.is_finite() && *v > -1e-9) {
                let mut x: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
                let total: f64 = x.iter().sum();
                x.iter_mut().for_each(|v| *v /= total);
                if residual(rows, &x) < 1e-12 {
                    return Ok(x);
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    x[0] = 1.0;
    let mut r = f64::INFINITY;
    for _ in 0..2_000_000 {
        let next: Vec<f64> = step(rows, &x).iter().zip(&x).map(|(a, b)| 0.5 * (a + b)).collect();
        r = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if r < 1e-14 {
            return Ok(x);
        }
    }
    Err(OracleError::NoConvergence(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network_from_parts;

    fn two_hop(e1: f64, e2: f64, m: u32) -> NetworkSpec {
        network_from_parts(&[None, Some(m), None], &[(0, 1, e1), (1, 2, e2)], 0, 2).unwrap()
    }

    #[test]
    fn lossless_pipeline() {
        let res = exact_oracle(&two_hop(0.0, 0.0, 1)).unwrap();
        assert!((res.throughput - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_state_chain_by_hand() {
        // P = [[1/2, 1/2], [1/4, 3/4]] → π = (1/3, 2/3), throughput = π(1)/2
        let res = exact_oracle(&two_hop(0.5, 0.5, 1)).unwrap();
        assert!((res.throughput - 1.0 / 3.0).abs() < 1e-12);
        let m = res.marginals[1].as_ref().unwrap();
        assert!((m[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_edge() {
        let spec = network_from_parts(&[None, None], &[(0, 1, 0.3)], 0, 1).unwrap();
        let res = exact_oracle(&spec).unwrap();
        assert!((res.throughput - 0.7).abs() < 1e-12);
        assert_eq!(res.states.len(), 1);
    }

    #[test]
    fn state_cap() {
        let mut buffers = vec![None];
        buffers.extend(std::iter::repeat_n(Some(4), 6));
        buffers.push(None);
        let edges: Vec<(i64, i64, f64)> = (0..7).map(|i| (i, i + 1, 0.1)).collect();
        let spec = network_from_parts(&buffers, &edges, 0, 7).unwrap();
        assert!(matches!(exact_oracle(&spec), Err(OracleError::StateSpaceTooLarge { .. })));
    }

    #[test]
    fn tender_sets_of_a_two_edge_node() {
        // one packet, two edges with survival 1/2: it goes out on one of them
        // unless both are erased
        let spec = network_from_parts(
            &[None, Some(1), Some(1), Some(1), None],
            &[(0, 1, 0.0), (1, 2, 0.5), (1, 3, 0.5), (2, 4, 0.0), (3, 4, 0.0)],
            0,
            4,
        )
        .unwrap();
        let out = tender_outcomes(&spec, NodeId(1), Some(1));
        let total: f64 = out.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let none = out.iter().find(|(m, _)| *m == 0).unwrap().1;
        assert!((none - 0.25).abs() < 1e-12);
        assert!(out.iter().all(|(m, _)| m.count_ones() <= 1));
    }

    #[test]
    fn dead_network_stays_empty() {
        let spec = network_from_parts(&[None, Some(2), Some(1), None], &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)], 0, 3)
            .unwrap();
        let res = exact_oracle(&spec).unwrap();
        assert_eq!(res.throughput, 0.0);
        assert!((res.marginals[1].as_ref().unwrap()[0] - 1.0).abs() < 1e-12);
    }
}
