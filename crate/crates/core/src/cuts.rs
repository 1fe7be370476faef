//! Source/destination edge cuts.
//!
//! A cut is described by its source side `S` (contains the source, not the
//! destination). The flow across it is what leaves `S` minus what re-enters
//! it; for predecessor-closed `S` nothing re-enters and the flow is the plain
//! sum over the forward edges.

use crate::model::{EdgeId, NetworkSpec, NodeId};
use std::collections::{BTreeSet, VecDeque};

pub const DEFAULT_CUT_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cut {
    /// Sorted node set on the source side.
    pub source_side: Vec<NodeId>,
    /// Edges from `S` to its complement.
    pub forward: Vec<EdgeId>,
    /// Edges from the complement back into `S`.
    pub backward: Vec<EdgeId>,
}

impl Cut {
    pub fn from_side(spec: &NetworkSpec, side: &[bool]) -> Cut {
        let mut forward = Vec::new();
        let mut backward = Vec::new();
        for (k, e) in spec.edges().iter().enumerate() {
            match (side[e.tail.index()], side[e.head.index()]) {
                (true, false) => forward.push(EdgeId(k)),
                (false, true) => backward.push(EdgeId(k)),
                _ => {}
            }
        }
        Cut {
            source_side: (0..side.len()).filter(|&v| side[v]).map(NodeId).collect(),
            forward,
            backward,
        }
    }

    /// Net flow across the cut for per-edge accepted rates `rate`.
    pub fn flow(&self, rate: impl Fn(EdgeId) -> f64) -> f64 {
        self.forward.iter().map(|&e| rate(e)).sum::<f64>()
            - self.backward.iter().map(|&e| rate(e)).sum::<f64>()
    }
}

/// Minimum cut for capacities `1 − ε`, via Edmonds–Karp.
pub fn min_cut(spec: &NetworkSpec) -> (f64, Cut) {
    let n = spec.node_count();
    let edges = spec.edges();
    // residual graph: edge k is arc 2k, its reverse is arc 2k+1
    let mut cap: Vec<f64> = edges.iter().flat_map(|e| [e.survival(), 0.0]).collect();
    let mut adj = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        adj[e.tail.index()].push(2 * k);
        adj[e.head.index()].push(2 * k + 1);
    }
    let arc_end = |a: usize| {
        let e = &edges[a / 2];
        if a.is_multiple_of(2) {
            e.head.index()
        } else {
            e.tail.index()
        }
    };
    let (s, t) = (spec.source().index(), spec.destination().index());
    let mut total = 0.0;
    loop {
        let mut via = vec![usize::MAX; n];
        let mut seen = vec![false; n];
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &a in &adj[v] {
                let w = arc_end(a);
                if !seen[w] && cap[a] > 1e-12 {
                    seen[w] = true;
                    via[w] = a;
                    queue.push_back(w);
                }
            }
        }
        if !seen[t] {
            return (total, Cut::from_side(spec, &seen));
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = t;
        while v != s {
            let a = via[v];
            bottleneck = bottleneck.min(cap[a]);
            v = arc_end(a ^ 1);
        }
        let mut v = t;
        while v != s {
            let a = via[v];
            cap[a] -= bottleneck;
            cap[a ^ 1] += bottleneck;
            v = arc_end(a ^ 1);
        }
        total += bottleneck;
    }
}

/// Predecessor-closed source sides, visited in topological order, at most `cap`.
fn closed_cuts(spec: &NetworkSpec, cap: usize, out: &mut Vec<Cut>, seen: &mut BTreeSet<Vec<NodeId>>) {
    let order: Vec<NodeId> = spec.topo_order().iter().collect();
    let mut side = vec![false; spec.node_count()];
    side[spec.source().index()] = true;

    fn walk(
        spec: &NetworkSpec,
        order: &[NodeId],
        pos: usize,
        side: &mut Vec<bool>,
        cap: usize,
        out: &mut Vec<Cut>,
        seen: &mut BTreeSet<Vec<NodeId>>,
    ) {
        if out.len() >= cap {
            return;
        }
        if pos == order.len() {
            let cut = Cut::from_side(spec, side);
            if seen.insert(cut.source_side.clone()) {
                out.push(cut);
            }
            return;
        }
        let v = order[pos];
        if v == spec.source() || v == spec.destination() {
            return walk(spec, order, pos + 1, side, cap, out, seen);
        }
        walk(spec, order, pos + 1, side, cap, out, seen);
        let closed = spec.in_edges(v).iter().all(|e| side[spec.edge(*e).tail.index()]);
        if closed {
            side[v.index()] = true;
            walk(spec, order, pos + 1, side, cap, out, seen);
            side[v.index()] = false;
        }
    }

    walk(spec, &order, 0, &mut side, cap, out, seen);
}

/// The min cut first, then predecessor-closed cuts, up to `cap` in total.
pub fn enumerate_cuts(spec: &NetworkSpec, cap: usize) -> Vec<Cut> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    if cap == 0 {
        return out;
    }
    let (_, min) = min_cut(spec);
    seen.insert(min.source_side.clone());
    out.push(min);
    closed_cuts(spec, cap, &mut out, &mut seen);
    out
}
