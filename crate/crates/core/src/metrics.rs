//! Throughput and mean packet delay from a solved fixed point.

use crate::chain::{OccupancyDist, Phase};
use crate::cuts::{enumerate_cuts, Cut};
use crate::fixed_point::FixedPointResult;
use crate::model::{NetworkSpec, NodeId, TopoOrder};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("buffer is full with probability one; no packet is ever accepted")]
    DegenerateFull,
    #[error("expected a post-departure occupancy distribution")]
    WrongPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutFlow {
    pub cut: Cut,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputEstimate {
    /// Packets per epoch arriving at the destination.
    pub value: f64,
    pub per_cut_values: Vec<CutFlow>,
}

impl ThroughputEstimate {
    /// Largest disagreement between any cut and the destination-side value.
    pub fn max_cut_gap(&self) -> f64 {
        self.per_cut_values
            .iter()
            .map(|c| (c.value - self.value).abs())
            .fold(0.0, f64::max)
    }
}

pub fn throughput(result: &FixedPointResult, spec: &NetworkSpec, cut_cap: usize) -> ThroughputEstimate {
    // the destination never blocks, so ϱ is already the accepted rate
    let value = spec
        .in_edges(spec.destination())
        .iter()
        .map(|&e| result.edge(e).varrho)
        .sum();
    let per_cut_values = enumerate_cuts(spec, cut_cap)
        .into_iter()
        .map(|cut| {
            let value = cut.flow(|e| result.edge(e).rho());
            CutFlow { cut, value }
        })
        .collect();
    ThroughputEstimate { value, per_cut_values }
}

/// Occupancy an accepted packet finds on arrival, `π(j) = ϑ†(j) / (1 − ϑ†(m))`
/// for `j = 0..m−1`.
pub fn seat_distribution(theta_dagger: &OccupancyDist, m: usize) -> Result<Vec<f64>, MetricsError> {
    if theta_dagger.phase() != Phase::PostDeparture {
        return Err(MetricsError::WrongPhase);
    }
    let p = theta_dagger.probs();
    let open: f64 = p[..m].iter().sum();
    if open <= 0.0 {
        return Err(MetricsError::DegenerateFull);
    }
    Ok(p[..m].iter().map(|x| x / open).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDelay {
    pub node: NodeId,
    /// `(head, r_uv)` per outgoing edge, `r_uv = (1 − ε_uv)(1 − q_uv)`.
    pub out_rates: Vec<(NodeId, f64)>,
    /// `r_u⁻`, the sum of `out_rates`.
    pub total_rate: f64,
    /// `D_u(k)` in epochs for `k = 0..m_u−1`; a single entry at the source and destination.
    pub delays: Vec<f64>,
    /// Seat distribution, present at intermediate nodes that ever accept.
    pub seat: Option<Vec<f64>>,
}

impl NodeDelay {
    /// Mean remaining delay of a packet just accepted here, `Σ_j π(j) D(j)`.
    pub fn expected_on_arrival(&self) -> f64 {
        match &self.seat {
            Some(seat) => seat.iter().zip(&self.delays).map(|(p, d)| if *p == 0.0 { 0.0 } else { p * d }).sum(),
            None => self.delays[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayTable {
    /// Indexed by node.
    pub nodes: Vec<NodeDelay>,
    pub source: NodeId,
}

impl DelayTable {
    /// End-to-end mean delay `D_s(0)`; `+∞` when no path carries traffic.
    pub fn mean_delay(&self) -> f64 {
        self.nodes[self.source.index()].delays[0]
    }

    pub fn node(&self, v: NodeId) -> &NodeDelay {
        &self.nodes[v.index()]
    }
}

/// Delay functions computed backwards from the destination.
///
/// `D_u(k) = (k + 1)/r_u⁻ + Σ_w (r_uw / r_u⁻) Σ_j π_w(j) D_w(j)`: the first term
/// waits out the `k` packets ahead plus the packet itself, the second is
/// the expected remaining delay at whichever next hop takes it.
pub fn delay_table(result: &FixedPointResult, spec: &NetworkSpec, order: &TopoOrder) -> DelayTable {
    let n = spec.node_count();
    let mut nodes: Vec<Option<NodeDelay>> = vec![None; n];
    for u in order.iter().rev() {
        let out_rates: Vec<(NodeId, f64)> = spec
            .out_edges(u)
            .iter()
            .map(|&e| (spec.edge(e).head, spec.edge(e).survival() * (1.0 - result.edge(e).q)))
            .collect();
        let total_rate: f64 = out_rates.iter().map(|(_, r)| r).sum();

        let slots = if spec.is_intermediate(u) { spec.capacity(u) } else { 1 };
        let delays = if u == spec.destination() {
            vec![0.0]
        } else if total_rate <= 0.0 {
            vec![f64::INFINITY; slots]
        } else {
            let downstream: f64 = out_rates
                .iter()
                .filter(|(_, r)| *r > 0.0)
                .map(|&(w, r)| {
                    let next = nodes[w.index()].as_ref().expect("successors are done first");
                    let remaining = match (&next.seat, spec.is_intermediate(w)) {
                        (None, true) => f64::INFINITY,
                        _ => next.expected_on_arrival(),
                    };
                    r / total_rate * remaining
                })
                .sum();
            (0..slots).map(|k| (k + 1) as f64 / total_rate + downstream).collect()
        };

        let seat = if spec.is_intermediate(u) {
            let dagger = &result.dist(u).expect("intermediate nodes carry distributions").theta_dagger;
            seat_distribution(dagger, spec.capacity(u)).ok()
        } else {
            None
        };
        nodes[u.index()] = Some(NodeDelay {
            node: u,
            out_rates,
            total_rate,
            delays,
            seat,
        });
    }
    DelayTable {
        nodes: nodes.into_iter().map(|d| d.expect("every node is ordered")).collect(),
        source: spec.source(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::{solve, IterationConfig};
    use crate::model::network_from_parts;

    #[test]
    fn single_edge_throughput_and_delay() {
        let spec = network_from_parts(&[None, None], &[(0, 1, 0.3)], 0, 1).unwrap();
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let thr = throughput(&res, &spec, 64);
        assert!((thr.value - 0.7).abs() < 1e-15);
        assert!(thr.max_cut_gap() < 1e-15);

        let spec = network_from_parts(&[None, None], &[(0, 1, 0.5)], 0, 1).unwrap();
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let table = delay_table(&res, &spec, spec.topo_order());
        assert_eq!(table.mean_delay(), 2.0);
        assert_eq!(table.node(NodeId(1)).delays, vec![0.0]);
    }

    #[test]
    fn parallel_edges_add_up() {
        let spec = network_from_parts(
            &[None, Some(1), Some(1), None],
            &[(0, 1, 0.0), (0, 2, 0.0), (1, 3, 0.5), (2, 3, 0.5)],
            0,
            3,
        );
        // two disjoint lossy links into the destination, fed losslessly
        let spec = spec.unwrap();
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let thr = throughput(&res, &spec, 64);
        assert!((thr.value - 1.0).abs() < 1e-8, "{}", thr.value);
    }

    #[test]
    fn seat_distribution_examples() {
        let d = OccupancyDist::new(vec![0.3, 0.7], Phase::PostDeparture);
        assert_eq!(seat_distribution(&d, 1).unwrap(), vec![1.0]);
        let d = OccupancyDist::new(vec![0.5, 0.3, 0.2], Phase::PostDeparture);
        let pi = seat_distribution(&d, 2).unwrap();
        assert!((pi[0] - 0.625).abs() < 1e-12 && (pi[1] - 0.375).abs() < 1e-12);
        let full = OccupancyDist::new(vec![0.0, 0.0, 1.0], Phase::PostDeparture);
        assert_eq!(seat_distribution(&full, 2).unwrap_err(), MetricsError::DegenerateFull);
        let wrong = OccupancyDist::new(vec![0.5, 0.5], Phase::PostArrival);
        assert_eq!(seat_distribution(&wrong, 1).unwrap_err(), MetricsError::WrongPhase);
    }

    #[test]
    fn lossless_pipeline_delay() {
        let spec = network_from_parts(&[None, Some(1), None], &[(0, 1, 0.0), (1, 2, 0.0)], 0, 2).unwrap();
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let table = delay_table(&res, &spec, spec.topo_order());
        assert!((table.mean_delay() - 2.0).abs() < 1e-8);
        assert_eq!(table.node(NodeId(1)).seat.as_deref(), Some(&[1.0][..]));
    }

    #[test]
    fn two_hop_half_half_delay() {
        // ϑ = (0.2, 0.4, 0.4), ϑ† = (0.4, 0.4, 0.2): q = 0.2, r_s = 0.4,
        // π_u = (0.5, 0.5), D_u = (2, 4), D_s(0) = 2.5 + 3 = 5.5
        let spec = network_from_parts(&[None, Some(2), None], &[(0, 1, 0.5), (1, 2, 0.5)], 0, 2).unwrap();
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let table = delay_table(&res, &spec, spec.topo_order());
        let u = table.node(NodeId(1));
        assert!((u.delays[0] - 2.0).abs() < 1e-8 && (u.delays[1] - 4.0).abs() < 1e-8);
        assert!((table.mean_delay() - 5.5).abs() < 1e-8);
        assert!((throughput(&res, &spec, 64).value - 0.4).abs() < 1e-9);
    }

    #[test]
    fn dead_network_has_infinite_delay() {
        let spec = network_from_parts(&[None, Some(2), None], &[(0, 1, 1.0), (1, 2, 1.0)], 0, 2).unwrap();
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let table = delay_table(&res, &spec, spec.topo_order());
        assert!(table.mean_delay().is_infinite());
        assert_eq!(throughput(&res, &spec, 64).value, 0.0);
    }

    #[test]
    fn downstream_dead_end_contaminates_upstream() {
        let spec = network_from_parts(
            &[None, Some(1), Some(1), None],
            &[(0, 1, 0.0), (0, 2, 0.0), (1, 3, 0.0), (2, 3, 1.0)],
            0,
            3,
        )
        .unwrap();
        let res = solve(&spec, &IterationConfig::default()).unwrap();
        let table = delay_table(&res, &spec, spec.topo_order());
        assert!(table.node(NodeId(2)).delays[0].is_infinite());
        assert!(table.node(NodeId(1)).delays[0].is_finite());
        // node 2 fills up and blocks everything, so the source stops using it
        assert!(table.mean_delay().is_finite());
    }
}
