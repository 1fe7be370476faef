//! Network-wide iteration for per-edge offered rates and blocking
//! probabilities.
//!
//! Every intermediate node is modelled by its own [`NodeChain`]; the chains
//! are coupled through the edges: the offered rate `ϱ_uv` on an edge is an
//! arrival rate for `v`, and `(1 − ε_uv)(1 − q_uv)` is a departure rate for
//! `u`. Blocking is treated as memoryless, which turns the coupled chains into
//! a nonlinear system in `(ϱ, q)` solved here by repeated substitution.

use crate::chain::{ChainError, NodeChain, OccupancyDist, RateVector};
use crate::model::{EdgeId, NetworkSpec, NodeId};
use thiserror::Error;

/// Sweep cap when iterating until convergence.
pub const HARD_SWEEP_CAP: usize = 100_000;
/// Below this, `1 − q` is treated as zero when recovering `ϱ` from `I / (1 − q)`.
pub const DIVISION_GUARD: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum FixedPointError {
    #[error("invalid iteration config: {0}")]
    InvalidConfig(String),
    #[error("node {node}: {source}")]
    Chain { node: usize, source: ChainError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeState {
    /// Packets per epoch that survive the channel and are offered to the head.
    pub varrho: f64,
    /// Probability an offered packet is refused by the head.
    pub q: f64,
}

impl EdgeState {
    /// Accepted packets per epoch, `ϱ (1 − q)`.
    pub fn rho(&self) -> f64 {
        self.varrho * (1.0 - self.q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxIters {
    Limit(usize),
    UntilConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateOrder {
    /// Every sweep reads only the previous iterate.
    #[default]
    Jacobi,
    /// Nodes are visited in topological order and see updates made earlier in the sweep.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationConfig {
    pub max_iters: MaxIters,
    pub tol: f64,
    /// Relaxation weight `α` in `x ← (1 − α) x_old + α x_new`.
    pub damping: f64,
    pub order: UpdateOrder,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            max_iters: MaxIters::UntilConverged,
            tol: 1e-9,
            damping: 1.0,
            order: UpdateOrder::Jacobi,
        }
    }
}

impl IterationConfig {
    pub fn check(&self) -> Result<(), FixedPointError> {
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(FixedPointError::InvalidConfig(format!("tolerance {} must be >= 0", self.tol)));
        }
        if self.max_iters == MaxIters::UntilConverged && self.tol <= 0.0 {
            return Err(FixedPointError::InvalidConfig(
                "iterating until convergence needs a positive tolerance".into(),
            ));
        }
        if self.max_iters == MaxIters::Limit(0) {
            return Err(FixedPointError::InvalidConfig("iteration limit must be positive".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(FixedPointError::InvalidConfig(format!(
                "damping {} must lie in (0, 1]",
                self.damping
            )));
        }
        Ok(())
    }

    fn sweep_budget(&self) -> usize {
        match self.max_iters {
            MaxIters::Limit(l) => l,
            MaxIters::UntilConverged => HARD_SWEEP_CAP,
        }
    }
}

/// Solved chain at one intermediate node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDist {
    pub theta: OccupancyDist,
    pub theta_dagger: OccupancyDist,
}

/// Current iterate. `dists` holds the node chains evaluated at the previous
/// iterate and is `None` before the first sweep and at the endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub edges: Vec<EdgeState>,
    pub dists: Vec<Option<NodeDist>>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Diagnostics {
    /// Coordinates pushed back into `[0, 1]`.
    pub clamped: usize,
    /// Updates of `ϱ` skipped because `1 − q` was below [`DIVISION_GUARD`].
    pub guarded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub edge_states: Vec<EdgeState>,
    /// Per node; `Some` exactly at the intermediate nodes.
    pub node_dists: Vec<Option<NodeDist>>,
    pub iterations_used: usize,
    pub converged: bool,
    pub residual: f64,
    pub diagnostics: Diagnostics,
}

impl FixedPointResult {
    pub fn edge(&self, e: EdgeId) -> EdgeState {
        self.edge_states[e.index()]
    }

    pub fn dist(&self, v: NodeId) -> Option<&NodeDist> {
        self.node_dists[v.index()].as_ref()
    }
}

pub fn init(spec: &NetworkSpec) -> IterationState {
    let edges = spec
        .edges()
        .iter()
        .map(|e| EdgeState {
            varrho: if e.tail == spec.source() { e.survival() } else { 0.0 },
            q: 0.0,
        })
        .collect();
    IterationState {
        edges,
        dists: vec![None; spec.node_count()],
        iteration: 1,
    }
}

fn arrival_rates(spec: &NetworkSpec, edges: &[EdgeState], v: NodeId) -> RateVector {
    RateVector::new(spec.in_edges(v).iter().map(|e| edges[e.0].varrho).collect())
        .expect("offered rates stay in [0, 1]")
}

fn departure_rates(spec: &NetworkSpec, edges: &[EdgeState], v: NodeId) -> RateVector {
    RateVector::new(
        spec.out_edges(v)
            .iter()
            .map(|e| spec.edge(*e).survival() * (1.0 - edges[e.0].q))
            .collect(),
    )
    .expect("departure rates stay in [0, 1]")
}

/// Chain at intermediate node `v` for the given edge values.
pub fn node_chain(spec: &NetworkSpec, edges: &[EdgeState], v: NodeId) -> Result<NodeChain, FixedPointError> {
    NodeChain::solve(arrival_rates(spec, edges, v), departure_rates(spec, edges, v), spec.capacity(v))
        .map_err(|source| FixedPointError::Chain { node: v.index(), source })
}

/// New values implied by the chain at `v`: `ϱ` on its outgoing edges and `q`
/// on its incoming edges.
struct NodeUpdate {
    varrho: Vec<(EdgeId, Option<f64>)>,
    q: Vec<(EdgeId, f64)>,
}

fn node_update(spec: &NetworkSpec, edges: &[EdgeState], chain: &NodeChain, v: NodeId) -> NodeUpdate {
    let varrho = spec
        .out_edges(v)
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let open = 1.0 - edges[e.0].q;
            let value = (open >= DIVISION_GUARD).then(|| chain.info_rate(k).unwrap() / open);
            (e, value)
        })
        .collect();
    let q = spec
        .in_edges(v)
        .iter()
        .enumerate()
        .map(|(k, &e)| (e, chain.blocking_prob(k).unwrap()))
        .collect();
    NodeUpdate { varrho, q }
}

fn relax(old: f64, new: f64, damping: f64, tol: f64, diag: &mut Diagnostics) -> f64 {
    let x = (1.0 - damping) * old + damping * new;
    if !(-tol..=1.0 + tol).contains(&x) || x.is_nan() {
        diag.clamped += 1;
    }
    if x.is_nan() {
        return old;
    }
    x.clamp(0.0, 1.0)
}

fn apply(
    update: &NodeUpdate,
    from: &[EdgeState],
    into: &mut [EdgeState],
    cfg: &IterationConfig,
    diag: &mut Diagnostics,
) {
    for &(e, value) in &update.varrho {
        match value {
            Some(x) => into[e.0].varrho = relax(from[e.0].varrho, x, cfg.damping, cfg.tol, diag),
            None => {
                diag.guarded += 1;
                into[e.0].varrho = from[e.0].varrho;
            }
        }
    }
    for &(e, x) in &update.q {
        into[e.0].q = relax(from[e.0].q, x, cfg.damping, cfg.tol, diag);
    }
}

/// Largest coordinate change between two iterates, plus the largest
/// `|Δϑ|₁ + |Δϑ†|₁` over nodes when both iterates carry distributions.
fn change(old: &IterationState, new: &IterationState) -> f64 {
    let edge_delta = old
        .edges
        .iter()
        .zip(&new.edges)
        .map(|(a, b)| (a.varrho - b.varrho).abs().max((a.q - b.q).abs()))
        .fold(0.0, f64::max);
    let dist_delta = old
        .dists
        .iter()
        .zip(&new.dists)
        .filter_map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => {
                Some(a.theta.l1_distance(&b.theta) + a.theta_dagger.l1_distance(&b.theta_dagger))
            }
            (None, Some(_)) => Some(f64::INFINITY),
            _ => None,
        })
        .fold(0.0, f64::max);
    edge_delta.max(dist_delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub state: IterationState,
    /// Change from the input iterate, as used by the stopping rule.
    pub change: f64,
    pub diagnostics: Diagnostics,
}

/// One pass of the update over every node.
///
/// Source edges keep `ϱ = 1 − ε` and destination edges keep `q = 0`: neither
/// endpoint has a chain, so nothing ever writes to those coordinates.
pub fn sweep(state: &IterationState, spec: &NetworkSpec, cfg: &IterationConfig) -> Result<SweepOutcome, FixedPointError> {
    let mut diag = Diagnostics::default();
    let mut next = IterationState {
        edges: state.edges.clone(),
        dists: vec![None; spec.node_count()],
        iteration: state.iteration + 1,
    };
    match cfg.order {
        UpdateOrder::Jacobi => {
            let chains = spec
                .intermediates()
                .map(|v| node_chain(spec, &state.edges, v).map(|c| (v, c)))
                .collect::<Result<Vec<_>, _>>()?;
            for (v, chain) in chains {
                let update = node_update(spec, &state.edges, &chain, v);
                apply(&update, &state.edges, &mut next.edges, cfg, &mut diag);
                next.dists[v.index()] = Some(NodeDist {
                    theta: chain.theta,
                    theta_dagger: chain.theta_dagger,
                });
            }
        }
        UpdateOrder::GaussSeidel => {
            for v in spec.intermediates() {
                let chain = node_chain(spec, &next.edges, v)?;
                let update = node_update(spec, &next.edges, &chain, v);
                let snapshot = next.edges.clone();
                apply(&update, &snapshot, &mut next.edges, cfg, &mut diag);
                next.dists[v.index()] = Some(NodeDist {
                    theta: chain.theta,
                    theta_dagger: chain.theta_dagger,
                });
            }
        }
    }
    let change = change(state, &next);
    Ok(SweepOutcome {
        state: next,
        change,
        diagnostics: diag,
    })
}

pub fn solve(spec: &NetworkSpec, cfg: &IterationConfig) -> Result<FixedPointResult, FixedPointError> {
    cfg.check()?;
    let mut state = init(spec);
    let mut diag = Diagnostics::default();
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < cfg.sweep_budget() {
        let outcome = sweep(&state, spec, cfg)?;
        sweeps += 1;
        diag.clamped += outcome.diagnostics.clamped;
        diag.guarded += outcome.diagnostics.guarded;
        residual = outcome.change;
        state = outcome.state;
        if residual <= cfg.tol {
            break;
        }
    }

    let mut node_dists = vec![None; spec.node_count()];
    for v in spec.intermediates() {
        let chain = node_chain(spec, &state.edges, v)?;
        node_dists[v.index()] = Some(NodeDist {
            theta: chain.theta,
            theta_dagger: chain.theta_dagger,
        });
    }
    Ok(FixedPointResult {
        edge_states: state.edges,
        node_dists,
        iterations_used: sweeps,
        converged: residual <= cfg.tol,
        residual,
        diagnostics: diag,
    })
}

/// Accepted inflow minus accepted outflow at every intermediate node.
pub fn node_balance(spec: &NetworkSpec, edges: &[EdgeState]) -> Result<Vec<(NodeId, f64)>, FixedPointError> {
    spec.intermediates()
        .map(|v| {
            let inflow: f64 = spec.in_edges(v).iter().map(|e| edges[e.0].rho()).sum();
            let outflow: f64 = spec.out_edges(v).iter().map(|e| edges[e.0].rho()).sum();
            Ok((v, inflow - outflow))
        })
        .collect()
}
