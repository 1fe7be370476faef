//! Single-node occupancy chain.
//!
//! A node with buffer `m` sees independent Bernoulli arrivals on each incoming
//! edge (rates `Λ`) and independent Bernoulli departure opportunities on each
//! outgoing edge (rates `Ω`). One epoch is a departure phase (`T_E`) followed
//! by an arrival phase (`T_A`), so the occupancy recorded after arrivals
//! evolves under `T_E · T_A`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Chains with at most this many states are solved directly.
pub const DIRECT_SOLVE_MAX_STATES: usize = 64;
pub const POWER_ITER_CAP: usize = 1_000_000;
pub const POWER_ITER_TARGET: f64 = 1e-12;
/// Stationary vectors must satisfy `‖ϑ T_E T_A − ϑ‖₁` below this.
pub const STATIONARY_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("stationary solve did not converge ({iterations} iterations, residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("edge index {index} out of range for {len} edges")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("expected a {expected:?} occupancy distribution")]
    WrongPhase { expected: Phase },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rate {0} outside [0, 1]")]
    InvalidRate(f64),
}

/// Per-edge Bernoulli rates, one entry per incoming (`Λ`) or outgoing (`Ω`) edge.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector(Vec<f64>);

impl RateVector {
    pub fn new(rates: Vec<f64>) -> Result<Self, ChainError> {
        if let Some(&bad) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(ChainError::InvalidRate(bad));
        }
        Ok(RateVector(rates))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `probs[k]` = probability that exactly `k` events happen in one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution(Vec<f64>);

impl CountDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// `p_k`, zero beyond the support.
    pub fn get(&self, k: usize) -> f64 {
        self.0.get(k).copied().unwrap_or(0.0)
    }

    /// `Σ_{j ≥ k} p_j`.
    pub fn tail(&self, k: usize) -> f64 {
        self.0.iter().skip(k).sum()
    }
}

/// Coefficients of `∏_j (1 − r_j + r_j x)`.
fn bernoulli_sum_pmf<'a>(rates: impl IntoIterator<Item = &'a f64>) -> Vec<f64> {
    let mut coeffs = vec![1.0];
    for &r in rates {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (k, &c) in coeffs.iter().enumerate() {
            next[k] += c * (1.0 - r);
            next[k + 1] += c * r;
        }
        coeffs = next;
    }
    coeffs
}

pub fn arrival_dist(lambda: &RateVector) -> CountDistribution {
    CountDistribution(bernoulli_sum_pmf(lambda.as_slice()))
}

pub fn departure_dist(omega: &RateVector) -> CountDistribution {
    CountDistribution(bernoulli_sum_pmf(omega.as_slice()))
}

/// Dense row-stochastic matrix over occupancy states `0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    size: usize,
    data: Vec<f64>,
}

impl TransitionMatrix {
    fn zeros(size: usize) -> Self {
        TransitionMatrix {
            size,
            data: vec![0.0; size * size],
        }
    }

    /// Number of states, `m + 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.size + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.size..(row + 1) * self.size]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn mul(&self, other: &TransitionMatrix) -> TransitionMatrix {
        assert_eq!(self.size, other.size);
        let n = self.size;
        let mut out = TransitionMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    /// Row vector times matrix.
    pub fn left_apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.size;
        let mut out = vec![0.0; n];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += xi * self.data[i * n + j];
            }
        }
        out
    }

    pub fn max_row_sum_error(&self) -> f64 {
        (0..self.size)
            .map(|r| (self.row(r).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Departure-phase matrix: from state `s`, `k < s` departures lead to `s − k`
/// and everything at or beyond `s` empties the buffer.
pub fn build_te(e: &CountDistribution, m: usize) -> TransitionMatrix {
    assert!(m >= 1, "buffer must hold at least one packet");
    let mut t = TransitionMatrix::zeros(m + 1);
    t.set(0, 0, 1.0);
    for s in 1..=m {
        t.set(s, 0, e.tail(s));
        for k in 0..s {
            t.set(s, s - k, e.get(k));
        }
    }
    t
}

/// Arrival-phase matrix: arrivals past the free space are blocked, so the
/// last column collects the tail mass.
pub fn build_ta(a: &CountDistribution, m: usize) -> TransitionMatrix {
    assert!(m >= 1, "buffer must hold at least one packet");
    let mut t = TransitionMatrix::zeros(m + 1);
    for s in 0..=m {
        let free = m - s;
        for k in 0..free {
            t.set(s, s + k, a.get(k));
        }
        t.set(s, m, a.tail(free));
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Just after arriving packets are accepted (`ϑ`).
    PostArrival,
    /// Just after departures, before arrivals (`ϑ†`).
    PostDeparture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyDist {
    probs: Vec<f64>,
    phase: Phase,
}

impl OccupancyDist {
    pub fn new(probs: Vec<f64>, phase: Phase) -> Self {
        OccupancyDist { probs, phase }
    }

    /// Everything at occupancy zero.
    pub fn empty(m: usize, phase: Phase) -> Self {
        let mut probs = vec![0.0; m + 1];
        probs[0] = 1.0;
        OccupancyDist { probs, phase }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Buffer size `m`.
    pub fn capacity(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn l1_distance(&self, other: &OccupancyDist) -> f64 {
        l1(&self.probs, &other.probs)
    }

    fn expect(&self, phase: Phase) -> Result<(), ChainError> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(ChainError::WrongPhase { expected: phase })
        }
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// `‖ϑ T_E T_A − ϑ‖₁`.
pub fn stationary_residual(theta: &[f64], te: &TransitionMatrix, ta: &TransitionMatrix) -> f64 {
    l1(&ta.left_apply(&te.left_apply(theta)), theta)
}

fn normalize(mut x: Vec<f64>) -> Vec<f64> {
    for v in &mut x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    x
}

/// Solve `x (P − I) = 0`, `Σx = 1` by replacing the last balance equation
/// with the normalization. `None` when the chain has more than one closed class.
fn direct_stationary(p: &TransitionMatrix) -> Option<Vec<f64>> {
    let n = p.size();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            // row i of A is the balance equation of state i: Σ_j x_j P(j, i) − x_i
            a[(i, j)] = p.get(j, i) - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b)?;
    if x.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return None;
    }
    Some(normalize(x.iter().copied().collect()))
}

/// Power iteration started from the empty buffer. When the stationary law is
/// not unique (no arrivals and no departures) this picks the one reached from
/// an initially empty node.
fn power_stationary(
    te: &TransitionMatrix,
    ta: &TransitionMatrix,
    start: Vec<f64>,
) -> Result<Vec<f64>, ChainError> {
    let mut x = start;
    let mut residual = f64::INFINITY;
    for it in 0..POWER_ITER_CAP {
        let next = ta.left_apply(&te.left_apply(&x));
        residual = l1(&next, &x);
        x = next;
        if residual < POWER_ITER_TARGET {
            return Ok(normalize(x));
        }
        if it % 1024 == 1023 {
            x = normalize(x);
        }
    }
    Err(ChainError::NoConvergence {
        iterations: POWER_ITER_CAP,
        residual,
    })
}

/// Stationary post-arrival (`ϑ`) and post-departure (`ϑ† = ϑ T_E`) occupancy.
pub fn steady_state(
    te: &TransitionMatrix,
    ta: &TransitionMatrix,
) -> Result<(OccupancyDist, OccupancyDist), ChainError> {
    if te.size() != ta.size() {
        return Err(ChainError::DimensionMismatch(format!(
            "T_E has {} states, T_A has {}",
            te.size(),
            ta.size()
        )));
    }
    let n = te.size();
    let mut empty = vec![0.0; n];
    empty[0] = 1.0;

    let direct = if n <= DIRECT_SOLVE_MAX_STATES {
        direct_stationary(&te.mul(ta))
            .filter(|x| stationary_residual(x, te, ta) < STATIONARY_RESIDUAL)
    } else {
        None
    };
    let theta = match direct {
        Some(x) => x,
        None => power_stationary(te, ta, empty)?,
    };
    let residual = stationary_residual(&theta, te, ta);
    if residual >= STATIONARY_RESIDUAL {
        return Err(ChainError::NoConvergence {
            iterations: 0,
            residual,
        });
    }
    let dagger = normalize(te.left_apply(&theta));
    Ok((
        OccupancyDist::new(theta, Phase::PostArrival),
        OccupancyDist::new(dagger, Phase::PostDeparture),
    ))
}

/// Distribution of how many of the *other* edges (all but `skip`) fire.
fn others_pmf(rates: &[f64], skip: usize) -> Vec<f64> {
    bernoulli_sum_pmf(
        rates
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != skip)
            .map(|(_, r)| r),
    )
}

/// Long-run packets per epoch that leave on outgoing edge `i`.
///
/// Conditioning on the set `H` of outgoing edges that can carry a packet this
/// epoch, edge `i ∈ H` carries one if the node holds at least `|H|` packets
/// and carries `j/|H|` of one on average when it holds `j < |H|`. The sum
/// over `H` only depends on `|H|`, so it is folded through the count
/// distribution of the other edges.
pub fn info_rate(i: usize, theta: &OccupancyDist, omega: &RateVector) -> Result<f64, ChainError> {
    theta.expect(Phase::PostArrival)?;
    let w = omega.as_slice();
    if i >= w.len() {
        return Err(ChainError::IndexOutOfRange { index: i, len: w.len() });
    }
    let probs = theta.probs();
    let others = others_pmf(w, i);
    let mut total = 0.0;
    for (c, &pc) in others.iter().enumerate() {
        if pc == 0.0 {
            continue;
        }
        let h = c + 1;
        let credit: f64 = probs
            .iter()
            .enumerate()
            .map(|(j, &p)| if j >= h { p } else { j as f64 / h as f64 * p })
            .sum();
        total += pc * credit;
    }
    Ok(w[i] * total)
}

/// Probability that a packet arriving on incoming edge `i` is refused.
///
/// With `|H|` simultaneous arrivals and `j` packets already stored, the node
/// keeps a uniform random `m − j` of them, so the tagged packet is dropped
/// with probability `(|H| − m + j)/|H|` whenever `m − j < |H|`. This is a
/// conditional probability given the arrival, so `λ_i` itself does not appear.
pub fn blocking_prob(
    i: usize,
    theta_dagger: &OccupancyDist,
    lambda: &RateVector,
    m: usize,
) -> Result<f64, ChainError> {
    theta_dagger.expect(Phase::PostDeparture)?;
    let l = lambda.as_slice();
    if i >= l.len() {
        return Err(ChainError::IndexOutOfRange { index: i, len: l.len() });
    }
    let probs = theta_dagger.probs();
    if probs.len() != m + 1 {
        return Err(ChainError::DimensionMismatch(format!(
            "distribution has {} states for buffer {m}",
            probs.len()
        )));
    }
    let others = others_pmf(l, i);
    let mut total = 0.0;
    for (c, &pc) in others.iter().enumerate() {
        if pc == 0.0 {
            continue;
        }
        let h = c + 1;
        let lost: f64 = probs
            .iter()
            .enumerate()
            .filter(|(j, _)| m - j < h)
            .map(|(j, &p)| (h + j - m) as f64 / h as f64 * p)
            .sum();
        total += pc * lost;
    }
    Ok(total)
}

/// A solved node chain: its inputs plus both stationary distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeChain {
    pub lambda: RateVector,
    pub omega: RateVector,
    pub capacity: usize,
    pub theta: OccupancyDist,
    pub theta_dagger: OccupancyDist,
}

impl NodeChain {
    pub fn solve(lambda: RateVector, omega: RateVector, capacity: usize) -> Result<Self, ChainError> {
        let te = build_te(&departure_dist(&omega), capacity);
        let ta = build_ta(&arrival_dist(&lambda), capacity);
        let (theta, theta_dagger) = steady_state(&te, &ta)?;
        Ok(NodeChain {
            lambda,
            omega,
            capacity,
            theta,
            theta_dagger,
        })
    }

    pub fn info_rate(&self, out_index: usize) -> Result<f64, ChainError> {
        info_rate(out_index, &self.theta, &self.omega)
    }

    pub fn blocking_prob(&self, in_index: usize) -> Result<f64, ChainError> {
        blocking_prob(in_index, &self.theta_dagger, &self.lambda, self.capacity)
    }

    /// Accepted arrivals per epoch, `Σ_i λ_i (1 − p_b(i))`.
    pub fn accepted_inflow(&self) -> f64 {
        (0..self.lambda.len())
            .map(|i| self.lambda.as_slice()[i] * (1.0 - self.blocking_prob(i).unwrap()))
            .sum()
    }

    /// Departures per epoch, `Σ_k I(k)`.
    pub fn outflow(&self) -> f64 {
        (0..self.omega.len()).map(|k| self.info_rate(k).unwrap()).sum()
    }
}
