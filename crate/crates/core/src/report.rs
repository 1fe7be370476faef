//! Machine-readable report types and their CSV renderings.
//!
//! Every field is always serialized (absent values as `null`), so the JSON
//! key set depends only on the subcommand, never on the data.

use serde::Serialize;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analyze,
    Simulate,
    Compare,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkSummary {
    pub node_count: usize,
    pub edge_count: usize,
    pub source: i64,
    pub destination: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub id: i64,
    pub role: &'static str,
    pub buffer: Option<u32>,
    pub analytic_theta: Option<Vec<f64>>,
    pub analytic_theta_dagger: Option<Vec<f64>>,
    pub analytic_seat: Option<Vec<f64>>,
    /// `D(k)` in epochs; `null` entries are unreachable.
    pub delay_function: Option<Vec<Option<f64>>>,
    pub empirical_theta: Option<Vec<f64>>,
    pub empirical_theta_dagger: Option<Vec<f64>>,
    pub empirical_seat: Option<Vec<f64>>,
    pub exact_theta: Option<Vec<f64>>,
    /// Total variation distance between analytic and empirical `theta`.
    pub tv_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeReport {
    pub from: i64,
    pub to: i64,
    pub erasure: f64,
    pub varrho: Option<f64>,
    pub q: Option<f64>,
    pub rho: Option<f64>,
    pub empirical_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutReport {
    pub source_side: Vec<i64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputReport {
    pub analytic: Option<f64>,
    pub empirical: Option<f64>,
    pub empirical_se: Option<f64>,
    pub exact: Option<f64>,
    pub max_cut_gap: Option<f64>,
    pub cuts: Option<Vec<CutReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayReport {
    /// `null` when unreachable, see `analytic_status`.
    pub analytic: Option<f64>,
    pub analytic_status: Option<&'static str>,
    pub empirical: Option<f64>,
    pub empirical_se: Option<f64>,
    pub samples: Option<u64>,
    pub censored: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub tol: f64,
    pub damping: f64,
    pub max_iters: Option<usize>,
    pub order: &'static str,
    pub clamped: usize,
    pub guarded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub epochs: u64,
    pub warmup: u64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub max_tv: f64,
    pub max_throughput_err: f64,
    pub max_delay_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub max_tv: f64,
    /// `null` when infinite.
    pub throughput_rel_err: Option<f64>,
    pub delay_rel_err: Option<f64>,
    pub thresholds: Thresholds,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointState {
    pub occupancy: Vec<usize>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    /// Node ids in the order of `occupancy` vectors.
    pub nodes: Vec<i64>,
    pub states: Vec<JointState>,
    pub throughput: f64,
    pub analytic_delta: Option<f64>,
    pub simulated_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub buffer: u32,
    pub analytic_throughput: f64,
    pub analytic_delay: Option<f64>,
    pub empirical_throughput: f64,
    pub empirical_throughput_se: f64,
    pub empirical_delay: Option<f64>,
    pub converged: bool,
    pub max_tv: f64,
    pub throughput_rel_err: Option<f64>,
    pub delay_rel_err: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub mode: Mode,
    pub network: NetworkSummary,
    pub nodes: Vec<NodeReport>,
    pub edges: Vec<EdgeReport>,
    pub throughput: ThroughputReport,
    pub delay: DelayReport,
    pub convergence: Option<ConvergenceReport>,
    pub simulation: Option<SimulationReport>,
    pub comparison: Option<ComparisonReport>,
    pub oracle: Option<OracleReport>,
    pub sweep: Option<Vec<SweepRow>>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// `node,state,prob_analytic,prob_empirical`, one row per intermediate
    /// node and occupancy state.
    pub fn occupancy_csv(&self) -> String {
        let mut out = String::from("node,state,prob_analytic,prob_empirical\n");
        for node in self.nodes.iter().filter(|n| n.buffer.is_some()) {
            let states = node.buffer.unwrap() as usize + 1;
            for s in 0..states {
                let cell = |h: &Option<Vec<f64>>| h.as_ref().map(|h| format_g12(h[s])).unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{}", node.id, s, cell(&node.analytic_theta), cell(&node.empirical_theta));
            }
        }
        out
    }

    /// Long-format occupancy data: `node,state,kind,method,prob`.
    pub fn occupancy_tidy_csv(&self) -> String {
        let mut out = String::from("node,state,kind,method,prob\n");
        for node in &self.nodes {
            let series = [
                ("theta", "analytic", &node.analytic_theta),
                ("theta_dagger", "analytic", &node.analytic_theta_dagger),
                ("seat", "analytic", &node.analytic_seat),
                ("theta", "empirical", &node.empirical_theta),
                ("theta_dagger", "empirical", &node.empirical_theta_dagger),
                ("seat", "empirical", &node.empirical_seat),
                ("theta", "exact", &node.exact_theta),
            ];
            for (kind, method, hist) in series {
                for (s, p) in hist.iter().flatten().enumerate() {
                    let _ = writeln!(out, "{},{},{},{},{}", node.id, s, kind, method, format_g12(*p));
                }
            }
        }
        out
    }

    /// `buffer,method,throughput,mean_delay` for a buffer sweep.
    pub fn sweep_csv(&self) -> Option<String> {
        let rows = self.sweep.as_ref()?;
        let mut out = String::from("buffer,method,throughput,mean_delay\n");
        let opt = |x: Option<f64>| x.map(format_g12).unwrap_or_default();
        for r in rows {
            let _ = writeln!(out, "{},analytic,{},{}", r.buffer, format_g12(r.analytic_throughput), opt(r.analytic_delay));
            let _ = writeln!(out, "{},simulation,{},{}", r.buffer, format_g12(r.empirical_throughput), opt(r.empirical_delay));
        }
        Some(out)
    }
}

/// `%.12g`: twelve significant digits, trailing zeros dropped.
pub fn format_g12(x: f64) -> String {
    const DIGITS: i32 = 12;
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-4..DIGITS).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
