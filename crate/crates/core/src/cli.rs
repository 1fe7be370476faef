//! The four workflows behind the `fbnet` binary: analyze, simulate, compare
//! and oracle. Each returns a [`Report`]; the binary only handles argument
//! parsing, file IO and exit codes.

use crate::chain::OccupancyDist;
use crate::cuts::DEFAULT_CUT_CAP;
use crate::fixed_point::{self, FixedPointResult, IterationConfig, MaxIters, UpdateOrder};
use crate::metrics::{self, DelayTable, ThroughputEstimate};
use crate::model::{self, NetworkSpec, NodeId};
use crate::report::*;
use crate::sim::{self, Replicated, SimConfig};
use crate::{Error, Result};
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

pub fn load_network(path: &Path) -> Result<NetworkSpec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(model::parse_network(&text)?)
}

/// Fixed point plus everything derived from it.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub fixed_point: FixedPointResult,
    pub throughput: ThroughputEstimate,
    pub delays: DelayTable,
}

impl Analysis {
    pub fn run(spec: &NetworkSpec, cfg: &IterationConfig) -> Result<Analysis> {
        let fixed_point = fixed_point::solve(spec, cfg)?;
        let throughput = metrics::throughput(&fixed_point, spec, DEFAULT_CUT_CAP);
        let delays = metrics::delay_table(&fixed_point, spec, spec.topo_order());
        Ok(Analysis {
            fixed_point,
            throughput,
            delays,
        })
    }

    pub fn mean_delay(&self) -> f64 {
        self.delays.mean_delay()
    }

    pub fn theta(&self, v: NodeId) -> Option<&OccupancyDist> {
        self.fixed_point.dist(v).map(|d| &d.theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub iteration: IterationConfig,
    pub sim: SimConfig,
    pub thresholds: (f64, f64, f64),
    /// Inclusive range of uniform buffer sizes.
    pub sweep: Option<(u32, u32)>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            iteration: IterationConfig::default(),
            sim: SimConfig::default(),
            thresholds: (0.05, 0.05, 0.10),
            sweep: None,
        }
    }
}

/// Total variation distance between two histograms.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Relative error against the simulated value; zero when both vanish.
pub fn relative_error(estimate: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        if estimate == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (estimate - reference).abs() / reference.abs()
    }
}

/// Analytic delay (possibly `∞`) against the simulated mean (absent when
/// nothing was delivered). Both unreachable counts as agreement.
pub fn delay_error(analytic: f64, empirical: Option<f64>) -> f64 {
    match empirical {
        Some(d) if analytic.is_finite() => relative_error(analytic, d),
        None if !analytic.is_finite() => 0.0,
        _ => f64::INFINITY,
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn role(spec: &NetworkSpec, v: NodeId) -> &'static str {
    if v == spec.source() {
        "source"
    } else if v == spec.destination() {
        "destination"
    } else {
        "intermediate"
    }
}

fn skeleton(spec: &NetworkSpec, mode: Mode) -> Report {
    Report {
        mode,
        network: NetworkSummary {
            node_count: spec.node_count(),
            edge_count: spec.edges().len(),
            source: spec.label(spec.source()),
            destination: spec.label(spec.destination()),
        },
        nodes: spec
            .node_ids()
            .map(|v| NodeReport {
                id: spec.label(v),
                role: role(spec, v),
                buffer: spec.buffer(v).finite(),
                analytic_theta: None,
                analytic_theta_dagger: None,
                analytic_seat: None,
                delay_function: None,
                empirical_theta: None,
                empirical_theta_dagger: None,
                empirical_seat: None,
                exact_theta: None,
                tv_distance: None,
            })
            .collect(),
        edges: spec
            .edges()
            .iter()
            .map(|e| EdgeReport {
                from: spec.label(e.tail),
                to: spec.label(e.head),
                erasure: e.erasure,
                varrho: None,
                q: None,
                rho: None,
                empirical_rate: None,
            })
            .collect(),
        throughput: ThroughputReport {
            analytic: None,
            empirical: None,
            empirical_se: None,
            exact: None,
            max_cut_gap: None,
            cuts: None,
        },
        delay: DelayReport {
            analytic: None,
            analytic_status: None,
            empirical: None,
            empirical_se: None,
            samples: None,
            censored: None,
        },
        convergence: None,
        simulation: None,
        comparison: None,
        oracle: None,
        sweep: None,
    }
}

fn fill_analysis(report: &mut Report, spec: &NetworkSpec, cfg: &IterationConfig, a: &Analysis) {
    for v in spec.node_ids() {
        let node = &mut report.nodes[v.index()];
        if let Some(d) = a.fixed_point.dist(v) {
            node.analytic_theta = Some(d.theta.probs().to_vec());
            node.analytic_theta_dagger = Some(d.theta_dagger.probs().to_vec());
        }
        let delay = a.delays.node(v);
        node.analytic_seat = delay.seat.clone();
        node.delay_function = Some(delay.delays.iter().map(|&x| finite(x)).collect());
    }
    for (k, edge) in report.edges.iter_mut().enumerate() {
        let st = a.fixed_point.edge_states[k];
        edge.varrho = Some(st.varrho);
        edge.q = Some(st.q);
        edge.rho = Some(st.rho());
    }
    report.throughput.analytic = Some(a.throughput.value);
    report.throughput.max_cut_gap = Some(a.throughput.max_cut_gap());
    report.throughput.cuts = Some(
        a.throughput
            .per_cut_values
            .iter()
            .map(|c| CutReport {
                source_side: c.cut.source_side.iter().map(|&v| spec.label(v)).collect(),
                value: c.value,
            })
            .collect(),
    );
    let d = a.mean_delay();
    report.delay.analytic = finite(d);
    report.delay.analytic_status = Some(if d.is_finite() { "finite" } else { "unreachable" });
    report.convergence = Some(ConvergenceReport {
        converged: a.fixed_point.converged,
        iterations: a.fixed_point.iterations_used,
        residual: a.fixed_point.residual,
        tol: cfg.tol,
        damping: cfg.damping,
        max_iters: match cfg.max_iters {
            MaxIters::Limit(l) => Some(l),
            MaxIters::UntilConverged => None,
        },
        order: match cfg.order {
            UpdateOrder::Jacobi => "jacobi",
            UpdateOrder::GaussSeidel => "gauss-seidel",
        },
        clamped: a.fixed_point.diagnostics.clamped,
        guarded: a.fixed_point.diagnostics.guarded,
    });
}

fn fill_simulation(report: &mut Report, cfg: &SimConfig, r: &Replicated) {
    for (k, node) in report.nodes.iter_mut().enumerate() {
        node.empirical_theta = r.theta[k].clone();
        node.empirical_theta_dagger = r.theta_dagger[k].clone();
        node.empirical_seat = r.seat[k].clone();
    }
    for (edge, rate) in report.edges.iter_mut().zip(&r.edge_rates) {
        edge.empirical_rate = Some(*rate);
    }
    report.throughput.empirical = Some(r.throughput.mean);
    report.throughput.empirical_se = finite(r.throughput.se);
    report.delay.empirical = r.delay.map(|d| d.mean);
    report.delay.empirical_se = r.delay.and_then(|d| finite(d.se));
    report.delay.samples = Some(r.runs.iter().map(|x| x.delay_samples).sum());
    report.delay.censored = Some(r.runs.iter().map(|x| x.censored).sum());
    report.simulation = Some(SimulationReport {
        seed: cfg.seed,
        epochs: cfg.epochs,
        warmup: cfg.warmup,
        replications: cfg.replications,
    });
}

pub fn analyze(spec: &NetworkSpec, cfg: &IterationConfig) -> Result<Report> {
    let analysis = Analysis::run(spec, cfg)?;
    let mut report = skeleton(spec, Mode::Analyze);
    fill_analysis(&mut report, spec, cfg, &analysis);
    Ok(report)
}

pub fn simulate(spec: &NetworkSpec, cfg: &SimConfig) -> Result<Report> {
    let replicated = sim::replicate(spec, cfg)?;
    let mut report = skeleton(spec, Mode::Simulate);
    fill_simulation(&mut report, cfg, &replicated);
    Ok(report)
}

#[derive(Debug, Clone, Copy)]
struct Agreement {
    max_tv: f64,
    throughput_err: f64,
    delay_err: f64,
}

impl Agreement {
    fn passes(&self, (tv, thr, delay): (f64, f64, f64)) -> bool {
        self.max_tv <= tv && self.throughput_err <= thr && self.delay_err <= delay
    }
}

fn agreement(spec: &NetworkSpec, a: &Analysis, r: &Replicated) -> (Agreement, Vec<Option<f64>>) {
    let tvs: Vec<Option<f64>> = spec
        .node_ids()
        .map(|v| match (a.theta(v), &r.theta[v.index()]) {
            (Some(th), Some(emp)) => Some(tv_distance(th.probs(), emp)),
            _ => None,
        })
        .collect();
    let agreement = Agreement {
        max_tv: tvs.iter().flatten().copied().fold(0.0, f64::max),
        throughput_err: relative_error(a.throughput.value, r.throughput.mean),
        delay_err: delay_error(a.mean_delay(), r.delay.map(|d| d.mean)),
    };
    (agreement, tvs)
}

pub fn compare(spec: &NetworkSpec, opts: &CompareOptions) -> Result<Report> {
    let analysis = Analysis::run(spec, &opts.iteration)?;
    let replicated = sim::replicate(spec, &opts.sim)?;
    let mut report = skeleton(spec, Mode::Compare);
    fill_analysis(&mut report, spec, &opts.iteration, &analysis);
    fill_simulation(&mut report, &opts.sim, &replicated);

    let (agree, tvs) = agreement(spec, &analysis, &replicated);
    for (node, tv) in report.nodes.iter_mut().zip(tvs) {
        node.tv_distance = tv;
    }
    let mut passed = agree.passes(opts.thresholds);

    if let Some((lo, hi)) = opts.sweep {
        if lo == 0 || lo > hi {
            return Err(Error::Usage(format!("invalid buffer sweep {lo}..{hi}")));
        }
        let mut rows = Vec::new();
        for m in lo..=hi {
            let swept = spec.with_uniform_buffer(m);
            let a = Analysis::run(&swept, &opts.iteration)?;
            let r = sim::replicate(&swept, &opts.sim)?;
            let (agree, _) = agreement(&swept, &a, &r);
            let row_passed = agree.passes(opts.thresholds);
            passed &= row_passed;
            rows.push(SweepRow {
                buffer: m,
                analytic_throughput: a.throughput.value,
                analytic_delay: finite(a.mean_delay()),
                empirical_throughput: r.throughput.mean,
                empirical_throughput_se: r.throughput.se,
                empirical_delay: r.delay.map(|d| d.mean),
                converged: a.fixed_point.converged,
                max_tv: agree.max_tv,
                throughput_rel_err: finite(agree.throughput_err),
                delay_rel_err: finite(agree.delay_err),
                passed: row_passed,
            });
        }
        report.sweep = Some(rows);
    }

    report.comparison = Some(ComparisonReport {
        max_tv: agree.max_tv,
        throughput_rel_err: finite(agree.throughput_err),
        delay_rel_err: finite(agree.delay_err),
        thresholds: Thresholds {
            max_tv: opts.thresholds.0,
            max_throughput_err: opts.thresholds.1,
            max_delay_err: opts.thresholds.2,
        },
        passed,
    });
    Ok(report)
}

pub fn oracle(spec: &NetworkSpec, iteration: &IterationConfig, sim_cfg: &SimConfig) -> Result<Report> {
    let exact = sim::exact_oracle(spec)?;
    let analysis = Analysis::run(spec, iteration)?;
    let replicated = sim::replicate(spec, sim_cfg)?;
    let mut report = skeleton(spec, Mode::Oracle);
    fill_analysis(&mut report, spec, iteration, &analysis);
    fill_simulation(&mut report, sim_cfg, &replicated);
    for (node, marginal) in report.nodes.iter_mut().zip(&exact.marginals) {
        node.exact_theta = marginal.clone();
    }
    report.throughput.exact = Some(exact.throughput);
    report.oracle = Some(OracleReport {
        nodes: exact.nodes.iter().map(|&v| spec.label(v)).collect(),
        states: exact
            .states
            .iter()
            .map(|(occupancy, prob)| JointState {
                occupancy: occupancy.clone(),
                prob: *prob,
            })
            .collect(),
        throughput: exact.throughput,
        analytic_delta: Some(analysis.throughput.value - exact.throughput),
        simulated_delta: Some(replicated.throughput.mean - exact.throughput),
    });
    Ok(report)
}

/// Exit status for a finished report.
pub fn exit_code(report: &Report) -> i32 {
    if report.convergence.as_ref().is_some_and(|c| !c.converged) {
        return EXIT_NO_CONVERGENCE;
    }
    if report.comparison.as_ref().is_some_and(|c| !c.passed) {
        return EXIT_THRESHOLD;
    }
    EXIT_OK
}

/// Parse `a..b` (also `a..=b`) into an inclusive range.
pub fn parse_buffer_range(text: &str) -> Result<(u32, u32)> {
    let bad = || Error::Usage(format!("expected a buffer range like 1..8, got {text:?}"));
    let (lo, hi) = text.split_once("..").ok_or_else(bad)?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    let lo: u32 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u32 = hi.trim().parse().map_err(|_| bad())?;
    if lo == 0 || lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

/// Write the CSV artifacts of `report` into `dir`.
pub fn write_csv(report: &Report, dir: &Path, plot_data: bool) -> Result<()> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| Error::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let occupancy = dir.join("occupancy.csv");
    std::fs::write(&occupancy, report.occupancy_csv()).map_err(io(&occupancy))?;
    if plot_data {
        let tidy = dir.join("occupancy_tidy.csv");
        std::fs::write(&tidy, report.occupancy_tidy_csv()).map_err(io(&tidy))?;
        if let Some(sweep) = report.sweep_csv() {
            let path = dir.join("sweep.csv");
            std::fs::write(&path, sweep).map_err(io(&path))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network_from_parts;

    #[test]
    fn relative_errors() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(0.1, 0.0), f64::INFINITY);
        assert!((relative_error(1.1, 1.0) - 0.1).abs() < 1e-12);
        assert_eq!(delay_error(f64::INFINITY, None), 0.0);
        assert_eq!(delay_error(3.0, None), f64::INFINITY);
        assert_eq!(delay_error(f64::INFINITY, Some(3.0)), f64::INFINITY);
    }

    #[test]
    fn buffer_ranges() {
        assert_eq!(parse_buffer_range("1..8").unwrap(), (1, 8));
        assert_eq!(parse_buffer_range("2..=4").unwrap(), (2, 4));
        assert!(parse_buffer_range("0..3").is_err());
        assert!(parse_buffer_range("5..3").is_err());
        assert!(parse_buffer_range("abc").is_err());
    }

    #[test]
    fn single_edge_report() {
        let spec = network_from_parts(&[None, None], &[(0, 1, 0.3)], 0, 1).unwrap();
        let report = analyze(&spec, &IterationConfig::default()).unwrap();
        assert!((report.throughput.analytic.unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(exit_code(&report), EXIT_OK);
    }

    #[test]
    fn report_keys_do_not_depend_on_data() {
        let keys = |r: &Report| {
            let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
            let mut paths = Vec::new();
            fn walk(prefix: String, v: &serde_json::Value, out: &mut Vec<String>) {
                if let serde_json::Value::Object(map) = v {
                    for (k, x) in map {
                        let p = format!("{prefix}.{k}");
                        out.push(p.clone());
                        walk(p, x, out);
                    }
                }
            }
            walk(String::new(), &v, &mut paths);
            paths
        };
        let live = network_from_parts(&[None, Some(2), None], &[(0, 1, 0.2), (1, 2, 0.3)], 0, 2).unwrap();
        let dead = network_from_parts(&[None, Some(2), None], &[(0, 1, 1.0), (1, 2, 1.0)], 0, 2).unwrap();
        let cfg = IterationConfig::default();
        assert_eq!(keys(&analyze(&live, &cfg).unwrap()), keys(&analyze(&dead, &cfg).unwrap()));
    }
}
