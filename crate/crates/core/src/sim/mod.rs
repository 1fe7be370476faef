//! Packet-level ground truth.
//!
//! [`run`] simulates the routing rules epoch by epoch; [`exact_oracle`] builds
//! the full joint occupancy chain of a tiny network and solves it exactly.

mod engine;
mod oracle;

pub use engine::{run, run_stream, PacketLedger, SimResult};
pub use oracle::{exact_oracle, OracleError, OracleResult, ORACLE_STATE_CAP};

use crate::model::NetworkSpec;
use rayon::prelude::*;
use thiserror::Error;

/// Number of batches used for the within-run standard error.
pub const BATCHES: u64 = 50;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    /// Total epochs simulated, warmup included.
    pub epochs: u64,
    /// Leading epochs excluded from every statistic.
    pub warmup: u64,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            epochs: 1_000_000,
            warmup: 10_000,
            seed: 1,
            replications: 1,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<(), SimError> {
        if self.epochs == 0 {
            return Err(SimError::InvalidConfig("epochs must be positive".into()));
        }
        if self.warmup >= self.epochs {
            return Err(SimError::InvalidConfig(format!(
                "warmup {} must be below epochs {}",
                self.warmup, self.epochs
            )));
        }
        if self.replications == 0 {
            return Err(SimError::InvalidConfig("need at least one replication".into()));
        }
        Ok(())
    }

    pub fn measured_epochs(&self) -> u64 {
        self.epochs - self.warmup
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Option<Estimate> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let se = if xs.len() < 2 {
            f64::NAN
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        };
        Some(Estimate { mean, se })
    }
}

/// Independent replications pooled together.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicated {
    pub runs: Vec<SimResult>,
    pub throughput: Estimate,
    /// `None` when no replication delivered a packet.
    pub delay: Option<Estimate>,
    /// Per node, the mean of the per-replication histograms.
    pub theta: Vec<Option<Vec<f64>>>,
    pub theta_dagger: Vec<Option<Vec<f64>>>,
    pub seat: Vec<Option<Vec<f64>>>,
    /// Accepted packets per epoch on every edge.
    pub edge_rates: Vec<f64>,
}

fn mean_histograms(runs: &[SimResult], pick: impl Fn(&SimResult) -> &Vec<Option<Vec<f64>>>) -> Vec<Option<Vec<f64>>> {
    let r = runs.len() as f64;
    let mut out = pick(&runs[0]).clone();
    for (v, slot) in out.iter_mut().enumerate() {
        if let Some(hist) = slot {
            for run in &runs[1..] {
                let other = pick(run)[v].as_ref().expect("same network");
                hist.iter_mut().zip(other).for_each(|(a, b)| *a += b);
            }
            hist.iter_mut().for_each(|a| *a /= r);
        }
    }
    out
}

/// Runs `cfg.replications` independent streams and pools them.
///
/// Replication `r` uses ChaCha8 seeded from `cfg.seed` on stream `r`, so
/// the result does not depend on how the runs are scheduled. With a single
/// replication the standard errors come from batch means within the run.
pub fn replicate(spec: &NetworkSpec, cfg: &SimConfig) -> Result<Replicated, SimError> {
    cfg.check()?;
    let runs: Vec<SimResult> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_stream(spec, cfg, r as u64))
        .collect::<Result<_, _>>()?;

    let (throughput, delay) = if runs.len() == 1 {
        let run = &runs[0];
        (
            Estimate {
                mean: run.throughput,
                se: run.throughput_se,
            },
            run.mean_delay.map(|mean| Estimate {
                mean,
                se: run.delay_se.unwrap_or(f64::NAN),
            }),
        )
    } else {
        let thr: Vec<f64> = runs.iter().map(|r| r.throughput).collect();
        let delays: Vec<f64> = runs.iter().filter_map(|r| r.mean_delay).collect();
        (Estimate::from_samples(&thr).expect("at least one run"), Estimate::from_samples(&delays))
    };

    let r = runs.len() as f64;
    let mut edge_rates = vec![0.0; spec.edges().len()];
    for run in &runs {
        edge_rates.iter_mut().zip(&run.edge_rates).for_each(|(a, b)| *a += b / r);
    }
    Ok(Replicated {
        throughput,
        delay,
        theta: mean_histograms(&runs, |r| &r.theta),
        theta_dagger: mean_histograms(&runs, |r| &r.theta_dagger),
        seat: mean_histograms(&runs, |r| &r.seat),
        edge_rates,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network_from_parts;

    #[test]
    fn config_checks() {
        let ok = SimConfig::default();
        assert!(ok.check().is_ok());
        assert!(SimConfig { epochs: 0, ..ok }.check().is_err());
        assert!(SimConfig { warmup: ok.epochs, ..ok }.check().is_err());
        assert!(SimConfig { replications: 0, ..ok }.check().is_err());
    }

    #[test]
    fn estimate_of_samples() {
        let e = Estimate::from_samples(&[1.0, 3.0]).unwrap();
        assert_eq!(e.mean, 2.0);
        assert!((e.se - 1.0).abs() < 1e-12);
        assert!(Estimate::from_samples(&[]).is_none());
    }

    #[test]
    fn replications_are_distinct_and_bracket_the_mean() {
        let spec = network_from_parts(&[None, None], &[(0, 1, 0.5)], 0, 1).unwrap();
        let cfg = SimConfig {
            epochs: 20_000,
            warmup: 100,
            seed: 11,
            replications: 2,
        };
        let agg = replicate(&spec, &cfg).unwrap();
        let (a, b) = (agg.runs[0].throughput, agg.runs[1].throughput);
        assert_ne!(a, b);
        assert!(agg.throughput.mean >= a.min(b) && agg.throughput.mean <= a.max(b));
        assert_eq!(agg, replicate(&spec, &cfg).unwrap());
    }
}
