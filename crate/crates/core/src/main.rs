use clap::{Args, Parser, Subcommand};
use fbnet::cli::{self, CompareOptions, EXIT_USAGE};
use fbnet::fixed_point::{IterationConfig, MaxIters, UpdateOrder};
use fbnet::report::Report;
use fbnet::sim::SimConfig;
use std::path::PathBuf;
use std::process::ExitCode;

/// Throughput, delay and buffer-occupancy estimates for finite-buffer
/// acyclic erasure networks.
#[derive(Parser, Debug)]
#[command(name = "fbnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the per-node chain fixed point and report throughput and delay.
    Analyze {
        config: PathBuf,
        #[command(flatten)]
        iter: IterFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Run the packet-level simulator.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Run both and check their agreement against thresholds.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        iter: IterFlags,
        #[command(flatten)]
        sim: SimFlags,
        /// Largest allowed total variation distance between occupancy distributions.
        #[arg(long, default_value_t = 0.05)]
        max_tv: f64,
        /// Largest allowed relative throughput error.
        #[arg(long, default_value_t = 0.05)]
        max_thr_err: f64,
        /// Largest allowed relative mean-delay error.
        #[arg(long, default_value_t = 0.10)]
        max_delay_err: f64,
        /// Repeat with every finite buffer set to each size in `a..b`.
        #[arg(long, value_name = "A..B")]
        sweep_buffers: Option<String>,
        #[command(flatten)]
        output: OutputFlags,
    },
    /// Solve the exact joint chain of a tiny network and compare.
    Oracle {
        config: PathBuf,
        #[command(flatten)]
        iter: IterFlags,
        #[command(flatten)]
        sim: SimFlags,
        #[command(flatten)]
        output: OutputFlags,
    },
}

#[derive(Args, Debug)]
struct IterFlags {
    /// Number of sweeps; iterate until converged when omitted.
    #[arg(long, value_name = "L")]
    iters: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 1.0)]
    damping: f64,
    /// Use in-sweep (Gauss-Seidel) updates instead of simultaneous ones.
    #[arg(long)]
    gauss_seidel: bool,
}

impl IterFlags {
    fn config(&self) -> IterationConfig {
        IterationConfig {
            max_iters: self.iters.map_or(MaxIters::UntilConverged, MaxIters::Limit),
            tol: self.tol,
            damping: self.damping,
            order: if self.gauss_seidel {
                UpdateOrder::GaussSeidel
            } else {
                UpdateOrder::Jacobi
            },
        }
    }
}

#[derive(Args, Debug)]
struct SimFlags {
    #[arg(long, default_value_t = 1_000_000)]
    epochs: u64,
    #[arg(long, default_value_t = 10_000)]
    warmup: u64,
    #[arg(long, env = "FBNET_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    replications: usize,
}

impl SimFlags {
    fn config(&self) -> SimConfig {
        SimConfig {
            epochs: self.epochs,
            warmup: self.warmup,
            seed: self.seed,
            replications: self.replications,
        }
    }
}

#[derive(Args, Debug)]
struct OutputFlags {
    /// Directory for CSV output (`occupancy.csv`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write tidy plotting CSVs (into --out-dir, or the working directory).
    #[arg(long)]
    emit_plot_data: bool,
}

fn execute(command: &Command) -> fbnet::Result<(Report, &OutputFlags)> {
    Ok(match command {
        Command::Analyze { config, iter, output } => {
            (cli::analyze(&cli::load_network(config)?, &iter.config())?, output)
        }
        Command::Simulate { config, sim, output } => {
            (cli::simulate(&cli::load_network(config)?, &sim.config())?, output)
        }
        Command::Compare {
            config,
            iter,
            sim,
            max_tv,
            max_thr_err,
            max_delay_err,
            sweep_buffers,
            output,
        } => {
            let opts = CompareOptions {
                iteration: iter.config(),
                sim: sim.config(),
                thresholds: (*max_tv, *max_thr_err, *max_delay_err),
                sweep: sweep_buffers.as_deref().map(cli::parse_buffer_range).transpose()?,
            };
            (cli::compare(&cli::load_network(config)?, &opts)?, output)
        }
        Command::Oracle { config, iter, sim, output } => (
            cli::oracle(&cli::load_network(config)?, &iter.config(), &sim.config())?,
            output,
        ),
    })
}

fn main() -> ExitCode {
    let args = match Cli::try_parse() {
        Ok(args) => args,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let (report, output) = match execute(&args.command) {
        Ok(done) => done,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    println!("{}", report.to_json());
    if output.out_dir.is_some() || output.emit_plot_data {
        let dir = output.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        if let Err(e) = cli::write_csv(&report, &dir, output.emit_plot_data) {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    }
    ExitCode::from(cli::exit_code(&report) as u8)
}
