use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{self, SimulateChoice, Table};
use crate::config::{ExperimentConfig, LambdaSpec, SourceSpec};
use crate::error::{CliError, Result, EXIT_OK};

#[derive(Debug, Parser)]
#[command(
    name = "aoii",
    version,
    about = "AoII-optimal status update policies for Markov sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file (`key = value` lines).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Simulation seed; overrides sim.seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output prefix; files are written to PREFIX_<command>.csv.
    #[arg(long, value_name = "PREFIX")]
    out: Option<String>,
    /// Source preset: q1, q2 or q3.
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Single transmission price; overrides lambda and lambda.sweep.
    #[arg(long, value_name = "REAL")]
    lambda: Option<f64>,
    /// Largest threshold searched; overrides tau_max.
    #[arg(long, value_name = "INT")]
    tau_max: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Policy iteration at each lambda.
    Optimize(Common),
    /// Brute-force search over the threshold grid.
    Exhaustive(Common),
    /// SMDP vs single-threshold vs random-sampling over the lambda sweep.
    Benchmark(Common),
    /// Monte Carlo run of a policy (default: the SMDP optimum).
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated thresholds, one per state.
        #[arg(long, value_delimiter = ',', conflicts_with = "alpha")]
        taus: Option<Vec<usize>>,
        /// Random-sampling transmit probability.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Out-of-sync duration law of one cycle type.
    Distribution {
        #[command(flatten)]
        common: Common,
        /// Estimation state, 1-based.
        #[arg(long)]
        state: usize,
        /// Threshold of that state.
        #[arg(long)]
        tau: usize,
    },
    /// Cost over every (tau1, tau2) for a two-state source.
    Heatmap(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &common.preset {
        if matches!(cfg.source, Some(SourceSpec::Matrix(_))) {
            return Err(CliError::Config(
                "--preset conflicts with source.matrix in the config".into(),
            ));
        }
        cfg.source = Some(SourceSpec::Preset(name.clone()));
    }
    if let Some(seed) = common.seed {
        cfg.sim_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_prefix = out.clone();
    }
    if let Some(lambda) = common.lambda {
        cfg.lambda = Some(LambdaSpec::Single(lambda));
    }
    if let Some(t) = common.tau_max {
        cfg.tau_max = t;
    }
    Ok(cfg)
}

fn emit(cfg: &ExperimentConfig, command: &str, table: &Table) -> Result<PathBuf> {
    let path = commands::output_path(cfg, command);
    commands::write_csv(&path, &cfg.comment_header(command)?, table)?;
    Ok(path)
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Optimize(common) => {
            let cfg = load(&common)?;
            let rows = commands::optimize(&cfg)?;
            for r in &rows {
                println!(
                    "lambda={} taus={} cost={} iterations={}",
                    r.lambda,
                    commands::fmt_taus(&r.taus),
                    r.cost,
                    r.iterations
                );
            }
            report(
                emit(&cfg, "optimize", &commands::optimize_table(&rows))?,
                rows.len(),
            );
        }
        Command::Exhaustive(common) => {
            let cfg = load(&common)?;
            let rows = commands::exhaustive(&cfg)?;
            for r in &rows {
                println!(
                    "lambda={} taus={} cost={}",
                    r.lambda,
                    commands::fmt_taus(&r.taus),
                    r.cost
                );
            }
            report(
                emit(&cfg, "exhaustive", &commands::exhaustive_table(&rows))?,
                rows.len(),
            );
        }
        Command::Benchmark(common) => {
            let cfg = load(&common)?;
            let rows = commands::benchmark(&cfg)?;
            report(
                emit(&cfg, "benchmark", &commands::benchmark_table(&rows))?,
                rows.len(),
            );
        }
        Command::Simulate {
            common,
            taus,
            alpha,
        } => {
            let cfg = load(&common)?;
            let choice = match (taus, alpha) {
                (Some(t), _) => SimulateChoice::Thresholds(t),
                (None, Some(a)) => SimulateChoice::RandomSampling(a),
                (None, None) => SimulateChoice::Optimal,
            };
            let rows = commands::simulate(&cfg, &choice)?;
            for r in &rows {
                println!(
                    "lambda={} policy={} sim_cost={} ci95={}",
                    r.lambda, r.policy, r.sim_cost, r.sim_ci
                );
            }
            report(
                emit(&cfg, "simulate", &commands::simulate_table(&rows))?,
                rows.len(),
            );
        }
        Command::Distribution { common, state, tau } => {
            let cfg = load(&common)?;
            let rows = commands::distribution(&cfg, state, tau)?;
            report(
                emit(&cfg, "distribution", &commands::distribution_table(&rows))?,
                rows.len(),
            );
        }
        Command::Heatmap(common) => {
            let cfg = load(&common)?;
            let rows = commands::heatmap(&cfg)?;
            report(
                emit(&cfg, "heatmap", &commands::heatmap_table(&rows))?,
                rows.len(),
            );
        }
    }
    Ok(())
}

fn report(path: PathBuf, rows: usize) {
    println!("wrote {} ({rows} rows)", path.display());
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
