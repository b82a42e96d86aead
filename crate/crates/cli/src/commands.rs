//! Experiment drivers. Each returns its rows so tests can inspect them;
//! `write_*` helpers turn rows into CSV files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use aoii_core::policy::{
    exhaustive_search, grid_costs, optimize_random_sampling, optimize_single_threshold,
};
use aoii_core::sim::simulate as run_simulation;
use aoii_core::smdp::build_cycle_chain;
use aoii_core::{DtmcSource, PenaltySet, PolicyIterConfig, SimConfig, SimPolicy, SmdpModel};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

/// `distribution` stops after the first row with survival below this.
pub const DISTRIBUTION_TAIL: f64 = 1e-9;

/// A CSV table with its column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

pub fn fmt_taus(taus: &[usize]) -> String {
    let inner: Vec<String> = taus.iter().map(|t| t.to_string()).collect();
    format!("[{}]", inner.join(","))
}

/// Shortest round-trip decimal.
fn num(x: f64) -> String {
    format!("{x}")
}

struct Setup {
    src: DtmcSource,
    pens: PenaltySet,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let (src, pens) = cfg.resolve_source()?;
    Ok(Setup { src, pens })
}

fn model(cfg: &ExperimentConfig, s: &Setup) -> Result<SmdpModel> {
    Ok(SmdpModel::new(
        s.src.clone(),
        cfg.sigma,
        s.pens.clone(),
        cfg.tau_max,
    )?)
}

fn pi_config(cfg: &ExperimentConfig) -> PolicyIterConfig {
    PolicyIterConfig {
        eps_eta: cfg.eps_eta,
        ..PolicyIterConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeRow {
    pub lambda: f64,
    pub cost: f64,
    pub taus: Vec<usize>,
    pub iterations: usize,
}

pub fn optimize(cfg: &ExperimentConfig) -> Result<Vec<OptimizeRow>> {
    let s = setup(cfg)?;
    let lambdas = cfg.lambdas()?;
    let model = model(cfg, &s)?;
    model.precompute()?;
    lambdas
        .par_iter()
        .map(|&lambda| {
            let out = aoii_core::policy::policy_iteration(&model, lambda, pi_config(cfg))?;
            Ok(OptimizeRow {
                lambda,
                cost: out.eta,
                taus: out.policy.taus().to_vec(),
                iterations: out.iterations,
            })
        })
        .collect()
}

pub fn optimize_table(rows: &[OptimizeRow]) -> Table {
    Table {
        columns: &["lambda", "cost", "taus", "iterations"],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    num(r.lambda),
                    num(r.cost),
                    fmt_taus(&r.taus),
                    r.iterations.to_string(),
                ]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveRow {
    pub lambda: f64,
    pub cost: f64,
    pub taus: Vec<usize>,
}

pub fn exhaustive(cfg: &ExperimentConfig) -> Result<Vec<ExhaustiveRow>> {
    let s = setup(cfg)?;
    let lambdas = cfg.lambdas()?;
    let model = model(cfg, &s)?;
    model.precompute()?;
    lambdas
        .iter()
        .map(|&lambda| {
            let (policy, cost) = exhaustive_search(&model, lambda)?;
            Ok(ExhaustiveRow {
                lambda,
                cost,
                taus: policy.taus().to_vec(),
            })
        })
        .collect()
}

pub fn exhaustive_table(rows: &[ExhaustiveRow]) -> Table {
    Table {
        columns: &["lambda", "cost", "taus"],
        rows: rows
            .iter()
            .map(|r| vec![num(r.lambda), num(r.cost), fmt_taus(&r.taus)])
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub lambda: f64,
    pub smdp_cost: f64,
    pub st_cost: f64,
    pub rs_cost: f64,
    pub rs_ci: f64,
    pub smdp_taus: Vec<usize>,
    pub st_tau: usize,
    pub rs_alpha: f64,
}

fn sim_config(cfg: &ExperimentConfig, policy: SimPolicy) -> SimConfig {
    SimConfig::new(policy, cfg.sim_slots, cfg.sim_replications, cfg.sim_seed)
}

pub fn benchmark(cfg: &ExperimentConfig) -> Result<Vec<BenchmarkRow>> {
    let s = setup(cfg)?;
    let lambdas = cfg.lambdas()?;
    let model = model(cfg, &s)?;
    model.precompute()?;
    let sim = sim_config(cfg, SimPolicy::RandomSampling(1.0));
    lambdas
        .par_iter()
        .map(|&lambda| {
            let smdp = aoii_core::policy::policy_iteration(&model, lambda, pi_config(cfg))?;
            let (st_tau, st_cost) = optimize_single_threshold(&model, lambda)?;
            let rs =
                optimize_random_sampling(&s.src, cfg.sigma, &s.pens, lambda, &cfg.rs_alpha, &sim)?;
            Ok(BenchmarkRow {
                lambda,
                smdp_cost: smdp.eta,
                st_cost,
                rs_cost: rs.cost,
                rs_ci: rs.ci95,
                smdp_taus: smdp.policy.taus().to_vec(),
                st_tau,
                rs_alpha: rs.alpha,
            })
        })
        .collect()
}

pub fn benchmark_table(rows: &[BenchmarkRow]) -> Table {
    Table {
        columns: &[
            "lambda",
            "smdp_cost",
            "st_cost",
            "rs_cost",
            "rs_ci",
            "smdp_taus",
            "st_tau",
            "rs_alpha",
        ],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    num(r.lambda),
                    num(r.smdp_cost),
                    num(r.st_cost),
                    num(r.rs_cost),
                    num(r.rs_ci),
                    fmt_taus(&r.smdp_taus),
                    r.st_tau.to_string(),
                    num(r.rs_alpha),
                ]
            })
            .collect(),
    }
}

/// Which policy `simulate` runs.
#[derive(Debug, Clone, PartialEq)]
pub enum SimulateChoice {
    /// The policy-iteration optimum at each lambda.
    Optimal,
    Thresholds(Vec<usize>),
    RandomSampling(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateRow {
    pub lambda: f64,
    pub policy: String,
    /// Closed-form cost of the same policy; `None` for random sampling.
    pub analytic_cost: Option<f64>,
    pub sim_cost: f64,
    pub sim_ci: f64,
    pub mean_penalty: f64,
    pub tx_rate: f64,
}

pub fn simulate(cfg: &ExperimentConfig, choice: &SimulateChoice) -> Result<Vec<SimulateRow>> {
    let s = setup(cfg)?;
    let lambdas = cfg.lambdas()?;
    let model = model(cfg, &s)?;
    if let SimulateChoice::Thresholds(taus) = choice {
        if taus.len() != s.src.n() {
            return Err(CliError::Config(format!(
                "{} thresholds for {} states",
                taus.len(),
                s.src.n()
            )));
        }
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let (policy, label, analytic) = match choice {
                SimulateChoice::RandomSampling(alpha) => (
                    SimPolicy::RandomSampling(*alpha),
                    format!("alpha={alpha}"),
                    None,
                ),
                SimulateChoice::Thresholds(taus) => {
                    let cost = aoii_core::smdp::average_cost(
                        &s.src,
                        cfg.sigma,
                        &aoii_core::ThresholdPolicy::new(
                            taus.clone(),
                            taus.iter().copied().max().unwrap_or(0),
                        )?,
                        &s.pens,
                        lambda,
                    )?;
                    (
                        SimPolicy::MultiThreshold(taus.clone()),
                        fmt_taus(taus),
                        Some(cost),
                    )
                }
                SimulateChoice::Optimal => {
                    let out = aoii_core::policy::policy_iteration(&model, lambda, pi_config(cfg))?;
                    let taus = out.policy.taus().to_vec();
                    let label = fmt_taus(&taus);
                    (SimPolicy::MultiThreshold(taus), label, Some(out.eta))
                }
            };
            let stats =
                run_simulation(&s.src, cfg.sigma, &s.pens, lambda, &sim_config(cfg, policy))?;
            Ok(SimulateRow {
                lambda,
                policy: label,
                analytic_cost: analytic,
                sim_cost: stats.mean_cost,
                sim_ci: stats.ci95,
                mean_penalty: stats.mean_aoii_penalty,
                tx_rate: stats.tx_rate,
            })
        })
        .collect()
}

pub fn simulate_table(rows: &[SimulateRow]) -> Table {
    Table {
        columns: &[
            "lambda",
            "policy",
            "analytic_cost",
            "sim_cost",
            "sim_ci",
            "mean_penalty",
            "tx_rate",
        ],
        rows: rows
            .iter()
            .map(|r| {
                vec![
                    num(r.lambda),
                    r.policy.clone(),
                    r.analytic_cost.map(num).unwrap_or_default(),
                    num(r.sim_cost),
                    num(r.sim_ci),
                    num(r.mean_penalty),
                    num(r.tx_rate),
                ]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionRow {
    pub t: usize,
    pub pmf: f64,
    pub survival: f64,
}

/// Out-of-sync duration law of cycle `state` (1-based) under threshold `tau`.
pub fn distribution(
    cfg: &ExperimentConfig,
    state: usize,
    tau: usize,
) -> Result<Vec<DistributionRow>> {
    let s = setup(cfg)?;
    let n = s.src.n();
    if state == 0 || state > n {
        return Err(CliError::Config(format!(
            "--state must lie in 1..={n}, got {state}"
        )));
    }
    let d = build_cycle_chain(&s.src, cfg.sigma, state - 1, tau)?.phase_type();
    let horizon = d.horizon_for_tail(DISTRIBUTION_TAIL)?;
    Ok(d.iter()
        .take(horizon)
        .map(|(t, pmf, survival)| DistributionRow { t, pmf, survival })
        .collect())
}

pub fn distribution_table(rows: &[DistributionRow]) -> Table {
    Table {
        columns: &["t", "pmf", "survival"],
        rows: rows
            .iter()
            .map(|r| vec![r.t.to_string(), num(r.pmf), num(r.survival)])
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapRow {
    pub tau1: usize,
    pub tau2: usize,
    pub cost: f64,
}

/// Cost over `{0..=tau_max}^2` at a single lambda.
pub fn heatmap(cfg: &ExperimentConfig) -> Result<Vec<HeatmapRow>> {
    let s = setup(cfg)?;
    if s.src.n() != 2 {
        return Err(aoii_core::Error::DimensionMismatch(format!(
            "heatmap needs N = 2, source has N = {}",
            s.src.n()
        ))
        .into());
    }
    let lambda = match cfg.lambdas()?[..] {
        [x] => x,
        _ => return Err(CliError::Config("heatmap needs a single lambda".into())),
    };
    let model = model(cfg, &s)?;
    Ok(grid_costs(&model, lambda)?
        .into_iter()
        .map(|(taus, cost)| HeatmapRow {
            tau1: taus[0],
            tau2: taus[1],
            cost,
        })
        .collect())
}

pub fn heatmap_table(rows: &[HeatmapRow]) -> Table {
    Table {
        columns: &["tau1", "tau2", "cost"],
        rows: rows
            .iter()
            .map(|r| vec![r.tau1.to_string(), r.tau2.to_string(), num(r.cost)])
            .collect(),
    }
}

pub fn output_path(cfg: &ExperimentConfig, command: &str) -> PathBuf {
    PathBuf::from(format!("{}_{command}.csv", cfg.output_prefix))
}

/// Writes `# key = value` header lines, then the table.
pub fn write_csv(path: &PathBuf, header: &[String], table: &Table) -> Result<()> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for line in header {
        writeln!(out, "# {line}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
