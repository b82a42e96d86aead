//! Line-oriented experiment configuration.
//!
//! ```text
//! # comment
//! source.preset = q2
//! source.matrix = "0.65 0.35; 0.25 0.75"   # rows split by ';'
//! sigma = 0.8
//! lambda = 10                               # or: lambda.sweep = "0 50 5"
//! penalty.1 = "0.5 0 1"                     # w0 w1 w2 ..., state index 1-based
//! tau_max = 50
//! eps_eta = 1e-9
//! sim.slots = 1000000
//! sim.replications = 10
//! sim.seed = 1
//! rs.alpha = "0.1 0.5 1"
//! output.prefix = out/q2
//! ```
//!
//! Values may be wrapped in double quotes. Keys may appear once.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use aoii_core::{DtmcSource, Penalty, PenaltySet};

use crate::error::{CliError, Result};
use crate::presets::{preset_source, PRESET_SIGMA};

/// Upper bound on the points of a `lambda.sweep`.
const MAX_SWEEP_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Preset(String),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Single(f64),
    /// Inclusive of `stop` when it lies on the grid.
    Sweep {
        start: f64,
        stop: f64,
        step: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: Option<SourceSpec>,
    pub sigma: f64,
    pub lambda: Option<LambdaSpec>,
    /// Coefficient overrides keyed by 1-based state index.
    pub penalties: BTreeMap<usize, Vec<f64>>,
    pub tau_max: usize,
    pub eps_eta: f64,
    pub sim_slots: u64,
    pub sim_replications: usize,
    pub sim_seed: u64,
    pub rs_alpha: Vec<f64>,
    pub output_prefix: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: None,
            sigma: PRESET_SIGMA,
            lambda: None,
            penalties: BTreeMap::new(),
            tau_max: 50,
            eps_eta: 1e-9,
            sim_slots: 1_000_000,
            sim_replications: 10,
            sim_seed: 1,
            rs_alpha: (1..=20).map(|k| k as f64 / 20.0).collect(),
            output_prefix: "aoii".into(),
        }
    }
}

/// Strips a trailing `#` comment that is not inside double quotes.
fn strip_comment(line: &str) -> &str {
    let mut quoted = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => quoted = !quoted,
            '#' if !quoted => return &line[..i],
            _ => {}
        }
    }
    line
}

fn unquote(v: &str) -> Result<&str, String> {
    match (v.starts_with('"'), v.ends_with('"') && v.len() >= 2) {
        (true, true) => Ok(&v[1..v.len() - 1]),
        (true, false) => Err("unterminated quote".into()),
        _ if v.contains('"') => Err("stray quote".into()),
        _ => Ok(v),
    }
}

fn real(v: &str) -> Result<f64, String> {
    let x: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("not a number: {v:?}"))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("not finite: {v:?}"))
    }
}

fn integer<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.trim()
        .parse()
        .map_err(|_| format!("not a nonnegative integer: {v:?}"))
}

fn reals(v: &str) -> Result<Vec<f64>, String> {
    let xs = v
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(real)
        .collect::<Result<Vec<_>, _>>()?;
    if xs.is_empty() {
        return Err("empty list".into());
    }
    Ok(xs)
}

fn matrix(v: &str) -> Result<Vec<Vec<f64>>, String> {
    v.split(';')
        .filter(|r| !r.trim().is_empty())
        .map(reals)
        .collect()
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = strip_comment(raw).trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::Parse { line, msg };
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let key = key.trim();
            let value = unquote(value.trim()).map_err(err)?;
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(err(format!(
                    "duplicate key {key:?} (first on line {first})"
                )));
            }
            cfg.set(key, value).map_err(err)?;
        }
        if seen.contains_key("source.preset") && seen.contains_key("source.matrix") {
            return Err(CliError::Config(
                "source.preset and source.matrix are exclusive".into(),
            ));
        }
        if seen.contains_key("lambda") && seen.contains_key("lambda.sweep") {
            return Err(CliError::Config(
                "lambda and lambda.sweep are exclusive".into(),
            ));
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "source.preset" => self.source = Some(SourceSpec::Preset(value.trim().to_string())),
            "source.matrix" => self.source = Some(SourceSpec::Matrix(matrix(value)?)),
            "sigma" => self.sigma = real(value)?,
            "lambda" => self.lambda = Some(LambdaSpec::Single(real(value)?)),
            "lambda.sweep" => {
                let xs = reals(value)?;
                let [start, stop, step] = xs[..] else {
                    return Err("lambda.sweep needs \"start stop step\"".into());
                };
                self.lambda = Some(LambdaSpec::Sweep { start, stop, step });
            }
            "tau_max" => self.tau_max = integer(value)?,
            "eps_eta" => self.eps_eta = real(value)?,
            "sim.slots" => self.sim_slots = integer(value)?,
            "sim.replications" => self.sim_replications = integer(value)?,
            "sim.seed" => self.sim_seed = integer(value)?,
            "rs.alpha" => self.rs_alpha = reals(value)?,
            "output.prefix" => self.output_prefix = value.trim().to_string(),
            _ => match key.strip_prefix("penalty.") {
                Some(j) => {
                    let j: usize = integer(j)?;
                    if j == 0 {
                        return Err("penalty states are numbered from 1".into());
                    }
                    self.penalties.insert(j, reals(value)?);
                }
                None => return Err(format!("unknown key {key:?}")),
            },
        }
        Ok(())
    }

    /// The source and its penalties; explicit `penalty.j` lines override a
    /// preset's.
    pub fn resolve_source(&self) -> Result<(DtmcSource, PenaltySet)> {
        let (src, mut pens): (DtmcSource, Vec<Option<Penalty>>) = match &self.source {
            None => {
                return Err(CliError::Config(
                    "no source: set source.preset or source.matrix".into(),
                ))
            }
            Some(SourceSpec::Preset(name)) => {
                let (src, pens) = preset_source(name)?;
                (src, pens.into_iter().map(Some).collect())
            }
            Some(SourceSpec::Matrix(rows)) => {
                let src = DtmcSource::new(rows)?;
                let n = src.n();
                (src, vec![None; n])
            }
        };
        let n = src.n();
        for (&j, coeffs) in &self.penalties {
            if j > n {
                return Err(CliError::Config(format!(
                    "penalty.{j} but the source has {n} states"
                )));
            }
            pens[j - 1] = Some(Penalty::polynomial(coeffs.clone())?);
        }
        let pens = pens
            .into_iter()
            .enumerate()
            .map(|(j, p)| p.ok_or_else(|| CliError::Config(format!("missing penalty.{}", j + 1))))
            .collect::<Result<Vec<_>>>()?;
        for (j, p) in pens.iter().enumerate() {
            if let Penalty::Polynomial(poly) = p {
                if !poly.is_nonnegative() {
                    return Err(CliError::Config(format!(
                        "penalty.{} must be nonnegative",
                        j + 1
                    )));
                }
            }
        }
        Ok((src, pens))
    }

    /// Every lambda to evaluate, in increasing order.
    pub fn lambdas(&self) -> Result<Vec<f64>> {
        let values = match self.lambda {
            None => {
                return Err(CliError::Config(
                    "no lambda: set lambda or lambda.sweep".into(),
                ))
            }
            Some(LambdaSpec::Single(x)) => vec![x],
            Some(LambdaSpec::Sweep { start, stop, step }) => {
                if !(step > 0.0) || stop < start {
                    return Err(CliError::Config(
                        "lambda.sweep needs step > 0 and stop >= start".into(),
                    ));
                }
                let count = ((stop - start) / step + 1e-9).floor() + 1.0;
                if count > MAX_SWEEP_POINTS as f64 {
                    return Err(CliError::Config(format!(
                        "lambda.sweep has {count} points (max {MAX_SWEEP_POINTS})"
                    )));
                }
                (0..count as usize)
                    .map(|i| start + step * i as f64)
                    .collect()
            }
        };
        if let Some(bad) = values.iter().find(|&&x| x < 0.0) {
            return Err(CliError::Config(format!("lambda must be >= 0, got {bad}")));
        }
        Ok(values)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return Err(CliError::Config(format!(
                "sigma must lie in (0, 1], got {}",
                self.sigma
            )));
        }
        if !(self.eps_eta > 0.0) {
            return Err(CliError::Config("eps_eta must be > 0".into()));
        }
        if self.sim_slots < 100 || self.sim_replications == 0 {
            return Err(CliError::Config(
                "need sim.slots >= 100 and sim.replications >= 1".into(),
            ));
        }
        if self.rs_alpha.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(CliError::Config(
                "rs.alpha values must lie in (0, 1]".into(),
            ));
        }
        if self.output_prefix.is_empty() {
            return Err(CliError::Config("output.prefix is empty".into()));
        }
        Ok(())
    }

    /// The fully resolved configuration as `# key = value` lines.
    pub fn comment_header(&self, command: &str) -> Result<Vec<String>> {
        let (src, pens) = self.resolve_source()?;
        let mut out = vec![format!("command = {command}")];
        if let Some(SourceSpec::Preset(name)) = &self.source {
            out.push(format!("source.preset = {name}"));
        }
        let rows: Vec<String> = src.rows().iter().map(|r| join(r)).collect();
        out.push(format!("source.matrix = \"{}\"", rows.join("; ")));
        out.push(format!("sigma = {}", self.sigma));
        match self.lambda {
            Some(LambdaSpec::Single(x)) => out.push(format!("lambda = {x}")),
            Some(LambdaSpec::Sweep { start, stop, step }) => {
                out.push(format!("lambda.sweep = \"{start} {stop} {step}\""))
            }
            None => {}
        }
        for (j, p) in pens.iter().enumerate() {
            if let Penalty::Polynomial(poly) = p {
                let coeffs = if poly.coeffs().is_empty() {
                    vec![0.0]
                } else {
                    poly.coeffs().to_vec()
                };
                out.push(format!("penalty.{} = \"{}\"", j + 1, join(&coeffs)));
            }
        }
        out.push(format!("tau_max = {}", self.tau_max));
        out.push(format!("eps_eta = {}", self.eps_eta));
        out.push(format!("sim.slots = {}", self.sim_slots));
        out.push(format!("sim.replications = {}", self.sim_replications));
        out.push(format!("sim.seed = {}", self.sim_seed));
        out.push(format!("rs.alpha = \"{}\"", join(&self.rs_alpha)));
        out.push(format!("output.prefix = {}", self.output_prefix));
        out.push(format!("rng = {}", aoii_core::sim::RNG_DESCRIPTION));
        Ok(out)
    }
}

fn join(xs: &[f64]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x}");
    }
    s
}
