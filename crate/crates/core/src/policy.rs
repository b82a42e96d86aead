//! Average-cost policy iteration over multi-threshold policies, plus the
//! exhaustive and benchmark optimizers used to validate it.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::markov::{DtmcSource, Matrix};
use crate::sim::{simulate, SimConfig, SimPolicy};
use crate::smdp::{cost_rate, PenaltySet, SmdpModel, SmdpStateParams};

/// Largest grid `exhaustive_search` will enumerate.
pub const MAX_GRID_POINTS: u64 = 10_000_000;

/// Relative slack under which two improvement objectives count as tied.
const TIE_TOL: f64 = 1e-12;

/// Per-estimation-state thresholds `(tau_1, ..., tau_N)`, each in `0..=tau_max`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ThresholdPolicy {
    taus: Vec<usize>,
    tau_max: usize,
}

impl ThresholdPolicy {
    pub fn new(taus: Vec<usize>, tau_max: usize) -> Result<Self> {
        if let Some(&t) = taus.iter().find(|&&t| t > tau_max) {
            return Err(Error::OutOfRange(format!(
                "threshold {t} exceeds tau_max {tau_max}"
            )));
        }
        Ok(Self { taus, tau_max })
    }

    pub fn always_transmit(n: usize, tau_max: usize) -> Self {
        Self {
            taus: vec![0; n],
            tau_max,
        }
    }

    pub fn uniform(n: usize, tau: usize, tau_max: usize) -> Result<Self> {
        Self::new(vec![tau; n], tau_max)
    }

    pub fn taus(&self) -> &[usize] {
        &self.taus
    }

    pub fn tau_max(&self) -> usize {
        self.tau_max
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyIterOutcome {
    pub policy: ThresholdPolicy,
    /// Long-run average cost per slot.
    pub eta: f64,
    /// Relative values, with the last state pinned to zero.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `eta` after each value-determination step.
    pub eta_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyIterConfig {
    pub eps_eta: f64,
    pub max_iters: usize,
}

impl Default for PolicyIterConfig {
    fn default() -> Self {
        Self {
            eps_eta: 1e-9,
            max_iters: 100,
        }
    }
}

/// Solves `v_j = r_j - eta d_j + sum_i p_ji v_i` with `v_N = 0`.
pub fn value_determination(params: &[&SmdpStateParams], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let n = params.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("no states".into()));
    }
    // Unknowns: v_1 .. v_{N-1}, eta.
    let m = Matrix::from_fn(n, n, |j, col| {
        if col == n - 1 {
            params[j].d
        } else {
            let delta = if j == col { 1.0 } else { 0.0 };
            delta - params[j].p[col]
        }
    });
    let rhs = DVector::from_iterator(n, params.iter().map(|s| s.r(lambda)));
    // Nearly decomposable embedded chains make this system badly conditioned
    // (relative values of order 1/p_ji), so no pivot-ratio guard here; `eta`
    // itself comes from the subtraction-free stationary solve.
    let x = m.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let eta = cost_rate(params, lambda)?;
    let mut values: Vec<f64> = x.iter().take(n - 1).copied().collect();
    values.push(0.0);
    Ok((eta, values))
}

/// Test quantity minimized by the improvement step for state `j`.
fn improvement_objective(s: &SmdpStateParams, lambda: f64, eta: f64, values: &[f64]) -> f64 {
    let future: f64 = s.p.iter().zip(values).map(|(p, v)| p * v).sum();
    s.r(lambda) - eta * s.d + future
}

/// Per state, the smallest `tau` minimizing `r - eta d + sum_i p_i v_i`.
pub fn policy_improvement(
    model: &SmdpModel,
    lambda: f64,
    eta: f64,
    values: &[f64],
) -> Result<ThresholdPolicy> {
    let taus = (0..model.n())
        .into_par_iter()
        .map(|j| {
            let objectives = (0..=model.tau_max())
                .map(|tau| {
                    Ok(improvement_objective(
                        model.params(j, tau)?,
                        lambda,
                        eta,
                        values,
                    ))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(argmin_smallest(&objectives))
        })
        .collect::<Result<Vec<usize>>>()?;
    ThresholdPolicy::new(taus, model.tau_max())
}

fn argmin_smallest(xs: &[f64]) -> usize {
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let slack = TIE_TOL * min.abs().max(1.0);
    xs.iter().position(|&x| x <= min + slack).unwrap_or(0)
}

/// Policy iteration from the always-transmit policy.
///
/// Stops when the improved policy equals the current one or successive
/// `eta` differ by at most `eps_eta`.
pub fn policy_iteration(
    model: &SmdpModel,
    lambda: f64,
    cfg: PolicyIterConfig,
) -> Result<PolicyIterOutcome> {
    if !(cfg.eps_eta > 0.0) || cfg.max_iters == 0 {
        return Err(Error::InvalidConfig(
            "eps_eta must be > 0 and max_iters >= 1".into(),
        ));
    }
    let mut policy = ThresholdPolicy::always_transmit(model.n(), model.tau_max());
    let mut history: Vec<f64> = Vec::new();
    for iter in 1..=cfg.max_iters {
        let (eta, values) = value_determination(&model.policy_params(policy.taus())?, lambda)?;
        let settled = history
            .last()
            .is_some_and(|prev| (eta - prev).abs() <= cfg.eps_eta);
        history.push(eta);
        let next = if settled {
            None
        } else {
            Some(policy_improvement(model, lambda, eta, &values)?).filter(|next| *next != policy)
        };
        match next {
            Some(next) => policy = next,
            None => {
                return Ok(PolicyIterOutcome {
                    policy,
                    eta,
                    values,
                    iterations: iter,
                    converged: true,
                    eta_history: history,
                })
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iters,
        eta: history.last().copied().unwrap_or(f64::NAN),
    })
}

fn grid_size(n: usize, tau_max: usize) -> Result<u64> {
    let points = ((tau_max + 1) as f64).powi(n as i32);
    if points > MAX_GRID_POINTS as f64 {
        return Err(Error::GridTooLarge {
            points,
            limit: MAX_GRID_POINTS,
        });
    }
    Ok(points as u64)
}

/// Decodes a grid index; the first state is the most significant digit.
fn grid_point(mut idx: u64, n: usize, tau_max: usize) -> Vec<usize> {
    let base = (tau_max + 1) as u64;
    let mut taus = vec![0; n];
    for slot in taus.iter_mut().rev() {
        *slot = (idx % base) as usize;
        idx /= base;
    }
    taus
}

/// Every grid policy with its average cost, in lexicographic order.
pub fn grid_costs(model: &SmdpModel, lambda: f64) -> Result<Vec<(Vec<usize>, f64)>> {
    let total = grid_size(model.n(), model.tau_max())?;
    (0..total)
        .into_par_iter()
        .map(|idx| {
            let taus = grid_point(idx, model.n(), model.tau_max());
            let cost = model.average_cost(&taus, lambda)?;
            Ok((taus, cost))
        })
        .collect()
}

/// Global minimizer over `{0..=tau_max}^N`; ties go to the lexicographically
/// smallest policy.
pub fn exhaustive_search(model: &SmdpModel, lambda: f64) -> Result<(ThresholdPolicy, f64)> {
    let total = grid_size(model.n(), model.tau_max())?;
    let (idx, cost) = (0..total)
        .into_par_iter()
        .map(|idx| {
            let taus = grid_point(idx, model.n(), model.tau_max());
            Ok((idx, model.average_cost(&taus, lambda)?))
        })
        .try_reduce(
            || (u64::MAX, f64::INFINITY),
            |a, b| Ok(if (b.1, b.0) < (a.1, a.0) { b } else { a }),
        )?;
    let policy =
        ThresholdPolicy::new(grid_point(idx, model.n(), model.tau_max()), model.tau_max())?;
    Ok((policy, cost))
}

/// Best common threshold `(tau, ..., tau)`; ties go to the smallest `tau`.
pub fn optimize_single_threshold(model: &SmdpModel, lambda: f64) -> Result<(usize, f64)> {
    let mut best = (0, f64::INFINITY);
    for tau in 0..=model.tau_max() {
        let cost = model.average_cost(&vec![tau; model.n()], lambda)?;
        if cost < best.1 {
            best = (tau, cost);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsPoint {
    pub alpha: f64,
    pub mean: f64,
    pub ci95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsOutcome {
    pub alpha: f64,
    pub cost: f64,
    pub ci95: f64,
    pub points: Vec<RsPoint>,
}

/// Picks the random-sampling rate by simulation.
///
/// Every grid point reuses `sim.seed` (common random numbers). The lowest
/// simulated mean wins; grid points whose mean lies within that winner's
/// confidence halfwidth count as tied and the largest such `alpha` is chosen.
pub fn optimize_random_sampling(
    src: &DtmcSource,
    sigma: f64,
    penalties: &PenaltySet,
    lambda: f64,
    alpha_grid: &[f64],
    sim: &SimConfig,
) -> Result<RsOutcome> {
    if alpha_grid.is_empty() {
        return Err(Error::InvalidConfig("empty alpha grid".into()));
    }
    if let Some(&a) = alpha_grid.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
        return Err(Error::InvalidProbability {
            name: "alpha",
            value: a,
        });
    }
    let points = alpha_grid
        .iter()
        .map(|&alpha| {
            let cfg = SimConfig {
                policy: SimPolicy::RandomSampling(alpha),
                ..sim.clone()
            };
            let stats = simulate(src, sigma, penalties, lambda, &cfg)?;
            Ok(RsPoint {
                alpha,
                mean: stats.mean_cost,
                ci95: stats.ci95,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = points
        .iter()
        .min_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("nonempty grid");
    let cutoff = best.mean
        + if best.ci95.is_finite() {
            best.ci95
        } else {
            0.0
        };
    let chosen = points
        .iter()
        .filter(|p| p.mean <= cutoff)
        .max_by(|a, b| a.alpha.total_cmp(&b.alpha))
        .unwrap_or(best);
    Ok(RsOutcome {
        alpha: chosen.alpha,
        cost: chosen.mean,
        ci95: chosen.ci95,
        points: points.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drph::Penalty;

    fn params(a: f64, c: f64, d: f64, p: Vec<f64>) -> SmdpStateParams {
        SmdpStateParams { a, c, d, p }
    }

    #[test]
    fn single_state_renewal_reward() {
        let s = params(3.0, 1.0, 4.0, vec![1.0]);
        let (eta, v) = value_determination(&[&s], 2.0).unwrap();
        assert!((eta - 5.0 / 4.0).abs() < 1e-15);
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn symmetric_pair_has_zero_values() {
        let s = params(2.0, 0.5, 3.0, vec![0.4, 0.6]);
        let t = params(2.0, 0.5, 3.0, vec![0.6, 0.4]);
        let (eta, v) = value_determination(&[&s, &t], 1.0).unwrap();
        assert!((eta - 2.5 / 3.0).abs() < 1e-14);
        assert!(v[0].abs() < 1e-14 && v[1] == 0.0);
    }

    #[test]
    fn degenerate_embedded_chain_is_singular() {
        let s = params(1.0, 0.0, 2.0, vec![1.0, 0.0]);
        let t = params(1.0, 0.0, 2.0, vec![0.0, 1.0]);
        assert_eq!(
            value_determination(&[&s, &t], 1.0),
            Err(Error::SingularSystem)
        );
    }

    #[test]
    fn grid_point_is_lexicographic() {
        assert_eq!(grid_point(0, 3, 4), vec![0, 0, 0]);
        assert_eq!(grid_point(1, 3, 4), vec![0, 0, 1]);
        assert_eq!(grid_point(5, 3, 4), vec![0, 1, 0]);
        assert_eq!(grid_point(124, 3, 4), vec![4, 4, 4]);
    }

    #[test]
    fn argmin_prefers_smallest_tau() {
        assert_eq!(argmin_smallest(&[3.0, 1.0, 1.0, 2.0]), 1);
        assert_eq!(argmin_smallest(&[1.0 + 1e-15, 1.0]), 0);
    }

    #[test]
    fn policy_rejects_out_of_range() {
        assert!(ThresholdPolicy::new(vec![3, 9], 8).is_err());
        assert!(ThresholdPolicy::new(vec![3, 8], 8).is_ok());
    }

    #[test]
    fn grid_guard() {
        let src = DtmcSource::new(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pens = vec![Penalty::polynomial(vec![1.0]).unwrap(); 2];
        let model = SmdpModel::new(src, 0.8, pens, 5000).unwrap();
        assert!(matches!(
            exhaustive_search(&model, 1.0),
            Err(Error::GridTooLarge { .. })
        ));
    }

    #[test]
    fn rs_rejects_bad_grid() {
        let src = DtmcSource::new(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pens = vec![Penalty::polynomial(vec![1.0]).unwrap(); 2];
        let cfg = SimConfig::new(SimPolicy::RandomSampling(1.0), 1000, 2, 1);
        assert!(optimize_random_sampling(&src, 0.8, &pens, 1.0, &[], &cfg).is_err());
        assert!(optimize_random_sampling(&src, 0.8, &pens, 1.0, &[0.0], &cfg).is_err());
    }
}
