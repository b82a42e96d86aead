//! Per-cycle dual-regime chains and the SMDP parameters they induce.
//!
//! A cycle of type `j` starts at the slot where source and estimate
//! synchronize on value `j`. It stays in sync for a geometric number of
//! slots (mean `1 / (1 - q_jj)`), then the source leaves `j` and the
//! out-of-sync interval begins. Out-of-sync slot `k` transmits iff
//! `k > tau_j`; the interval ends when the source returns to `j`, or when a
//! transmission in a slot where the source stays put is delivered.
//!
//! Absorbing-state columns of `B1` / `B2` are in canonical order: column `i`
//! is the next embedded value `E_i`.

use std::sync::OnceLock;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::drph::{
    drph_moment, expected_penalty_sum, expected_penalty_sum_truncated, DrAmc, DrPh, Penalty,
};
use crate::error::{Error, Result};
use crate::markov::{
    fundamental_matrix, solve_stationary, DtmcSource, Matrix, RowVector, Tolerances,
};
use crate::policy::ThresholdPolicy;

/// Per-estimation-state penalties `f_1..f_N`.
pub type PenaltySet = Vec<Penalty>;

/// The out-of-sync chain of a cycle of type `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleChain {
    j: usize,
    /// Source labels of the transient phases, in increasing order (all `i != j`).
    transient: Vec<usize>,
    dr: DrAmc,
    sigma: f64,
}

impl CycleChain {
    pub fn j(&self) -> usize {
        self.j
    }

    pub fn transient_states(&self) -> &[usize] {
        &self.transient
    }

    pub fn dr(&self) -> &DrAmc {
        &self.dr
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn phase_type(&self) -> DrPh {
        self.dr.phase_type()
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidProbability {
            name: "sigma",
            value: sigma,
        });
    }
    Ok(())
}

/// Builds the cycle-`j` chain for threshold `tau`.
///
/// Regime 1 (no transmissions): phases move with `q`, absorption only into
/// `E_j`. Regime 2: a stay at `i` succeeds with probability `sigma`
/// (`q_ii sigma` into `E_i`), fails with `q_ii (1 - sigma)`, and any move
/// preempts the packet.
pub fn build_cycle_chain(src: &DtmcSource, sigma: f64, j: usize, tau: usize) -> Result<CycleChain> {
    check_sigma(sigma)?;
    let n = src.n();
    if j >= n {
        return Err(Error::InvalidState { state: j, n });
    }
    let leave = 1.0 - src.prob(j, j);
    if leave <= 0.0 {
        return Err(Error::DegenerateSource(j));
    }
    let transient: Vec<usize> = (0..n).filter(|&i| i != j).collect();
    let k = transient.len();

    let a1 = Matrix::from_fn(k, k, |r, c| src.prob(transient[r], transient[c]));
    let mut a2 = a1.clone();
    let mut b1 = Matrix::zeros(k, n);
    let mut b2 = Matrix::zeros(k, n);
    for (r, &i) in transient.iter().enumerate() {
        let stay = src.prob(i, i);
        a2[(r, r)] = stay * (1.0 - sigma);
        b1[(r, j)] = src.prob(i, j);
        b2[(r, j)] = src.prob(i, j);
        b2[(r, i)] = stay * sigma;
    }
    // Conditioned on leaving sync: the first out-of-sync phase is i w.p. q_ji / (1 - q_jj).
    let beta1 = RowVector::from_iterator(k, transient.iter().map(|&i| src.prob(j, i) / leave));
    let dr = DrAmc::new(beta1, a1, a2, b1, b2, tau)?;
    Ok(CycleChain {
        j,
        transient,
        dr,
        sigma,
    })
}

/// `a_j`, `c_j`, `d_j` and the next-embedded-value row `p_j.` for one `(j, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmdpStateParams {
    /// Expected penalty accumulated over the cycle.
    pub a: f64,
    /// Expected transmission attempts per cycle.
    pub c: f64,
    /// Expected cycle length in slots.
    pub d: f64,
    /// Distribution of the next embedded value.
    pub p: Vec<f64>,
}

impl SmdpStateParams {
    /// Expected cycle cost `a + lambda c`.
    #[inline]
    pub fn r(&self, lambda: f64) -> f64 {
        self.a + lambda * self.c
    }
}

pub fn eval_state(
    src: &DtmcSource,
    sigma: f64,
    j: usize,
    tau: usize,
    penalty: &Penalty,
) -> Result<SmdpStateParams> {
    let chain = build_cycle_chain(src, sigma, j, tau)?;
    let dist = chain.phase_type();

    let a = match penalty {
        Penalty::Polynomial(_) => expected_penalty_sum(&dist, penalty)?,
        Penalty::Custom(_) => {
            let horizon = dist.horizon_for_tail(Tolerances::DEFAULT.tail)?;
            expected_penalty_sum_truncated(&dist, penalty, horizon.max(1))?
        }
    };
    let in_sync = 1.0 / (1.0 - src.prob(j, j));
    let d = in_sync + drph_moment(&dist, 1)?;

    // Regime 2 starts from beta2; every regime-2 visit is one transmission attempt.
    let beta2 = dist.regime2_ipv();
    let visits = beta2 * fundamental_matrix(chain.dr.a2())?;
    let c = visits.sum();
    let absorbed = &visits * chain.dr.b2();

    let n = src.n();
    let mut p = vec![0.0; n];
    let mut delivered = 0.0;
    for i in (0..n).filter(|&i| i != j) {
        p[i] = absorbed[i].max(0.0);
        delivered += p[i];
    }
    p[j] = (1.0 - delivered).max(0.0);
    Ok(SmdpStateParams { a, c, d, p })
}

/// Analytic model of one source/penalty/sigma setup with cached per-`(j, tau)`
/// parameters for `tau = 0..=tau_max`.
///
/// Each cache cell is written once and immutable afterwards, so the model can
/// be shared across threads.
#[derive(Debug)]
pub struct SmdpModel {
    src: DtmcSource,
    sigma: f64,
    penalties: PenaltySet,
    tau_max: usize,
    cache: Vec<OnceLock<Result<SmdpStateParams>>>,
}

impl SmdpModel {
    pub const DEFAULT_TAU_MAX: usize = 50;

    pub fn new(src: DtmcSource, sigma: f64, penalties: PenaltySet, tau_max: usize) -> Result<Self> {
        check_sigma(sigma)?;
        if penalties.len() != src.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} penalties for {} states",
                penalties.len(),
                src.n()
            )));
        }
        let cells = src.n() * (tau_max + 1);
        Ok(Self {
            src,
            sigma,
            penalties,
            tau_max,
            cache: (0..cells).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.src.n()
    }
    pub fn source(&self) -> &DtmcSource {
        &self.src
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn penalties(&self) -> &PenaltySet {
        &self.penalties
    }
    pub fn tau_max(&self) -> usize {
        self.tau_max
    }

    pub fn params(&self, j: usize, tau: usize) -> Result<&SmdpStateParams> {
        if j >= self.n() {
            return Err(Error::InvalidState {
                state: j,
                n: self.n(),
            });
        }
        if tau > self.tau_max {
            return Err(Error::OutOfRange(format!(
                "tau {tau} exceeds tau_max {}",
                self.tau_max
            )));
        }
        self.cache[j * (self.tau_max + 1) + tau]
            .get_or_init(|| eval_state(&self.src, self.sigma, j, tau, &self.penalties[j]))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Fills every cache cell, in parallel.
    pub fn precompute(&self) -> Result<()> {
        let width = self.tau_max + 1;
        (0..self.cache.len())
            .into_par_iter()
            .try_for_each(|idx| self.params(idx / width, idx % width).map(|_| ()))
    }

    /// Parameters of every state under `taus`.
    pub fn policy_params(&self, taus: &[usize]) -> Result<Vec<&SmdpStateParams>> {
        if taus.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "policy has {} thresholds for {} states",
                taus.len(),
                self.n()
            )));
        }
        taus.iter()
            .enumerate()
            .map(|(j, &t)| self.params(j, t))
            .collect()
    }

    /// Long-run average cost per slot of the threshold vector `taus`.
    pub fn average_cost(&self, taus: &[usize], lambda: f64) -> Result<f64> {
        cost_rate(&self.policy_params(taus)?, lambda)
    }
}

/// `sum pi_n r_n / sum pi_n d_n` with `pi` the stationary law of the
/// embedded chain.
pub fn cost_rate(params: &[&SmdpStateParams], lambda: f64) -> Result<f64> {
    let n = params.len();
    let p = Matrix::from_fn(n, n, |j, i| params[j].p[i]);
    let pi = solve_stationary(&p)?;
    let r = DVector::from_iterator(n, params.iter().map(|s| s.r(lambda)));
    let d = DVector::from_iterator(n, params.iter().map(|s| s.d));
    Ok((&pi * r)[(0, 0)] / (&pi * d)[(0, 0)])
}

/// Average cost of `policy` without a shared cache.
pub fn average_cost(
    src: &DtmcSource,
    sigma: f64,
    policy: &ThresholdPolicy,
    penalties: &PenaltySet,
    lambda: f64,
) -> Result<f64> {
    if penalties.len() != src.n() || policy.taus().len() != src.n() {
        return Err(Error::DimensionMismatch(
            "policy, penalties and source disagree on N".into(),
        ));
    }
    let params = policy
        .taus()
        .iter()
        .enumerate()
        .map(|(j, &tau)| eval_state(src, sigma, j, tau, &penalties[j]))
        .collect::<Result<Vec<_>>>()?;
    cost_rate(&params.iter().collect::<Vec<_>>(), lambda)
}
