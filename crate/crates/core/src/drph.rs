//! Dual-regime absorbing chains and their absorption-time law.
//!
//! A dual-regime chain evolves with `(A1, B1)` while the elapsed time is at
//! most `tau` and with `(A2, B2)` afterwards. The absorption time `T` has
//!
//! ```text
//! P(T = t) = beta1 A1^(t-1) (1 - A1 1)          t <= tau
//!          = beta2 A2^(t-tau-1) (1 - A2 1)      t >  tau,   beta2 = beta1 A1^tau
//! ```
//!
//! Expected penalty sums `E[sum_{t=1}^T f(t)]` for polynomial `f` are
//! evaluated in closed form: `f` is summed into its Faulhaber polynomial
//! `F(n) = sum_{t<=n} f(t)`, the regime-1 part is a finite sum of
//! `F(t) P(T = t)`, and the regime-2 tail is shifted by `s = t - tau` so only
//! nonnegative powers of `A2` and powers of `(I - A2)^-1` appear.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_bigint::BigUint;

use crate::error::{Error, Result};
use crate::markov::{
    check_ipv, exit_vector, factor_resolvent, mat_pow, Matrix, RowVector, Tolerances,
};

/// Largest polynomial degree accepted by the closed-form path.
pub const MAX_DEGREE: usize = 8;
/// Largest moment order served by [`drph_moment`].
pub const MAX_MOMENT: usize = 8;
/// Largest `n` accepted by [`stirling2`].
pub const MAX_STIRLING_N: usize = 64;
/// Horizon cap used when searching for a tail-truncation point.
const MAX_HORIZON: usize = 50_000_000;

/// Dual-regime absorbing Markov chain `(beta1, A1, A2, B1, B2, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrAmc {
    beta1: RowVector,
    a1: Matrix,
    a2: Matrix,
    b1: Matrix,
    b2: Matrix,
    tau: usize,
}

impl DrAmc {
    pub fn new(
        beta1: RowVector,
        a1: Matrix,
        a2: Matrix,
        b1: Matrix,
        b2: Matrix,
        tau: usize,
    ) -> Result<Self> {
        let tol = Tolerances::DEFAULT;
        let k = a1.nrows();
        if a1.ncols() != k || a2.nrows() != k || a2.ncols() != k {
            return Err(Error::DimensionMismatch("A1 and A2 must be KxK".into()));
        }
        if b1.nrows() != k || b2.nrows() != k || beta1.len() != k {
            return Err(Error::DimensionMismatch(
                "B1, B2 and beta1 must have K rows".into(),
            ));
        }
        for (a, b) in [(&a1, &b1), (&a2, &b2)] {
            for (i, (ra, rb)) in a.row_iter().zip(b.row_iter()).enumerate() {
                for &v in ra.iter().chain(rb.iter()) {
                    if !v.is_finite() || v < -tol.entry || v > 1.0 + tol.entry {
                        return Err(Error::NegativeEntry {
                            row: i,
                            col: 0,
                            value: v,
                        });
                    }
                }
                let sum = ra.sum() + rb.sum();
                if (sum - 1.0).abs() > tol.validation {
                    return Err(Error::NotStochastic { row: i, sum });
                }
            }
        }
        check_ipv(&beta1, &tol)?;
        factor_resolvent(&a2)?;
        Ok(Self {
            beta1,
            a1,
            a2,
            b1,
            b2,
            tau,
        })
    }

    pub fn beta1(&self) -> &RowVector {
        &self.beta1
    }
    pub fn a1(&self) -> &Matrix {
        &self.a1
    }
    pub fn a2(&self) -> &Matrix {
        &self.a2
    }
    pub fn b1(&self) -> &Matrix {
        &self.b1
    }
    pub fn b2(&self) -> &Matrix {
        &self.b2
    }
    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Merges the absorbing states.
    pub fn phase_type(&self) -> DrPh {
        DrPh::build(
            self.beta1.clone(),
            self.a1.clone(),
            self.a2.clone(),
            self.tau,
        )
    }
}

/// Dual-regime phase-type distribution `DR-PH(beta1, A1, A2, tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrPh {
    beta1: RowVector,
    a1: Matrix,
    a2: Matrix,
    tau: usize,
    beta2: RowVector,
    exit1: DVector<f64>,
    exit2: DVector<f64>,
}

impl DrPh {
    pub fn new(beta1: RowVector, a1: Matrix, a2: Matrix, tau: usize) -> Result<Self> {
        let tol = Tolerances::DEFAULT;
        let k = a1.nrows();
        if a1.ncols() != k || a2.nrows() != k || a2.ncols() != k || beta1.len() != k {
            return Err(Error::DimensionMismatch(
                "beta1, A1, A2 must share dimension K".into(),
            ));
        }
        for a in [&a1, &a2] {
            for (i, row) in a.row_iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    if !v.is_finite() || v < -tol.entry || v > 1.0 + tol.entry {
                        return Err(Error::NegativeEntry {
                            row: i,
                            col: j,
                            value: v,
                        });
                    }
                }
                let sum = row.sum();
                if sum > 1.0 + tol.validation {
                    return Err(Error::NotStochastic { row: i, sum });
                }
            }
        }
        check_ipv(&beta1, &tol)?;
        factor_resolvent(&a2)?;
        Ok(Self::build(beta1, a1, a2, tau))
    }

    fn build(beta1: RowVector, a1: Matrix, a2: Matrix, tau: usize) -> Self {
        let beta2 = &beta1 * mat_pow(&a1, tau);
        let exit1 = exit_vector(&a1);
        let exit2 = exit_vector(&a2);
        Self {
            beta1,
            a1,
            a2,
            tau,
            beta2,
            exit1,
            exit2,
        }
    }

    pub fn beta1(&self) -> &RowVector {
        &self.beta1
    }
    pub fn a1(&self) -> &Matrix {
        &self.a1
    }
    pub fn a2(&self) -> &Matrix {
        &self.a2
    }
    pub fn tau(&self) -> usize {
        self.tau
    }
    pub fn phases(&self) -> usize {
        self.a1.nrows()
    }

    /// `beta2 = beta1 A1^tau`, the phase distribution on entering regime 2.
    pub fn regime2_ipv(&self) -> &RowVector {
        &self.beta2
    }

    /// Total probability mass, `beta1 1`.
    pub fn mass(&self) -> f64 {
        self.beta1.sum()
    }

    pub fn pmf(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else if t <= self.tau {
            dot(&(&self.beta1 * mat_pow(&self.a1, t - 1)), &self.exit1)
        } else {
            dot(
                &(&self.beta2 * mat_pow(&self.a2, t - self.tau - 1)),
                &self.exit2,
            )
        }
    }

    /// `P(T > t)`.
    pub fn survival(&self, t: usize) -> f64 {
        if t <= self.tau {
            (&self.beta1 * mat_pow(&self.a1, t)).sum()
        } else {
            (&self.beta2 * mat_pow(&self.a2, t - self.tau)).sum()
        }
    }

    /// Walks `t = 1, 2, ...` yielding `(t, P(T = t), P(T > t))` by
    /// vector-matrix steps instead of matrix powers.
    pub fn iter(&self) -> DrPhIter<'_> {
        DrPhIter {
            d: self,
            t: 0,
            state: self.beta1.clone(),
        }
    }

    /// Smallest `h` with `P(T > h) < tail`.
    pub fn horizon_for_tail(&self, tail: f64) -> Result<usize> {
        if self.mass() < tail {
            return Ok(0);
        }
        for (t, _, surv) in self.iter() {
            if surv < tail {
                return Ok(t);
            }
            if t >= MAX_HORIZON {
                return Err(Error::HorizonTooSmall {
                    horizon: t,
                    tail: surv,
                    limit: tail,
                });
            }
        }
        unreachable!("DrPhIter is infinite")
    }
}

/// Iterator over `(t, pmf, survival)`; see [`DrPh::iter`].
pub struct DrPhIter<'a> {
    d: &'a DrPh,
    t: usize,
    /// Sub-distribution over phases at the start of slot `t + 1`.
    state: RowVector,
}

impl Iterator for DrPhIter<'_> {
    type Item = (usize, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        self.t += 1;
        let t = self.t;
        let (a, exit) = if t <= self.d.tau {
            (&self.d.a1, &self.d.exit1)
        } else {
            (&self.d.a2, &self.d.exit2)
        };
        let pmf = dot(&self.state, exit);
        self.state = &self.state * a;
        Some((t, pmf, self.state.sum()))
    }
}

fn dot(row: &RowVector, col: &DVector<f64>) -> f64 {
    row.iter().zip(col.iter()).map(|(a, b)| a * b).sum()
}

pub fn regime2_ipv(d: &DrPh) -> RowVector {
    d.regime2_ipv().clone()
}

pub fn drph_pmf(d: &DrPh, t: usize) -> f64 {
    d.pmf(t)
}

pub fn drph_survival(d: &DrPh, t: usize) -> f64 {
    d.survival(t)
}

/// Stirling number of the second kind `S(n, m)`, exact.
pub fn stirling2(n: usize, m: usize) -> Result<BigUint> {
    if m < 1 || m > n || n > MAX_STIRLING_N {
        return Err(Error::OutOfRange(format!(
            "stirling2({n}, {m}) needs 1 <= m <= n <= {MAX_STIRLING_N}"
        )));
    }
    // row[k] = S(r, k) for the current r
    let mut row = vec![BigUint::from(0u32); m + 1];
    row[0] = BigUint::from(1u32);
    for r in 1..=n {
        for k in (1..=m.min(r)).rev() {
            let prev = std::mem::take(&mut row[k]);
            row[k] = prev * BigUint::from(k) + &row[k - 1];
        }
        row[0] = BigUint::from(0u32);
    }
    Ok(std::mem::take(&mut row[m]))
}

/// `S(n, m)` as `f64` for `0 <= n, m <= kmax` (with `S(0, 0) = 1`).
pub(crate) fn stirling_table(kmax: usize) -> Vec<Vec<f64>> {
    let mut s = vec![vec![0.0; kmax + 1]; kmax + 1];
    s[0][0] = 1.0;
    for n in 1..=kmax {
        for m in 1..=n {
            s[n][m] = m as f64 * s[n - 1][m] + s[n - 1][m - 1];
        }
    }
    s
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `E[T^k]` for `k = 0..=kmax` under `PH(beta, A)`, i.e.
/// `sum_{t>=1} t^k beta A^(t-1) (1 - A 1)`.
///
/// Raw moments come from factorial moments
/// `E[T(T-1)...(T-n+1)] = n! beta (I - A)^-n A^(n-1) 1` through
/// `t^k = sum_n S(k, n) t(t-1)...(t-n+1)`.
pub fn ph_power_sums(beta: &RowVector, a: &Matrix, kmax: usize) -> Result<Vec<f64>> {
    let k = a.nrows();
    if a.ncols() != k || beta.len() != k {
        return Err(Error::DimensionMismatch(
            "beta and A must share dimension K".into(),
        ));
    }
    let mut sums = vec![0.0; kmax + 1];
    sums[0] = beta.sum();
    if kmax == 0 || k == 0 {
        return Ok(sums);
    }
    let lu = factor_resolvent(a)?;
    let mut factorial_moments = vec![0.0; kmax + 1];
    // u_n = (I - A)^-n A^(n-1) 1
    let mut u = lu
        .solve(&DVector::from_element(k, 1.0))
        .ok_or(Error::SingularSystem)?;
    let mut nfact = 1.0;
    for n in 1..=kmax {
        if n > 1 {
            u = lu.solve(&(a * &u)).ok_or(Error::SingularSystem)?;
        }
        nfact *= n as f64;
        factorial_moments[n] = nfact * dot(beta, &u);
    }
    let s = stirling_table(kmax);
    for (kk, sum) in sums.iter_mut().enumerate().skip(1) {
        *sum = (1..=kk).map(|n| s[kk][n] * factorial_moments[n]).sum();
    }
    if sums.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(sums)
}

/// `sum_{t>=1} t^k beta A^(t-1) (1 - A 1)` in closed form.
pub fn ph_power_sum(beta: &RowVector, a: &Matrix, k: usize) -> Result<f64> {
    Ok(ph_power_sums(beta, a, k)?[k])
}

/// Raw moment `E[T^m]` of a DR-PH variable (sub-stochastic mass included).
pub fn drph_moment(d: &DrPh, m: usize) -> Result<f64> {
    if m > MAX_MOMENT {
        return Err(Error::OutOfRange(format!(
            "moment order {m} exceeds {MAX_MOMENT}"
        )));
    }
    let head: f64 = d
        .iter()
        .take(d.tau)
        .map(|(t, pmf, _)| (t as f64).powi(m as i32) * pmf)
        .sum();
    // (s + tau)^m = sum_i C(m, i) tau^(m-i) s^i
    let tail_sums = ph_power_sums(&d.beta2, &d.a2, m)?;
    let tau = d.tau as f64;
    let tail: f64 = (0..=m)
        .map(|i| binomial(m, i) * tau.powi((m - i) as i32) * tail_sums[i])
        .sum();
    Ok(head + tail)
}

/// Polynomial penalty `f(t) = sum_k w_k t^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPenalty {
    coeffs: Vec<f64>,
}

impl PolynomialPenalty {
    /// `coeffs[k]` multiplies `t^k`. Trailing zeros are dropped.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig(
                "penalty coefficients must be finite".into(),
            ));
        }
        if coeffs.len() - 1 > MAX_DEGREE {
            return Err(Error::OutOfRange(format!(
                "penalty degree {} exceeds {MAX_DEGREE}",
                coeffs.len() - 1
            )));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        poly_eval(&self.coeffs, t)
    }

    /// `f(t) >= 0` on `t = 1..=1000` and a nonnegative leading coefficient.
    pub fn is_nonnegative(&self) -> bool {
        *self.coeffs.last().unwrap() >= 0.0 && (1..=1000).all(|t| self.eval(t as f64) >= 0.0)
    }

    /// Coefficients of `F(n) = sum_{t=1}^n f(t)` as a polynomial in `n`.
    pub fn cumulative(&self) -> Vec<f64> {
        let k = self.degree();
        let s = stirling_table(k);
        let mut out = vec![0.0; k + 2];
        for (p, &w) in self.coeffs.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let sum_poly = power_sum_poly(p, &s);
            for (i, c) in sum_poly.iter().enumerate() {
                out[i] += w * c;
            }
        }
        out
    }
}

impl fmt::Display for PolynomialPenalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coeffs.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Faulhaber: `sum_{t=1}^n t^p = sum_{m=1}^p S(p, m) (n+1)_(m+1) / (m+1)`,
/// with `(x)_r` the falling factorial. `p = 0` gives `n`.
fn power_sum_poly(p: usize, s: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; p + 2];
    if p == 0 {
        out[1] = 1.0;
        return out;
    }
    for m in 1..=p {
        // (n + 1) n (n - 1) ... (n - m + 1)
        let mut falling = vec![1.0];
        for shift in -1..(m as i64) {
            falling = poly_mul_linear(&falling, -(shift as f64));
        }
        let scale = s[p][m] / (m + 1) as f64;
        for (i, c) in falling.iter().enumerate() {
            out[i] += scale * c;
        }
    }
    out
}

/// Multiplies a polynomial by `(n + c)`.
fn poly_mul_linear(p: &[f64], c: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (i, &v) in p.iter().enumerate() {
        out[i + 1] += v;
        out[i] += c * v;
    }
    out
}

fn poly_eval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Coefficients of `p(s + shift)` in powers of `s`.
fn poly_shift(p: &[f64], shift: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    for (k, &c) in p.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for i in 0..=k {
            out[i] += c * binomial(k, i) * shift.powi((k - i) as i32);
        }
    }
    out
}

/// An AoII penalty: polynomial (closed form) or an arbitrary function.
#[derive(Clone)]
pub enum Penalty {
    Polynomial(PolynomialPenalty),
    Custom(Arc<dyn Fn(u64) -> f64 + Send + Sync>),
}

impl Penalty {
    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        PolynomialPenalty::new(coeffs).map(Penalty::Polynomial)
    }

    pub fn custom(f: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        Penalty::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, age: u64) -> f64 {
        match self {
            Penalty::Polynomial(p) => p.eval(age as f64),
            Penalty::Custom(f) => f(age),
        }
    }
}

impl fmt::Debug for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::Polynomial(p) => f.debug_tuple("Polynomial").field(p).finish(),
            Penalty::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<PolynomialPenalty> for Penalty {
    fn from(p: PolynomialPenalty) -> Self {
        Penalty::Polynomial(p)
    }
}

/// `E[sum_{t=1}^T f(t)]` for a polynomial penalty, in closed form.
pub fn expected_penalty_sum(d: &DrPh, f: &Penalty) -> Result<f64> {
    let poly = match f {
        Penalty::Polynomial(p) => p,
        Penalty::Custom(_) => return Err(Error::TruncationHorizonRequired),
    };
    polynomial_penalty_sum(d, poly)
}

fn polynomial_penalty_sum(d: &DrPh, f: &PolynomialPenalty) -> Result<f64> {
    let cum = f.cumulative();
    let head: f64 = d
        .iter()
        .take(d.tau)
        .map(|(t, pmf, _)| poly_eval(&cum, t as f64) * pmf)
        .sum();
    let shifted = poly_shift(&cum, d.tau as f64);
    let sums = ph_power_sums(&d.beta2, &d.a2, shifted.len() - 1)?;
    let tail: f64 = shifted.iter().zip(&sums).map(|(c, s)| c * s).sum();
    Ok(head + tail)
}

/// Survival-form sum for any penalty, truncated at `horizon`.
pub fn expected_penalty_sum_truncated(d: &DrPh, f: &Penalty, horizon: usize) -> Result<f64> {
    truncated_penalty_oracle(d, |t| f.eval(t as u64), horizon)
}

/// Brute-force `sum_{t=1}^{horizon} f(t) P(T >= t)`.
///
/// Fails when `P(T > horizon)` is not below the tail tolerance.
pub fn truncated_penalty_oracle(d: &DrPh, f: impl Fn(usize) -> f64, horizon: usize) -> Result<f64> {
    let limit = Tolerances::DEFAULT.tail;
    let mut at_least = d.mass();
    let mut total = 0.0;
    let mut tail = at_least;
    for (t, _, surv) in d.iter().take(horizon) {
        total += f(t) * at_least;
        at_least = surv;
        tail = surv;
    }
    if tail >= limit {
        return Err(Error::HorizonTooSmall {
            horizon,
            tail,
            limit,
        });
    }
    Ok(total)
}
