//! Dense Markov-chain plumbing: validated sources, absorbing chains and
//! single-regime phase-type primitives.
//!
//! Everything here is a pure function over immutable values. Matrices are
//! small (a few hundred states at most), so every solve is a dense
//! partial-pivoted LU.

use nalgebra::{DMatrix, RowDVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type RowVector = RowDVector<f64>;

/// Numerical tolerances shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Row-sum slack accepted when validating stochastic matrices.
    pub validation: f64,
    /// Slack for individual entries outside `[0, 1]`.
    pub entry: f64,
    /// Internal algebraic identities (`F (I - A) = I`, `pi P = pi`).
    pub algebra: f64,
    /// Tail mass below which infinite sums are truncated.
    pub tail: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        validation: 1e-9,
        entry: 1e-12,
        algebra: 1e-10,
        tail: 1e-12,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Reciprocal condition estimate below which an LU factor counts as singular.
const MIN_RCOND: f64 = 1e-14;

/// An irreducible, row-stochastic source chain.
#[derive(Debug, Clone, PartialEq)]
pub struct DtmcSource {
    q: Matrix,
}

impl DtmcSource {
    /// Validates `rows` with the default tolerances.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        validate_dtmc(rows)
    }

    pub fn from_matrix(q: Matrix) -> Result<Self> {
        validate_dtmc_with(q, &Tolerances::DEFAULT)
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    #[inline]
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.q[(from, to)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| self.q.row(i).iter().copied().collect())
            .collect()
    }

    /// Applies a relabeling: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {} states",
                perm.len(),
                n
            )));
        }
        let q = Matrix::from_fn(n, n, |i, j| self.q[(perm[i], perm[j])]);
        Self::from_matrix(q)
    }
}

/// Validates a raw square matrix as an irreducible DTMC.
pub fn validate_dtmc(rows: &[Vec<f64>]) -> Result<DtmcSource> {
    let n = rows.len();
    for r in rows {
        if r.len() != n {
            return Err(Error::NotSquare {
                rows: n,
                cols: r.len(),
            });
        }
    }
    let q = Matrix::from_fn(n, n, |i, j| rows[i][j]);
    validate_dtmc_with(q, &Tolerances::DEFAULT)
}

pub fn validate_dtmc_with(q: Matrix, tol: &Tolerances) -> Result<DtmcSource> {
    if q.nrows() != q.ncols() {
        return Err(Error::NotSquare {
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    let n = q.nrows();
    if n < 2 {
        return Err(Error::TooFewStates { n, min: 2 });
    }
    check_entries(&q, tol)?;
    check_row_sums(&q, None, tol.validation)?;
    if !is_irreducible(&q) {
        return Err(Error::NotIrreducible);
    }
    Ok(DtmcSource { q })
}

fn check_entries(m: &Matrix, tol: &Tolerances) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if !v.is_finite() || v < -tol.entry || v > 1.0 + tol.entry {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Checks that every row of `[a | b]` sums to one.
fn check_row_sums(a: &Matrix, b: Option<&Matrix>, tol: f64) -> Result<()> {
    for i in 0..a.nrows() {
        let mut sum: f64 = a.row(i).sum();
        if let Some(b) = b {
            sum += b.row(i).sum();
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::NotStochastic { row: i, sum });
        }
    }
    Ok(())
}

/// Single communicating class: every state reaches and is reached from state 0.
pub fn is_irreducible(p: &Matrix) -> bool {
    let n = p.nrows();
    if n == 0 {
        return false;
    }
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { p[(i, j)] } else { p[(j, i)] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

/// An absorbing Markov chain `(A, B, beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Amc {
    a: Matrix,
    b: Matrix,
    beta: RowVector,
}

impl Amc {
    pub fn new(a: Matrix, b: Matrix, beta: RowVector) -> Result<Self> {
        Self::with_tolerances(a, b, beta, &Tolerances::DEFAULT)
    }

    pub fn with_tolerances(
        a: Matrix,
        b: Matrix,
        beta: RowVector,
        tol: &Tolerances,
    ) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k {
            return Err(Error::NotSquare {
                rows: k,
                cols: a.ncols(),
            });
        }
        if b.nrows() != k || beta.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "A is {k}x{k}, B has {} rows, beta has {} entries",
                b.nrows(),
                beta.len()
            )));
        }
        check_entries(&a, tol)?;
        check_entries(&b, tol)?;
        check_row_sums(&a, Some(&b), tol.validation)?;
        check_ipv(&beta, tol)?;
        // Certain absorption: I - A must be invertible.
        factor_resolvent(&a)?;
        Ok(Self { a, b, beta })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn beta(&self) -> &RowVector {
        &self.beta
    }

    pub fn pmf(&self, t: usize) -> f64 {
        ph_pmf(&self.beta, &self.a, t)
    }
}

pub(crate) fn check_ipv(beta: &RowVector, tol: &Tolerances) -> Result<()> {
    let mass = beta.sum();
    if beta
        .iter()
        .any(|&v| !v.is_finite() || v < -tol.entry || v > 1.0 + tol.entry)
        || mass > 1.0 + tol.entry
    {
        return Err(Error::InvalidInitialVector { mass });
    }
    Ok(())
}

/// `A^k`: plain products for small exponents, repeated squaring otherwise.
pub fn mat_pow(a: &Matrix, k: usize) -> Matrix {
    let n = a.nrows();
    if k <= 8 {
        let mut out = Matrix::identity(n, n);
        for _ in 0..k {
            out = &out * a;
        }
        return out;
    }
    let mut result = Matrix::identity(n, n);
    let mut base = a.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Exit vector `1 - A 1`: one-step absorption probability from each phase.
pub fn exit_vector(a: &Matrix) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(a.nrows(), a.row_iter().map(|r| (1.0 - r.sum()).max(0.0)))
}

/// `P(T = t) = beta A^(t-1) (1 - A 1)` for `t >= 1`; zero for `t = 0`.
pub fn ph_pmf(beta: &RowVector, a: &Matrix, t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    let state = beta * mat_pow(a, t - 1);
    (state * exit_vector(a))[(0, 0)]
}

/// LU of `I - A`, rejected when the reciprocal pivot ratio is tiny.
pub(crate) fn factor_resolvent(
    a: &Matrix,
) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let n = a.nrows();
    factor(Matrix::identity(n, n) - a)
}

pub(crate) fn factor(m: Matrix) -> Result<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let lu = m.lu();
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if !(max.is_finite() && min.is_finite()) || max == 0.0 || min / max < MIN_RCOND {
        return Err(Error::SingularSystem);
    }
    Ok(lu)
}

/// Fundamental matrix `F = (I - A)^-1`.
pub fn fundamental_matrix(a: &Matrix) -> Result<Matrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let f = factor_resolvent(a)?
        .try_inverse()
        .ok_or(Error::SingularSystem)?;
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(f)
}

/// Probability of ending in each absorbing state: `beta (I - A)^-1 B`.
pub fn absorption_probabilities(amc: &Amc) -> Result<RowVector> {
    let f = fundamental_matrix(&amc.a)?;
    let mut p = &amc.beta * f * &amc.b;
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(p)
}

/// Stationary vector of an irreducible row-stochastic matrix.
pub fn stationary_distribution(p: &Matrix) -> Result<RowVector> {
    if p.nrows() != p.ncols() {
        return Err(Error::NotSquare {
            rows: p.nrows(),
            cols: p.ncols(),
        });
    }
    check_row_sums(p, None, Tolerances::DEFAULT.validation)?;
    if !is_irreducible(p) {
        return Err(Error::NotIrreducible);
    }
    solve_stationary(p)
}

/// Stationary vector of a unichain matrix: zero on transient states, GTH
/// elimination on the single closed class. GTH never subtracts, so nearly
/// decomposable chains (off-diagonal mass near 1e-15) stay accurate.
pub(crate) fn solve_stationary(p: &Matrix) -> Result<RowVector> {
    let n = p.nrows();
    let closed = closed_class(p)?;
    let k = closed.len();
    let mut w = Matrix::from_fn(k, k, |r, c| p[(closed[r], closed[c])].max(0.0));
    for m in (1..k).rev() {
        let s: f64 = (0..m).map(|c| w[(m, c)]).sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::SingularSystem);
        }
        for r in 0..m {
            w[(r, m)] /= s;
        }
        for r in 0..m {
            let f = w[(r, m)];
            if f != 0.0 {
                for c in 0..m {
                    w[(r, c)] += f * w[(m, c)];
                }
            }
        }
    }
    let mut sub = vec![0.0; k];
    sub[0] = 1.0;
    for m in 1..k {
        sub[m] = (0..m).map(|r| sub[r] * w[(r, m)]).sum();
    }
    let total: f64 = sub.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::SingularSystem);
    }
    let mut pi = RowVector::zeros(n);
    for (r, &state) in closed.iter().enumerate() {
        pi[state] = sub[r] / total;
    }
    Ok(pi)
}

/// States of the unique closed communicating class, in increasing order.
fn closed_class(p: &Matrix) -> Result<Vec<usize>> {
    let n = p.nrows();
    let mut reach = vec![vec![false; n]; n];
    for (i, row) in reach.iter_mut().enumerate() {
        row[i] = true;
        for (j, cell) in row.iter_mut().enumerate() {
            if p[(i, j)] > 0.0 {
                *cell = true;
            }
        }
    }
    for m in 0..n {
        for i in 0..n {
            if reach[i][m] {
                for j in 0..n {
                    if reach[m][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let recurrent: Vec<usize> = (0..n)
        .filter(|&i| (0..n).all(|j| !reach[i][j] || reach[j][i]))
        .collect();
    let Some(&first) = recurrent.first() else {
        return Err(Error::SingularSystem);
    };
    if recurrent.iter().any(|&i| !reach[first][i]) {
        // More than one closed class.
        return Err(Error::NotIrreducible);
    }
    Ok(recurrent)
}
