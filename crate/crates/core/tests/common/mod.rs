#![allow(dead_code)]

use aoii_core::{DtmcSource, Matrix, Penalty, PenaltySet, RowVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn q1() -> DtmcSource {
    DtmcSource::new(&[vec![0.65, 0.35], vec![0.25, 0.75]]).unwrap()
}

pub fn q2() -> DtmcSource {
    DtmcSource::new(&[
        vec![0.7, 0.2, 0.1],
        vec![0.3, 0.6, 0.1],
        vec![0.2, 0.3, 0.5],
    ])
    .unwrap()
}

pub fn q1_penalties() -> PenaltySet {
    vec![
        Penalty::polynomial(vec![1.0 / 3.0, 0.5, 1.0]).unwrap(),
        Penalty::polynomial(vec![0.5, 0.6, 0.7]).unwrap(),
    ]
}

pub fn q2_penalties() -> PenaltySet {
    vec![
        Penalty::polynomial(vec![0.5, 0.0, 1.0]).unwrap(),
        Penalty::polynomial(vec![0.0, 0.5, 0.5]).unwrap(),
        Penalty::polynomial(vec![0.25, 0.0, 1.0 / 3.0]).unwrap(),
    ]
}

/// Dense random stochastic matrix with every entry at least `floor`.
pub fn random_rows<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
            let total: f64 = raw.iter().sum();
            let scale = 1.0 - floor * n as f64;
            raw.iter().map(|v| floor + scale * v / total).collect()
        })
        .collect()
}

pub fn random_source<R: Rng>(rng: &mut R, n: usize) -> DtmcSource {
    DtmcSource::new(&random_rows(rng, n, 0.02)).unwrap()
}

/// Random nonnegative polynomial penalty of the given degree.
pub fn random_penalty<R: Rng>(rng: &mut R, degree: usize) -> Penalty {
    let coeffs = (0..=degree).map(|_| rng.random::<f64>()).collect();
    Penalty::polynomial(coeffs).unwrap()
}

/// Random sub-stochastic `K x K` block with row mass at most `max_mass`.
pub fn random_substochastic<R: Rng>(rng: &mut R, k: usize, max_mass: f64) -> Matrix {
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        let mass = max_mass * rng.random::<f64>();
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let total: f64 = raw.iter().sum();
        for j in 0..k {
            m[(i, j)] = mass * raw[j] / total;
        }
    }
    m
}

pub fn random_ipv<R: Rng>(rng: &mut R, k: usize) -> RowVector {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    RowVector::from_iterator(k, raw.into_iter().map(|v| v / total))
}

fn sample_row<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Outcome of sampling a (dual-regime) absorbing chain path.
pub struct AmcPath {
    pub time: usize,
    pub absorbed_in: usize,
    /// Phase occupied at slot `probe`, if still transient then.
    pub phase_at_probe: Option<usize>,
}

/// Samples one path of the chain that uses `[A1 | B1]` for steps leaving
/// slots `1..=tau` and `[A2 | B2]` afterwards. Independent of the library.
pub fn sample_dr_amc<R: Rng>(
    rng: &mut R,
    beta: &RowVector,
    regime1: (&Matrix, &Matrix),
    regime2: (&Matrix, &Matrix),
    tau: usize,
    probe: usize,
) -> AmcPath {
    let k = beta.len();
    let mut phase = sample_row(rng, beta.as_slice());
    let mut phase_at_probe = None;
    let mut t = 1;
    loop {
        if t == probe {
            phase_at_probe = Some(phase);
        }
        let (a, b) = if t <= tau { regime1 } else { regime2 };
        let mut weights: Vec<f64> = a.row(phase).iter().copied().collect();
        weights.extend(b.row(phase).iter().copied());
        let next = sample_row(rng, &weights);
        if next >= k {
            return AmcPath {
                time: t,
                absorbed_in: next - k,
                phase_at_probe,
            };
        }
        phase = next;
        t += 1;
    }
}

/// `|x - y| <= 3` standard errors of a frequency with `n` draws.
pub fn within_3se(empirical: f64, p: f64, n: u64) -> bool {
    let se = (p * (1.0 - p) / n as f64).sqrt().max(1e-12);
    (empirical - p).abs() <= 3.0 * se
}

/// Pearson chi-square goodness of fit; cells with expected count below 5 are
/// pooled into their neighbour. Returns `(statistic, dof, p_value)`.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> (f64, usize, f64) {
    let n: u64 = observed.iter().sum();
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (o, p) in observed.iter().zip(probs) {
        acc.0 += *o as f64;
        acc.1 += p * n as f64;
        if acc.1 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.1 > 0.0 || acc.0 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    let p_value = 1.0 - ChiSquared::new(dof as f64).unwrap().cdf(stat);
    (stat, dof, p_value)
}
