//! Named sources used throughout the experiments, each with its penalties.

use aoii_core::{DtmcSource, Penalty, PenaltySet};

use crate::error::{CliError, Result};

pub const PRESETS: [&str; 3] = ["q1", "q2", "q3"];

/// Channel success probability shared by all presets.
pub const PRESET_SIGMA: f64 = 0.8;

pub fn preset_source(name: &str) -> Result<(DtmcSource, PenaltySet)> {
    match name {
        "q1" => Ok((
            DtmcSource::new(&[vec![0.65, 0.35], vec![0.25, 0.75]])?,
            vec![poly(&[1.0 / 3.0, 0.5, 1.0]), poly(&[0.5, 0.6, 0.7])],
        )),
        "q2" => Ok((
            DtmcSource::new(&[
                vec![0.7, 0.2, 0.1],
                vec![0.3, 0.6, 0.1],
                vec![0.2, 0.3, 0.5],
            ])?,
            vec![
                poly(&[0.5, 0.0, 1.0]),
                poly(&[0.0, 0.5, 0.5]),
                poly(&[0.25, 0.0, 1.0 / 3.0]),
            ],
        )),
        "q3" => q3(10),
        other => Err(CliError::UnknownPreset(other.to_string())),
    }
}

fn poly(coeffs: &[f64]) -> Penalty {
    Penalty::polynomial(coeffs.to_vec()).expect("preset penalties are valid")
}

/// `k` evenly spaced points from `lo` to `hi` inclusive.
fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..k)
            .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
            .collect(),
    }
}

/// Diagonal spread over [0.4, 0.6]; row `n` spreads its remaining mass over
/// `[0.5 m, 1.5 m]` with `m = (1 - q_nn) / (N - 1)`, filling off-diagonal
/// columns left to right. Penalty `n` (1-based) is `x^2 / n + x / (N + 1 - n)`.
fn q3(n: usize) -> Result<(DtmcSource, PenaltySet)> {
    let diag = linspace(0.4, 0.6, n);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            let m = (1.0 - diag[r]) / (n - 1) as f64;
            let mut off = linspace(0.5 * m, 1.5 * m, n - 1).into_iter();
            (0..n)
                .map(|c| if c == r { diag[r] } else { off.next().unwrap() })
                .collect()
        })
        .collect();
    let penalties = (1..=n)
        .map(|k| poly(&[0.0, 1.0 / (n + 1 - k) as f64, 1.0 / k as f64]))
        .collect();
    Ok((DtmcSource::new(&rows)?, penalties))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q3_shape() {
        let (src, pens) = preset_source("q3").unwrap();
        assert_eq!(src.n(), 10);
        assert_eq!(pens.len(), 10);
        assert_eq!(src.prob(0, 0), 0.4);
        assert!((src.prob(9, 9) - 0.6).abs() < 1e-15);
        for row in src.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Row 1: m = 0.6 / 9, first off-diagonal is column 2.
        assert!((src.prob(0, 1) - 0.5 * 0.6 / 9.0).abs() < 1e-15);
        assert!((src.prob(0, 9) - 1.5 * 0.6 / 9.0).abs() < 1e-15);
        // f_1 = x^2 + x / 10
        assert!((pens[0].eval(2) - 4.2).abs() < 1e-12);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(
            preset_source("q4"),
            Err(CliError::UnknownPreset(_))
        ));
    }
}
