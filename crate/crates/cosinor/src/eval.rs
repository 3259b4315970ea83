//! Framework comparison by no-intercept linear regression.
//!
//! Quantities estimated under one framework are regressed through the
//! origin on the same quantities from a reference framework; the slope
//! gamma-hat measures agreement (1 means unbiased) and R-squared measures
//! tightness. A helper restricts per-gene tables to a gold-standard list.

use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("lengths differ: {ids} ids, {x} covariate values, {y} response values")]
    LengthMismatch { ids: usize, x: usize, y: usize },
    #[error("need at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all values must be finite")]
    NonFinite,
    #[error("covariate is identically zero")]
    DegenerateCovariate,
    #[error("no genes left after filtering")]
    EmptyAfterFilter,
}

/// Aligned per-gene quantities: x from the framework under evaluation,
/// y from the reference framework.
#[derive(Debug, Clone)]
pub struct PairedQuantities {
    gene_ids: Vec<String>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PairedQuantities {
    pub fn new(gene_ids: Vec<String>, x: Vec<f64>, y: Vec<f64>) -> Result<Self, EvalError> {
        if gene_ids.len() != x.len() || x.len() != y.len() {
            return Err(EvalError::LengthMismatch {
                ids: gene_ids.len(),
                x: x.len(),
                y: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(EvalError::TooFewPairs(x.len()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(EvalError::NonFinite);
        }
        if x.iter().all(|&v| v == 0.0) {
            return Err(EvalError::DegenerateCovariate);
        }
        Ok(PairedQuantities { gene_ids, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Total-sum-of-squares convention for the no-intercept R-squared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum R2Convention {
    /// Sum of squared y, the usual through-origin convention.
    #[default]
    Uncentered,
    /// Sum of squared deviations from the mean of y.
    Centered,
}

/// Through-origin regression summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFit {
    pub gamma_hat: f64,
    pub r2: f64,
    pub n: usize,
}

/// Regresses y on x with no intercept: gamma-hat = sum(xy) / sum(x^2),
/// R^2 = 1 - RSS / TSS under the chosen convention.
pub fn gamma_fit_with(pairs: &PairedQuantities, convention: R2Convention) -> GammaFit {
    let sxy: f64 = pairs.x.iter().zip(&pairs.y).map(|(a, b)| a * b).sum();
    let sxx: f64 = pairs.x.iter().map(|a| a * a).sum();
    let gamma_hat = sxy / sxx;
    let rss: f64 = pairs
        .x
        .iter()
        .zip(&pairs.y)
        .map(|(a, b)| {
            let r = b - gamma_hat * a;
            r * r
        })
        .sum();
    let tss = match convention {
        R2Convention::Uncentered => pairs.y.iter().map(|b| b * b).sum::<f64>(),
        R2Convention::Centered => {
            let mean = pairs.y.iter().sum::<f64>() / pairs.len() as f64;
            pairs
                .y
                .iter()
                .map(|b| {
                    let d = b - mean;
                    d * d
                })
                .sum()
        }
    };
    let r2 = if tss == 0.0 {
        if rss == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - rss / tss
    };
    GammaFit {
        gamma_hat,
        r2,
        n: pairs.len(),
    }
}

/// `gamma_fit_with` under the uncentered convention.
pub fn gamma_fit(pairs: &PairedQuantities) -> GammaFit {
    gamma_fit_with(pairs, R2Convention::Uncentered)
}

/// Keeps only the rows whose gene id is in `keep`, preserving order.
pub fn gene_filter<T: Clone>(
    rows: &[T],
    key: impl Fn(&T) -> &str,
    keep: &HashSet<String>,
) -> Result<Vec<T>, EvalError> {
    let filtered: Vec<T> = rows
        .iter()
        .filter(|row| keep.contains(key(row)))
        .cloned()
        .collect();
    if filtered.is_empty() {
        return Err(EvalError::EmptyAfterFilter);
    }
    Ok(filtered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn pairs(x: &[f64], y: &[f64]) -> PairedQuantities {
        let ids = (0..x.len()).map(|i| format!("g{i}")).collect();
        PairedQuantities::new(ids, x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn validation_rejects_bad_input() {
        let err = PairedQuantities::new(vec!["a".into()], vec![1.0, 2.0], vec![1.0, 2.0]);
        assert!(matches!(err, Err(EvalError::LengthMismatch { .. })));
        let err = PairedQuantities::new(vec!["a".into()], vec![1.0], vec![1.0]);
        assert_eq!(err.err(), Some(EvalError::TooFewPairs(1)));
        let err = PairedQuantities::new(
            vec!["a".into(), "b".into()],
            vec![1.0, f64::NAN],
            vec![1.0, 2.0],
        );
        assert_eq!(err.err(), Some(EvalError::NonFinite));
        let err = PairedQuantities::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0],
            vec![1.0, 2.0],
        );
        assert_eq!(err.err(), Some(EvalError::DegenerateCovariate));
    }

    #[test]
    fn gamma_fit_examples() {
        let p = pairs(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        let fit = gamma_fit(&p);
        assert_eq!(fit.gamma_hat, 1.0);
        assert_eq!(fit.r2, 1.0);

        let p = pairs(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]);
        let fit = gamma_fit(&p);
        assert_eq!(fit.gamma_hat, 2.0);
        assert_eq!(fit.r2, 1.0);

        let p = pairs(&[1.0, 2.0], &[2.0, 3.0]);
        let fit = gamma_fit(&p);
        assert!((fit.gamma_hat - 1.6).abs() < 1e-15);
        assert!((fit.r2 - (1.0 - 0.2 / 13.0)).abs() < 1e-12);
        assert!((fit.r2 - 0.98462).abs() < 5e-6);
        assert_eq!(fit.n, 2);

        let centered = gamma_fit_with(&p, R2Convention::Centered);
        assert_eq!(centered.gamma_hat, fit.gamma_hat);
        assert!((centered.r2 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn gamma_is_scale_equivariant() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.random_range(2..20);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            if x.iter().all(|&v| v == 0.0) {
                continue;
            }
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let base = gamma_fit(&pairs(&x, &y)).gamma_hat;

            // Powers of two commute with rounding, so these are exact.
            let y2: Vec<f64> = y.iter().map(|v| 4.0 * v).collect();
            assert_eq!(gamma_fit(&pairs(&x, &y2)).gamma_hat, 4.0 * base);
            let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            assert_eq!(gamma_fit(&pairs(&x2, &y)).gamma_hat, base / 2.0);

            let c = rng.random_range(0.1..5.0);
            let yc: Vec<f64> = y.iter().map(|v| c * v).collect();
            let scaled = gamma_fit(&pairs(&x, &yc)).gamma_hat;
            assert!((scaled - c * base).abs() <= 1e-12 * (1.0 + scaled.abs()));
        }
    }

    #[test]
    fn r2_is_at_most_one() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.random_range(2..15);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            if x.iter().all(|&v| v == 0.0) {
                continue;
            }
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = pairs(&x, &y);
            assert!(gamma_fit(&p).r2 <= 1.0 + 1e-15);
            assert!(gamma_fit_with(&p, R2Convention::Centered).r2 <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn gene_filter_examples() {
        fn key(row: &(String, f64)) -> &str {
            row.0.as_str()
        }
        let rows = vec![
            ("g1".to_string(), 0.1),
            ("g2".to_string(), 0.2),
            ("g3".to_string(), 0.3),
        ];

        let all: HashSet<String> = rows.iter().map(|r| r.0.clone()).collect();
        let kept = gene_filter(&rows, key, &all).unwrap();
        assert_eq!(kept.len(), 3);
        assert_eq!(kept[0].0, "g1");
        assert_eq!(kept[2].0, "g3");

        let empty = HashSet::new();
        assert_eq!(
            gene_filter(&rows, key, &empty).err(),
            Some(EvalError::EmptyAfterFilter)
        );

        let mixed: HashSet<String> = ["g2".to_string(), "unknown".to_string()].into();
        let kept = gene_filter(&rows, key, &mixed).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].0, "g2");
    }
}
