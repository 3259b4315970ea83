//! Circular statistics: weighted circular means, resultant length, and
//! circular variance.
//!
//! Angles live on the circle, so means are taken through the unit-vector
//! embedding: average the sines and cosines, then read the direction back
//! with atan2. The mean resultant length of the component means measures
//! concentration; 1 minus it is the circular variance.

use crate::model::wrap_angle;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CircError {
    #[error("angle sample must be nonempty and finite")]
    InvalidSample,
    #[error("weights must match angles in length, be nonnegative, and not all zero")]
    InvalidWeights,
    /// Component means are both ~0: the sample has no mean direction.
    #[error("degenerate resultant: component means below 1e-12, mean direction undefined")]
    ResultantDegenerate,
}

/// A sample of angles with optional nonnegative weights.
#[derive(Debug, Clone)]
pub struct AngleSample {
    angles: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl AngleSample {
    /// Unweighted sample; must be nonempty and finite.
    pub fn new(angles: Vec<f64>) -> Result<Self, CircError> {
        if angles.is_empty() || angles.iter().any(|a| !a.is_finite()) {
            return Err(CircError::InvalidSample);
        }
        Ok(Self {
            angles,
            weights: None,
        })
    }

    /// Weighted sample; weights must be nonnegative with a positive sum.
    pub fn weighted(angles: Vec<f64>, weights: Vec<f64>) -> Result<Self, CircError> {
        if angles.is_empty() || angles.iter().any(|a| !a.is_finite()) {
            return Err(CircError::InvalidSample);
        }
        if weights.len() != angles.len()
            || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || weights.iter().sum::<f64>() <= 0.0
        {
            return Err(CircError::InvalidWeights);
        }
        Ok(Self {
            angles,
            weights: Some(weights),
        })
    }

    /// Weighted means of (sin, cos) over the sample.
    ///
    /// Dividing by the weight sum is redundant for the atan2 direction but
    /// keeps the component means available for the resultant length.
    fn component_means(&self) -> (f64, f64) {
        let mut s = 0.0;
        let mut c = 0.0;
        let mut total = 0.0;
        for (j, a) in self.angles.iter().enumerate() {
            let w = self.weights.as_ref().map_or(1.0, |ws| ws[j]);
            s += w * a.sin();
            c += w * a.cos();
            total += w;
        }
        (s / total, c / total)
    }
}

/// Weighted circular mean direction in (-pi, pi].
pub fn circular_mean(sample: &AngleSample) -> Result<f64, CircError> {
    let (s, c) = sample.component_means();
    if s.abs() < 1e-12 && c.abs() < 1e-12 {
        return Err(CircError::ResultantDegenerate);
    }
    Ok(wrap_angle(s.atan2(c)))
}

/// Mean resultant length Omega in [0, 1] of an unweighted angle set.
pub fn resultant_length(angles: &[f64]) -> Result<f64, CircError> {
    let sample = AngleSample::new(angles.to_vec())?;
    let (s, c) = sample.component_means();
    Ok(s.hypot(c).min(1.0))
}

/// Circular variance 1 - Omega in [0, 1].
pub fn circular_variance(angles: &[f64]) -> Result<f64, CircError> {
    Ok(1.0 - resultant_length(angles)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn mean_examples() {
        let m = circular_mean(&AngleSample::new(vec![0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(m, 0.0);

        let m = circular_mean(&AngleSample::new(vec![0.0, PI / 2.0]).unwrap()).unwrap();
        assert!((m - PI / 4.0).abs() < 1e-12);

        // Wrap-around: sines cancel, cosines sum negative.
        let m = circular_mean(&AngleSample::new(vec![PI - 0.1, -PI + 0.1]).unwrap()).unwrap();
        assert!((m - PI).abs() < 1e-10, "wrap-around mean {m}");
    }

    #[test]
    fn degenerate_resultant_is_an_error() {
        let s = AngleSample::new(vec![0.0, PI]).unwrap();
        assert_eq!(circular_mean(&s), Err(CircError::ResultantDegenerate));
    }

    #[test]
    fn variance_examples() {
        assert!(circular_variance(&[0.7, 0.7, 0.7]).unwrap() < 1e-12);
        assert!((circular_variance(&[0.0, PI]).unwrap() - 1.0).abs() < 1e-12);
        let v = circular_variance(&[0.0, PI / 2.0, PI, 3.0 * PI / 2.0]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_equivariance_and_invariance() {
        let mut rng = StdRng::seed_from_u64(21);
        for _ in 0..500 {
            let n = rng.random_range(1..20);
            let angles: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
            let c: f64 = rng.random_range(-10.0..10.0);
            let shifted: Vec<f64> = angles.iter().map(|a| a + c).collect();
            let base = circular_mean(&AngleSample::new(angles.clone()).unwrap()).unwrap();
            let moved = circular_mean(&AngleSample::new(shifted.clone()).unwrap()).unwrap();
            assert!(
                wrap_angle(moved - base - c).abs() < 1e-10,
                "equivariance failed: {base} + {c} vs {moved}"
            );
            let v0 = circular_variance(&angles).unwrap();
            let v1 = circular_variance(&shifted).unwrap();
            assert!((v0 - v1).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let angles = vec![0.1, 0.5, -0.4, 2.0];
        let unweighted = circular_mean(&AngleSample::new(angles.clone()).unwrap()).unwrap();
        let weighted =
            circular_mean(&AngleSample::weighted(angles, vec![2.0; 4]).unwrap()).unwrap();
        assert_eq!(unweighted, weighted);
    }

    #[test]
    fn resultant_length_bounds() {
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.random_range(1..30);
            let angles: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
            let omega = resultant_length(&angles).unwrap();
            assert!((0.0..=1.0).contains(&omega));
        }
        // Omega = 1 iff all angles coincide modulo 2*pi.
        let same = [0.3, 0.3 + 2.0 * PI, 0.3 - 4.0 * PI];
        assert!((resultant_length(&same).unwrap() - 1.0).abs() < 1e-9);
        let not_same = [0.3, 0.4];
        assert!(resultant_length(&not_same).unwrap() < 1.0 - 1e-9 + 1e-12);
    }

    #[test]
    fn weight_validation() {
        assert!(AngleSample::weighted(vec![0.0], vec![-1.0]).is_err());
        assert!(AngleSample::weighted(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(AngleSample::weighted(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(AngleSample::new(vec![]).is_err());
        assert!(AngleSample::new(vec![f64::INFINITY]).is_err());
    }
}
