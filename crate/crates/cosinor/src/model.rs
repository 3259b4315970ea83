//! Core cosinor types and parameter identities.
//!
//! The 24-hour cosinor model is written in two equivalent forms:
//! the amplitude/phase form `mu0 + theta1*cos(pi*X/12 + theta2)` and the
//! linear form `mu0 + beta1*sin(pi*X/12) + beta2*cos(pi*X/12)`, related by
//! `beta1 = -theta1*sin(theta2)`, `beta2 = theta1*cos(theta2)`. This module
//! holds the shared domain types, the transforms between the two forms, and
//! the delta-method variance of the estimated phase.

use nalgebra::Matrix3;
use thiserror::Error;

/// Angular frequency of the 24 h rhythm in radians per hour.
pub const ANGULAR_FREQ: f64 = std::f64::consts::PI / 12.0;

/// Period of the rhythm in hours.
pub const PERIOD_HOURS: f64 = 24.0;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    /// Amplitude is exactly zero, so the phase (and its variance) is undefined.
    #[error("degenerate amplitude: beta1 = beta2 = 0, phase undefined")]
    DegenerateAmplitude,
    /// Negative amplitude passed where theta1 >= 0 is required.
    #[error("amplitude must be nonnegative, got {0}")]
    NegativeAmplitude(f64),
    #[error("times and values must have equal nonzero length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("series for individual {0:?} contains a non-finite time or value")]
    NonFinite(String),
}

/// One individual's sample times (hours) and one gene's expression values.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalSeries {
    pub individual_id: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl LongitudinalSeries {
    /// Builds a series, checking that times and values are finite and of
    /// equal nonzero length. Times need not be sorted or distinct.
    pub fn new(
        individual_id: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let individual_id = individual_id.into();
        if times.is_empty() || times.len() != values.len() {
            return Err(ModelError::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite(individual_id));
        }
        Ok(Self {
            individual_id,
            times,
            values,
        })
    }

    /// Number of samples for this individual.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Linear-form cosinor coefficients (mesor, sine, cosine) of one fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosinorParams {
    /// Mesor (rhythm-adjusted mean) in expression units.
    pub mu0: f64,
    /// Coefficient of sin(pi*X/12).
    pub beta1: f64,
    /// Coefficient of cos(pi*X/12).
    pub beta2: f64,
}

impl CosinorParams {
    pub fn new(mu0: f64, beta1: f64, beta2: f64) -> Self {
        Self { mu0, beta1, beta2 }
    }

    /// Amplitude theta1 = sqrt(beta1^2 + beta2^2).
    pub fn amplitude(&self) -> f64 {
        self.beta1.hypot(self.beta2)
    }

    /// Phase shift theta2 = atan2(-beta1, beta2) in (-pi, pi].
    ///
    /// For beta1 = beta2 = 0 the phase is defined as 0; callers that care
    /// should check [`CosinorParams::is_phase_degenerate`].
    pub fn phase(&self) -> f64 {
        linear_to_amplitude_phase(self).1
    }

    /// True when the amplitude is exactly zero and the phase is arbitrary.
    pub fn is_phase_degenerate(&self) -> bool {
        self.beta1 == 0.0 && self.beta2 == 0.0
    }

    /// Mean response at time `x` hours: mu0 + beta1*sin + beta2*cos.
    pub fn predict(&self, x: f64) -> f64 {
        self.mu0 + self.beta1 * (ANGULAR_FREQ * x).sin() + self.beta2 * (ANGULAR_FREQ * x).cos()
    }
}

/// Estimated 3x3 covariance of (mu0_hat, beta1_hat, beta2_hat).
pub type FitCovariance = Matrix3<f64>;

/// Random-effect covariance and residual variance of the mixed model.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomEffectSpec {
    /// Covariance of the per-individual effects (m0, b1, b2); symmetric PSD.
    pub psi: Matrix3<f64>,
    /// Residual noise variance, > 0.
    pub sigma2: f64,
}

impl RandomEffectSpec {
    pub fn new(psi: Matrix3<f64>, sigma2: f64) -> Self {
        Self { psi, sigma2 }
    }

    /// Spec with diagonal psi = diag(psi1, psi2, psi3).
    pub fn diagonal(psi1: f64, psi2: f64, psi3: f64, sigma2: f64) -> Self {
        Self {
            psi: Matrix3::from_diagonal(&nalgebra::Vector3::new(psi1, psi2, psi3)),
            sigma2,
        }
    }

    /// True when all off-diagonal entries of psi are exactly zero.
    pub fn is_diagonal(&self) -> bool {
        self.psi.m12 == 0.0
            && self.psi.m13 == 0.0
            && self.psi.m21 == 0.0
            && self.psi.m23 == 0.0
            && self.psi.m31 == 0.0
            && self.psi.m32 == 0.0
    }
}

/// Wraps an angle to the canonical phase range (-pi, pi].
///
/// Every modular reduction of a phase in the crate goes through this helper
/// so no value is ever double-wrapped into a different convention.
pub fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// Wraps an angle to [0, 2*pi), the range used for per-individual offsets.
pub fn wrap_two_pi(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let y = x.rem_euclid(two_pi);
    if y >= two_pi {
        0.0
    } else {
        y
    }
}

/// Converts a phase offset in radians to hours (12/pi hours per radian).
pub fn radians_to_hours(rad: f64) -> f64 {
    rad / ANGULAR_FREQ
}

/// Amplitude and phase of a linear-form fit.
///
/// Returns (theta1, theta2) with theta1 >= 0 and theta2 in (-pi, pi].
/// beta1 = beta2 = 0 yields (0, 0); the zero phase is a convention, not an
/// estimate, and fits derived from it are flagged phase-degenerate.
pub fn linear_to_amplitude_phase(p: &CosinorParams) -> (f64, f64) {
    let theta1 = p.beta1.hypot(p.beta2);
    if p.beta1 == 0.0 && p.beta2 == 0.0 {
        return (0.0, 0.0);
    }
    (theta1, wrap_angle((-p.beta1).atan2(p.beta2)))
}

/// Linear coefficients of an amplitude/phase pair:
/// beta1 = -theta1*sin(theta2), beta2 = theta1*cos(theta2).
pub fn amplitude_phase_to_linear(theta1: f64, theta2: f64) -> Result<(f64, f64), ModelError> {
    if theta1 < 0.0 {
        return Err(ModelError::NegativeAmplitude(theta1));
    }
    Ok((-theta1 * theta2.sin(), theta1 * theta2.cos()))
}

/// Delta-method variance of the estimated phase shift theta2_hat.
///
/// With sigma the covariance of (mu0, beta1, beta2), returns
/// (S22*beta2^2 + S33*beta1^2 - 2*S23*beta1*beta2) / (beta1^2 + beta2^2).
pub fn phase_variance(p: &CosinorParams, cov: &FitCovariance) -> Result<f64, ModelError> {
    let norm2 = p.beta1 * p.beta1 + p.beta2 * p.beta2;
    if norm2 == 0.0 {
        return Err(ModelError::DegenerateAmplitude);
    }
    let num = cov.m22 * p.beta2 * p.beta2 + cov.m33 * p.beta1 * p.beta1
        - 2.0 * cov.m23 * p.beta1 * p.beta2;
    Ok(num / norm2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn amplitude_phase_examples() {
        let (t1, t2) = linear_to_amplitude_phase(&CosinorParams::new(6.0, 0.0, 0.5));
        assert_eq!((t1, t2), (0.5, 0.0));

        let (t1, t2) = linear_to_amplitude_phase(&CosinorParams::new(0.0, -0.5, 0.0));
        assert!((t1 - 0.5).abs() < 1e-15);
        assert!((t2 - PI / 2.0).abs() < 1e-15);

        let (t1, t2) = linear_to_amplitude_phase(&CosinorParams::new(6.0, -0.25, 0.43301270));
        assert!((t1 - 0.5).abs() < 1e-8);
        assert!((t2 - PI / 6.0).abs() < 1e-8);
    }

    #[test]
    fn linear_form_examples() {
        assert_eq!(amplitude_phase_to_linear(0.0, 1.234).unwrap(), (0.0, 0.0));
        let (b1, b2) = amplitude_phase_to_linear(0.5, 0.0).unwrap();
        assert_eq!((b1, b2), (-0.0, 0.5));
        let (b1, b2) = amplitude_phase_to_linear(0.3, 5.0 * PI / 6.0).unwrap();
        assert!((b1 - (-0.15)).abs() < 1e-10);
        assert!((b2 - (-0.25980762)).abs() < 1e-8);
        assert_eq!(
            amplitude_phase_to_linear(-0.1, 0.0),
            Err(ModelError::NegativeAmplitude(-0.1))
        );
    }

    #[test]
    fn zero_amplitude_is_flagged_not_fatal() {
        let p = CosinorParams::new(1.0, 0.0, 0.0);
        assert_eq!(linear_to_amplitude_phase(&p), (0.0, 0.0));
        assert!(p.is_phase_degenerate());
        assert!(!CosinorParams::new(1.0, 0.1, 0.0).is_phase_degenerate());
    }

    #[test]
    fn round_trip_transforms() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..1000 {
            let theta1 = rng.random_range(1e-6..10.0);
            let theta2 = wrap_angle(rng.random_range(-PI..PI));
            let (b1, b2) = amplitude_phase_to_linear(theta1, theta2).unwrap();
            let (r1, r2) = linear_to_amplitude_phase(&CosinorParams::new(0.0, b1, b2));
            assert!((r1 - theta1).abs() < 1e-10, "amplitude {theta1} -> {r1}");
            assert!(
                wrap_angle(r2 - theta2).abs() < 1e-10,
                "phase {theta2} -> {r2}"
            );
        }
    }

    #[test]
    fn rotation_consistency_of_model_forms() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = rng.random_range(-48.0..48.0);
            let theta1 = rng.random_range(0.0..5.0);
            let theta2 = rng.random_range(-PI..PI);
            let mu0 = rng.random_range(-10.0..10.0);
            let (b1, b2) = amplitude_phase_to_linear(theta1, theta2).unwrap();
            let linear = CosinorParams::new(mu0, b1, b2).predict(x);
            let polar = mu0 + theta1 * (ANGULAR_FREQ * x + theta2).cos();
            assert!(
                (linear - polar).abs() < 1e-10,
                "forms disagree at x={x}: {linear} vs {polar}"
            );
        }
    }

    #[test]
    fn phase_variance_examples() {
        let eye = FitCovariance::identity();
        let v = phase_variance(&CosinorParams::new(0.0, 0.0, 1.0), &eye).unwrap();
        assert!((v - 1.0).abs() < 1e-15);

        let mut cov = FitCovariance::zeros();
        cov.m22 = 4.0;
        cov.m33 = 9.0;
        let v = phase_variance(&CosinorParams::new(0.0, 1.0, 0.0), &cov).unwrap();
        assert!((v - 9.0).abs() < 1e-15);

        let mut cov = FitCovariance::identity();
        cov.m23 = 0.5;
        cov.m32 = 0.5;
        let v = phase_variance(&CosinorParams::new(0.0, 1.0, 1.0), &cov).unwrap();
        assert!((v - 0.5).abs() < 1e-15);

        assert_eq!(
            phase_variance(&CosinorParams::new(0.0, 0.0, 0.0), &eye),
            Err(ModelError::DegenerateAmplitude)
        );
    }

    #[test]
    fn phase_variance_homogeneity() {
        // Scaling the coefficients alone leaves the value unchanged; jointly
        // scaling (beta, cov) -> (c*beta, c^2*cov) scales it by c^2.
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..500 {
            let p = CosinorParams::new(0.0, rng.random_range(-2.0..2.0), rng.random_range(0.1..2.0));
            let a: f64 = rng.random_range(0.1..2.0);
            let b: f64 = rng.random_range(0.1..2.0);
            let r = rng.random_range(-0.9..0.9) * (a * b).sqrt();
            let mut cov = FitCovariance::zeros();
            cov.m22 = a;
            cov.m33 = b;
            cov.m23 = r;
            cov.m32 = r;
            let c: f64 = rng.random_range(0.1..10.0);
            let base = phase_variance(&p, &cov).unwrap();
            let scaled_p = CosinorParams::new(0.0, c * p.beta1, c * p.beta2);
            let same = phase_variance(&scaled_p, &cov).unwrap();
            assert!((same - base).abs() < 1e-10 * base.abs().max(1.0));
            let joint = phase_variance(&scaled_p, &(cov * c * c)).unwrap();
            assert!((joint - c * c * base).abs() < 1e-10 * (c * c * base).abs().max(1.0));
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(2.5 * PI) - 0.5 * PI).abs() < 1e-12);
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-100.0..100.0);
            let w = wrap_angle(x);
            assert!(w > -PI && w <= PI, "wrap_angle({x}) = {w} out of range");
            assert!(((w - x).rem_euclid(2.0 * PI)).min((x - w).rem_euclid(2.0 * PI)) < 1e-9);
        }
    }

    #[test]
    fn wrap_two_pi_range() {
        let mut rng = StdRng::seed_from_u64(4);
        assert_eq!(wrap_two_pi(-1e-18), 0.0);
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-100.0..100.0);
            let w = wrap_two_pi(x);
            assert!((0.0..2.0 * PI).contains(&w), "wrap_two_pi({x}) = {w}");
        }
    }

    #[test]
    fn series_validation() {
        assert!(LongitudinalSeries::new("a", vec![1.0, 2.0], vec![0.5, 0.7]).is_ok());
        assert!(matches!(
            LongitudinalSeries::new("a", vec![1.0], vec![0.5, 0.7]),
            Err(ModelError::LengthMismatch { .. })
        ));
        assert!(matches!(
            LongitudinalSeries::new("a", vec![], vec![]),
            Err(ModelError::LengthMismatch { .. })
        ));
        assert!(matches!(
            LongitudinalSeries::new("a", vec![f64::NAN], vec![0.5]),
            Err(ModelError::NonFinite(_))
        ));
    }
}
