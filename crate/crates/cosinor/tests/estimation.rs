//! Statistical behavior of the estimators on simulated data: unbiased
//! fixed effects without random variation, vanishing symmetric moments,
//! and equivariance of the estimated translations under time shifts.

use cosinor::lmm::{em_fit, EmConfig};
use cosinor::model::{radians_to_hours, LongitudinalSeries, ANGULAR_FREQ};
use cosinor::phase_adjust::{run_adjustment, AdjustConfig, GeneMatrix};
use cosinor::simgen::{generate_trial, sample_trunc_normal, SimSetting};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use std::f64::consts::PI;

#[test]
fn em_recovers_fixed_effects_without_random_variation() {
    // Data generated with no individual effects at all: the estimated
    // covariance should collapse toward zero and the fixed effects should
    // average to the truth.
    let mut rng = StdRng::seed_from_u64(314);
    let times: Vec<f64> = (1..=12).map(|j| 2.0 * j as f64).collect();
    let (mu0, beta1, beta2) = (6.0, -0.15, 0.26);
    let sigma = 0.5;
    let m = 10;
    let reps = 200;

    let mut sums = [0.0f64; 3];
    let mut sigma2_sum = 0.0;
    let mut psi_trace_sum = 0.0;
    for _ in 0..reps {
        let data: Vec<LongitudinalSeries> = (0..m)
            .map(|i| {
                let values = times
                    .iter()
                    .map(|&t| {
                        let w = ANGULAR_FREQ * t;
                        mu0 + beta1 * w.sin()
                            + beta2 * w.cos()
                            + sigma * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                LongitudinalSeries::new(format!("i{i}"), times.clone(), values).unwrap()
            })
            .collect();
        let fit = em_fit(&data, &EmConfig::default()).unwrap();
        sums[0] += fit.fixed.mu0;
        sums[1] += fit.fixed.beta1;
        sums[2] += fit.fixed.beta2;
        sigma2_sum += fit.sigma2_hat;
        psi_trace_sum += fit.psi_hat.trace();
    }
    let n = reps as f64;
    // SE of each mean is about sigma/sqrt(reps * M * n / 2) < 0.006.
    assert!((sums[0] / n - mu0).abs() < 0.02, "mu0 {}", sums[0] / n);
    assert!((sums[1] / n - beta1).abs() < 0.02, "b1 {}", sums[1] / n);
    assert!((sums[2] / n - beta2).abs() < 0.02, "b2 {}", sums[2] / n);
    let mean_sigma2 = sigma2_sum / n;
    assert!(
        (mean_sigma2 - sigma * sigma).abs() < 0.02,
        "sigma2 {mean_sigma2}"
    );
    // The variance components soak up at most a small part of the noise.
    assert!(psi_trace_sum / n < 0.05, "psi trace {}", psi_trace_sum / n);
}

#[test]
fn symmetric_moments_vanish() {
    // The attenuation argument rests on E[sin c2] = 0 and on the
    // amplitude perturbation being independent of the phase: E[c1 sin c2]
    // and E[c1 cos c2] - E[c1]E[cos c2] are both zero.
    let mut rng = StdRng::seed_from_u64(2718);
    let n = 1_000_000usize;
    let mut s_sin = 0.0;
    let mut s_c1sin = 0.0;
    let mut s_c1cos = 0.0;
    let mut q_sin = 0.0;
    let mut q_c1sin = 0.0;
    let mut q_c1cos = 0.0;
    for _ in 0..n {
        let c1 = sample_trunc_normal(0.0, 0.5, -0.3, 0.3, &mut rng);
        let c2 = sample_trunc_normal(0.0, PI * PI / 36.0, -PI, PI, &mut rng);
        let (s, c) = c2.sin_cos();
        s_sin += s;
        s_c1sin += c1 * s;
        s_c1cos += c1 * c;
        q_sin += s * s;
        q_c1sin += (c1 * s) * (c1 * s);
        q_c1cos += (c1 * c) * (c1 * c);
    }
    let nf = n as f64;
    for (sum, sumsq, label) in [
        (s_sin, q_sin, "sin c2"),
        (s_c1sin, q_c1sin, "c1 sin c2"),
        (s_c1cos, q_c1cos, "c1 cos c2"),
    ] {
        let mean = sum / nf;
        let var = (sumsq / nf - mean * mean).max(0.0);
        let se = (var / nf).sqrt();
        assert!(
            mean.abs() < 4.0 * se.max(1e-12),
            "{label}: mean {mean} exceeds 4 SE {se}"
        );
    }
}

#[test]
fn translations_follow_time_shifts() {
    // Translations are identified only relative to the population phase:
    // shifting one individual's recorded times by +c hours must move its
    // translation relative to the others by about -c, and must not change
    // the refit amplitude.
    let mut setting = SimSetting::preset(1).unwrap();
    setting.noise_var = 1e-6;
    let trial = generate_trial(&setting, 1234).unwrap();
    let config = AdjustConfig::default();

    let (base, base_refits) = run_adjustment(&trial.data_offset, &config).unwrap();

    let shift = 1.5f64;
    let shifted_individual = 4usize;
    let series: Vec<LongitudinalSeries> = trial
        .data_offset
        .series(0)
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let times = if i == shifted_individual {
                s.times.iter().map(|t| t + shift).collect()
            } else {
                s.times.clone()
            };
            LongitudinalSeries::new(s.individual_id.clone(), times, s.values.clone()).unwrap()
        })
        .collect();
    let shifted = GeneMatrix::new(vec!["g1".to_string()], vec![series]).unwrap();
    let (moved, moved_refits) = run_adjustment(&shifted, &config).unwrap();

    let relative = |adj: &cosinor::phase_adjust::PhaseAdjustment| {
        let others: f64 = adj
            .d_tilde
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != shifted_individual)
            .map(|(_, &d)| d)
            .sum::<f64>()
            / (setting.individuals - 1) as f64;
        adj.d_tilde[shifted_individual] - others
    };
    let delta = relative(&moved) - relative(&base);
    assert!(
        (delta + shift).abs() < 0.02,
        "relative translation moved by {delta}, expected about {}",
        -shift
    );
    let amp = |fit: &cosinor::lmm::MixedFit| fit.fixed.amplitude();
    let a0 = amp(base_refits[0].as_ref().unwrap());
    let a1 = amp(moved_refits[0].as_ref().unwrap());
    assert!((a0 - a1).abs() < 0.01, "amplitudes {a0} vs {a1}");
}

#[test]
fn translated_refits_deattenuate_known_offsets() {
    // Individuals drawn with a common waveform but spread phases: after
    // adjustment the refit amplitude should sit near the truth, while the
    // naive fit on the same data is attenuated.
    let mut rng = StdRng::seed_from_u64(99);
    let times: Vec<f64> = (1..=12).map(|j| 2.0 * j as f64).collect();
    let truth_amp = 0.4;
    let mut series = Vec::new();
    for i in 0..10 {
        let c2 = sample_trunc_normal(0.0, PI * PI / 16.0, -PI, PI, &mut rng);
        let mesor = 6.0 + 0.3 * rng.sample::<f64, _>(StandardNormal);
        let values: Vec<f64> = times
            .iter()
            .map(|&t| {
                mesor
                    + truth_amp * (ANGULAR_FREQ * t + 0.7 + c2).cos()
                    + 0.1 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        series.push(LongitudinalSeries::new(format!("i{i:02}"), times.clone(), values).unwrap());
    }
    let naive = em_fit(&series, &EmConfig::default()).unwrap();
    let matrix = GeneMatrix::new(vec!["g1".to_string()], vec![series]).unwrap();
    let (adj, refits) = run_adjustment(&matrix, &AdjustConfig::default()).unwrap();
    let refit = refits[0].as_ref().unwrap();

    let naive_amp = naive.fixed.amplitude();
    let refit_amp = refit.fixed.amplitude();
    assert!(
        refit_amp > naive_amp + 0.1,
        "refit {refit_amp} not clearly above naive {naive_amp}"
    );
    assert!(
        (refit_amp - truth_amp).abs() < 0.06,
        "refit amplitude {refit_amp} far from {truth_amp}"
    );
    // Translations stay inside a half period.
    for &d in &adj.d_tilde {
        assert!(d.abs() <= radians_to_hours(PI) + 1e-9);
    }
}
