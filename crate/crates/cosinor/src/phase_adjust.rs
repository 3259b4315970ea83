//! Two-stage phase adjustment across genes.
//!
//! Individuals often keep internal clocks offset from external time, which
//! attenuates population cosinor fits. The adjustment estimates, per gene,
//! a population phase and per-individual phases, shrinks each individual
//! phase toward the population phase with an inverse-variance weight, turns
//! the shrunken differences into per-individual circular offsets, aggregates
//! the offsets across genes into one translation per individual (in hours),
//! and refits every gene on the translated times.

use crate::circstat::resultant_length;
use crate::lmm::{em_fit, individual_cosinor, EmConfig, MixedFit};
use crate::model::{
    linear_to_amplitude_phase, phase_variance, radians_to_hours, wrap_angle, wrap_two_pi,
    LongitudinalSeries,
};
use log::warn;
use rayon::prelude::*;
use thiserror::Error;

/// Variances are clamped to this floor before weighting so exact-zero
/// residual fits degrade to full trust instead of dividing by zero.
const VARIANCE_FLOOR: f64 = 1e-300;

/// Cap applied to 1/(1 - omega) and inverse-variance weights.
const WEIGHT_CAP: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum AdjustError {
    #[error("phase adjustment needs at least 2 individuals, got {0}")]
    InsufficientIndividuals(usize),
    #[error("inconsistent gene matrix: {0}")]
    InvalidMatrix(String),
    #[error("variance must be positive and finite, got {0}")]
    NonPositiveVariance(f64),
    #[error("weight must lie in [0, 1], got {0}")]
    InvalidWeight(f64),
    #[error("weighted phase components cancel; circular mean undefined")]
    ResultantDegenerate,
    #[error("no usable gene offsets for this individual")]
    NoUsableGenes,
    #[error("every gene was excluded before aggregation")]
    AllGenesExcluded,
    #[error("offset and weight vectors differ in length")]
    LengthMismatch,
    #[error("fit amplitude is zero; phase realignment undefined")]
    DegenerateAmplitude,
    #[error("inputs must be finite")]
    NonFinite,
}

/// Expression of G genes over the same M individuals: one sampling schedule,
/// G readouts.
#[derive(Debug, Clone)]
pub struct GeneMatrix {
    gene_ids: Vec<String>,
    individual_ids: Vec<String>,
    data: Vec<Vec<LongitudinalSeries>>,
}

impl GeneMatrix {
    /// Validates that every gene covers the same individuals in the same
    /// order with identical per-individual sample times.
    pub fn new(
        gene_ids: Vec<String>,
        data: Vec<Vec<LongitudinalSeries>>,
    ) -> Result<Self, AdjustError> {
        if gene_ids.is_empty() || gene_ids.len() != data.len() {
            return Err(AdjustError::InvalidMatrix(
                "need one named series collection per gene".into(),
            ));
        }
        let first = &data[0];
        if first.is_empty() {
            return Err(AdjustError::InvalidMatrix("no individuals".into()));
        }
        for (g, gene) in data.iter().enumerate() {
            if gene.len() != first.len() {
                return Err(AdjustError::InvalidMatrix(format!(
                    "gene {} covers {} individuals, expected {}",
                    gene_ids[g],
                    gene.len(),
                    first.len()
                )));
            }
            for (i, series) in gene.iter().enumerate() {
                if series.individual_id != first[i].individual_id {
                    return Err(AdjustError::InvalidMatrix(format!(
                        "gene {} lists individual {} where {} was expected",
                        gene_ids[g], series.individual_id, first[i].individual_id
                    )));
                }
                if series.times != first[i].times {
                    return Err(AdjustError::InvalidMatrix(format!(
                        "gene {} has a different time grid for individual {}",
                        gene_ids[g], series.individual_id
                    )));
                }
            }
        }
        let individual_ids = first.iter().map(|s| s.individual_id.clone()).collect();
        Ok(Self {
            gene_ids,
            individual_ids,
            data,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_individuals(&self) -> usize {
        self.individual_ids.len()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn individual_ids(&self) -> &[String] {
        &self.individual_ids
    }

    /// All series for gene `g`, one per individual.
    pub fn series(&self, g: usize) -> &[LongitudinalSeries] {
        &self.data[g]
    }

    /// Returns a copy with each individual's times shifted by its entry of
    /// `offsets_hours` (applied to every gene). No re-wrapping into [0, 24)
    /// is performed: the cosinor basis is 24 h periodic, so wrapping would
    /// be a no-op through sin and cos.
    pub fn translated(&self, offsets_hours: &[f64]) -> Result<GeneMatrix, AdjustError> {
        if offsets_hours.len() != self.n_individuals() {
            return Err(AdjustError::LengthMismatch);
        }
        if offsets_hours.iter().any(|d| !d.is_finite()) {
            return Err(AdjustError::NonFinite);
        }
        let data = self
            .data
            .iter()
            .map(|gene| {
                gene.iter()
                    .zip(offsets_hours)
                    .map(|(s, &d)| {
                        let times = s.times.iter().map(|&t| t + d).collect();
                        LongitudinalSeries::new(s.individual_id.clone(), times, s.values.clone())
                            .expect("translated series keeps its shape")
                    })
                    .collect()
            })
            .collect();
        Ok(GeneMatrix {
            gene_ids: self.gene_ids.clone(),
            individual_ids: self.individual_ids.clone(),
            data,
        })
    }
}

/// Weighting scheme for the cross-gene aggregation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step6Weights {
    /// Weight gene g by 1/(1 - omega_g), the inverse circular variance of
    /// its individual phase estimates (the default).
    Text,
    /// Weight each (gene, individual) offset by the inverse variance of
    /// that individual's phase estimate.
    Pseudocode,
}

#[derive(Debug, Clone)]
pub struct AdjustConfig {
    pub em: EmConfig,
    pub step6_weights: Step6Weights,
    /// Rotate each refit so its reported population phase matches the
    /// pre-translation fit.
    pub realign: bool,
}

impl Default for AdjustConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            step6_weights: Step6Weights::Text,
            realign: false,
        }
    }
}

/// A gene dropped from the aggregation step, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedGene {
    pub gene: String,
    pub reason: String,
}

/// Everything the adjustment estimated on the way to the translations.
#[derive(Debug, Clone)]
pub struct PhaseAdjustment {
    /// Per-gene, per-individual circular offsets in [0, 2*pi); `None` when
    /// that gene/individual pair was unusable.
    pub d_hat: Vec<Vec<Option<f64>>>,
    /// Per-gene mean resultant length of the individual phase estimates.
    pub omega: Vec<f64>,
    /// Per-individual time translation in hours.
    pub d_tilde: Vec<f64>,
    pub excluded_genes: Vec<ExcludedGene>,
}

/// Inverse-variance shrinkage weight pulling an individual phase toward the
/// population phase: (1/var_ind) / ((1/var_pop) + (1/var_ind)).
pub fn shrinkage_weight(var_pop: f64, var_ind: f64) -> Result<f64, AdjustError> {
    if !var_pop.is_finite() || var_pop <= 0.0 {
        return Err(AdjustError::NonPositiveVariance(var_pop));
    }
    if !var_ind.is_finite() || var_ind <= 0.0 {
        return Err(AdjustError::NonPositiveVariance(var_ind));
    }
    // Same value as the reciprocal form, but stable for extreme variances.
    Ok(var_pop / (var_pop + var_ind))
}

/// Weighted circular average of the individual and population phases,
/// reported as an offset from the population phase in [0, 2*pi).
pub fn per_gene_offset(theta_pop: f64, theta_ind: f64, w: f64) -> Result<f64, AdjustError> {
    if !theta_pop.is_finite() || !theta_ind.is_finite() || !w.is_finite() {
        return Err(AdjustError::NonFinite);
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(AdjustError::InvalidWeight(w));
    }
    let s = w * theta_ind.sin() + (1.0 - w) * theta_pop.sin();
    let c = w * theta_ind.cos() + (1.0 - w) * theta_pop.cos();
    if s.abs() < 1e-12 && c.abs() < 1e-12 {
        return Err(AdjustError::ResultantDegenerate);
    }
    Ok(wrap_two_pi(s.atan2(c) - theta_pop))
}

/// Circular mean of the offsets with weights capped at `WEIGHT_CAP`,
/// converted from radians to hours.
fn weighted_offset_hours(
    d_hat_row: &[Option<f64>],
    weights: &[f64],
) -> Result<f64, AdjustError> {
    if d_hat_row.len() != weights.len() {
        return Err(AdjustError::LengthMismatch);
    }
    let mut s = 0.0;
    let mut c = 0.0;
    let mut total = 0.0;
    for (d, &wt) in d_hat_row.iter().zip(weights) {
        if let Some(d) = d {
            s += wt * d.sin();
            c += wt * d.cos();
            total += wt;
        }
    }
    if total == 0.0 {
        return Err(AdjustError::NoUsableGenes);
    }
    Ok(radians_to_hours((s / total).atan2(c / total)))
}

/// Aggregates one individual's per-gene offsets into a translation in
/// hours, weighting gene g by the inverse circular variance 1/(1 - omega_g).
/// Genes with 1 - omega below 1e-6 get their weight capped at 1e6.
pub fn aggregate_translation(
    d_hat_row: &[Option<f64>],
    omegas: &[f64],
) -> Result<f64, AdjustError> {
    if d_hat_row.len() != omegas.len() {
        return Err(AdjustError::LengthMismatch);
    }
    let weights: Vec<f64> = d_hat_row
        .iter()
        .zip(omegas)
        .map(|(d, &om)| {
            if d.is_none() {
                return 0.0;
            }
            let circ_var = 1.0 - om;
            if circ_var < 1e-6 {
                warn!("near-zero circular variance (omega = {om}); capping gene weight at {WEIGHT_CAP}");
                WEIGHT_CAP
            } else {
                1.0 / circ_var
            }
        })
        .collect();
    weighted_offset_hours(d_hat_row, &weights)
}

/// Population-level stage for one gene: phase, phase variance and the fit.
struct GeneStage {
    population: Option<(f64, f64, MixedFit)>,
    exclusion: Option<String>,
    /// Per individual: (phase estimate, phase variance).
    individual: Vec<Option<(f64, f64)>>,
}

fn stage_gene(series: &[LongitudinalSeries], em: &EmConfig) -> GeneStage {
    let population = match em_fit(series, em) {
        Ok(fit) if fit.phase_degenerate => Err("population fit has zero amplitude".to_string()),
        Ok(fit) => match phase_variance(&fit.fixed, &fit.fixed_cov) {
            Ok(var) => Ok((fit.fixed.phase(), var.max(VARIANCE_FLOOR), fit)),
            Err(e) => Err(format!("population phase variance: {e}")),
        },
        Err(e) => Err(format!("population fit: {e}")),
    };
    let individual = series
        .iter()
        .map(|s| match individual_cosinor(s) {
            Ok(fit) if !fit.params.is_phase_degenerate() => {
                phase_variance(&fit.params, &fit.cov)
                    .ok()
                    .map(|v| (fit.params.phase(), v.max(VARIANCE_FLOOR)))
            }
            _ => None,
        })
        .collect();
    match population {
        Ok(p) => GeneStage {
            population: Some(p),
            exclusion: None,
            individual,
        },
        Err(reason) => GeneStage {
            population: None,
            exclusion: Some(reason),
            individual,
        },
    }
}

/// Runs the full adjustment: per-gene population and individual fits,
/// shrunken circular offsets, cross-gene aggregation, time translation and
/// per-gene refits on the translated times.
///
/// Per-gene failures become exclusions rather than aborting the run; the
/// whole run fails only when no gene survives. Individuals unusable in
/// every gene receive a zero translation with a warning. The second return
/// value holds the per-gene refits on translated times (`None` where the
/// refit itself failed).
pub fn run_adjustment(
    data: &GeneMatrix,
    config: &AdjustConfig,
) -> Result<(PhaseAdjustment, Vec<Option<MixedFit>>), AdjustError> {
    let n_genes = data.n_genes();
    let n_ind = data.n_individuals();
    if n_ind < 2 {
        return Err(AdjustError::InsufficientIndividuals(n_ind));
    }

    let stages: Vec<GeneStage> = (0..n_genes)
        .into_par_iter()
        .map(|g| stage_gene(data.series(g), &config.em))
        .collect();

    let mut excluded_genes = Vec::new();
    for (g, stage) in stages.iter().enumerate() {
        if let Some(reason) = &stage.exclusion {
            excluded_genes.push(ExcludedGene {
                gene: data.gene_ids[g].clone(),
                reason: reason.clone(),
            });
        }
    }
    if excluded_genes.len() == n_genes {
        return Err(AdjustError::AllGenesExcluded);
    }

    let omega: Vec<f64> = stages
        .iter()
        .map(|stage| {
            let phases: Vec<f64> = stage
                .individual
                .iter()
                .flatten()
                .map(|(theta, _)| *theta)
                .collect();
            if phases.is_empty() {
                0.0
            } else {
                resultant_length(&phases).unwrap_or(0.0)
            }
        })
        .collect();

    let d_hat: Vec<Vec<Option<f64>>> = stages
        .iter()
        .map(|stage| {
            let Some((theta_pop, var_pop, _)) = &stage.population else {
                return vec![None; n_ind];
            };
            stage
                .individual
                .iter()
                .map(|entry| {
                    let (theta_ind, var_ind) = entry.as_ref()?;
                    let w = shrinkage_weight(*var_pop, *var_ind).ok()?;
                    per_gene_offset(*theta_pop, *theta_ind, w).ok()
                })
                .collect()
        })
        .collect();

    let usable_gene = |g: usize| stages[g].population.is_some();
    let mut d_tilde = Vec::with_capacity(n_ind);
    for (i, individual_id) in data.individual_ids.iter().enumerate() {
        let row: Vec<Option<f64>> = (0..n_genes)
            .map(|g| if usable_gene(g) { d_hat[g][i] } else { None })
            .collect();
        let translated = match config.step6_weights {
            Step6Weights::Text => aggregate_translation(&row, &omega),
            Step6Weights::Pseudocode => {
                let weights: Vec<f64> = (0..n_genes)
                    .map(|g| match (&row[g], &stages[g].individual[i]) {
                        (Some(_), Some((_, var_ind))) => (1.0 / var_ind).min(WEIGHT_CAP),
                        _ => 0.0,
                    })
                    .collect();
                weighted_offset_hours(&row, &weights)
            }
        };
        match translated {
            Ok(hours) => d_tilde.push(hours),
            Err(AdjustError::NoUsableGenes) => {
                warn!("individual {individual_id} unusable in every gene; translation set to 0");
                d_tilde.push(0.0);
            }
            Err(e) => return Err(e),
        }
    }

    let shifted = data.translated(&d_tilde)?;
    let refits: Vec<Option<MixedFit>> = (0..n_genes)
        .into_par_iter()
        .map(|g| em_fit(shifted.series(g), &config.em).ok())
        .collect();
    let refits = if config.realign {
        refits
            .into_iter()
            .enumerate()
            .map(|(g, refit)| {
                let refit = refit?;
                match &stages[g].population {
                    Some((_, _, original)) => {
                        match realign_population_phase(original, &refit) {
                            Ok(aligned) => Some(aligned),
                            Err(e) => {
                                warn!(
                                    "gene {}: realignment skipped ({e})",
                                    data.gene_ids[g]
                                );
                                Some(refit)
                            }
                        }
                    }
                    None => Some(refit),
                }
            })
            .collect()
    } else {
        refits
    };

    Ok((
        PhaseAdjustment {
            d_hat,
            omega,
            d_tilde,
            excluded_genes,
        },
        refits,
    ))
}

/// Rotates the refit's (beta1, beta2) and the matching covariance block so
/// its reported population phase equals the original fit's phase. The
/// rotation preserves amplitude and the Wald statistic.
pub fn realign_population_phase(
    original: &MixedFit,
    refit: &MixedFit,
) -> Result<MixedFit, AdjustError> {
    let (amp_orig, phase_orig) = linear_to_amplitude_phase(&original.fixed);
    let (amp_refit, phase_refit) = linear_to_amplitude_phase(&refit.fixed);
    if amp_orig == 0.0 || amp_refit == 0.0 {
        return Err(AdjustError::DegenerateAmplitude);
    }
    let delta = wrap_angle(phase_orig - phase_refit);
    let (sin_d, cos_d) = delta.sin_cos();
    let mut out = refit.clone();
    out.fixed.beta1 = cos_d * refit.fixed.beta1 - sin_d * refit.fixed.beta2;
    out.fixed.beta2 = sin_d * refit.fixed.beta1 + cos_d * refit.fixed.beta2;
    // T = blockdiag(1, R): only rows/columns 2..3 of the covariance change.
    let c = &refit.fixed_cov;
    out.fixed_cov.m12 = cos_d * c.m12 - sin_d * c.m13;
    out.fixed_cov.m13 = sin_d * c.m12 + cos_d * c.m13;
    out.fixed_cov.m21 = out.fixed_cov.m12;
    out.fixed_cov.m31 = out.fixed_cov.m13;
    out.fixed_cov.m22 =
        cos_d * (cos_d * c.m22 - sin_d * c.m23) - sin_d * (cos_d * c.m23 - sin_d * c.m33);
    out.fixed_cov.m23 =
        cos_d * (sin_d * c.m22 + cos_d * c.m23) - sin_d * (sin_d * c.m23 + cos_d * c.m33);
    out.fixed_cov.m32 = out.fixed_cov.m23;
    out.fixed_cov.m33 =
        sin_d * (sin_d * c.m22 + cos_d * c.m23) + cos_d * (sin_d * c.m23 + cos_d * c.m33);
    out.phase_degenerate = out.fixed.beta1 == 0.0 && out.fixed.beta2 == 0.0;
    Ok(out)
}
