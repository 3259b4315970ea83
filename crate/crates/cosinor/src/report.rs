//! Delimited report files: per-gene fits, per-individual translations,
//! and evaluation summaries.
//!
//! Reports are comma-delimited with a mandatory header. Floats are
//! written with 17 significant digits so downstream consumers can
//! re-ingest them without loss; failed genes keep their row with empty
//! numeric fields and a status message.

use crate::lmm::{wald_test, MixedFit};
use crate::model::linear_to_amplitude_phase;
use serde::Deserialize;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed report: {0}")]
    Csv(#[from] csv::Error),
}

/// One gene's fit summary; numeric fields are empty for failed genes.
#[derive(Debug, Clone, Deserialize)]
pub struct FitRecord {
    pub gene_id: String,
    pub status: String,
    pub mu0: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub tau: Option<f64>,
    pub p_value: Option<f64>,
    pub sigma2: Option<f64>,
    pub loglik: Option<f64>,
    pub iterations: Option<u64>,
    pub converged: Option<bool>,
}

impl FitRecord {
    /// Summarizes a successful fit. A degenerate Wald block leaves the
    /// test fields empty but the row still reports the estimates.
    pub fn success(gene_id: impl Into<String>, fit: &MixedFit) -> FitRecord {
        let (theta1, theta2) = linear_to_amplitude_phase(&fit.fixed);
        let wald = wald_test(fit).ok();
        FitRecord {
            gene_id: gene_id.into(),
            status: "ok".to_string(),
            mu0: Some(fit.fixed.mu0),
            beta1: Some(fit.fixed.beta1),
            beta2: Some(fit.fixed.beta2),
            theta1: Some(theta1),
            theta2: Some(theta2),
            tau: wald.as_ref().map(|w| w.tau),
            p_value: wald.as_ref().map(|w| w.p_value),
            sigma2: Some(fit.sigma2_hat),
            loglik: Some(fit.loglik),
            iterations: Some(fit.iterations as u64),
            converged: Some(fit.converged),
        }
    }

    pub fn failure(gene_id: impl Into<String>, reason: impl Into<String>) -> FitRecord {
        FitRecord {
            gene_id: gene_id.into(),
            status: reason.into(),
            mu0: None,
            beta1: None,
            beta2: None,
            theta1: None,
            theta2: None,
            tau: None,
            p_value: None,
            sigma2: None,
            loglik: None,
            iterations: None,
            converged: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// One individual's estimated time translation.
#[derive(Debug, Clone, Deserialize)]
pub struct AdjustmentRecord {
    pub individual_id: String,
    pub d_tilde_hours: f64,
}

/// One evaluated quantity's no-intercept regression summary.
#[derive(Debug, Clone, Deserialize)]
pub struct EvalRecord {
    pub quantity: String,
    pub gamma_hat: f64,
    pub r2: f64,
    pub n: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.16e}"))
}

/// Writes a per-gene fit report.
pub fn write_fit_report<W: Write>(writer: W, records: &[FitRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "gene_id",
        "status",
        "mu0",
        "beta1",
        "beta2",
        "theta1",
        "theta2",
        "tau",
        "p_value",
        "sigma2",
        "loglik",
        "iterations",
        "converged",
    ])?;
    for r in records {
        w.write_record([
            r.gene_id.clone(),
            r.status.clone(),
            fmt_opt(r.mu0),
            fmt_opt(r.beta1),
            fmt_opt(r.beta2),
            fmt_opt(r.theta1),
            fmt_opt(r.theta2),
            fmt_opt(r.tau),
            fmt_opt(r.p_value),
            fmt_opt(r.sigma2),
            fmt_opt(r.loglik),
            r.iterations.map_or_else(String::new, |i| i.to_string()),
            r.converged.map_or_else(String::new, |c| c.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a per-gene fit report.
pub fn read_fit_report(path: &Path) -> Result<Vec<FitRecord>, ReportError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Writes the per-individual translation table.
pub fn write_adjustment_report<W: Write>(
    writer: W,
    records: &[AdjustmentRecord],
) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["individual_id", "d_tilde_hours"])?;
    for r in records {
        w.write_record([r.individual_id.clone(), format!("{:.16e}", r.d_tilde_hours)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a per-individual translation table.
pub fn read_adjustment_report(path: &Path) -> Result<Vec<AdjustmentRecord>, ReportError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}

/// Writes the evaluation summary table.
pub fn write_eval_report<W: Write>(writer: W, records: &[EvalRecord]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["quantity", "gamma_hat", "r2", "n"])?;
    for r in records {
        w.write_record([
            r.quantity.clone(),
            format!("{:.16e}", r.gamma_hat),
            format!("{:.16e}", r.r2),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an evaluation summary table.
pub fn read_eval_report(path: &Path) -> Result<Vec<EvalRecord>, ReportError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for row in reader.deserialize() {
        records.push(row?);
    }
    Ok(records)
}
