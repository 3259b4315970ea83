//! Mixed-effects cosinor modelling of periodic measurements.
//!
//! The crate fits the 24-hour cosinor model
//! `Y = mu0 + beta1*sin(pi*X/12) + beta2*cos(pi*X/12) + e` to longitudinal
//! expression data, with per-individual random effects on all three
//! coefficients. On top of the plain mixed-model fit it implements a
//! two-stage time-translation procedure that estimates each individual's
//! phase offset from the data, shifts that individual's clock times, and
//! refits, recovering amplitude and test power lost to phase dispersion.
//!
//! Modules:
//! - [`model`]: parameterisations, amplitude/phase transforms, delta-method
//!   phase variance
//! - [`circstat`]: circular means, resultant length, circular variance
//! - [`lmm`]: GLS and EM estimation of the linear mixed cosinor model, Wald
//!   rhythmicity test
//! - [`phase_adjust`]: per-individual phase offsets and the translate-refit
//!   pipeline
//! - [`simgen`]: simulation presets, truncated-normal sampling, campaign
//!   driver
//! - [`eval`]: no-intercept concordance regression between paired fits
//! - [`ingest`]: long-format CSV expression files
//! - [`report`]: fit and adjustment report tables

pub mod circstat;
pub mod eval;
pub mod ingest;
pub mod lmm;
pub mod model;
pub mod phase_adjust;
pub mod report;
pub mod simgen;
