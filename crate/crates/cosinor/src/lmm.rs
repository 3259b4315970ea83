//! Estimation of the linear mixed-effects cosinor model.
//!
//! The model for individual i is `Y_i = W_i*beta + W_i*b_i + e_i` with
//! `b_i ~ N(0, Psi)`, `e_i ~ N(0, sigma2*I)` and design rows
//! `[1, sin(pi*X/12), cos(pi*X/12)]`, so the marginal covariance is
//! `V_i = sigma2*I + W_i*Psi*W_i'`. This module provides:
//!
//! - closed-form GLS for the fixed effects given per-individual `V_i^-1`
//! - a closed-form `V^-1` fast path for diagonal Psi on a full-period
//!   equispaced grid (trigonometric orthogonality makes `W'W` diagonal)
//! - maximum-likelihood estimation of (beta, Psi, sigma2) by EM when the
//!   variance components are unknown
//! - per-individual OLS cosinor fits
//! - the Wald test of beta1 = beta2 = 0 against chi-square with 2 df

use crate::model::{
    CosinorParams, FitCovariance, LongitudinalSeries, RandomEffectSpec, ANGULAR_FREQ, PERIOD_HOURS,
};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use thiserror::Error;

/// Condition-number limit beyond which a solve is treated as singular.
const CONDITION_LIMIT: f64 = 1e12;

/// Lower bound kept on sigma2 so V stays positive definite.
const SIGMA2_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum LmmError {
    #[error("summed information matrix is numerically singular")]
    SingularInformation,
    #[error("times deviate from the full-period equispaced grid by more than 1e-9 h")]
    NotEquispaced,
    #[error("lemma-2 fast path requires diagonal psi with nonnegative entries")]
    NonDiagonalPsi,
    #[error("residual variance must be positive, got {0}")]
    InvalidNoiseVariance(f64),
    #[error("need at least {need} {what}, got {got}")]
    InsufficientData {
        what: &'static str,
        need: usize,
        got: usize,
    },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("individual fit needs at least 4 samples, got {0}")]
    TooFewSamples(usize),
    #[error("(beta1, beta2) covariance block is numerically singular")]
    SingularBlock,
    #[error("designs, responses and V-inverses must align in length and dimension")]
    DimensionMismatch,
}

/// Cosinor design matrix with rows [1, sin(pi*X/12), cos(pi*X/12)].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: DMatrix<f64>,
}

impl DesignMatrix {
    /// Builds the n x 3 design for the given sample times in hours.
    pub fn from_times(times: &[f64]) -> Self {
        let n = times.len();
        let mut rows = DMatrix::zeros(n, 3);
        for (j, &t) in times.iter().enumerate() {
            rows[(j, 0)] = 1.0;
            rows[(j, 1)] = (ANGULAR_FREQ * t).sin();
            rows[(j, 2)] = (ANGULAR_FREQ * t).cos();
        }
        Self { rows }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }
}

/// How the random-effect covariance is structured during estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiStructure {
    /// Full symmetric 3x3 covariance.
    Full,
    /// Independent random effects: off-diagonals pinned to zero.
    Diagonal,
}

/// EM configuration; the defaults are used everywhere unless a caller
/// overrides them.
#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Maximum EM iterations before giving up (fit still returned).
    pub max_iter: usize,
    /// Stop when |delta loglik| or the relative parameter change drops
    /// below this.
    pub tol: f64,
    pub psi_structure: PsiStructure,
    /// Optional starting value for (Psi, sigma2); defaults to moment-based
    /// initialization from per-individual OLS fits.
    pub init: Option<RandomEffectSpec>,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            psi_structure: PsiStructure::Full,
            init: None,
        }
    }
}

/// Converged (or best-effort) mixed-model fit.
#[derive(Debug, Clone)]
pub struct MixedFit {
    pub fixed: CosinorParams,
    /// Estimated random-effect covariance (symmetric PSD).
    pub psi_hat: Matrix3<f64>,
    pub sigma2_hat: f64,
    /// (sum_i W_i' V_i^-1 W_i)^-1 at the returned (psi_hat, sigma2_hat).
    pub fixed_cov: FitCovariance,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when beta1 = beta2 = 0 exactly and the phase is meaningless.
    pub phase_degenerate: bool,
    /// Log-likelihood after each fixed-effect update; nondecreasing.
    pub loglik_trace: Vec<f64>,
}

/// Per-individual OLS cosinor fit.
#[derive(Debug, Clone)]
pub struct IndividualFit {
    pub params: CosinorParams,
    /// residual_var * (W'W)^-1.
    pub cov: FitCovariance,
    /// RSS / (n - 3).
    pub residual_var: f64,
    pub n: usize,
}

/// Wald test of beta1 = beta2 = 0.
#[derive(Debug, Clone, Copy)]
pub struct WaldResult {
    pub tau: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Inverts a symmetric positive-definite matrix through its eigensystem,
/// rejecting condition numbers above `CONDITION_LIMIT`.
fn spd_inverse(m: &Matrix3<f64>) -> Result<Matrix3<f64>, LmmError> {
    let eig = nalgebra::SymmetricEigen::new(*m);
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    if min.is_nan() || min <= 0.0 || max / min >= CONDITION_LIMIT {
        return Err(LmmError::SingularInformation);
    }
    let inv_diag = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let inv = eig.eigenvectors * inv_diag * eig.eigenvectors.transpose();
    // Symmetrize to kill round-off skew from the triple product.
    Ok(0.5 * (inv + inv.transpose()))
}

/// Generalized least squares for the fixed effects.
///
/// Returns `(sum_i W_i'V_i^-1 W_i)^-1 (sum_i W_i'V_i^-1 Y_i)` together with
/// the inverse information `(sum_i W_i'V_i^-1 W_i)^-1` as its covariance.
pub fn gls_fixed_effects(
    designs: &[DesignMatrix],
    responses: &[DVector<f64>],
    v_inv: &[DMatrix<f64>],
) -> Result<(CosinorParams, FitCovariance), LmmError> {
    if designs.len() != responses.len() || designs.len() != v_inv.len() || designs.is_empty() {
        return Err(LmmError::DimensionMismatch);
    }
    let mut info = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for ((w, y), vi) in designs.iter().zip(responses).zip(v_inv) {
        let n = w.nrows();
        if y.len() != n || vi.nrows() != n || vi.ncols() != n {
            return Err(LmmError::DimensionMismatch);
        }
        let wt_vi = w.rows.transpose() * vi;
        let info_i = &wt_vi * &w.rows;
        let rhs_i = &wt_vi * y;
        for r in 0..3 {
            for c in 0..3 {
                info[(r, c)] += info_i[(r, c)];
            }
            rhs[r] += rhs_i[r];
        }
    }
    let cov = spd_inverse(&info)?;
    let beta = cov * rhs;
    Ok((CosinorParams::new(beta[0], beta[1], beta[2]), cov))
}

/// Checks that `times` lie on a full-period equispaced grid
/// `X_j = X_1 + 24*(j-1)/n` to within 1e-9 h.
fn is_equispaced_full_period(times: &[f64]) -> bool {
    let n = times.len();
    if n < 3 {
        return false;
    }
    let step = PERIOD_HOURS / n as f64;
    times
        .iter()
        .enumerate()
        .all(|(j, &t)| (t - (times[0] + step * j as f64)).abs() <= 1e-9)
}

/// Closed-form `V^-1` for diagonal Psi on a full-period equispaced grid.
///
/// Entry (j,k) is
/// `1{j=k}/s2 - p1/(s2(n*p1+s2)) - 2*p2*sin_j*sin_k/(s2(n*p2+2*s2))
///  - 2*p3*cos_j*cos_k/(s2(n*p3+2*s2))`
/// which is the Woodbury inverse simplified by `W'W = diag(n, n/2, n/2)`.
pub fn lemma2_v_inverse(
    n: usize,
    times: &[f64],
    spec: &RandomEffectSpec,
) -> Result<DMatrix<f64>, LmmError> {
    if n < 3 || times.len() != n {
        return Err(LmmError::InsufficientData {
            what: "grid points",
            need: 3,
            got: times.len(),
        });
    }
    if !spec.is_diagonal() || spec.psi.m11 < 0.0 || spec.psi.m22 < 0.0 || spec.psi.m33 < 0.0 {
        return Err(LmmError::NonDiagonalPsi);
    }
    if spec.sigma2.is_nan() || spec.sigma2 <= 0.0 {
        return Err(LmmError::InvalidNoiseVariance(spec.sigma2));
    }
    if !is_equispaced_full_period(times) {
        return Err(LmmError::NotEquispaced);
    }
    let (p1, p2, p3) = (spec.psi.m11, spec.psi.m22, spec.psi.m33);
    let s2 = spec.sigma2;
    let nf = n as f64;
    let c1 = p1 / (s2 * (nf * p1 + s2));
    let c2 = 2.0 * p2 / (s2 * (nf * p2 + 2.0 * s2));
    let c3 = 2.0 * p3 / (s2 * (nf * p3 + 2.0 * s2));
    let sins: Vec<f64> = times.iter().map(|&t| (ANGULAR_FREQ * t).sin()).collect();
    let coss: Vec<f64> = times.iter().map(|&t| (ANGULAR_FREQ * t).cos()).collect();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let mut v = -c1 - c2 * sins[j] * sins[k] - c3 * coss[j] * coss[k];
            if j == k {
                v += 1.0 / s2;
            }
            out[(j, k)] = v;
        }
    }
    Ok(out)
}

/// `V^-1` and log|V| for one individual, via the closed form when it
/// applies and dense Cholesky otherwise.
struct VInverse {
    inv: DMatrix<f64>,
    logdet: f64,
}

fn v_inverse(
    w: &DesignMatrix,
    times: &[f64],
    psi: &Matrix3<f64>,
    sigma2: f64,
    fast_path: bool,
) -> Result<VInverse, LmmError> {
    let n = w.nrows();
    if fast_path {
        let spec = RandomEffectSpec::new(*psi, sigma2);
        if let Ok(inv) = lemma2_v_inverse(n, times, &spec) {
            let nf = n as f64;
            let logdet = (nf - 3.0) * sigma2.ln()
                + (sigma2 + nf * psi.m11).ln()
                + (sigma2 + 0.5 * nf * psi.m22).ln()
                + (sigma2 + 0.5 * nf * psi.m33).ln();
            return Ok(VInverse { inv, logdet });
        }
    }
    let mut v = &w.rows * psi * w.rows.transpose();
    for j in 0..n {
        v[(j, j)] += sigma2;
    }
    let chol = nalgebra::Cholesky::new(v).ok_or(LmmError::SingularInformation)?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(VInverse {
        inv: chol.inverse(),
        logdet,
    })
}

/// Marginal log-likelihood contribution given residual r and V^-1.
fn loglik_term(r: &DVector<f64>, v: &VInverse) -> f64 {
    let n = r.len() as f64;
    let quad = (&v.inv * r).dot(r);
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + v.logdet + quad)
}

/// Projects a symmetric matrix onto the PSD cone by clipping negative
/// eigenvalues at zero, optionally zeroing off-diagonals first.
fn psd_clip(psi: &Matrix3<f64>, structure: PsiStructure) -> Matrix3<f64> {
    let mut m = *psi;
    if structure == PsiStructure::Diagonal {
        m = Matrix3::from_diagonal(&m.diagonal());
    }
    let eig = nalgebra::SymmetricEigen::new(m);
    let clipped = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0)));
    let out = eig.eigenvectors * clipped * eig.eigenvectors.transpose();
    let sym = 0.5 * (out + out.transpose());
    if structure == PsiStructure::Diagonal {
        Matrix3::from_diagonal(&sym.diagonal())
    } else {
        sym
    }
}

/// Pooled-OLS and between-individual-moment starting values.
fn em_initialize(
    designs: &[DesignMatrix],
    responses: &[DVector<f64>],
    structure: PsiStructure,
) -> Result<(Matrix3<f64>, f64), LmmError> {
    let total: usize = responses.iter().map(|y| y.len()).sum();
    let mut wtw = Matrix3::<f64>::zeros();
    let mut wty = Vector3::<f64>::zeros();
    for (w, y) in designs.iter().zip(responses) {
        let i = w.rows.transpose() * &w.rows;
        let r = w.rows.transpose() * y;
        for a in 0..3 {
            for b in 0..3 {
                wtw[(a, b)] += i[(a, b)];
            }
            wty[a] += r[a];
        }
    }
    let beta = spd_inverse(&wtw)? * wty;
    let mut rss = 0.0;
    for (w, y) in designs.iter().zip(responses) {
        let fitted = &w.rows * DVector::from_column_slice(beta.as_slice());
        rss += (y - fitted).norm_squared();
    }
    let dof = (total as f64 - 3.0).max(1.0);
    let sigma2 = (rss / dof).max(SIGMA2_FLOOR);

    // Between-individual covariance of per-individual OLS coefficients.
    let mut coefs: Vec<Vector3<f64>> = Vec::new();
    for (w, y) in designs.iter().zip(responses) {
        if w.nrows() < 4 {
            continue;
        }
        let wtw_i = Matrix3::from_iterator((w.rows.transpose() * &w.rows).iter().cloned());
        if let Ok(inv) = spd_inverse(&wtw_i) {
            let wty_i = w.rows.transpose() * y;
            coefs.push(inv * Vector3::from_iterator(wty_i.iter().cloned()));
        }
    }
    let mut psi = if coefs.len() >= 2 {
        let mean = coefs.iter().sum::<Vector3<f64>>() / coefs.len() as f64;
        let mut s = Matrix3::zeros();
        for c in &coefs {
            let d = c - mean;
            s += d * d.transpose();
        }
        s / (coefs.len() as f64 - 1.0)
    } else {
        Matrix3::from_diagonal_element(1e-2)
    };
    psi = psd_clip(&psi, structure);
    for k in 0..3 {
        if psi[(k, k)] < 1e-6 {
            psi[(k, k)] = 1e-6;
        }
    }
    Ok((psi, sigma2))
}

/// Maximum-likelihood fit of the mixed cosinor model by EM.
///
/// Each iteration refreshes `V_i` from the current (Psi, sigma2), updates
/// the fixed effects by GLS (which maximizes the likelihood in beta), and
/// then performs one EM update of (Psi, sigma2) from the posterior moments
/// of the random effects. The recorded log-likelihood trace is
/// nondecreasing. On hitting `max_iter` the best iterate is returned with
/// `converged = false` rather than an error.
pub fn em_fit(data: &[LongitudinalSeries], config: &EmConfig) -> Result<MixedFit, LmmError> {
    if data.len() < 2 {
        return Err(LmmError::InsufficientData {
            what: "individuals",
            need: 2,
            got: data.len(),
        });
    }
    let total: usize = data.iter().map(|s| s.len()).sum();
    if total < 10 {
        return Err(LmmError::InsufficientData {
            what: "total observations",
            need: 10,
            got: total,
        });
    }
    let designs: Vec<DesignMatrix> = data
        .iter()
        .map(|s| DesignMatrix::from_times(&s.times))
        .collect();
    let responses: Vec<DVector<f64>> = data
        .iter()
        .map(|s| DVector::from_column_slice(&s.values))
        .collect();
    // Individuals sharing a time grid share V, so invert once per distinct
    // grid. The closed-form V^-1 additionally applies when Psi is diagonal
    // on an equispaced full-period grid.
    let mut grids: Vec<usize> = Vec::new();
    let mut grid_of = Vec::with_capacity(data.len());
    for (i, s) in data.iter().enumerate() {
        let found = grids.iter().position(|&k| data[k].times == s.times);
        match found {
            Some(idx) => grid_of.push(idx),
            None => {
                grid_of.push(grids.len());
                grids.push(i);
            }
        }
    }
    let fast_path: Vec<bool> = grids
        .iter()
        .map(|&k| {
            config.psi_structure == PsiStructure::Diagonal
                && is_equispaced_full_period(&data[k].times)
        })
        .collect();

    let (mut psi, mut sigma2) = match &config.init {
        Some(spec) => (psd_clip(&spec.psi, config.psi_structure), spec.sigma2.max(SIGMA2_FLOOR)),
        None => em_initialize(&designs, &responses, config.psi_structure)?,
    };

    let m = data.len() as f64;
    let nf = total as f64;
    let mut trace: Vec<f64> = Vec::new();
    let mut beta = CosinorParams::new(0.0, 0.0, 0.0);
    let mut cov = FitCovariance::zeros();
    let mut loglik = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut prev_state: Option<(CosinorParams, Matrix3<f64>, f64)> = None;

    // Per distinct grid and iteration: V^-1, W'V^-1, W'V^-1 W, the shared
    // posterior covariance of b_i, and tr(W'W C).
    struct GridTerms {
        v: VInverse,
        wt_vi: DMatrix<f64>,
        info: DMatrix<f64>,
        c_post: DMatrix<f64>,
        trace_term: f64,
    }
    let grid_terms = |psi: &Matrix3<f64>, sigma2: f64| -> Result<Vec<GridTerms>, LmmError> {
        grids
            .iter()
            .zip(&fast_path)
            .map(|(&k, &fast)| {
                let w = &designs[k];
                let v = v_inverse(w, &data[k].times, psi, sigma2, fast)?;
                let wt_vi = w.rows.transpose() * &v.inv;
                let info = &wt_vi * &w.rows;
                let psi_d = DMatrix::from_fn(3, 3, |r, c| psi[(r, c)]);
                let c_post = &psi_d - &psi_d * &info * &psi_d;
                let wtw = w.rows.transpose() * &w.rows;
                let trace_term = (&wtw * &c_post).trace();
                Ok(GridTerms {
                    v,
                    wt_vi,
                    info,
                    c_post,
                    trace_term,
                })
            })
            .collect()
    };

    for iter in 0..config.max_iter {
        iterations = iter + 1;
        let terms = grid_terms(&psi, sigma2)?;

        let mut info = Matrix3::<f64>::zeros();
        let mut rhs = Vector3::<f64>::zeros();
        for (i, y) in responses.iter().enumerate() {
            let t = &terms[grid_of[i]];
            let rhs_i = &t.wt_vi * y;
            for r in 0..3 {
                for c in 0..3 {
                    info[(r, c)] += t.info[(r, c)];
                }
                rhs[r] += rhs_i[r];
            }
        }
        let cov_new = spd_inverse(&info)?;
        let b = cov_new * rhs;
        let beta_new = CosinorParams::new(b[0], b[1], b[2]);

        let mut ll = 0.0;
        for (i, (w, y)) in designs.iter().zip(&responses).enumerate() {
            let fitted = &w.rows
                * DVector::from_column_slice(&[beta_new.mu0, beta_new.beta1, beta_new.beta2]);
            ll += loglik_term(&(y - fitted), &terms[grid_of[i]].v);
        }
        trace.push(ll);

        // Relative change of every parameter since the previous iteration
        // start (beta from then, psi and sigma2 as entering that iteration).
        let param_shift = prev_state
            .as_ref()
            .map(|(b0, p0, s0)| {
                let db = (beta_new.mu0 - b0.mu0)
                    .abs()
                    .max((beta_new.beta1 - b0.beta1).abs())
                    .max((beta_new.beta2 - b0.beta2).abs());
                let bscale = 1.0 + b0.mu0.abs().max(b0.beta1.abs()).max(b0.beta2.abs());
                let dp = (psi - p0)
                    .iter()
                    .fold(0.0f64, |acc, d| acc.max(d.abs()));
                let pscale = 1.0 + p0.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
                let ds = (sigma2 - s0).abs() / (1.0 + s0);
                (db / bscale).max(dp / pscale).max(ds)
            })
            .unwrap_or(f64::INFINITY);
        let delta_ll = (ll - loglik).abs();
        prev_state = Some((beta_new, psi, sigma2));
        beta = beta_new;
        cov = cov_new;
        loglik = ll;
        if iter > 0 && (delta_ll < config.tol || param_shift < config.tol) {
            converged = true;
            break;
        }

        // E-step: posterior moments of b_i; M-step: new (Psi, sigma2).
        let mut s_mat = Matrix3::<f64>::zeros();
        let mut sse = 0.0;
        let psi_d = DMatrix::from_fn(3, 3, |r, c| psi[(r, c)]);
        for (i, (w, y)) in designs.iter().zip(&responses).enumerate() {
            let t = &terms[grid_of[i]];
            let fitted =
                &w.rows * DVector::from_column_slice(&[beta.mu0, beta.beta1, beta.beta2]);
            let r = y - fitted;
            let b_hat = &psi_d * (&t.wt_vi * &r);          // 3 x 1
            for a in 0..3 {
                for bidx in 0..3 {
                    s_mat[(a, bidx)] += b_hat[a] * b_hat[bidx] + t.c_post[(a, bidx)];
                }
            }
            let e = &r - &w.rows * &b_hat;
            sse += e.norm_squared() + t.trace_term;
        }
        let mut psi_new = s_mat / m;
        psi_new = psd_clip(&psi_new, config.psi_structure);
        psi = psi_new;
        sigma2 = (sse / nf).max(SIGMA2_FLOOR);
    }

    if !converged && iterations == config.max_iter {
        // The last M-step left (Psi, sigma2) ahead of beta; bring the fixed
        // effects back in sync so they satisfy the GLS equations at the
        // returned variance components.
        let mut per_grid = Vec::with_capacity(grids.len());
        for (&k, &fast) in grids.iter().zip(&fast_path) {
            per_grid.push(v_inverse(&designs[k], &data[k].times, &psi, sigma2, fast)?);
        }
        let inv_mats: Vec<DMatrix<f64>> = (0..data.len())
            .map(|i| per_grid[grid_of[i]].inv.clone())
            .collect();
        let (beta_new, cov_new) = gls_fixed_effects(&designs, &responses, &inv_mats)?;
        let mut ll = 0.0;
        for (i, (w, y)) in designs.iter().zip(&responses).enumerate() {
            let fitted = &w.rows
                * DVector::from_column_slice(&[beta_new.mu0, beta_new.beta1, beta_new.beta2]);
            ll += loglik_term(&(y - fitted), &per_grid[grid_of[i]]);
        }
        trace.push(ll);
        beta = beta_new;
        cov = cov_new;
        loglik = ll;
    }

    let phase_degenerate = beta.beta1 == 0.0 && beta.beta2 == 0.0;
    Ok(MixedFit {
        fixed: beta,
        psi_hat: psi,
        sigma2_hat: sigma2,
        fixed_cov: cov,
        loglik,
        iterations,
        converged,
        phase_degenerate,
        loglik_trace: trace,
    })
}

/// OLS cosinor fit for one individual; requires n >= 4 so the residual
/// variance has at least one degree of freedom.
pub fn individual_cosinor(series: &LongitudinalSeries) -> Result<IndividualFit, LmmError> {
    let n = series.len();
    if n < 4 {
        return Err(LmmError::TooFewSamples(n));
    }
    let w = DesignMatrix::from_times(&series.times);
    let wtw = Matrix3::from_iterator((w.rows.transpose() * &w.rows).iter().cloned());
    let inv = spd_inverse(&wtw).map_err(|_| LmmError::RankDeficient)?;
    let y = DVector::from_column_slice(&series.values);
    let wty = w.rows.transpose() * &y;
    let beta = inv * Vector3::from_iterator(wty.iter().cloned());
    let fitted = &w.rows * DVector::from_column_slice(beta.as_slice());
    let rss = (&y - fitted).norm_squared();
    let residual_var = rss / (n as f64 - 3.0);
    Ok(IndividualFit {
        params: CosinorParams::new(beta[0], beta[1], beta[2]),
        cov: inv * residual_var,
        residual_var,
        n,
    })
}

/// Wald statistic for beta1 = beta2 = 0 using the (beta1, beta2) block of
/// the fixed-effect covariance; the null has two restrictions, so tau is
/// referred to chi-square with 2 df (upper tail exp(-tau/2)).
pub fn wald_test(fit: &MixedFit) -> Result<WaldResult, LmmError> {
    let c = &fit.fixed_cov;
    let (a, b, d) = (c.m22, c.m23, c.m33);
    let det = a * d - b * b;
    let norm = a.abs().max(d.abs()).max(b.abs());
    if det.is_nan() || det <= 0.0 || norm * norm / det >= CONDITION_LIMIT {
        return Err(LmmError::SingularBlock);
    }
    let (b1, b2) = (fit.fixed.beta1, fit.fixed.beta2);
    let tau = ((d * b1 * b1 - 2.0 * b * b1 * b2 + a * b2 * b2) / det).max(0.0);
    Ok(WaldResult {
        tau,
        df: 2,
        p_value: (-tau / 2.0).exp(),
    })
}
