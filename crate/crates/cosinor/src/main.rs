//! Command-line front end: simulation campaigns, per-gene fitting,
//! phase adjustment, and framework evaluation.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use cosinor::eval::{gamma_fit_with, gene_filter, EvalError, PairedQuantities, R2Convention};
use cosinor::ingest::{read_expression_csv, IngestError, IngestReport};
use cosinor::lmm::{em_fit, EmConfig, LmmError, PsiStructure};
use cosinor::model::LongitudinalSeries;
use cosinor::phase_adjust::{run_adjustment, AdjustConfig, AdjustError, GeneMatrix, Step6Weights};
use cosinor::report::{
    read_fit_report, write_adjustment_report, write_eval_report, write_fit_report,
    AdjustmentRecord, EvalRecord, FitRecord, ReportError,
};
use cosinor::simgen::{run_campaign_with, Framework, SimError, SimSetting};
use log::{info, warn};
use rayon::prelude::*;
use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "cosinor",
    version,
    about = "Mixed-effects cosinor modeling with individual phase adjustment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PsiArg {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
enum Step6Arg {
    #[default]
    Text,
    Pseudocode,
}

impl From<Step6Arg> for Step6Weights {
    fn from(v: Step6Arg) -> Step6Weights {
        match v {
            Step6Arg::Text => Step6Weights::Text,
            Step6Arg::Pseudocode => Step6Weights::Pseudocode,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Default)]
enum R2Arg {
    #[default]
    Uncentered,
    Centered,
}

/// Estimation options shared by every fitting command.
#[derive(Debug, Args)]
struct FitOptions {
    /// Random-effect covariance structure.
    #[arg(long, value_enum, default_value_t = PsiArg::Full)]
    psi: PsiArg,
    /// Maximum EM iterations.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// EM convergence tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

impl FitOptions {
    fn em_config(&self) -> EmConfig {
        EmConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            psi_structure: match self.psi {
                PsiArg::Full => PsiStructure::Full,
                PsiArg::Diagonal => PsiStructure::Diagonal,
            },
            init: None,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded simulation campaign and write the framework summary table.
    Simulate {
        /// Benchmark setting id (1-6).
        #[arg(long)]
        setting: u8,
        /// Number of Monte Carlo trials.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        /// Campaign seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        fit: FitOptions,
        /// Weighting used when pooling per-gene offsets.
        #[arg(long, value_enum, default_value_t = Step6Arg::Text)]
        step6_weights: Step6Arg,
        /// Realign refit phases to the original fit's convention.
        #[arg(long)]
        realign: bool,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the mixed-effects cosinor to every gene of an expression file.
    Fit {
        /// Long-format expression file.
        input: PathBuf,
        #[command(flatten)]
        fit: FitOptions,
        /// Shift each individual's times by its known ict_offset_hours
        /// column; individuals without an offset are excluded.
        #[arg(long)]
        use_ict: bool,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate per-individual time translations and refit every gene.
    Adjust {
        /// Long-format expression file.
        input: PathBuf,
        #[command(flatten)]
        fit: FitOptions,
        /// Weighting used when pooling per-gene offsets.
        #[arg(long, value_enum, default_value_t = Step6Arg::Text)]
        step6_weights: Step6Arg,
        /// Realign refit phases to the original fit's convention.
        #[arg(long)]
        realign: bool,
        /// Output path for the translation table; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output path for the refit report; stdout when omitted.
        #[arg(long)]
        out_fits: Option<PathBuf>,
    },
    /// Regress one fit report on another with no intercept.
    Evaluate {
        /// Report whose quantities form the covariate.
        fits_a: PathBuf,
        /// Reference report whose quantities form the response.
        fits_b: PathBuf,
        /// Gold-standard gene list, one id per line.
        #[arg(long)]
        genes: Option<PathBuf>,
        /// R-squared convention.
        #[arg(long, value_enum, default_value_t = R2Arg::Uncentered)]
        r2: R2Arg,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Optional per-gene scatter data output.
        #[arg(long)]
        scatter: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LmmError> for CliError {
    fn from(e: LmmError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<AdjustError> for CliError {
    fn from(e: AdjustError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::UnknownSetting(_) | SimError::EmptyCampaign => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::DegenerateCovariate | EvalError::NonFinite => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COSINOR_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

fn out_writer(path: Option<&PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)
                .map_err(|e| CliError::Data(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(std::io::BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::stdout())),
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate {
            setting,
            trials,
            seed,
            fit,
            step6_weights,
            realign,
            out,
        } => cmd_simulate(setting, trials, seed, &fit, step6_weights, realign, out),
        Command::Fit {
            input,
            fit,
            use_ict,
            out,
        } => cmd_fit(&input, &fit, use_ict, out),
        Command::Adjust {
            input,
            fit,
            step6_weights,
            realign,
            out,
            out_fits,
        } => cmd_adjust(&input, &fit, step6_weights, realign, out, out_fits),
        Command::Evaluate {
            fits_a,
            fits_b,
            genes,
            r2,
            out,
            scatter,
        } => cmd_evaluate(&fits_a, &fits_b, genes, r2, out, scatter),
    }
}

fn cmd_simulate(
    setting: u8,
    trials: usize,
    seed: u64,
    fit: &FitOptions,
    step6_weights: Step6Arg,
    realign: bool,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let setting = SimSetting::preset(setting)?;
    let config = AdjustConfig {
        em: fit.em_config(),
        step6_weights: step6_weights.into(),
        realign,
    };
    info!(
        "running setting {} with {} trials, seed {}",
        setting.id, trials, seed
    );
    let table = run_campaign_with(&setting, trials, &Framework::ALL, seed, &config)?;
    let mut w = out_writer(out.as_ref())?;
    w.write_all(table.to_tsv().as_bytes())
        .map_err(|e| CliError::Data(e.to_string()))?;
    w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(())
}

fn report_ingest_notes(report: &IngestReport) {
    if report.dropped_missing > 0 {
        warn!(
            "dropped {} rows with missing expression",
            report.dropped_missing
        );
    }
    for (gene, reason) in &report.excluded_genes {
        warn!("excluded gene {gene}: {reason}");
    }
}

/// Keeps only individuals with a known offset and shifts their times onto
/// the internal scale.
fn apply_ict(report: &IngestReport) -> Result<GeneMatrix, CliError> {
    let matrix = &report.matrix;
    let kept: Vec<usize> = (0..matrix.n_individuals())
        .filter(|&i| report.ict_offsets[i].is_some())
        .collect();
    if kept.is_empty() {
        return Err(CliError::Data(
            "no individual has an ict_offset_hours value".to_string(),
        ));
    }
    if kept.len() < matrix.n_individuals() {
        warn!(
            "excluding {} individuals without ict offsets",
            matrix.n_individuals() - kept.len()
        );
    }
    let data: Vec<Vec<LongitudinalSeries>> = (0..matrix.n_genes())
        .map(|g| {
            kept.iter()
                .map(|&i| {
                    let s = &matrix.series(g)[i];
                    let offset = report.ict_offsets[i].unwrap();
                    let times = s.times.iter().map(|t| t + offset).collect();
                    LongitudinalSeries::new(s.individual_id.clone(), times, s.values.clone())
                        .map_err(|e| CliError::Data(e.to_string()))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    GeneMatrix::new(matrix.gene_ids().to_vec(), data).map_err(|e| CliError::Data(e.to_string()))
}

fn fit_records(matrix: &GeneMatrix, em: &EmConfig) -> Vec<FitRecord> {
    (0..matrix.n_genes())
        .into_par_iter()
        .map(|g| {
            let gene = &matrix.gene_ids()[g];
            match em_fit(matrix.series(g), em) {
                Ok(fit) => FitRecord::success(gene, &fit),
                Err(e) => FitRecord::failure(gene, e.to_string()),
            }
        })
        .collect()
}

fn cmd_fit(
    input: &Path,
    fit: &FitOptions,
    use_ict: bool,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let report = read_expression_csv(input)?;
    report_ingest_notes(&report);
    let matrix = if use_ict {
        apply_ict(&report)?
    } else {
        report.matrix.clone()
    };
    let mut records = fit_records(&matrix, &fit.em_config());
    for (gene, reason) in &report.excluded_genes {
        records.push(FitRecord::failure(gene, format!("excluded: {reason}")));
    }
    if !records.iter().any(FitRecord::is_ok) {
        return Err(CliError::Numerical(
            "no gene could be fitted".to_string(),
        ));
    }
    write_fit_report(out_writer(out.as_ref())?, &records)?;
    Ok(())
}

fn cmd_adjust(
    input: &Path,
    fit: &FitOptions,
    step6_weights: Step6Arg,
    realign: bool,
    out: Option<PathBuf>,
    out_fits: Option<PathBuf>,
) -> Result<(), CliError> {
    let report = read_expression_csv(input)?;
    report_ingest_notes(&report);
    let config = AdjustConfig {
        em: fit.em_config(),
        step6_weights: step6_weights.into(),
        realign,
    };
    let (adjustment, refits) = run_adjustment(&report.matrix, &config)?;
    for excluded in &adjustment.excluded_genes {
        warn!(
            "gene {} excluded from translation: {}",
            excluded.gene, excluded.reason
        );
    }
    let matrix = &report.matrix;
    let translations: Vec<AdjustmentRecord> = matrix
        .individual_ids()
        .iter()
        .zip(&adjustment.d_tilde)
        .map(|(id, &d)| AdjustmentRecord {
            individual_id: id.clone(),
            d_tilde_hours: d,
        })
        .collect();
    write_adjustment_report(out_writer(out.as_ref())?, &translations)?;

    let refit_records: Vec<FitRecord> = matrix
        .gene_ids()
        .iter()
        .zip(&refits)
        .map(|(gene, refit)| match refit {
            Some(fit) => FitRecord::success(gene, fit),
            None => FitRecord::failure(gene, "refit failed"),
        })
        .collect();
    write_fit_report(out_writer(out_fits.as_ref())?, &refit_records)?;
    Ok(())
}

/// Validated pairs plus the per-gene (id, x, y) rows behind them.
type PairedData = (PairedQuantities, Vec<(String, f64, f64)>);

/// Joins two reports on gene id, keeping fits_a's order, and pairs a
/// quantity extracted from each.
fn paired(
    a: &[FitRecord],
    b: &[FitRecord],
    get: impl Fn(&FitRecord) -> Option<f64>,
) -> Result<PairedData, CliError> {
    let b_by_gene: HashMap<&str, &FitRecord> =
        b.iter().map(|r| (r.gene_id.as_str(), r)).collect();
    let mut ids = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = Vec::new();
    for ra in a {
        let (Some(x), Some(rb)) = (
            ra.is_ok().then(|| get(ra)).flatten(),
            b_by_gene.get(ra.gene_id.as_str()),
        ) else {
            continue;
        };
        let Some(y) = rb.is_ok().then(|| get(rb)).flatten() else {
            continue;
        };
        ids.push(ra.gene_id.clone());
        xs.push(x);
        ys.push(y);
        rows.push((ra.gene_id.clone(), x, y));
    }
    if ids.len() < a.len() {
        warn!(
            "{} of {} genes paired; the rest were missing or failed in one report",
            ids.len(),
            a.len()
        );
    }
    Ok((PairedQuantities::new(ids, xs, ys)?, rows))
}

fn cmd_evaluate(
    fits_a: &Path,
    fits_b: &Path,
    genes: Option<PathBuf>,
    r2: R2Arg,
    out: Option<PathBuf>,
    scatter: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut a = read_fit_report(fits_a)?;
    let mut b = read_fit_report(fits_b)?;
    if let Some(path) = genes {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let keep: HashSet<String> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        a = gene_filter(&a, |r| r.gene_id.as_str(), &keep)?;
        b = gene_filter(&b, |r| r.gene_id.as_str(), &keep)?;
    }
    let convention = match r2 {
        R2Arg::Uncentered => R2Convention::Uncentered,
        R2Arg::Centered => R2Convention::Centered,
    };
    type Getter = fn(&FitRecord) -> Option<f64>;
    let quantities: [(&str, Getter); 2] = [("theta1", |r| r.theta1), ("tau", |r| r.tau)];
    let mut records = Vec::new();
    let mut scatter_rows: Vec<(String, String, f64, f64, f64)> = Vec::new();
    for (name, get) in quantities {
        let (pairs, rows) = paired(&a, &b, get)?;
        let fit = gamma_fit_with(&pairs, convention);
        records.push(EvalRecord {
            quantity: name.to_string(),
            gamma_hat: fit.gamma_hat,
            r2: fit.r2,
            n: fit.n,
        });
        for (gene, x, y) in rows {
            scatter_rows.push((name.to_string(), gene, x, y, fit.gamma_hat));
        }
    }
    write_eval_report(out_writer(out.as_ref())?, &records)?;
    if let Some(path) = scatter {
        let mut w = csv::Writer::from_writer(out_writer(Some(&path))?);
        w.write_record(["quantity", "gene_id", "x", "y", "gamma_hat"])
            .map_err(|e| CliError::Data(e.to_string()))?;
        for (quantity, gene, x, y, gamma) in scatter_rows {
            w.write_record([
                quantity,
                gene,
                format!("{x:.16e}"),
                format!("{y:.16e}"),
                format!("{gamma:.16e}"),
            ])
            .map_err(|e| CliError::Data(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(())
}
