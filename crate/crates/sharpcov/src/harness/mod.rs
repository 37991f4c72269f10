//! Monte-Carlo experiment harness.
//!
//! Sweeps dimensions, runs trials across the covariance estimators, and
//! aggregates per-trial metrics into the study's tables and figures.
//! Trials execute in a parallel pool; every trial owns its named seed
//! streams and results are merged in `(p, estimator, trial)` order, so the
//! degree of parallelism never changes a single output byte.

mod output;
mod verify;

pub use verify::{verify_suite, CheckResult, VerifyReport};

use nalgebra::DVector;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::bias::{opt_bias, phi_estimator};
use crate::correction::{
    assemble_model, correct_flat, correct_sharp, pca_basis, BasisKind, CorrectedBasis,
};
use crate::error::{Error, Result};
use crate::optimize::{evaluate, true_min_variance, QuadProblem};
use crate::simmodel::{
    calibrate, simulate_panel, stream_rng, truth_slice, PopulationModel, StreamId, TruthSlice,
};
use crate::spectra::{make_centering, sample_spectrum, CenteringProjector, KappaMode};

/// Experiment grid and output destination.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Ascending panel dimensions; the population is calibrated at the largest.
    pub p_list: Vec<usize>,
    /// Observations per panel.
    pub n: usize,
    /// Number of spikes.
    pub q: usize,
    /// Monte-Carlo trials.
    pub trials: usize,
    /// Master seed for every named stream.
    pub seed: u64,
    /// Whether panels are mean-centered before the spectrum is taken.
    pub centering: bool,
    /// Bulk noise estimate variant.
    pub kappa_mode: KappaMode,
    /// Estimators to evaluate.
    pub estimators: Vec<BasisKind>,
    pub c0: f64,
    pub c1: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            p_list: vec![500, 2000, 8000],
            n: 120,
            q: 7,
            trials: 200,
            seed: 20240,
            centering: true,
            kappa_mode: KappaMode::Mp,
            estimators: vec![BasisKind::Pca, BasisKind::Flat, BasisKind::Sharp],
            c0: 1.0,
            c1: 1.0,
            output_dir: PathBuf::from("sharpcov_out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_list.is_empty() {
            return Err(Error::Config("p_list must not be empty".into()));
        }
        if self.p_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("p_list must be strictly ascending".into()));
        }
        if self.trials < 1 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.q < 1 {
            return Err(Error::Config("q must be at least 1".into()));
        }
        let n_plus = if self.centering { self.n - 1 } else { self.n };
        if self.n < 2 || n_plus <= self.q {
            return Err(Error::Config(format!(
                "n = {} leaves {} nonzero eigenvalues, need more than q = {}",
                self.n, n_plus, self.q
            )));
        }
        if self.p_list[0] <= self.q {
            return Err(Error::Config(format!(
                "smallest dimension {} must exceed q = {}",
                self.p_list[0], self.q
            )));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("estimators must not be empty".into()));
        }
        if self.c1 == 0.0 {
            return Err(Error::Config("c1 must be nonzero".into()));
        }
        Ok(())
    }

    fn p_max(&self) -> usize {
        *self.p_list.last().unwrap()
    }
}

/// Per-trial metrics for one `(p, estimator)` cell.
#[derive(Debug, Clone)]
pub struct TrialMetrics {
    pub p: usize,
    pub estimator: BasisKind,
    pub trial: usize,
    /// Realized out-of-sample volatility (percent annualized).
    pub v_p: f64,
    pub d_hat: f64,
    pub q_hat: f64,
    pub q_realized: f64,
    /// Bias length against the population basis.
    pub abs_bias: f64,
    /// Data-only bias length estimate (same value for every estimator of a
    /// trial; it depends on the sample spectrum alone).
    pub abs_phi: f64,
    /// Spectral norm of `H^T scrB scrB^T H - diag`.
    pub projection_err: f64,
    /// Spectral norm of the squared-projection diagonal.
    pub diag_norm: f64,
    /// True minimum volatility at this dimension (percent annualized).
    pub sigma_min: f64,
    /// `p |E_p|^2`.
    pub scaled_bias_sq: f64,
}

impl TrialMetrics {
    fn is_finite(&self) -> bool {
        [
            self.v_p,
            self.d_hat,
            self.q_hat,
            self.q_realized,
            self.abs_bias,
            self.abs_phi,
            self.projection_err,
            self.diag_norm,
            self.sigma_min,
            self.scaled_bias_sq,
        ]
        .iter()
        .all(|v| v.is_finite())
            && self.v_p >= 0.0
    }
}

/// Mean, standard deviation of the trial distribution, and standard error
/// of the mean.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
}

impl Stat {
    fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Stat {
                mean: f64::NAN,
                sd: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let sd = if count > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        Stat {
            mean,
            sd,
            se: sd / (count as f64).sqrt(),
        }
    }
}

/// Aggregated trial statistics for one `(p, estimator)` cell.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub p: usize,
    pub estimator: BasisKind,
    pub count: usize,
    pub v_p: Stat,
    pub d_hat: Stat,
    pub q_hat: Stat,
    pub q_realized: Stat,
    pub abs_bias: Stat,
    pub abs_phi: Stat,
    pub projection_err: Stat,
    pub diag_norm: Stat,
    pub scaled_bias_sq: Stat,
}

/// Ground-truth constants at one dimension.
#[derive(Debug, Clone)]
pub struct TruthDiagnostics {
    pub p: usize,
    /// True minimum volatility (percent annualized).
    pub sigma_min: f64,
    /// `<zeta, Sigma^-1 zeta>`.
    pub mu_sq: f64,
    /// True maximum of the quadratic.
    pub true_max: f64,
}

/// Everything a run produced, as returned to library callers; the same data
/// is written to the output directory.
#[derive(Debug)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub rows: Vec<TrialMetrics>,
    pub aggregates: Vec<Aggregate>,
    pub truth: Vec<TruthDiagnostics>,
    /// `(p, trial)` evaluations attempted and skipped due to numerical
    /// failures.
    pub attempted: usize,
    pub skipped: usize,
}

impl RunSummary {
    pub fn aggregate(&self, p: usize, estimator: BasisKind) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.p == p && a.estimator == estimator)
    }

    pub fn truth_at(&self, p: usize) -> Option<&TruthDiagnostics> {
        self.truth.iter().find(|t| t.p == p)
    }
}

struct TrialOutcome {
    rows: Vec<TrialMetrics>,
    skipped: Vec<(usize, usize, String)>, // (p, trial, reason)
}

/// Runs the full experiment described by `config` and writes the result
/// set (per-trial CSV, aggregate tables, figures, population snapshot and
/// manifest) into `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    let population = calibrate(config.p_max(), config.seed);
    run_with_population(config, &population)
}

/// Same as [`run_experiment`] but reuses an already calibrated population,
/// which lets callers replay a run from an audited snapshot.
pub fn run_with_population(
    config: &ExperimentConfig,
    population: &PopulationModel,
) -> Result<RunSummary> {
    config.validate()?;
    if population.p_max < config.p_max() {
        return Err(Error::Config(format!(
            "population calibrated at {} cannot cover p = {}",
            population.p_max,
            config.p_max()
        )));
    }

    let centering = if config.centering {
        make_centering(config.n, None)?
    } else {
        CenteringProjector::identity(config.n)
    };

    // Ground truth per dimension, shared read-only across trials.
    let mut slices: Vec<TruthSlice> = Vec::with_capacity(config.p_list.len());
    let mut truth_models = Vec::with_capacity(config.p_list.len());
    let mut truth_diag = Vec::with_capacity(config.p_list.len());
    for &p in &config.p_list {
        let slice = truth_slice(population, p)?;
        let cov = slice.covariance()?;
        let ones = DVector::from_element(p, 1.0);
        let sigma_min_sq = true_min_variance(&cov, &ones)?;
        let mu_sq = 1.0 / sigma_min_sq;
        truth_diag.push(TruthDiagnostics {
            p,
            sigma_min: sigma_min_sq.sqrt(),
            mu_sq,
            true_max: config.c0 + config.c1 * config.c1 * mu_sq / 2.0,
        });
        slices.push(slice);
        truth_models.push(cov);
    }
    let alpha_max = population.alpha.rows(0, config.p_max()).into_owned();
    let slice_max = slices.last().unwrap();

    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            run_trial(
                config,
                trial,
                &centering,
                slice_max,
                &alpha_max,
                &slices,
                &truth_models,
                &truth_diag,
            )
        })
        .collect();

    let mut rows: Vec<TrialMetrics> = Vec::new();
    let mut skipped = 0usize;
    for outcome in outcomes {
        for (p, trial, reason) in &outcome.skipped {
            log::warn!("skipping trial {trial} at p = {p}: {reason}");
            skipped += 1;
        }
        rows.extend(outcome.rows);
    }
    let estimator_rank = |k: BasisKind| config.estimators.iter().position(|e| *e == k).unwrap();
    rows.sort_by_key(|r| (r.p, estimator_rank(r.estimator), r.trial));

    let aggregates = aggregate_rows(config, &rows);
    let attempted = config.trials * config.p_list.len();
    let summary = RunSummary {
        config: config.clone(),
        rows,
        aggregates,
        truth: truth_diag,
        attempted,
        skipped,
    };

    output::write_outputs(&summary, population)?;

    if skipped * 100 > attempted {
        return Err(Error::TooManySkips {
            failed: skipped,
            attempted,
        });
    }
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_trial(
    config: &ExperimentConfig,
    trial: usize,
    centering: &CenteringProjector,
    slice_max: &TruthSlice,
    alpha_max: &DVector<f64>,
    slices: &[TruthSlice],
    truth_models: &[crate::correction::CovarianceModel],
    truth_diag: &[TruthDiagnostics],
) -> TrialOutcome {
    let mut outcome = TrialOutcome {
        rows: Vec::with_capacity(config.p_list.len() * config.estimators.len()),
        skipped: Vec::new(),
    };
    let mut factors = stream_rng(config.seed, StreamId::TrialFactors(trial as u64));
    let mut noise = stream_rng(config.seed, StreamId::TrialNoise(trial as u64));
    let panel = match simulate_panel(slice_max, alpha_max, config.n, &mut factors, &mut noise) {
        Ok(panel) => panel,
        Err(e) => {
            for &p in &config.p_list {
                outcome.skipped.push((p, trial, e.to_string()));
            }
            return outcome;
        }
    };

    for (idx, &p) in config.p_list.iter().enumerate() {
        match evaluate_dimension(
            config,
            trial,
            &panel,
            centering,
            p,
            &slices[idx],
            &truth_models[idx],
            &truth_diag[idx],
        ) {
            Ok(mut rows) => outcome.rows.append(&mut rows),
            Err(e) => outcome.skipped.push((p, trial, e.to_string())),
        }
    }
    outcome
}

#[allow(clippy::too_many_arguments)]
fn evaluate_dimension(
    config: &ExperimentConfig,
    trial: usize,
    panel: &crate::spectra::DataMatrix,
    centering: &CenteringProjector,
    p: usize,
    slice: &TruthSlice,
    truth: &crate::correction::CovarianceModel,
    diag: &TruthDiagnostics,
) -> Result<Vec<TrialMetrics>> {
    let sub = panel.top_rows(p)?;
    let spec = sample_spectrum(&sub, centering, config.q, config.kappa_mode)?;
    let zeta = DVector::from_element(p, 1.0);
    let abs_phi = phi_estimator(&spec, &zeta)?.norm();

    let mut rows = Vec::with_capacity(config.estimators.len());
    for &kind in &config.estimators {
        let basis: CorrectedBasis = match kind {
            BasisKind::Pca => pca_basis(&spec),
            BasisKind::Flat => correct_flat(&spec, &zeta)?,
            BasisKind::Sharp => correct_sharp(&spec, &zeta)?,
        };
        let model = assemble_model(&basis, &spec)?;
        let problem = QuadProblem {
            c0: config.c0,
            c1: config.c1,
            zeta: zeta.clone(),
            model,
        };
        let report = evaluate(&problem, truth)?;
        let bias = opt_bias(&slice.scrb, basis.vectors(), &zeta)?;

        // spectral norms of H^T scrB scrB^T H - diag and of the diagonal
        let cross = slice.scrb.vectors().tr_mul(basis.vectors());
        let mut proj = cross.tr_mul(&cross);
        for j in 0..config.q {
            proj[(j, j)] -= basis.phi_sq()[j];
        }
        let projection_err = proj
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        let diag_norm = basis.phi_sq().amax();

        let abs_bias = bias.norm();
        let row = TrialMetrics {
            p,
            estimator: kind,
            trial,
            v_p: report.v_sq.sqrt(),
            d_hat: report.d_hat,
            q_hat: report.q_hat,
            q_realized: report.q_realized,
            abs_bias,
            abs_phi,
            projection_err,
            diag_norm,
            sigma_min: diag.sigma_min,
            scaled_bias_sq: p as f64 * abs_bias * abs_bias,
        };
        if !row.is_finite() {
            return Err(Error::NonFinite(format!(
                "{} metrics at p = {p}",
                kind.label()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn aggregate_rows(config: &ExperimentConfig, rows: &[TrialMetrics]) -> Vec<Aggregate> {
    let mut cells: BTreeMap<(usize, usize), Vec<&TrialMetrics>> = BTreeMap::new();
    let estimator_rank = |k: BasisKind| config.estimators.iter().position(|e| *e == k).unwrap();
    for row in rows {
        cells
            .entry((row.p, estimator_rank(row.estimator)))
            .or_default()
            .push(row);
    }
    cells
        .into_iter()
        .map(|((p, rank), cell)| {
            let pick = |f: fn(&TrialMetrics) -> f64| {
                Stat::from_values(&cell.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            Aggregate {
                p,
                estimator: config.estimators[rank],
                count: cell.len(),
                v_p: pick(|r| r.v_p),
                d_hat: pick(|r| r.d_hat),
                q_hat: pick(|r| r.q_hat),
                q_realized: pick(|r| r.q_realized),
                abs_bias: pick(|r| r.abs_bias),
                abs_phi: pick(|r| r.abs_phi),
                projection_err: pick(|r| r.projection_err),
                diag_norm: pick(|r| r.diag_norm),
                scaled_bias_sq: pick(|r| r.scaled_bias_sq),
            }
        })
        .collect()
}
