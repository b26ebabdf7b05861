//! Monte Carlo benchmark harness: per-trial data generation, threshold and
//! penalty selection, fitting, and aggregation of ℓ2 estimation errors.
//!
//! Every trial is a pure function of the configuration and its indices. Seeds
//! are derived from `base_seed`, the feature law, `n` and the trial index, so
//! all methods in a cell see the same datasets and results do not depend on
//! the number of worker threads.

pub mod config;
pub mod cv;
pub mod lrsc;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, ArrayView1};

use crate::datagen::{flip_labels, gen_features, gen_linear, gen_logistic, make_beta, CorruptionSpec, FeatureDist};
use crate::dataset::{fmt_full, Dataset};
use crate::error::{Error, Result};
use crate::glm::{Family, Loss};
use crate::linalg::l2_norm;
use crate::optimize::{default_lambda, minimize_l1, minimize_smooth, FitResult, SolverOpts};
use crate::rng::derive_seed;
use crate::shrink::{apply_shrink, default_tau, ShrinkSpec};

pub use config::{CvSettings, EstimatorKind, ExperimentConfig, MethodSpec, ModelKind, Selection};
pub use cv::{cross_validate, CvGrid, CvOutcome, CvPoint, CvTask};
pub use lrsc::{lrsc_probe, LrscProbe};

/// Euclidean distance between an estimate and the truth.
pub fn l2_error(beta_hat: ArrayView1<'_, f64>, beta_star: ArrayView1<'_, f64>) -> Result<f64> {
    if beta_hat.len() != beta_star.len() {
        return Err(Error::shape(format!(
            "estimate has length {}, truth has length {}",
            beta_hat.len(),
            beta_star.len()
        )));
    }
    Ok(l2_norm((&beta_hat - &beta_star).view()))
}

/// Generates the dataset of one Monte Carlo trial.
pub fn trial_dataset(config: &ExperimentConfig, n: usize, dist: FeatureDist, trial: usize) -> Result<Dataset<f64>> {
    let beta_star = make_beta(config.d, &config.beta)?;
    let seed = derive_seed(config.base_seed, &format!("data/{dist}"), &[n as u64, trial as u64]);
    let x = gen_features(n, config.d, dist, seed)?;
    match config.model.family() {
        Family::Linear => gen_linear(x, beta_star.view(), &config.corruption, seed),
        Family::Logistic => {
            let data = gen_logistic(x, beta_star.view(), seed)?;
            match config.corruption {
                CorruptionSpec::LabelFlip { flip_p } => flip_labels(&data, flip_p, seed),
                _ => Ok(data),
            }
        }
    }
}

/// Thresholds and penalty a method uses on a given dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedMethod {
    pub loss: Loss,
    pub shrink: ShrinkSpec,
    pub lambda: Option<f64>,
    pub cv: Option<CvOutcome>,
}

/// Turns the method's selections into concrete values for `data`, running
/// cross-validation when any selection is a grid.
pub fn resolve_method(
    config: &ExperimentConfig,
    method: &MethodSpec,
    data: &Dataset<f64>,
    cv_seed: u64,
) -> Result<ResolvedMethod> {
    let loss = method.loss(config)?;
    let n = data.n() as f64;
    let tau_base = default_tau(n, config.model.tau_scale(data.d()), 1.0)?;
    let tau1 = method.tau1_selection().map(|s| s.candidates(tau_base));
    let tau2 = method.tau2_selection().map(|s| s.candidates(tau_base));
    let lambda = match method.lambda_selection() {
        Some(s) => Some(s.candidates(default_lambda(data.n(), data.d(), 1.0)?)),
        None => None,
    };
    let mut shrink = ShrinkSpec {
        feature_mode: method.feature_mode,
        tau1: f64::INFINITY,
        response_mode: method.response_mode,
        tau2: f64::INFINITY,
        preserve_response_sign: method.preserve_sign,
    };
    if !method.needs_cv() {
        shrink.tau1 = tau1.map_or(f64::INFINITY, |v| v[0]);
        shrink.tau2 = tau2.map_or(f64::INFINITY, |v| v[0]);
        return Ok(ResolvedMethod {
            loss,
            shrink,
            lambda: lambda.map(|v| v[0]),
            cv: None,
        });
    }
    let task = CvTask {
        loss,
        penalized: method.estimator.is_penalized(),
        feature_mode: method.feature_mode,
        response_mode: method.response_mode,
        preserve_sign: method.preserve_sign,
    };
    let grid = CvGrid {
        tau1: tau1.unwrap_or_default(),
        tau2: tau2.unwrap_or_default(),
        lambda: lambda.clone().unwrap_or_default(),
        paired: method.tie_thresholds,
    };
    let cv_opts = config.solver.with_tol(config.cv.grad_tol.max(config.solver.grad_tol));
    let outcome = cross_validate(data, &task, &grid, config.cv.folds, cv_seed, &cv_opts)?;
    shrink.tau1 = outcome.tau1;
    shrink.tau2 = outcome.tau2;
    Ok(ResolvedMethod {
        loss,
        shrink,
        lambda: lambda.map(|_| outcome.lambda),
        cv: Some(outcome),
    })
}

/// Fits a resolved method on raw `data` (shrinkage is applied here).
pub fn fit_resolved(resolved: &ResolvedMethod, data: &Dataset<f64>, opts: &SolverOpts) -> Result<FitResult<f64>> {
    let shrunk = apply_shrink(data, &resolved.shrink)?;
    match resolved.lambda {
        Some(lambda) => minimize_l1(&resolved.loss, &shrunk, lambda, opts),
        None => minimize_smooth(&resolved.loss, &shrunk, opts),
    }
}

/// Why a trial produced no error value.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialFailure {
    Diverged,
    NotConverged { residual: f64 },
    Error(String),
}

impl std::fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrialFailure::Diverged => write!(f, "solver diverged"),
            TrialFailure::NotConverged { residual } => write!(f, "not converged (residual {residual:e})"),
            TrialFailure::Error(e) => write!(f, "{e}"),
        }
    }
}

fn cv_seed(config: &ExperimentConfig, method: &MethodSpec, dist: FeatureDist, n: usize, trial: usize) -> u64 {
    derive_seed(config.base_seed, &format!("cv/{}/{dist}", method.id), &[n as u64, trial as u64])
}

fn score(
    config: &ExperimentConfig,
    method: &MethodSpec,
    data: &Dataset<f64>,
    beta_star: &Array1<f64>,
    seed: u64,
) -> std::result::Result<f64, TrialFailure> {
    let fail = |e: Error| match e {
        Error::Diverged { .. } => TrialFailure::Diverged,
        other => TrialFailure::Error(other.to_string()),
    };
    let resolved = resolve_method(config, method, data, seed).map_err(fail)?;
    let fit = fit_resolved(&resolved, data, &config.solver).map_err(fail)?;
    if !fit.converged {
        return Err(TrialFailure::NotConverged {
            residual: fit.final_residual,
        });
    }
    l2_error(fit.beta_hat.view(), beta_star.view()).map_err(fail)
}

/// ℓ2 error of one method on one trial of one cell.
pub fn run_trial(
    config: &ExperimentConfig,
    n: usize,
    dist: FeatureDist,
    method: &MethodSpec,
    trial: usize,
) -> std::result::Result<f64, TrialFailure> {
    let data = trial_dataset(config, n, dist, trial).map_err(|e| TrialFailure::Error(e.to_string()))?;
    let beta_star = make_beta(config.d, &config.beta).map_err(|e| TrialFailure::Error(e.to_string()))?;
    score(config, method, &data, &beta_star, cv_seed(config, method, dist, n, trial))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub method: usize,
    pub dist: usize,
    pub n: usize,
    pub trial: usize,
    pub outcome: std::result::Result<f64, TrialFailure>,
}

/// Runs every (feature law, n, trial) job on `workers` threads; records come
/// back in job order whatever the thread count.
pub fn run_trials(config: &ExperimentConfig, workers: usize) -> Result<Vec<TrialRecord>> {
    use rayon::prelude::*;

    config.validate()?;
    let beta_star = make_beta(config.d, &config.beta)?;
    let mut jobs = Vec::new();
    for dist in 0..config.feature_dists.len() {
        for &n in &config.n_grid {
            for trial in 0..config.trials {
                jobs.push((dist, n, trial));
            }
        }
    }
    let run_job = |&(dist_idx, n, trial): &(usize, usize, usize)| -> Vec<TrialRecord> {
        let dist = config.feature_dists[dist_idx];
        let data = trial_dataset(config, n, dist, trial);
        config
            .methods
            .iter()
            .enumerate()
            .map(|(m, method)| {
                let outcome = match &data {
                    Ok(data) => score(config, method, data, &beta_star, cv_seed(config, method, dist, n, trial)),
                    Err(e) => Err(TrialFailure::Error(e.to_string())),
                };
                TrialRecord {
                    method: m,
                    dist: dist_idx,
                    n,
                    trial,
                    outcome,
                }
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid_param(format!("cannot start worker pool: {e}")))?;
    let nested: Vec<Vec<TrialRecord>> = pool.install(|| jobs.par_iter().map(run_job).collect());
    Ok(nested.into_iter().flatten().collect())
}

/// Aggregates trial records into one row per (method, feature law, n).
pub fn aggregate(config: &ExperimentConfig, records: &[TrialRecord]) -> ErrorTable {
    let mut rows = Vec::new();
    for (m, method) in config.methods.iter().enumerate() {
        for (k, dist) in config.feature_dists.iter().enumerate() {
            for &n in &config.n_grid {
                let mut cell: Vec<&TrialRecord> = records
                    .iter()
                    .filter(|r| r.method == m && r.dist == k && r.n == n)
                    .collect();
                cell.sort_by_key(|r| r.trial);
                let errors: Vec<f64> = cell.iter().filter_map(|r| r.outcome.as_ref().ok().copied()).collect();
                let failures = cell.len() - errors.len();
                let (mean, stderr) = mean_and_stderr(&errors);
                rows.push(ErrorRow {
                    method: method.id.clone(),
                    feature_dist: dist.to_string(),
                    n,
                    mean_l2_error: mean,
                    stderr,
                    trials: errors.len(),
                    failures,
                });
            }
        }
    }
    ErrorTable { rows }
}

/// Sample mean and `sd/√k`; `(NaN, NaN)` when empty and zero spread for a
/// single value.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, (var / k as f64).sqrt())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ErrorTable> {
    run_experiment_with_workers(config, 1)
}

pub fn run_experiment_with_workers(config: &ExperimentConfig, workers: usize) -> Result<ErrorTable> {
    let records = run_trials(config, workers)?;
    Ok(aggregate(config, &records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub method: String,
    pub feature_dist: String,
    pub n: usize,
    pub mean_l2_error: f64,
    pub stderr: f64,
    /// Successful trials.
    pub trials: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub const HEADER: &'static str = "method,feature_dist,n,mean_l2_error,stderr,trials,failures";

    pub fn row(&self, method: &str, feature_dist: &str, n: usize) -> Option<&ErrorRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.feature_dist == feature_dist && r.n == n)
    }

    pub fn total_trials(&self) -> usize {
        self.rows.iter().map(|r| r.trials + r.failures).sum()
    }

    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.method,
                r.feature_dist,
                r.n,
                fmt_full(r.mean_l2_error),
                fmt_full(r.stderr),
                r.trials,
                r.failures
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}
