//! `heavyglm`: batch commands for simulation, fitting, cross-validation,
//! benchmarking and the restricted strong convexity diagnostic.
//!
//! Exit codes: 0 success, 1 I/O or data error, 2 usage or config error,
//! 3 solver non-convergence.

mod args;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array1;
use serde::Serialize;

use heavyglm::bench::{
    cross_validate, lrsc_probe, run_experiment_with_workers, CvGrid, CvTask, ExperimentConfig, Selection,
};
use heavyglm::datagen::{flip_labels, gen_features, gen_linear, gen_logistic, make_beta, BetaPattern, CorruptionSpec, FeatureDist};
use heavyglm::linalg::{l1_norm, l2_norm, sup_norm};
use heavyglm::optimize::{default_lambda, minimize_l1, minimize_smooth};
use heavyglm::shrink::{apply_shrink, default_tau};
use heavyglm::{Dataset64, Error, Family, FeatureMode, Loss, ResponseMode, ShrinkSpec, SolverOpts, TauScale};

use args::{CvEstimator, FeatureShrink, FitEstimator, ResponseClip};
use output::{print_resolved, sig6};

#[derive(Parser, Debug)]
#[command(name = "heavyglm", version, about = "Robust GLM estimation under heavy-tailed features and corrupted responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Shrink a dataset and fit one estimator.
    Fit(FitArgs),
    /// Cross-validate thresholds and penalty on a dataset.
    Cv(CvArgs),
    /// Run a Monte Carlo experiment from a config file.
    Bench(BenchArgs),
    /// Probe restricted strong convexity around a coefficient vector.
    Lrsc(LrscArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Model {
    Linear,
    Logistic,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// five_ones, half_pm_half, sparse_pm1 or a comma-separated list.
    #[arg(long)]
    beta: BetaPattern,
    /// gaussian or t:NU
    #[arg(long, default_value = "gaussian")]
    feature_dist: FeatureDist,
    /// Linear model only (default gaussian).
    #[arg(long)]
    noise_dist: Option<FeatureDist>,
    /// Linear model only (default 1).
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Logistic model only (default 0).
    #[arg(long)]
    flip_p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    family: Family,
    #[arg(long)]
    data: PathBuf,
    /// none, l4:TAU, l2:TAU or clip:TAU (TAU may be `auto`).
    #[arg(long, default_value = "none", value_parser = args::parse_shrink)]
    shrink: FeatureShrink,
    /// none, TAU or TAU:nosign (TAU may be `auto`).
    #[arg(long, default_value = "none", value_parser = args::parse_clip_response)]
    clip_response: ResponseClip,
    /// mle, weighted:P, l1:LAMBDA or weighted_l1:P:LAMBDA (LAMBDA may be `auto`).
    #[arg(long, default_value = "mle", value_parser = args::parse_fit_estimator)]
    estimator: FitEstimator,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Fit record destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    family: Family,
    /// mle, weighted:P, l1 or weighted_l1:P
    #[arg(long, default_value = "mle", value_parser = args::parse_cv_estimator)]
    estimator: CvEstimator,
    /// Feature shrinkage searched over `--tau-grid`: none, l4, l2 or clip.
    #[arg(long, default_value = "none", value_parser = args::feature_mode)]
    shrink: FeatureMode,
    /// Response clipping searched over `--tau2-grid`: none, clip or clip:nosign.
    #[arg(long, default_value = "none")]
    clip_response: String,
    /// Entries are values, `inf`, or `<m>x` multiples of the schedule.
    #[arg(long, default_value = "0.25x,0.5x,1x,2x,4x,inf", value_delimiter = ',', value_parser = args::grid_entry)]
    tau_grid: Vec<Selection>,
    #[arg(long, default_value = "0.25x,0.5x,1x,2x,4x,inf", value_delimiter = ',', value_parser = args::grid_entry)]
    tau2_grid: Vec<Selection>,
    /// Search `--tau-grid` for both thresholds in lockstep; `--tau2-grid` is ignored.
    #[arg(long)]
    paired: bool,
    #[arg(long, default_value = "0.25x,0.5x,1x,2x,4x", value_delimiter = ',', value_parser = args::grid_entry)]
    lambda_grid: Vec<Selection>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Grid losses as CSV at full precision.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Error table CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LrscArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    family: Family,
    /// File of coefficients (comma or whitespace separated) or a pattern name.
    #[arg(long)]
    beta_star: String,
    /// Rescale the coefficient vector to this ℓ2 norm.
    #[arg(long)]
    beta_norm: Option<f64>,
    /// Probe the weighted noisy-label loss with this flip probability.
    #[arg(long)]
    flip_p: Option<f64>,
    #[arg(long)]
    radius: f64,
    #[arg(long)]
    dirs: usize,
    /// Comma-separated 0-based indices; restricts directions to the cone.
    #[arg(long, value_delimiter = ',', value_parser = args::column_index)]
    support: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    kappa_floor: Option<f64>,
}

/// Error carrying the process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter(_) | Error::Config { .. } => 2,
            Error::Diverged { .. } => 3,
            Error::InvalidInput(_) | Error::Shape(_) | Error::Row { .. } | Error::Data { .. } | Error::Io(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Cv(a) => cv(a),
        Command::Bench(a) => bench(a),
        Command::Lrsc(a) => lrsc(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load(path: &Path) -> Result<Dataset64, Failure> {
    Dataset64::load_csv(path).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    })
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let corruption = match a.model {
        Model::Linear => {
            if a.flip_p.is_some() {
                return Err(Failure::usage("--flip-p applies to the logistic model only"));
            }
            CorruptionSpec::AdditiveNoise {
                noise_dist: a.noise_dist.unwrap_or(FeatureDist::GaussianStd),
                target_sd: a.noise_sd.unwrap_or(1.0),
            }
        }
        Model::Logistic => {
            if a.noise_dist.is_some() || a.noise_sd.is_some() {
                return Err(Failure::usage("--noise-dist and --noise-sd apply to the linear model only"));
            }
            match a.flip_p {
                Some(p) => CorruptionSpec::LabelFlip { flip_p: p },
                None => CorruptionSpec::None,
            }
        }
    };
    corruption.validate()?;
    let beta = make_beta(a.d, &a.beta)?;
    print_resolved(&[
        ("command", "simulate".into()),
        ("model", format!("{:?}", a.model).to_lowercase()),
        ("n", a.n.to_string()),
        ("d", a.d.to_string()),
        ("beta", a.beta.to_string()),
        ("feature_dist", a.feature_dist.to_string()),
        ("corruption", corruption.summary()),
        ("seed", a.seed.to_string()),
        ("out", a.out.display().to_string()),
    ]);
    let x = gen_features(a.n, a.d, a.feature_dist, a.seed)?;
    let data = match a.model {
        Model::Linear => gen_linear(x, beta.view(), &corruption, a.seed)?,
        Model::Logistic => {
            let clean = gen_logistic(x, beta.view(), a.seed)?;
            match corruption {
                CorruptionSpec::LabelFlip { flip_p } => flip_labels(&clean, flip_p, a.seed)?,
                _ => clean,
            }
        }
    };
    data.save_csv(&a.out)?;
    println!("n = {}", data.n());
    println!("d = {}", data.d());
    println!("corruption = {}", corruption.summary());
    if let Some(mask) = data.flip_mask() {
        println!("flipped = {}", mask.iter().filter(|&&f| f).count());
    }
    Ok(0)
}

/// Schedule scale for a feature operator: `log d` for elementwise clipping,
/// `log n` otherwise. Response clipping follows the feature operator.
fn tau_scale(mode: FeatureMode, d: usize) -> TauScale {
    match mode {
        FeatureMode::ElementwiseClip => TauScale::LogD(d),
        _ => TauScale::LogN,
    }
}

#[derive(Serialize)]
struct FitRecord {
    family: String,
    estimator: String,
    n: usize,
    d: usize,
    feature_mode: FeatureMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau1: Option<f64>,
    response_mode: ResponseMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    tau2: Option<f64>,
    preserve_sign: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flip_p: Option<f64>,
    grad_tol: f64,
    max_iters: usize,
    converged: bool,
    iterations: usize,
    final_residual: f64,
    objective: f64,
    beta_l2_norm: f64,
    beta_hat: Vec<f64>,
}

fn fit(a: FitArgs) -> CmdResult {
    let data = load(&a.data)?;
    let (n, d) = (data.n(), data.d());
    let scale = tau_scale(a.shrink.mode, d);
    let tau1 = a
        .shrink
        .tau
        .map(|l| l.resolve(|| default_tau(n as f64, scale, 1.0)))
        .transpose()?;
    let tau2 = a
        .clip_response
        .tau
        .map(|l| l.resolve(|| default_tau(n as f64, scale, 1.0)))
        .transpose()?;
    let lambda = match a.estimator {
        FitEstimator::L1(l) | FitEstimator::WeightedL1(_, l) => Some(l.resolve(|| default_lambda(n, d, 1.0))?),
        _ => None,
    };
    let loss = Loss::new(a.family, a.estimator.flip_p())?;
    let spec = ShrinkSpec {
        feature_mode: a.shrink.mode,
        tau1: tau1.unwrap_or(f64::INFINITY),
        response_mode: a.clip_response.mode(),
        tau2: tau2.unwrap_or(f64::INFINITY),
        preserve_response_sign: a.clip_response.preserve_sign,
    };
    let opts = SolverOpts {
        max_iters: a.max_iters,
        grad_tol: a.tol,
        ..SolverOpts::default()
    };
    opts.validate()?;
    let estimator = match a.estimator {
        FitEstimator::Mle => "mle",
        FitEstimator::Weighted(_) => "weighted_mle",
        FitEstimator::L1(_) => "l1",
        FitEstimator::WeightedL1(..) => "weighted_l1",
    };
    let show = |v: Option<f64>| v.map_or("none".to_string(), sig6);
    print_resolved(&[
        ("command", "fit".into()),
        ("data", a.data.display().to_string()),
        ("family", a.family.name().into()),
        ("n", n.to_string()),
        ("d", d.to_string()),
        ("feature_mode", spec.feature_mode.name().into()),
        ("tau1", show(tau1)),
        ("response_mode", spec.response_mode.name().into()),
        ("tau2", show(tau2)),
        ("preserve_sign", spec.preserve_response_sign.to_string()),
        ("estimator", estimator.into()),
        ("flip_p", show(a.estimator.flip_p())),
        ("lambda", show(lambda)),
        ("tol", sig6(a.tol)),
        ("max_iters", a.max_iters.to_string()),
    ]);

    let shrunk = apply_shrink(&data, &spec)?;
    let result = match lambda {
        Some(l) => minimize_l1(&loss, &shrunk, l, &opts)?,
        None => minimize_smooth(&loss, &shrunk, &opts)?,
    };
    let beta_norm = l2_norm(result.beta_hat.view());
    if let Some(path) = &a.out {
        let record = FitRecord {
            family: a.family.name().into(),
            estimator: estimator.into(),
            n,
            d,
            feature_mode: spec.feature_mode,
            tau1,
            response_mode: spec.response_mode,
            tau2,
            preserve_sign: spec.preserve_response_sign,
            lambda,
            flip_p: a.estimator.flip_p(),
            grad_tol: a.tol,
            max_iters: a.max_iters,
            converged: result.converged,
            iterations: result.iterations,
            final_residual: result.final_residual,
            objective: result.objective,
            beta_l2_norm: beta_norm,
            beta_hat: result.beta_hat.to_vec(),
        };
        let text = toml::to_string(&record).map_err(|e| Failure {
            code: 1,
            message: format!("cannot encode fit record: {e}"),
        })?;
        std::fs::write(path, text).map_err(Error::from)?;
    }
    println!("beta_l2_norm = {}", sig6(beta_norm));
    println!("iterations = {}", result.iterations);
    println!("residual = {}", sig6(result.final_residual));
    println!("objective = {}", sig6(result.objective));
    println!("converged = {}", result.converged);
    Ok(if result.converged { 0 } else { 3 })
}

fn cv(a: CvArgs) -> CmdResult {
    let data = load(&a.data)?;
    let (n, d) = (data.n(), data.d());
    let (response_mode, preserve_sign) = match a.clip_response.as_str() {
        "none" => (ResponseMode::None, true),
        "clip" => (ResponseMode::Clip, true),
        "clip:nosign" => (ResponseMode::Clip, false),
        other => return Err(Failure::usage(format!("--clip-response `{other}`: expected none, clip or clip:nosign"))),
    };
    let loss = Loss::new(a.family, a.estimator.flip_p)?;
    let tau_base = default_tau(n as f64, tau_scale(a.shrink, d), 1.0)?;
    let expand = |grid: &[Selection], base: f64| -> Vec<f64> { grid.iter().flat_map(|s| s.candidates(base)).collect() };
    let grid = CvGrid {
        tau1: expand(&a.tau_grid, tau_base),
        tau2: expand(if a.paired { &a.tau_grid } else { &a.tau2_grid }, tau_base),
        lambda: if a.estimator.penalized {
            expand(&a.lambda_grid, default_lambda(n, d, 1.0)?)
        } else {
            Vec::new()
        },
        paired: a.paired,
    };
    let task = CvTask {
        loss,
        penalized: a.estimator.penalized,
        feature_mode: a.shrink,
        response_mode,
        preserve_sign,
    };
    let opts = SolverOpts {
        max_iters: a.max_iters,
        grad_tol: a.tol,
        ..SolverOpts::default()
    };
    opts.validate()?;
    let list = |v: &[f64]| v.iter().map(|x| sig6(*x)).collect::<Vec<_>>().join(",");
    let mut resolved = vec![
        ("command", "cv".to_string()),
        ("data", a.data.display().to_string()),
        ("family", a.family.name().into()),
        ("n", n.to_string()),
        ("d", d.to_string()),
        ("flip_p", a.estimator.flip_p.map_or("none".into(), sig6)),
        ("penalized", a.estimator.penalized.to_string()),
        ("feature_mode", a.shrink.name().into()),
        ("response_mode", response_mode.name().into()),
        ("preserve_sign", preserve_sign.to_string()),
        ("paired", a.paired.to_string()),
    ];
    if a.shrink != FeatureMode::None {
        resolved.push(("tau1_grid", list(&grid.tau1)));
    }
    if response_mode != ResponseMode::None {
        resolved.push(("tau2_grid", list(&grid.tau2)));
    }
    if a.estimator.penalized {
        resolved.push(("lambda_grid", list(&grid.lambda)));
    }
    resolved.extend([
        ("folds", a.folds.to_string()),
        ("seed", a.seed.to_string()),
        ("tol", sig6(a.tol)),
    ]);
    print_resolved(&resolved);

    let outcome = cross_validate(&data, &task, &grid, a.folds, a.seed, &opts)?;
    println!("selected_tau1 = {}", sig6(outcome.tau1));
    println!("selected_tau2 = {}", sig6(outcome.tau2));
    if a.estimator.penalized {
        println!("selected_lambda = {}", sig6(outcome.lambda));
    } else {
        println!("selected_lambda = none");
    }
    println!("tau1,tau2,lambda,held_out_loss");
    for p in &outcome.points {
        println!("{},{},{},{}", sig6(p.tau1), sig6(p.tau2), sig6(p.lambda), sig6(p.loss));
    }
    if let Some(path) = &a.out {
        let mut text = String::from("tau1,tau2,lambda,held_out_loss\n");
        for p in &outcome.points {
            text.push_str(&format!(
                "{},{},{},{}\n",
                heavyglm::dataset::fmt_full(p.tau1),
                heavyglm::dataset::fmt_full(p.tau2),
                heavyglm::dataset::fmt_full(p.lambda),
                heavyglm::dataset::fmt_full(p.loss)
            ));
        }
        std::fs::write(path, text).map_err(Error::from)?;
    }
    Ok(0)
}

fn bench(a: BenchArgs) -> CmdResult {
    let text = std::fs::read_to_string(&a.config).map_err(|e| Failure {
        code: 1,
        message: format!("{}: {e}", a.config.display()),
    })?;
    let mut config = ExperimentConfig::from_toml_str(&text)?;
    if let Some(t) = a.trials {
        config.trials = t;
        config.validate()?;
    }
    if a.workers == 0 {
        return Err(Failure::usage("--workers must be at least 1"));
    }
    println!("# resolved configuration");
    print!("{}", config.to_toml_string());
    println!("workers = {}", a.workers);
    println!("# results");
    let start = Instant::now();
    let table = run_experiment_with_workers(&config, a.workers)?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(path) = &a.out {
        table.write_csv(path)?;
    }
    println!("method,feature_dist,n,mean_l2_error,stderr,trials,failures");
    for r in &table.rows {
        println!(
            "{},{},{},{},{},{},{}",
            r.method,
            r.feature_dist,
            r.n,
            sig6(r.mean_l2_error),
            sig6(r.stderr),
            r.trials,
            r.failures
        );
    }
    println!("total_trials = {}", table.total_trials());
    println!("failures = {}", table.total_failures());
    println!("wall_time_s = {}", sig6(elapsed));
    Ok(0)
}

fn read_beta(spec: &str, d: usize) -> Result<Array1<f64>, Failure> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(Error::from)?;
        let values: Result<Vec<f64>, _> = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(f64::from_str)
            .collect();
        let values = values.map_err(|e| Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        })?;
        if values.len() != d {
            return Err(Failure {
                code: 1,
                message: format!("{}: {} coefficients for {d} columns", path.display(), values.len()),
            });
        }
        return Ok(Array1::from(values));
    }
    let pattern = BetaPattern::from_str(spec)?;
    Ok(make_beta(d, &pattern)?)
}

fn lrsc(a: LrscArgs) -> CmdResult {
    let data = load(&a.data)?;
    let mut beta = read_beta(&a.beta_star, data.d())?;
    if let Some(r) = a.beta_norm {
        let norm = l2_norm(beta.view());
        if !(r >= 0.0 && r.is_finite()) || norm == 0.0 {
            return Err(Failure::usage("--beta-norm needs a finite non-negative value and a non-zero vector"));
        }
        beta *= r / norm;
    }
    let loss = Loss::new(a.family, a.flip_p)?;
    let support_text = a.support.as_ref().map_or("none".into(), |s| {
        s.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")
    });
    print_resolved(&[
        ("command", "lrsc".into()),
        ("data", a.data.display().to_string()),
        ("family", a.family.name().into()),
        ("flip_p", a.flip_p.map_or("none".into(), sig6)),
        ("n", data.n().to_string()),
        ("d", data.d().to_string()),
        ("beta_star_l2_norm", sig6(l2_norm(beta.view()))),
        ("radius", sig6(a.radius)),
        ("dirs", a.dirs.to_string()),
        ("support", support_text),
        ("seed", a.seed.to_string()),
        ("kappa_floor", a.kappa_floor.map_or("none".into(), sig6)),
    ]);
    let probe = lrsc_probe(&loss, &data, beta.view(), a.radius, a.dirs, a.seed, a.support.as_deref())?;
    let dir = &probe.min_direction;
    println!("min_ratio = {}", sig6(probe.min_ratio));
    println!("direction_l2 = {}", sig6(l2_norm(dir.view())));
    println!("direction_l1 = {}", sig6(l1_norm(dir.view())));
    println!("direction_linf = {}", sig6(sup_norm(dir.view())));
    if let Some(s) = &a.support {
        let on: f64 = s.iter().map(|&j| dir[j].abs()).sum();
        println!("direction_l1_on_support = {}", sig6(on));
        println!("direction_l1_off_support = {}", sig6(l1_norm(dir.view()) - on));
    }
    if let Some(floor) = a.kappa_floor {
        let verdict = if probe.min_ratio >= floor { "pass" } else { "fail" };
        println!("kappa_floor_check = {verdict}");
    }
    Ok(0)
}
