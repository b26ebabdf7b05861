//! Experiment configuration, loaded from TOML.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{make_beta, BetaPattern, CorruptionSpec, FeatureDist};
use crate::error::{Error, Result};
use crate::glm::{check_flip_p, Family, Loss};
use crate::optimize::SolverOpts;
use crate::shrink::{FeatureMode, ResponseMode, TauScale};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearHighdim,
    LogisticLowdim,
    LogisticHighdim,
}

impl ModelKind {
    pub fn family(self) -> Family {
        match self {
            ModelKind::LinearHighdim => Family::Linear,
            ModelKind::LogisticLowdim | ModelKind::LogisticHighdim => Family::Logistic,
        }
    }

    /// Logarithm used by the threshold schedule.
    pub fn tau_scale(self, d: usize) -> TauScale {
        match self {
            ModelKind::LogisticLowdim => TauScale::LogN,
            ModelKind::LinearHighdim | ModelKind::LogisticHighdim => TauScale::LogD(d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Mle,
    WeightedMle,
    L1,
    WeightedL1,
}

impl EstimatorKind {
    pub fn is_penalized(self) -> bool {
        matches!(self, EstimatorKind::L1 | EstimatorKind::WeightedL1)
    }

    pub fn is_weighted(self) -> bool {
        matches!(self, EstimatorKind::WeightedMle | EstimatorKind::WeightedL1)
    }
}

/// How a threshold or penalty level is chosen.
///
/// In TOML: a number is a fixed value, `"auto"` is the theoretical schedule,
/// `"2x"` is twice the schedule, and an array is a cross-validation grid of
/// schedule multipliers (`inf` means no shrinkage).
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Fixed(f64),
    Schedule(f64),
    Cv(Vec<f64>),
}

impl Selection {
    pub fn parse_text(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "auto" {
            return Ok(Selection::Schedule(1.0));
        }
        if let Some(m) = s.strip_suffix('x') {
            if let Ok(m) = m.parse::<f64>() {
                return Ok(Selection::Schedule(m));
            }
        }
        if s == "inf" {
            return Ok(Selection::Fixed(f64::INFINITY));
        }
        s.parse::<f64>()
            .map(Selection::Fixed)
            .map_err(|_| format!("`{s}` is not a number, `auto`, `<m>x` or a multiplier list"))
    }

    pub fn is_cv(&self) -> bool {
        matches!(self, Selection::Cv(_))
    }

    fn check(&self, allow_inf: bool) -> std::result::Result<(), String> {
        let ok = |v: f64| v > 0.0 && (allow_inf || v.is_finite());
        match self {
            Selection::Fixed(v) | Selection::Schedule(v) if !ok(*v) => Err(format!("{v} is not a valid level")),
            Selection::Cv(grid) if grid.is_empty() => Err("cross-validation grid is empty".into()),
            Selection::Cv(grid) => match grid.iter().find(|v| !ok(**v)) {
                Some(v) => Err(format!("grid entry {v} is not a valid multiplier")),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Candidate absolute values given the schedule value `base`.
    pub fn candidates(&self, base: f64) -> Vec<f64> {
        match self {
            Selection::Fixed(v) => vec![*v],
            Selection::Schedule(m) => vec![m * base],
            Selection::Cv(grid) => grid.iter().map(|m| m * base).collect(),
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selection::Fixed(v) => write!(f, "{v}"),
            Selection::Schedule(m) if *m == 1.0 => write!(f, "auto"),
            Selection::Schedule(m) => write!(f, "{m}x"),
            Selection::Cv(grid) => {
                let parts: Vec<String> = grid.iter().map(|v| v.to_string()).collect();
                write!(f, "cv[{}]", parts.join(", "))
            }
        }
    }
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum SelectionRepr {
    Number(f64),
    Text(String),
    Grid(Vec<GridEntry>),
}

/// TOML has a bare `inf`; the quoted form is accepted too.
#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum GridEntry {
    Number(f64),
    Text(String),
}

impl<'de> Deserialize<'de> for Selection {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        match SelectionRepr::deserialize(de)? {
            SelectionRepr::Number(v) => Ok(Selection::Fixed(v)),
            SelectionRepr::Text(s) => Selection::parse_text(&s).map_err(serde::de::Error::custom),
            SelectionRepr::Grid(g) => g
                .into_iter()
                .map(|e| match e {
                    GridEntry::Number(v) => Ok(v),
                    GridEntry::Text(t) if t.trim() == "inf" => Ok(f64::INFINITY),
                    GridEntry::Text(t) => Err(serde::de::Error::custom(format!("grid entry `{t}` is not a number"))),
                })
                .collect::<std::result::Result<Vec<f64>, D::Error>>()
                .map(Selection::Cv),
        }
    }
}

impl Serialize for Selection {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Selection::Fixed(v) => SelectionRepr::Number(*v),
            Selection::Schedule(_) => SelectionRepr::Text(self.to_string()),
            Selection::Cv(g) => SelectionRepr::Grid(g.iter().map(|&v| GridEntry::Number(v)).collect()),
        }
        .serialize(ser)
    }
}

fn yes() -> bool {
    true
}

/// One estimator compared in an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub id: String,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub feature_mode: FeatureMode,
    #[serde(default)]
    pub response_mode: ResponseMode,
    #[serde(default = "yes")]
    pub preserve_sign: bool,
    /// Feature threshold; defaults to `auto` when a feature mode is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau1: Option<Selection>,
    /// Response threshold; defaults to `auto` when response clipping is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau2: Option<Selection>,
    /// Response threshold follows `tau1`, so a grid is searched in pairs.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub tie_thresholds: bool,
    /// Penalty level for ℓ1 estimators; defaults to `auto`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Selection>,
    /// Flip probability used by weighted estimators; defaults to the
    /// corruption's `flip_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_p: Option<f64>,
}

impl MethodSpec {
    pub fn tau1_selection(&self) -> Option<Selection> {
        (self.feature_mode != FeatureMode::None).then(|| self.tau1.clone().unwrap_or(Selection::Schedule(1.0)))
    }

    pub fn tau2_selection(&self) -> Option<Selection> {
        if self.tie_thresholds {
            return self.tau1_selection().filter(|_| self.response_mode != ResponseMode::None);
        }
        (self.response_mode != ResponseMode::None).then(|| self.tau2.clone().unwrap_or(Selection::Schedule(1.0)))
    }

    pub fn lambda_selection(&self) -> Option<Selection> {
        self.estimator
            .is_penalized()
            .then(|| self.lambda.clone().unwrap_or(Selection::Schedule(1.0)))
    }

    pub fn needs_cv(&self) -> bool {
        [self.tau1_selection(), self.tau2_selection(), self.lambda_selection()]
            .iter()
            .flatten()
            .any(Selection::is_cv)
    }

    /// Loss minimized by this method under `config`.
    pub fn loss(&self, config: &ExperimentConfig) -> Result<Loss> {
        let family = config.model.family();
        if !self.estimator.is_weighted() {
            return Ok(Loss::Glm(family));
        }
        let p = match (self.flip_p, config.corruption) {
            (Some(p), _) => p,
            (None, CorruptionSpec::LabelFlip { flip_p }) => flip_p,
            (None, _) => 0.0,
        };
        Loss::new(family, Some(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    /// Gradient tolerance for fits inside cross-validation.
    pub grad_tol: f64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            grad_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelKind,
    pub n_grid: Vec<usize>,
    pub d: usize,
    pub beta: BetaPattern,
    pub feature_dists: Vec<FeatureDist>,
    pub corruption: CorruptionSpec,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default)]
    pub solver: SolverOpts,
    pub methods: Vec<MethodSpec>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().message().trim().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Semantic checks; errors name the offending key path.
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::config("n_grid", "must not be empty"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_grid", "must be strictly ascending"));
        }
        if self.n_grid[0] < 2 {
            return Err(Error::config("n_grid[0]", "sample sizes must be at least 2"));
        }
        if self.d == 0 {
            return Err(Error::config("d", "must be positive"));
        }
        make_beta(self.d, &self.beta).map_err(|e| Error::config("beta", e.to_string()))?;
        if self.feature_dists.is_empty() {
            return Err(Error::config("feature_dists", "must not be empty"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "must list at least one method"));
        }
        self.corruption
            .validate()
            .map_err(|e| Error::config("corruption", e.to_string()))?;
        match (self.model.family(), self.corruption) {
            (Family::Linear, CorruptionSpec::LabelFlip { .. }) => {
                return Err(Error::config("corruption.kind", "label_flip needs a logistic model"))
            }
            (Family::Logistic, CorruptionSpec::AdditiveNoise { .. }) => {
                return Err(Error::config("corruption.kind", "additive_noise needs the linear model"))
            }
            _ => {}
        }
        if self.cv.folds < 2 {
            return Err(Error::config("cv.folds", "need at least 2 folds"));
        }
        if !(self.cv.grad_tol > 0.0) {
            return Err(Error::config("cv.grad_tol", "must be positive"));
        }
        self.solver.validate().map_err(|e| Error::config("solver", e.to_string()))?;
        let mut seen = std::collections::HashSet::new();
        for (k, m) in self.methods.iter().enumerate() {
            let at = |key: &str| format!("methods[{k}].{key}");
            if !seen.insert(m.id.as_str()) {
                return Err(Error::config(at("id"), format!("duplicate method id `{}`", m.id)));
            }
            if m.id.is_empty() || m.id.contains(',') {
                return Err(Error::config(at("id"), "must be non-empty and contain no commas"));
            }
            if m.estimator.is_weighted() && self.model.family() != Family::Logistic {
                return Err(Error::config(at("estimator"), "weighted estimators need a logistic model"));
            }
            if let Some(p) = m.flip_p {
                check_flip_p(p).map_err(|e| Error::config(at("flip_p"), e.to_string()))?;
            }
            if m.tie_thresholds {
                if m.feature_mode == FeatureMode::None || m.response_mode == ResponseMode::None {
                    return Err(Error::config(
                        at("tie_thresholds"),
                        "needs both a feature mode and response clipping",
                    ));
                }
                if m.tau2.is_some() {
                    return Err(Error::config(at("tau2"), "must be omitted when thresholds are tied"));
                }
            }
            if let Some(s) = m.tau1_selection() {
                s.check(true).map_err(|e| Error::config(at("tau1"), e))?;
            }
            if let Some(s) = m.tau2_selection() {
                s.check(true).map_err(|e| Error::config(at("tau2"), e))?;
            }
            if let Some(s) = m.lambda_selection() {
                s.check(false).map_err(|e| Error::config(at("lambda"), e))?;
            }
        }
        Ok(())
    }
}
