//! Parsers for the compact flag syntaxes (`l4:auto`, `weighted:0.1`, ...).

use heavyglm::bench::Selection;
use heavyglm::{FeatureMode, ResponseMode};

/// A threshold or penalty: a positive number or `auto`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    Auto,
    Value(f64),
}

impl Level {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Level::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 => Ok(Level::Value(v)),
            _ => Err(format!("`{s}` is neither `auto` nor a positive number")),
        }
    }

    pub fn resolve(self, auto: impl FnOnce() -> heavyglm::Result<f64>) -> heavyglm::Result<f64> {
        match self {
            Level::Auto => auto(),
            Level::Value(v) => Ok(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureShrink {
    pub mode: FeatureMode,
    pub tau: Option<Level>,
}

/// `none | l4:TAU | l2:TAU | clip:TAU`
pub fn parse_shrink(s: &str) -> Result<FeatureShrink, String> {
    if s == "none" {
        return Ok(FeatureShrink {
            mode: FeatureMode::None,
            tau: None,
        });
    }
    let (kind, tau) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}`: expected none, l4:TAU, l2:TAU or clip:TAU"))?;
    Ok(FeatureShrink {
        mode: feature_mode(kind)?,
        tau: Some(Level::parse(tau)?),
    })
}

/// `none | l4 | l2 | clip`
pub fn feature_mode(s: &str) -> Result<FeatureMode, String> {
    match s {
        "none" => Ok(FeatureMode::None),
        "l4" => Ok(FeatureMode::NormShrinkL4),
        "l2" => Ok(FeatureMode::NormShrinkL2),
        "clip" => Ok(FeatureMode::ElementwiseClip),
        other => Err(format!("unknown feature shrinkage `{other}` (none, l4, l2, clip)")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseClip {
    pub tau: Option<Level>,
    pub preserve_sign: bool,
}

impl ResponseClip {
    pub fn mode(&self) -> ResponseMode {
        if self.tau.is_some() {
            ResponseMode::Clip
        } else {
            ResponseMode::None
        }
    }
}

/// `none | TAU | TAU:nosign`
pub fn parse_clip_response(s: &str) -> Result<ResponseClip, String> {
    if s == "none" {
        return Ok(ResponseClip {
            tau: None,
            preserve_sign: true,
        });
    }
    let (tau, preserve_sign) = match s.strip_suffix(":nosign") {
        Some(t) => (t, false),
        None => (s, true),
    };
    Ok(ResponseClip {
        tau: Some(Level::parse(tau)?),
        preserve_sign,
    })
}

/// Estimator for `fit`: `mle | weighted:P | l1:LAMBDA | weighted_l1:P:LAMBDA`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitEstimator {
    Mle,
    Weighted(f64),
    L1(Level),
    WeightedL1(f64, Level),
}

impl FitEstimator {
    pub fn flip_p(&self) -> Option<f64> {
        match *self {
            FitEstimator::Weighted(p) | FitEstimator::WeightedL1(p, _) => Some(p),
            _ => None,
        }
    }
}

fn parse_p(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("`{s}` is not a flip probability"))
}

pub fn parse_fit_estimator(s: &str) -> Result<FitEstimator, String> {
    if s == "mle" {
        return Ok(FitEstimator::Mle);
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["weighted", p] => Ok(FitEstimator::Weighted(parse_p(p)?)),
        ["l1", lam] => Ok(FitEstimator::L1(Level::parse(lam)?)),
        ["weighted_l1", p, lam] => Ok(FitEstimator::WeightedL1(parse_p(p)?, Level::parse(lam)?)),
        _ => Err(format!(
            "`{s}`: expected mle, weighted:P, l1:LAMBDA or weighted_l1:P:LAMBDA"
        )),
    }
}

/// Estimator for `cv`, where the penalty comes from a grid:
/// `mle | weighted:P | l1 | weighted_l1:P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvEstimator {
    pub flip_p: Option<f64>,
    pub penalized: bool,
}

pub fn parse_cv_estimator(s: &str) -> Result<CvEstimator, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["mle"] => Ok(CvEstimator {
            flip_p: None,
            penalized: false,
        }),
        ["l1"] => Ok(CvEstimator {
            flip_p: None,
            penalized: true,
        }),
        ["weighted", p] => Ok(CvEstimator {
            flip_p: Some(parse_p(p)?),
            penalized: false,
        }),
        ["weighted_l1", p] => Ok(CvEstimator {
            flip_p: Some(parse_p(p)?),
            penalized: true,
        }),
        _ => Err(format!("`{s}`: expected mle, weighted:P, l1 or weighted_l1:P")),
    }
}

/// One grid entry: an absolute value, `inf`, or a `<m>x` multiple of the
/// schedule.
pub fn grid_entry(t: &str) -> Result<Selection, String> {
    match Selection::parse_text(t)? {
        sel @ (Selection::Fixed(v) | Selection::Schedule(v)) if v > 0.0 => Ok(sel),
        _ => Err(format!("grid entry `{}` must be positive", t.trim())),
    }
}

/// One 0-based column index.
pub fn column_index(t: &str) -> Result<usize, String> {
    t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a column index"))
}
