//! Seeded synthetic data for the corrupted GLM: heavy-tailed designs,
//! heavy-tailed additive noise and random label flips.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{check_flip_p, sigmoid};
use crate::rng::stream;

/// Law of each feature coordinate (and of additive noise before rescaling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureDist {
    GaussianStd,
    StudentT { nu: f64 },
}

impl FeatureDist {
    pub fn student_t(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::invalid_param(format!("degrees of freedom must be positive, got {nu}")));
        }
        Ok(FeatureDist::StudentT { nu })
    }

    /// Population standard deviation, `None` when the variance is infinite.
    pub fn std_dev(&self) -> Option<f64> {
        match *self {
            FeatureDist::GaussianStd => Some(1.0),
            FeatureDist::StudentT { nu } if nu > 2.0 => Some((nu / (nu - 2.0)).sqrt()),
            FeatureDist::StudentT { .. } => None,
        }
    }

    pub fn sampler(&self) -> Result<Sampler> {
        Ok(match *self {
            FeatureDist::GaussianStd => Sampler::Gaussian,
            FeatureDist::StudentT { nu } => {
                let chi = ChiSquared::new(nu).map_err(|e| Error::invalid_param(e.to_string()))?;
                Sampler::StudentT { nu, chi }
            }
        })
    }
}

impl fmt::Display for FeatureDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureDist::GaussianStd => write!(f, "gaussian"),
            FeatureDist::StudentT { nu } => write!(f, "t:{nu}"),
        }
    }
}

impl FromStr for FeatureDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" | "normal" => Ok(FeatureDist::GaussianStd),
            other => match other.strip_prefix("t:") {
                Some(nu) => {
                    let nu: f64 = nu
                        .parse()
                        .map_err(|_| Error::invalid_param(format!("bad degrees of freedom in `{other}`")))?;
                    FeatureDist::student_t(nu)
                }
                None => Err(Error::invalid_param(format!(
                    "unknown distribution `{other}` (expected `gaussian` or `t:NU`)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for FeatureDist {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FeatureDist> for String {
    fn from(d: FeatureDist) -> String {
        d.to_string()
    }
}

/// Sampling state for a [`FeatureDist`].
#[derive(Debug, Clone, Copy)]
pub enum Sampler {
    Gaussian,
    /// `Z / sqrt(V/ν)` with `Z` standard normal and `V ~ χ²(ν)`.
    StudentT { nu: f64, chi: ChiSquared<f64> },
}

impl Sampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Gaussian => rng.sample(StandardNormal),
            Sampler::StudentT { nu, chi } => {
                let z: f64 = rng.sample(StandardNormal);
                let v = chi.sample(rng);
                z / (v / nu).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorruptionSpec {
    None,
    /// `ε = target_sd · W / SD(W)` with `W` drawn from `noise_dist`.
    AdditiveNoise { noise_dist: FeatureDist, target_sd: f64 },
    LabelFlip { flip_p: f64 },
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CorruptionSpec::None => Ok(()),
            CorruptionSpec::AdditiveNoise { noise_dist, target_sd } => {
                if !(target_sd >= 0.0 && target_sd.is_finite()) {
                    return Err(Error::invalid_param(format!("target_sd must be non-negative, got {target_sd}")));
                }
                if noise_dist.std_dev().is_none() {
                    return Err(Error::invalid_param(format!(
                        "noise law {noise_dist} has infinite variance; need nu > 2"
                    )));
                }
                Ok(())
            }
            CorruptionSpec::LabelFlip { flip_p } => check_flip_p(flip_p),
        }
    }

    pub fn summary(&self) -> String {
        match self {
            CorruptionSpec::None => "none".into(),
            CorruptionSpec::AdditiveNoise { noise_dist, target_sd } => {
                format!("additive noise {noise_dist} scaled to sd {target_sd}")
            }
            CorruptionSpec::LabelFlip { flip_p } => format!("label flips with p = {flip_p}"),
        }
    }
}

/// `n × d` matrix of i.i.d. draws; row `i` uses its own derived stream.
pub fn gen_features(n: usize, d: usize, dist: FeatureDist, seed: u64) -> Result<Array2<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::invalid_param(format!("need n, d >= 1, got n = {n}, d = {d}")));
    }
    let sampler = dist.sampler()?;
    let mut x = Array2::zeros((n, d));
    for (i, mut row) in x.rows_mut().into_iter().enumerate() {
        let mut rng = stream(seed, "features", &[i as u64]);
        row.iter_mut().for_each(|v| *v = sampler.sample(&mut rng));
    }
    Ok(x)
}

fn check_design(x: &Array2<f64>, beta_star: ArrayView1<'_, f64>) -> Result<()> {
    if x.ncols() != beta_star.len() {
        return Err(Error::shape(format!(
            "design has {} columns but beta_star has length {}",
            x.ncols(),
            beta_star.len()
        )));
    }
    if beta_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid_input("beta_star has non-finite entries"));
    }
    Ok(())
}

/// Linear responses `z = Xβ* + ε`; the clean `Xβ*` is recorded.
pub fn gen_linear(
    x: Array2<f64>,
    beta_star: ArrayView1<'_, f64>,
    noise: &CorruptionSpec,
    seed: u64,
) -> Result<Dataset<f64>> {
    check_design(&x, beta_star)?;
    noise.validate()?;
    let y = x.dot(&beta_star);
    let z = match *noise {
        CorruptionSpec::None => y.clone(),
        CorruptionSpec::AdditiveNoise { noise_dist, target_sd } => {
            let scale = target_sd / noise_dist.std_dev().expect("validated finite variance");
            let sampler = noise_dist.sampler()?;
            let mut z = y.clone();
            if scale > 0.0 {
                for (i, zi) in z.iter_mut().enumerate() {
                    let mut rng = stream(seed, "noise", &[i as u64]);
                    *zi += scale * sampler.sample(&mut rng);
                }
            }
            z
        }
        CorruptionSpec::LabelFlip { .. } => {
            return Err(Error::invalid_param("label flips apply to logistic data, not linear"));
        }
    };
    Dataset::new(x, z)?.with_clean(y)
}

/// Bernoulli responses with success probability `b′(xᵢᵀβ*)`.
pub fn gen_logistic(x: Array2<f64>, beta_star: ArrayView1<'_, f64>, seed: u64) -> Result<Dataset<f64>> {
    check_design(&x, beta_star)?;
    let eta = x.dot(&beta_star);
    let y: Array1<f64> = eta
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let mut rng = stream(seed, "labels", &[i as u64]);
            let u: f64 = rng.random();
            if u < sigmoid(e) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Dataset::new(x, y.clone())?.with_clean(y)
}

/// Flips each binary label independently with probability `p` and records
/// which rows flipped.
pub fn flip_labels(data: &Dataset<f64>, p: f64, seed: u64) -> Result<Dataset<f64>> {
    check_flip_p(p)?;
    let mask: Vec<bool> = (0..data.n())
        .map(|i| {
            let mut rng = stream(seed, "flip", &[i as u64]);
            rng.random::<f64>() < p
        })
        .collect();
    flip_with_mask(data, mask)
}

/// Flips exactly the rows marked in `mask`.
pub fn flip_with_mask(data: &Dataset<f64>, mask: Vec<bool>) -> Result<Dataset<f64>> {
    if !data.is_binary() {
        return Err(Error::invalid_input("label flipping needs binary responses"));
    }
    if mask.len() != data.n() {
        return Err(Error::shape("flip mask length differs from n"));
    }
    let z: Array1<f64> = data
        .z()
        .iter()
        .zip(&mask)
        .map(|(&z, &flip)| if flip { 1.0 - z } else { z })
        .collect();
    Ok(data.replace_responses(z, Some(mask)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BetaPattern {
    /// `(1, 1, 1, 1, 1, 0, …, 0)`
    FiveOnes,
    /// `(0.5 ×5, −0.5 ×5, 0, …, 0)`
    HalfPmHalf,
    /// `(1, 1, −1, 0, …, 0)`
    SparsePm1,
    Custom(Vec<f64>),
}

impl BetaPattern {
    fn prefix(&self) -> Vec<f64> {
        match self {
            BetaPattern::FiveOnes => vec![1.0; 5],
            BetaPattern::HalfPmHalf => [[0.5; 5], [-0.5; 5]].concat(),
            BetaPattern::SparsePm1 => vec![1.0, 1.0, -1.0],
            BetaPattern::Custom(v) => v.clone(),
        }
    }

    pub fn min_dim(&self) -> usize {
        self.prefix().len()
    }
}

impl fmt::Display for BetaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaPattern::FiveOnes => write!(f, "five_ones"),
            BetaPattern::HalfPmHalf => write!(f, "half_pm_half"),
            BetaPattern::SparsePm1 => write!(f, "sparse_pm1"),
            BetaPattern::Custom(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl FromStr for BetaPattern {
    type Err = Error;

    /// A pattern name or a comma-separated list of coefficients.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "five_ones" => Ok(BetaPattern::FiveOnes),
            "half_pm_half" => Ok(BetaPattern::HalfPmHalf),
            "sparse_pm1" => Ok(BetaPattern::SparsePm1),
            other => {
                let values: std::result::Result<Vec<f64>, _> = other.split(',').map(|t| t.trim().parse::<f64>()).collect();
                match values {
                    Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(BetaPattern::Custom(v)),
                    _ => Err(Error::invalid_param(format!(
                        "unknown coefficient pattern `{other}` (five_ones, half_pm_half, sparse_pm1 or a comma list)"
                    ))),
                }
            }
        }
    }
}

impl TryFrom<String> for BetaPattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BetaPattern> for String {
    fn from(p: BetaPattern) -> String {
        p.to_string()
    }
}

/// Coefficient vector of dimension `d`: the pattern's leading entries padded
/// with zeros. Custom vectors must have length exactly `d`.
pub fn make_beta(d: usize, pattern: &BetaPattern) -> Result<Array1<f64>> {
    let prefix = pattern.prefix();
    let fits = match pattern {
        BetaPattern::Custom(v) => v.len() == d,
        _ => prefix.len() <= d,
    };
    if !fits {
        return Err(Error::invalid_param(format!(
            "pattern {pattern} needs d >= {}, got d = {d}",
            prefix.len()
        )));
    }
    let mut beta = Array1::zeros(d);
    beta.iter_mut().zip(prefix).for_each(|(b, v)| *b = v);
    Ok(beta)
}
