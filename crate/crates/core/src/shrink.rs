//! Preprocessing operators that tame heavy-tailed features and responses:
//! norm shrinkage of whole feature vectors, elementwise clipping, and response
//! clipping.

use ndarray::{Array1, ArrayView1, ArrayViewMut1, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L2,
    L4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    #[default]
    None,
    NormShrinkL4,
    NormShrinkL2,
    ElementwiseClip,
}

impl FeatureMode {
    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::None => "none",
            FeatureMode::NormShrinkL4 => "norm_shrink_l4",
            FeatureMode::NormShrinkL2 => "norm_shrink_l2",
            FeatureMode::ElementwiseClip => "elementwise_clip",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    #[default]
    None,
    Clip,
}

impl ResponseMode {
    pub fn name(self) -> &'static str {
        match self {
            ResponseMode::None => "none",
            ResponseMode::Clip => "clip",
        }
    }
}

/// Which preprocessor to apply and its thresholds.
///
/// `tau1` applies to features and `tau2` to responses. A threshold of `+inf`
/// is accepted and makes the corresponding operator the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShrinkSpec {
    #[serde(default)]
    pub feature_mode: FeatureMode,
    #[serde(default = "infinite")]
    pub tau1: f64,
    #[serde(default)]
    pub response_mode: ResponseMode,
    #[serde(default = "infinite")]
    pub tau2: f64,
    #[serde(default = "yes", rename = "preserve_sign")]
    pub preserve_response_sign: bool,
}

fn infinite() -> f64 {
    f64::INFINITY
}

fn yes() -> bool {
    true
}

impl Default for ShrinkSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl ShrinkSpec {
    pub fn none() -> Self {
        Self {
            feature_mode: FeatureMode::None,
            tau1: f64::INFINITY,
            response_mode: ResponseMode::None,
            tau2: f64::INFINITY,
            preserve_response_sign: true,
        }
    }

    pub fn features(mode: FeatureMode, tau1: f64) -> Self {
        Self {
            feature_mode: mode,
            tau1,
            ..Self::none()
        }
    }

    pub fn with_response_clip(mut self, tau2: f64, preserve_sign: bool) -> Self {
        self.response_mode = ResponseMode::Clip;
        self.tau2 = tau2;
        self.preserve_response_sign = preserve_sign;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_mode != FeatureMode::None {
            check_tau(self.tau1, "tau1")?;
        }
        if self.response_mode != ResponseMode::None {
            check_tau(self.tau2, "tau2")?;
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        (self.feature_mode == FeatureMode::None || self.tau1 == f64::INFINITY)
            && (self.response_mode == ResponseMode::None || self.tau2 == f64::INFINITY)
    }
}

fn check_tau<T: Scalar>(tau: T, name: &str) -> Result<()> {
    if tau.is_nan() || tau <= T::zero() {
        return Err(Error::invalid_param(format!("{name} must be positive, got {tau}")));
    }
    Ok(())
}

fn check_finite<T: Scalar>(x: ArrayView1<'_, T>) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(j) => Err(Error::invalid_input(format!("non-finite entry at index {j}"))),
        None => Ok(()),
    }
}

/// ℓp norm evaluated with max-scaling so large entries do not overflow.
pub fn norm<T: Scalar>(x: ArrayView1<'_, T>, kind: NormKind) -> T {
    let m = x.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    if m == T::zero() || !m.is_finite() {
        return m;
    }
    match kind {
        NormKind::L2 => {
            let s: T = x.iter().map(|&v| (v / m) * (v / m)).sum();
            m * s.sqrt()
        }
        NormKind::L4 => {
            let s: T = x
                .iter()
                .map(|&v| {
                    let r = (v / m) * (v / m);
                    r * r
                })
                .sum();
            m * s.sqrt().sqrt()
        }
    }
}

/// Rescales `x` so that its `kind` norm is at most `tau`.
///
/// Vectors already inside the ball, including the zero vector, are returned
/// unchanged.
pub fn norm_shrink<T: Scalar>(x: ArrayView1<'_, T>, tau: T, kind: NormKind) -> Result<Array1<T>> {
    check_tau(tau, "tau")?;
    check_finite(x)?;
    let mut out = x.to_owned();
    norm_shrink_in_place(out.view_mut(), tau, kind);
    Ok(out)
}

fn norm_shrink_in_place<T: Scalar>(mut x: ArrayViewMut1<'_, T>, tau: T, kind: NormKind) {
    // rounding can leave the rescaled norm a few ulps above tau; repeat with
    // a strictly contracting factor so the output lies inside the ball and a
    // second application is the identity
    let mut nrm = norm(x.view(), kind);
    let mut pass = 0u32;
    while nrm > tau {
        let mut scale = tau / nrm;
        if pass > 0 {
            scale = scale.min(T::one() - T::epsilon() * T::lit(f64::from(4 * pass)));
        }
        x.mapv_inplace(|v| v * scale);
        nrm = norm(x.view(), kind);
        pass += 1;
    }
}

#[inline]
fn clip_value<T: Scalar>(v: T, tau: T) -> T {
    // sign(v) * min(|v|, tau); NaN-free because inputs are checked finite
    if v > tau {
        tau
    } else if v < -tau {
        -tau
    } else {
        v
    }
}

/// Caps every coordinate at `tau` in magnitude, keeping its sign.
pub fn elementwise_clip<T: Scalar>(x: ArrayView1<'_, T>, tau: T) -> Result<Array1<T>> {
    check_tau(tau, "tau")?;
    check_finite(x)?;
    Ok(x.mapv(|v| clip_value(v, tau)))
}

/// Clips a response to magnitude `tau`.
///
/// With `preserve_sign` the result is `sign(z)·min(|z|, tau)`, otherwise the
/// sign is dropped and the result is `min(|z|, tau)`.
pub fn clip_response<T: Scalar>(z: T, tau: T, preserve_sign: bool) -> Result<T> {
    check_tau(tau, "tau")?;
    if !z.is_finite() {
        return Err(Error::invalid_input(format!("non-finite response {z}")));
    }
    Ok(if preserve_sign {
        clip_value(z, tau)
    } else {
        z.abs().min(tau)
    })
}

/// Applies `spec` to every row of `data`, returning a new dataset.
///
/// Clean responses and the flip record are carried over untouched.
pub fn apply_shrink<T: Scalar>(data: &Dataset<T>, spec: &ShrinkSpec) -> Result<Dataset<T>> {
    spec.validate()?;
    let tau1 = T::lit(spec.tau1);
    let tau2 = T::lit(spec.tau2);
    let mut x = data.x().to_owned();
    match spec.feature_mode {
        FeatureMode::None => {}
        FeatureMode::NormShrinkL4 | FeatureMode::NormShrinkL2 => {
            let kind = if spec.feature_mode == FeatureMode::NormShrinkL4 {
                NormKind::L4
            } else {
                NormKind::L2
            };
            for row in x.axis_iter_mut(Axis(0)) {
                norm_shrink_in_place(row, tau1, kind);
            }
        }
        FeatureMode::ElementwiseClip => x.mapv_inplace(|v| clip_value(v, tau1)),
    }
    let z = match spec.response_mode {
        ResponseMode::None => data.z().to_owned(),
        ResponseMode::Clip => {
            let mut z = Array1::zeros(data.n());
            for (i, (&zi, out)) in data.z().iter().zip(z.iter_mut()).enumerate() {
                *out = clip_response(zi, tau2, spec.preserve_response_sign).map_err(|e| e.at_row(i))?;
            }
            z
        }
    };
    Ok(data.replace_observed(x, z))
}

/// Scale inside the threshold schedule: `log n` for the low-dimensional
/// regime, `log d` for the high-dimensional one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauScale {
    LogN,
    LogD(usize),
}

/// `multiplier · (n / log n)^¼` or `multiplier · (n / log d)^¼`.
///
/// `n` is real-valued so a sample budget can be passed directly.
pub fn default_tau(n: f64, scale: TauScale, multiplier: f64) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(Error::invalid_param(format!("n must be at least 2, got {n}")));
    }
    if !(multiplier > 0.0) {
        return Err(Error::invalid_param(format!("multiplier must be positive, got {multiplier}")));
    }
    let log = match scale {
        TauScale::LogN => n.ln(),
        TauScale::LogD(d) if d >= 2 => (d as f64).ln(),
        TauScale::LogD(d) => return Err(Error::invalid_param(format!("d must be at least 2, got {d}"))),
    };
    Ok(multiplier * (n / log).powf(0.25))
}
