//! GLM families with canonical link and exact evaluation of the negative
//! log-likelihood, the noisy-label weighted loss, gradients, Hessians and the
//! first-order Taylor remainder.
//!
//! Every loss here has the per-sample form `b(η) − r·η` with `η = xᵀβ`, where
//! `r` is an effective response: the observed `z` for the plain likelihood and
//! `(z − p)/(1 − 2p)` for the label-flip weighted loss. Gradients and Hessians
//! follow from that single form.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Gaussian response, `b(η) = η²/2`.
    Linear,
    /// Bernoulli response, `b(η) = log(1 + e^η)`.
    Logistic,
}

impl Family {
    /// Cumulant function `b(η)`.
    #[inline]
    pub fn cumulant<T: Scalar>(self, eta: T) -> T {
        match self {
            Family::Linear => eta * eta * T::lit(0.5),
            // max(η, 0) + log1p(exp(−|η|))
            Family::Logistic => eta.max(T::zero()) + (-eta.abs()).exp().ln_1p(),
        }
    }

    /// Mean function `b′(η)`.
    #[inline]
    pub fn mean<T: Scalar>(self, eta: T) -> T {
        match self {
            Family::Linear => eta,
            Family::Logistic => sigmoid(eta),
        }
    }

    /// Variance function `b″(η)`.
    #[inline]
    pub fn variance<T: Scalar>(self, eta: T) -> T {
        match self {
            Family::Linear => T::one(),
            Family::Logistic => sigmoid(eta) * sigmoid(-eta),
        }
    }

    /// Dispersion is fixed at one; it scales the likelihood without moving
    /// its minimizer.
    pub fn dispersion<T: Scalar>(self) -> T {
        T::one()
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Family::Linear),
            "logistic" => Ok(Family::Logistic),
            other => Err(Error::invalid_param(format!("unknown family `{other}`"))),
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(eta: T) -> T {
    if eta >= T::zero() {
        T::one() / (T::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (T::one() + e)
    }
}

/// Per-sample negative log-likelihood `−zη + b(η)`.
#[inline]
pub fn sample_loss<T: Scalar>(family: Family, eta: T, z: T) -> T {
    family.cumulant(eta) - z * eta
}

/// Per-sample weighted logistic loss
/// `[(1−p)·ℓ(η, z) − p·ℓ(η, 1−z)] / (1 − 2p)`.
///
/// Evaluated in the reduced form `b(η) − η·(z − p)/(1 − 2p)`, which is the same
/// expression after expanding `ℓ`.
#[inline]
pub fn weighted_sample_loss<T: Scalar>(eta: T, z: T, flip_p: T) -> T {
    sample_loss(Family::Logistic, eta, (z - flip_p) / (T::one() - flip_p - flip_p))
}

/// Objective whose empirical average the solvers minimize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Plain negative log-likelihood of the family.
    Glm(Family),
    /// Logistic loss corrected for labels flipped with probability `flip_p`.
    NoisyLabel { flip_p: f64 },
}

impl Loss {
    pub fn new(family: Family, weighted_p: Option<f64>) -> Result<Self> {
        match (family, weighted_p) {
            (f, None) => Ok(Loss::Glm(f)),
            (Family::Logistic, Some(p)) => {
                check_flip_p(p)?;
                Ok(Loss::NoisyLabel { flip_p: p })
            }
            (Family::Linear, Some(_)) => Err(Error::invalid_param(
                "label-flip weighting applies to the logistic family only",
            )),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Loss::Glm(f) => *f,
            Loss::NoisyLabel { .. } => Family::Logistic,
        }
    }

    /// Checks the loss parameters against `data`.
    pub fn validate<T: Scalar>(&self, data: &Dataset<T>) -> Result<()> {
        if let Loss::NoisyLabel { flip_p } = *self {
            check_flip_p(flip_p)?;
            if let Some(i) = data.z().iter().position(|&v| v != T::zero() && v != T::one()) {
                return Err(Error::invalid_input(format!(
                    "weighted loss needs binary responses, row {i} has {}",
                    data.z()[i]
                )));
            }
        }
        Ok(())
    }

    pub fn value<T: Scalar>(&self, data: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<T> {
        self.validate(data)?;
        let obj = Objective::new(*self, data);
        Ok(obj.value_at_eta(obj.eta(beta)?.view()))
    }

    pub fn gradient<T: Scalar>(&self, data: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<Array1<T>> {
        self.validate(data)?;
        let obj = Objective::new(*self, data);
        Ok(obj.grad_at_eta(obj.eta(beta)?.view()))
    }

    pub fn hessian<T: Scalar>(&self, data: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<Array2<T>> {
        self.validate(data)?;
        let obj = Objective::new(*self, data);
        Ok(obj.hessian_at_eta(obj.eta(beta)?.view()))
    }
}

pub(crate) fn check_flip_p(p: f64) -> Result<()> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::invalid_param(format!("flip probability must lie in [0, 0.5), got {p}")));
    }
    Ok(())
}

/// A loss bound to a dataset, with the effective responses precomputed.
pub(crate) struct Objective<'a, T> {
    family: Family,
    x: ArrayView2<'a, T>,
    /// `xᵀ` in row-major layout: columns of `x` are contiguous.
    xt: Array2<T>,
    response: Array1<T>,
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub(crate) fn new(loss: Loss, data: &'a Dataset<T>) -> Self {
        let response = match loss {
            Loss::Glm(_) => data.z().to_owned(),
            Loss::NoisyLabel { flip_p } => {
                let p = T::lit(flip_p);
                let denom = T::one() - p - p;
                data.z().mapv(|z| (z - p) / denom)
            }
        };
        Self {
            family: loss.family(),
            x: data.x(),
            xt: data.x().t().as_standard_layout().into_owned(),
            response,
        }
    }

    pub(crate) fn n(&self) -> usize {
        self.x.nrows()
    }

    pub(crate) fn d(&self) -> usize {
        self.x.ncols()
    }

    pub(crate) fn family(&self) -> Family {
        self.family
    }

    pub(crate) fn eta(&self, beta: ArrayView1<'_, T>) -> Result<Array1<T>> {
        if beta.len() != self.d() {
            return Err(Error::shape(format!(
                "coefficient vector has length {}, expected {}",
                beta.len(),
                self.d()
            )));
        }
        // column sweep skips zero coefficients
        let mut eta = Array1::zeros(self.n());
        for (col, &b) in self.xt.rows().into_iter().zip(beta.iter()) {
            if b != T::zero() {
                eta.scaled_add(b, &col);
            }
        }
        Ok(eta)
    }

    pub(crate) fn value_at_eta(&self, eta: ArrayView1<'_, T>) -> T {
        let family = self.family;
        let total: T = eta
            .iter()
            .zip(self.response.iter())
            .map(|(&e, &r)| sample_loss(family, e, r))
            .sum();
        total / T::lit(self.n() as f64)
    }

    /// `(1/n) Σ (b′(ηᵢ) − rᵢ) xᵢ`
    pub(crate) fn grad_at_eta(&self, eta: ArrayView1<'_, T>) -> Array1<T> {
        let family = self.family;
        let inv_n = T::one() / T::lit(self.n() as f64);
        let resid: Array1<T> = eta
            .iter()
            .zip(self.response.iter())
            .map(|(&e, &r)| (family.mean(e) - r) * inv_n)
            .collect();
        self.xt.dot(&resid)
    }

    /// `(1/n) Σ b″(ηᵢ) xᵢxᵢᵀ`
    pub(crate) fn hessian_at_eta(&self, eta: ArrayView1<'_, T>) -> Array2<T> {
        let family = self.family;
        let inv_n = T::one() / T::lit(self.n() as f64);
        let mut weighted = self.x.to_owned();
        for (mut row, &e) in weighted.axis_iter_mut(Axis(0)).zip(eta.iter()) {
            let w = family.variance(e) * inv_n;
            row.mapv_inplace(|v| v * w);
        }
        let mut h = self.x.t().dot(&weighted);
        // exact symmetry
        let d = h.nrows();
        for i in 0..d {
            for j in 0..i {
                let avg = (h[[i, j]] + h[[j, i]]) * T::lit(0.5);
                h[[i, j]] = avg;
                h[[j, i]] = avg;
            }
        }
        h
    }
}

/// `(1/n) Σ [−zᵢ·xᵢᵀβ + b(xᵢᵀβ)]`
pub fn nll<T: Scalar>(family: Family, data: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<T> {
    Loss::Glm(family).value(data, beta)
}

/// `−(1/n) Σ (zᵢ − b′(xᵢᵀβ))·xᵢ`
pub fn grad_nll<T: Scalar>(family: Family, data: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<Array1<T>> {
    Loss::Glm(family).gradient(data, beta)
}

/// `(1/n) Σ b″(xᵢᵀβ)·xᵢxᵢᵀ`
pub fn hessian_nll<T: Scalar>(family: Family, data: &Dataset<T>, beta: ArrayView1<'_, T>) -> Result<Array2<T>> {
    Loss::Glm(family).hessian(data, beta)
}

/// Average weighted logistic loss for labels flipped with probability `p`.
///
/// The caller applies any shrinkage beforehand; `data` is used as given. The
/// value may be negative.
pub fn weighted_nll<T: Scalar>(data: &Dataset<T>, beta: ArrayView1<'_, T>, p: f64) -> Result<T> {
    Loss::new(Family::Logistic, Some(p))?.value(data, beta)
}

pub fn weighted_grad<T: Scalar>(data: &Dataset<T>, beta: ArrayView1<'_, T>, p: f64) -> Result<Array1<T>> {
    Loss::new(Family::Logistic, Some(p))?.gradient(data, beta)
}

pub fn weighted_hessian<T: Scalar>(data: &Dataset<T>, beta: ArrayView1<'_, T>, p: f64) -> Result<Array2<T>> {
    Loss::new(Family::Logistic, Some(p))?.hessian(data, beta)
}

/// First-order Taylor remainder `f(β) − f(β*) − ∇f(β*)ᵀ(β − β*)` of the plain
/// or (with `weighted_p`) weighted loss.
pub fn taylor_remainder<T: Scalar>(
    family: Family,
    data: &Dataset<T>,
    beta: ArrayView1<'_, T>,
    beta_star: ArrayView1<'_, T>,
    weighted_p: Option<f64>,
) -> Result<T> {
    let loss = Loss::new(family, weighted_p)?;
    loss_taylor_remainder(&loss, data, beta, beta_star)
}

pub fn loss_taylor_remainder<T: Scalar>(
    loss: &Loss,
    data: &Dataset<T>,
    beta: ArrayView1<'_, T>,
    beta_star: ArrayView1<'_, T>,
) -> Result<T> {
    loss.validate(data)?;
    let obj = Objective::new(*loss, data);
    let eta = obj.eta(beta)?;
    let eta_star = obj.eta(beta_star)?;
    let grad_star = obj.grad_at_eta(eta_star.view());
    let delta = &beta - &beta_star;
    Ok(obj.value_at_eta(eta.view()) - obj.value_at_eta(eta_star.view()) - grad_star.dot(&delta))
}
