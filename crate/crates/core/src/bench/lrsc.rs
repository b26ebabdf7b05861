//! Empirical check of localized restricted strong convexity: the smallest
//! ratio `δf(β* + Δ; β*) / ‖Δ‖²` over random directions on a sphere.

use ndarray::{Array1, ArrayView1};
use rand_distr::StandardNormal;
use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{Loss, Objective};
use crate::linalg::l2_norm;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct LrscProbe {
    pub min_ratio: f64,
    /// Direction `Δ` (with `‖Δ‖ = r`) attaining `min_ratio`.
    pub min_direction: Array1<f64>,
}

/// Moves `v` into the cone `‖v_{Sᶜ}‖₁ ≤ 3‖v_S‖₁` by scaling down its
/// off-support part when needed.
pub fn project_to_cone(v: &mut Array1<f64>, support: &[usize]) {
    let mut on = vec![false; v.len()];
    support.iter().for_each(|&j| on[j] = true);
    let inside: f64 = support.iter().map(|&j| v[j].abs()).sum();
    let outside: f64 = v.iter().zip(&on).filter(|(_, &s)| !s).map(|(x, _)| x.abs()).sum();
    if outside > 3.0 * inside {
        let scale = if outside > 0.0 { 3.0 * inside / outside } else { 0.0 };
        v.iter_mut().zip(&on).filter(|(_, &s)| !s).for_each(|(x, _)| *x *= scale);
    }
}

pub fn in_cone(v: ArrayView1<'_, f64>, support: &[usize]) -> bool {
    let mut on = vec![false; v.len()];
    support.iter().for_each(|&j| on[j] = true);
    let inside: f64 = support.iter().map(|&j| v[j].abs()).sum();
    let outside: f64 = v.iter().zip(&on).filter(|(_, &s)| !s).map(|(x, _)| x.abs()).sum();
    outside <= 3.0 * inside * (1.0 + 1e-12)
}

/// Samples `num_directions` directions uniformly on the radius-`radius` sphere
/// (restricted to the cone around `support` when given) and returns the
/// smallest Taylor-remainder ratio.
pub fn lrsc_probe(
    loss: &Loss,
    data: &Dataset<f64>,
    beta_star: ArrayView1<'_, f64>,
    radius: f64,
    num_directions: usize,
    seed: u64,
    support: Option<&[usize]>,
) -> Result<LrscProbe> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid_param(format!("radius must be positive, got {radius}")));
    }
    if num_directions == 0 {
        return Err(Error::invalid_param("need at least one direction"));
    }
    let d = data.d();
    if let Some(s) = support {
        if s.is_empty() || s.iter().any(|&j| j >= d) {
            return Err(Error::invalid_param(format!("support must be non-empty indices below {d}")));
        }
    }
    loss.validate(data)?;
    let obj = Objective::new(*loss, data);
    let eta_star = obj.eta(beta_star)?;
    let f_star = obj.value_at_eta(eta_star.view());
    let grad_star = obj.grad_at_eta(eta_star.view());

    let mut best: Option<LrscProbe> = None;
    for k in 0..num_directions {
        let mut rng = stream(seed, "lrsc-direction", &[k as u64]);
        let mut delta: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        if let Some(s) = support {
            project_to_cone(&mut delta, s);
        }
        let norm = l2_norm(delta.view());
        if norm == 0.0 {
            continue;
        }
        delta *= radius / norm;
        let eta = &eta_star + &obj.eta(delta.view())?;
        let remainder = obj.value_at_eta(eta.view()) - f_star - grad_star.dot(&delta);
        let ratio = remainder / (radius * radius);
        if best.as_ref().is_none_or(|b| ratio < b.min_ratio) {
            best = Some(LrscProbe {
                min_ratio: ratio,
                min_direction: delta,
            });
        }
    }
    best.ok_or_else(|| Error::invalid_param("every sampled direction was degenerate"))
}
