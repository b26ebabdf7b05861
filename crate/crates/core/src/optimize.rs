//! Convex solvers for the (weighted) likelihood: damped Newton for the
//! unpenalized estimator and accelerated proximal gradient for the
//! ℓ1-penalized one. Both start at β = 0 and are deterministic.

use ndarray::{Array1, ArrayView1, Zip};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{Family, Loss, Objective};
use crate::linalg::{l1_norm, solve_spd, sup_norm};
use crate::scalar::{signum0, Scalar};

/// Maximum backtracking halvings per line search.
const MAX_BACKTRACKS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOpts {
    pub max_iters: usize,
    /// Stop once the sup-norm of the gradient (or KKT residual) is at most this.
    pub grad_tol: f64,
    pub step_init: f64,
    pub backtrack_factor: f64,
    /// Armijo sufficient-decrease constant.
    pub backtrack_c: f64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            grad_tol: 1e-8,
            step_init: 1.0,
            backtrack_factor: 0.5,
            backtrack_c: 1e-4,
        }
    }
}

impl SolverOpts {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid_param("max_iters must be positive"));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::invalid_param(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        if !(self.step_init > 0.0 && self.step_init.is_finite()) {
            return Err(Error::invalid_param(format!("step_init must be positive, got {}", self.step_init)));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::invalid_param("backtrack_factor must lie in (0, 1)"));
        }
        if !(self.backtrack_c > 0.0 && self.backtrack_c < 1.0) {
            return Err(Error::invalid_param("backtrack_c must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn with_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub beta_hat: Array1<T>,
    /// Accepted steps.
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm of the gradient (smooth fits) or KKT residual (ℓ1 fits) at `beta_hat`.
    pub final_residual: T,
    /// Objective at `beta_hat`, including the penalty for ℓ1 fits.
    pub objective: T,
}

/// Rounding allowance when comparing objective values.
#[inline]
fn rounding_slack<T: Scalar>(f: T) -> T {
    T::epsilon() * T::lit(16.0) * f.abs().max(T::one())
}

#[inline]
fn monotone_slack<T: Scalar>(f: T) -> T {
    T::lit(1e-12) * f.abs().max(T::one())
}

fn last_iterate<T: Scalar>(beta: &Array1<T>) -> Vec<f64> {
    beta.iter().map(|v| v.to_f64_lossy()).collect()
}

/// Minimizes the plain (or, with `weighted_p`, the label-flip weighted)
/// negative log-likelihood on `data` as given.
pub fn fit_mle<T: Scalar>(
    family: Family,
    data: &Dataset<T>,
    opts: &SolverOpts,
    weighted_p: Option<f64>,
) -> Result<FitResult<T>> {
    minimize_smooth(&Loss::new(family, weighted_p)?, data, opts)
}

/// Damped Newton with Armijo backtracking. Falls back to a gradient step when
/// the Hessian is numerically singular or the Newton direction is not a
/// descent direction.
pub fn minimize_smooth<T: Scalar>(loss: &Loss, data: &Dataset<T>, opts: &SolverOpts) -> Result<FitResult<T>> {
    opts.validate()?;
    loss.validate(data)?;
    let obj = Objective::new(*loss, data);
    let d = obj.d();
    let tol = T::lit(opts.grad_tol);
    let shrink = T::lit(opts.backtrack_factor);
    let c = T::lit(opts.backtrack_c);
    let step0 = T::lit(opts.step_init);

    let mut beta = Array1::<T>::zeros(d);
    let mut eta = Array1::<T>::zeros(obj.n());
    let mut f = obj.value_at_eta(eta.view());
    if !f.is_finite() {
        return Err(Error::Diverged {
            iterations: 0,
            last_iterate: last_iterate(&beta),
        });
    }
    let mut grad = obj.grad_at_eta(eta.view());

    for iter in 0..opts.max_iters {
        let residual = sup_norm(grad.view());
        if residual <= tol {
            return Ok(FitResult {
                beta_hat: beta,
                iterations: iter,
                converged: true,
                final_residual: residual,
                objective: f,
            });
        }

        let hess = obj.hessian_at_eta(eta.view());
        let neg_grad = grad.mapv(|g| -g);
        let direction = match solve_spd(hess.view(), neg_grad.view()) {
            Some(dir) if dir.dot(&grad) < T::zero() => dir,
            _ => neg_grad,
        };
        let slope = direction.dot(&grad);
        let x_dir = obj.eta(direction.view())?;

        let mut t = step0;
        let mut accepted = None;
        let mut any_finite = false;
        for _ in 0..MAX_BACKTRACKS {
            let eta_new = &eta + &(&x_dir * t);
            let f_new = obj.value_at_eta(eta_new.view());
            if f_new.is_finite() {
                any_finite = true;
                if f_new <= f + c * t * slope {
                    accepted = Some((t, eta_new, f_new));
                    break;
                }
            }
            t = t * shrink;
        }
        if !any_finite {
            return Err(Error::Diverged {
                iterations: iter,
                last_iterate: last_iterate(&beta),
            });
        }
        let (t, eta_new, f_new, grad_new) = match accepted {
            Some((t, eta_new, f_new)) => {
                let g = obj.grad_at_eta(eta_new.view());
                (t, eta_new, f_new, g)
            }
            None => {
                // Objective differences are at rounding level: take the full
                // step when it reduces the gradient without raising f.
                let eta_new = &eta + &(&x_dir * step0);
                let f_new = obj.value_at_eta(eta_new.view());
                let g = obj.grad_at_eta(eta_new.view());
                if f_new <= f + rounding_slack(f) && sup_norm(g.view()) < residual {
                    (step0, eta_new, f_new, g)
                } else {
                    return Ok(FitResult {
                        beta_hat: beta,
                        iterations: iter,
                        converged: false,
                        final_residual: residual,
                        objective: f,
                    });
                }
            }
        };
        debug_assert!(f_new <= f + monotone_slack(f), "objective increased: {f} -> {f_new}");
        beta.scaled_add(t, &direction);
        eta = eta_new;
        f = f_new;
        grad = grad_new;
    }

    let residual = sup_norm(grad.view());
    Ok(FitResult {
        beta_hat: beta,
        iterations: opts.max_iters,
        converged: residual <= tol,
        final_residual: residual,
        objective: f,
    })
}

/// Penalty schedule `2·multiplier·√(log d / n)`; needs `d ≥ 2`.
pub fn default_lambda(n: usize, d: usize, multiplier: f64) -> Result<f64> {
    if n == 0 || d < 2 {
        return Err(Error::invalid_param(format!(
            "penalty schedule needs n ≥ 1 and d ≥ 2, got n={n}, d={d}"
        )));
    }
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::invalid_param(format!("multiplier must be positive, got {multiplier}")));
    }
    Ok(2.0 * multiplier * ((d as f64).ln() / n as f64).sqrt())
}

/// `sign(v)·max(|v| − t, 0)`, the proximal map of `t·|·|`.
#[inline]
pub fn soft_threshold<T: Scalar>(v: T, t: T) -> T {
    let m = v.abs() - t;
    if m > T::zero() {
        signum0(v) * m
    } else {
        T::zero()
    }
}

/// Largest violation of the ℓ1 optimality conditions given the gradient `grad`
/// of the smooth part at `beta`.
pub fn kkt_residual_from_grad<T: Scalar>(grad: ArrayView1<'_, T>, beta: ArrayView1<'_, T>, lambda: T) -> T {
    grad.iter().zip(beta.iter()).fold(T::zero(), |acc, (&g, &b)| {
        let r = if b != T::zero() {
            (g + lambda * signum0(b)).abs()
        } else {
            (g.abs() - lambda).max(T::zero())
        };
        acc.max(r)
    })
}

/// KKT residual of `nll(β) + λ‖β‖₁` at `beta`.
pub fn kkt_residual<T: Scalar>(family: Family, data: &Dataset<T>, beta: ArrayView1<'_, T>, lambda: T) -> Result<T> {
    loss_kkt_residual(&Loss::Glm(family), data, beta, lambda)
}

pub fn loss_kkt_residual<T: Scalar>(loss: &Loss, data: &Dataset<T>, beta: ArrayView1<'_, T>, lambda: T) -> Result<T> {
    let grad = loss.gradient(data, beta)?;
    Ok(kkt_residual_from_grad(grad.view(), beta, lambda))
}

/// Minimizes `nll(β) + λ‖β‖₁` on `data` as given.
pub fn fit_l1<T: Scalar>(family: Family, data: &Dataset<T>, lambda: T, opts: &SolverOpts) -> Result<FitResult<T>> {
    minimize_l1(&Loss::Glm(family), data, lambda, opts)
}

pub fn minimize_l1<T: Scalar>(loss: &Loss, data: &Dataset<T>, lambda: T, opts: &SolverOpts) -> Result<FitResult<T>> {
    minimize_l1_from(loss, data, lambda, opts, None)
}

/// Accelerated proximal gradient with backtracking on the local Lipschitz
/// estimate and two momentum restart rules (objective increase, gradient
/// direction). Starts at `start`, or at zero when `None`.
pub fn minimize_l1_from<T: Scalar>(
    loss: &Loss,
    data: &Dataset<T>,
    lambda: T,
    opts: &SolverOpts,
    start: Option<ArrayView1<'_, T>>,
) -> Result<FitResult<T>> {
    opts.validate()?;
    loss.validate(data)?;
    if !(lambda > T::zero()) || !lambda.is_finite() {
        return Err(Error::invalid_param(format!("lambda must be positive and finite, got {lambda}")));
    }
    let obj = Objective::new(*loss, data);
    let d = obj.d();
    let tol = T::lit(opts.grad_tol);
    let affine_grad = obj.family() == Family::Linear;

    let x0 = match start {
        Some(s) if s.len() != d => return Err(Error::shape("warm start has wrong length")),
        Some(s) => s.to_owned(),
        None => Array1::zeros(d),
    };
    let mut state = ProxState::new(&obj, lambda, x0)?;
    let mut lipschitz = T::one() / T::lit(opts.step_init);
    let mut prev: Option<Point<T>> = None;
    let mut theta = T::one();
    let mut momentum = T::zero();

    for iter in 0..opts.max_iters {
        let residual = kkt_residual_from_grad(state.cur.grad.view(), state.cur.beta.view(), lambda);
        if residual <= tol {
            return Ok(state.finish(iter, true, residual));
        }

        // extrapolated point y = x + m (x − x_prev)
        let y = match (&prev, momentum > T::zero()) {
            (Some(p), true) => {
                let combine = |a: &Array1<T>, b: &Array1<T>| {
                    let mut out = a.clone();
                    Zip::from(&mut out).and(a).and(b).for_each(|o, &ai, &bi| *o = ai + momentum * (ai - bi));
                    out
                };
                let beta = combine(&state.cur.beta, &p.beta);
                let eta = combine(&state.cur.eta, &p.eta);
                let grad = if affine_grad {
                    combine(&state.cur.grad, &p.grad)
                } else {
                    obj.grad_at_eta(eta.view())
                };
                let f = obj.value_at_eta(eta.view());
                Point { beta, eta, grad, f }
            }
            _ => state.cur.clone(),
        };

        let mut next = prox_step(&obj, &y, lambda, &mut lipschitz, opts, iter, &state.cur.beta)?;
        let mut total = next.f + lambda * l1_norm(next.beta.view());
        let mut restarted = false;
        if total > state.total + rounding_slack(state.total) && momentum > T::zero() {
            let cur = state.cur.clone();
            next = prox_step(&obj, &cur, lambda, &mut lipschitz, opts, iter, &state.cur.beta)?;
            total = next.f + lambda * l1_norm(next.beta.view());
            restarted = true;
        }
        if total > state.total + rounding_slack(state.total) || next.beta == state.cur.beta {
            // objective differences are at evaluation noise: keep going while the certificate improves
            let stalled = next.beta == state.cur.beta
                || total > state.total + monotone_slack(state.total)
                || kkt_residual_from_grad(next.grad.view(), next.beta.view(), lambda) >= residual;
            if stalled {
                return Ok(state.finish(iter, false, residual));
            }
        }
        debug_assert!(
            total <= state.total + monotone_slack(state.total),
            "objective increased: {} -> {}",
            state.total,
            total
        );

        // gradient-based restart: (y − x⁺)ᵀ(x⁺ − x) > 0
        let y_ref = if restarted { &state.cur.beta } else { &y.beta };
        let mut dot = T::zero();
        Zip::from(y_ref)
            .and(&next.beta)
            .and(&state.cur.beta)
            .for_each(|&yv, &xn, &xc| dot += (yv - xn) * (xn - xc));
        if restarted || dot > T::zero() {
            theta = T::one();
            momentum = T::zero();
        } else {
            let theta_next = (T::one() + (T::one() + T::lit(4.0) * theta * theta).sqrt()) * T::lit(0.5);
            momentum = (theta - T::one()) / theta_next;
            theta = theta_next;
        }

        let old = std::mem::replace(&mut state.cur, next);
        prev = Some(old);
        state.total = total;
    }

    let residual = kkt_residual_from_grad(state.cur.grad.view(), state.cur.beta.view(), lambda);
    Ok(state.finish(opts.max_iters, residual <= tol, residual))
}

/// Fits a decreasing sequence of penalty levels, warm-starting each fit at
/// the previous solution. Results are returned in the order of `lambdas`.
pub fn fit_l1_path<T: Scalar>(
    loss: &Loss,
    data: &Dataset<T>,
    lambdas: &[T],
    opts: &SolverOpts,
) -> Result<Vec<FitResult<T>>> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].partial_cmp(&lambdas[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<Option<FitResult<T>>> = vec![None; lambdas.len()];
    let mut warm: Option<Array1<T>> = None;
    for &k in &order {
        let fit = minimize_l1_from(loss, data, lambdas[k], opts, warm.as_ref().map(|w| w.view()))?;
        warm = Some(fit.beta_hat.clone());
        out[k] = Some(fit);
    }
    Ok(out.into_iter().map(|f| f.expect("every lambda fitted")).collect())
}

#[derive(Clone)]
struct Point<T> {
    beta: Array1<T>,
    eta: Array1<T>,
    grad: Array1<T>,
    /// smooth part only
    f: T,
}

struct ProxState<T> {
    cur: Point<T>,
    /// smooth part plus penalty at `cur`
    total: T,
    lambda: T,
}

impl<T: Scalar> ProxState<T> {
    fn new(obj: &Objective<'_, T>, lambda: T, beta: Array1<T>) -> Result<Self> {
        let eta = obj.eta(beta.view())?;
        let f = obj.value_at_eta(eta.view());
        if !f.is_finite() {
            return Err(Error::Diverged {
                iterations: 0,
                last_iterate: last_iterate(&beta),
            });
        }
        let grad = obj.grad_at_eta(eta.view());
        let total = f + lambda * l1_norm(beta.view());
        Ok(Self {
            cur: Point { beta, eta, grad, f },
            total,
            lambda,
        })
    }

    fn finish(self, iterations: usize, converged: bool, residual: T) -> FitResult<T> {
        debug_assert!(self.lambda > T::zero());
        FitResult {
            beta_hat: self.cur.beta,
            iterations,
            converged,
            final_residual: residual,
            objective: self.total,
        }
    }
}

/// One proximal gradient step from `y`, increasing the Lipschitz estimate
/// until the quadratic upper model holds.
fn prox_step<T: Scalar>(
    obj: &Objective<'_, T>,
    y: &Point<T>,
    lambda: T,
    lipschitz: &mut T,
    opts: &SolverOpts,
    iter: usize,
    fallback: &Array1<T>,
) -> Result<Point<T>> {
    let grow = T::one() / T::lit(opts.backtrack_factor);
    for _ in 0..MAX_BACKTRACKS {
        let step = T::one() / *lipschitz;
        let thresh = lambda * step;
        let beta: Array1<T> = Zip::from(&y.beta)
            .and(&y.grad)
            .map_collect(|&b, &g| soft_threshold(b - step * g, thresh));
        let diff = &beta - &y.beta;
        let eta = obj.eta(beta.view())?;
        let f = obj.value_at_eta(eta.view());
        if f.is_finite() {
            let model = y.f + y.grad.dot(&diff) + *lipschitz * T::lit(0.5) * diff.dot(&diff);
            if f <= model + rounding_slack(y.f) {
                let grad = obj.grad_at_eta(eta.view());
                return Ok(Point { beta, eta, grad, f });
            }
        }
        *lipschitz = *lipschitz * grow;
    }
    Err(Error::Diverged {
        iterations: iter,
        last_iterate: last_iterate(fallback),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::grad_nll;
    use ndarray::{array, Array2};

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        for v in [-2.5, -0.0, 0.0, 1e-300, 7.0] {
            assert_eq!(soft_threshold(v, 0.0), v);
        }
        assert_eq!(soft_threshold(-1e-12, 0.5), 0.0);
    }

    #[test]
    fn opts_validation_and_round_trip() {
        assert!(SolverOpts::default().validate().is_ok());
        let bad = SolverOpts {
            backtrack_factor: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let text = toml::to_string(&SolverOpts::default()).unwrap();
        let back: SolverOpts = toml::from_str(&text).unwrap();
        assert_eq!(back, SolverOpts::default());
    }

    #[test]
    fn logistic_symmetric_design() {
        let x = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let data = Dataset::<f64>::new(x, array![1.0, 1.0, 0.0, 0.0]).unwrap();
        // this design is separable in the first coordinate, so the MLE does
        // not exist; doubling it and adding each point once with the other
        // label gives success rate 2/3 on x₁ = 1, hence β = (ln 2, 0)
        let x = array![
            [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0],
            [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0],
            [1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]
        ];
        let z = array![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        let overlapping = Dataset::<f64>::new(x, z).unwrap();
        let fit = fit_mle(Family::Logistic, &overlapping, &SolverOpts::default(), None).unwrap();
        assert!(fit.converged);
        assert!((fit.beta_hat[0] - 2f64.ln()).abs() <= 1e-8);
        assert!(fit.beta_hat[1].abs() <= 1e-8);

        let sep = fit_mle(
            Family::Logistic,
            &data,
            &SolverOpts {
                max_iters: 200,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(sep.beta_hat[1].abs() <= 1e-6);
        assert!(sep.beta_hat[0] > 5.0);
        assert!(sep.beta_hat.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn singular_hessian_falls_back_to_gradient_steps() {
        // duplicated column: Hessian is singular everywhere
        let x = array![[1.0, 1.0], [2.0, 2.0], [-1.0, -1.0], [0.5, 0.5]];
        let data = Dataset::<f64>::new(x, array![1.0, 3.0, -2.0, 0.0]).unwrap();
        let fit = fit_mle(Family::Linear, &data, &SolverOpts::default(), None).unwrap();
        assert!(fit.converged);
        assert!((fit.beta_hat[0] - fit.beta_hat[1]).abs() < 1e-8);
        let g = grad_nll(Family::Linear, &data, fit.beta_hat.view()).unwrap();
        assert!(sup_norm(g.view()) <= 1e-8);
    }

    #[test]
    fn l1_large_penalty_gives_zero() {
        let x = array![[1.0, 0.3], [-0.4, 2.0], [0.7, -1.1]];
        let data = Dataset::<f64>::new(x, array![1.0, -2.0, 0.5]).unwrap();
        let g0 = grad_nll(Family::Linear, &data, array![0.0, 0.0].view()).unwrap();
        let lambda = sup_norm(g0.view());
        let fit = fit_l1(Family::Linear, &data, lambda, &SolverOpts::default()).unwrap();
        assert!(fit.converged);
        assert_eq!(fit.beta_hat, array![0.0, 0.0]);
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn kkt_residual_examples() {
        let data = Dataset::<f64>::new(array![[1.0, 0.0], [0.0, 1.0]], array![0.0, 0.0]).unwrap();
        assert_eq!(kkt_residual(Family::Linear, &data, array![0.0, 0.0].view(), 10.0).unwrap(), 0.0);
        let g = array![0.5, -2.0, 0.3];
        let b = array![1.0, 0.0, -2.0];
        // |0.5 + 1|, max(2 − 1, 0), |0.3 − 1|
        assert_eq!(kkt_residual_from_grad(g.view(), b.view(), 1.0), 1.5);
    }

    #[test]
    fn l1_rejects_bad_lambda() {
        let data = Dataset::<f64>::new(array![[1.0]], array![1.0]).unwrap();
        assert!(fit_l1(Family::Linear, &data, 0.0, &SolverOpts::default()).is_err());
        assert!(fit_l1(Family::Linear, &data, f64::NAN, &SolverOpts::default()).is_err());
    }

    #[test]
    fn path_matches_cold_starts() {
        let x = Array2::from_shape_fn((30, 8), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let z = Array1::from_shape_fn(30, |i| (i as f64 * 0.37).sin());
        let data = Dataset::<f64>::new(x, z).unwrap();
        let lambdas = [0.01, 0.2, 0.05];
        let loss = Loss::Glm(Family::Linear);
        let opts = SolverOpts::default();
        let path = fit_l1_path(&loss, &data, &lambdas, &opts).unwrap();
        for (fit, &lam) in path.iter().zip(&lambdas) {
            let cold = minimize_l1(&loss, &data, lam, &opts).unwrap();
            assert!(fit.converged && cold.converged);
            let diff = &fit.beta_hat - &cold.beta_hat;
            assert!(sup_norm(diff.view()) < 1e-6, "lambda {lam}");
        }
    }

    #[test]
    fn works_in_f32() {
        // paired rows with opposite labels keep the logistic MLE finite
        let x = array![[1.0f32, 0.5], [1.0, 0.5], [0.2, -1.0], [0.2, -1.0], [-0.7, 0.3], [1.5, 1.0]];
        let data = Dataset::<f32>::new(x, array![1.0f32, 0.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let opts = SolverOpts::default().with_tol(1e-4);
        let fit = fit_mle(Family::Logistic, &data, &opts, None).unwrap();
        assert!(fit.converged);
        let fit = fit_l1(Family::Linear, &data, 0.05f32, &opts).unwrap();
        assert!(fit.converged);
    }
}
