use heavyglm::glm::grad_nll;
use heavyglm::linalg::sup_norm;
use heavyglm::optimize::{
    default_lambda, fit_l1, fit_l1_path, fit_mle, kkt_residual, minimize_l1, soft_threshold,
};
use heavyglm::{Dataset64, Family, Loss, SolverOpts};
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal))
}

fn to_na(x: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]])
}

/// Least-squares solution from the normal equations.
fn normal_equations(x: &Array2<f64>, z: &Array1<f64>) -> Array1<f64> {
    let a = to_na(x);
    let b = DVector::from_iterator(z.len(), z.iter().copied());
    let sol = (a.transpose() * &a).cholesky().expect("full rank").solve(&(a.transpose() * b));
    Array1::from_iter(sol.iter().copied())
}

/// Design with `XᵀX / n = I`.
fn orthonormal_design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    let g = to_na(&gaussian_matrix(rng, n, d));
    let q = g.qr().q();
    let scale = (n as f64).sqrt();
    Array2::from_shape_fn((n, d), |(i, j)| scale * q[(i, j)])
}

#[test]
fn linear_mle_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(d + 5..=60);
        let x = gaussian_matrix(&mut rng, n, d);
        let z: Array1<f64> = (0..n).map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let oracle = normal_equations(&x, &z);
        let data = Dataset64::new(x, z).unwrap();
        let fit = fit_mle(Family::Linear, &data, &SolverOpts::default(), None).unwrap();
        assert!(fit.converged);
        let err = sup_norm((&fit.beta_hat - &oracle).view());
        assert!(err <= 1e-8 * sup_norm(oracle.view()).max(1.0), "error {err}");
    }
}

#[test]
fn linear_mle_recovers_noiseless_truth() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let x = gaussian_matrix(&mut rng, 40, 6);
    let truth: Array1<f64> = (0..6).map(|j| j as f64 - 2.5).collect();
    let data = Dataset64::new(x.clone(), x.dot(&truth)).unwrap();
    let fit = fit_mle(Family::Linear, &data, &SolverOpts::default(), None).unwrap();
    assert!(sup_norm((&fit.beta_hat - &truth).view()) <= 1e-8);
}

#[test]
fn l1_matches_soft_threshold_on_orthonormal_designs() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for k in 0..50 {
        let d = rng.random_range(2..=12);
        let n = rng.random_range(d + 2..=80);
        let x = orthonormal_design(&mut rng, n, d);
        let z: Array1<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let lambda = rng.random_range(0.01..1.0);
        let xtz = x.t().dot(&z) / n as f64;
        let oracle = xtz.mapv(|v| soft_threshold(v, lambda));
        let data = Dataset64::new(x, z).unwrap();
        let fit = fit_l1(Family::Linear, &data, lambda, &SolverOpts::default()).unwrap();
        assert!(fit.converged, "instance {k}");
        assert!(sup_norm((&fit.beta_hat - &oracle).view()) <= 1e-7, "instance {k}");
        assert!(kkt_residual(Family::Linear, &data, oracle.view(), lambda).unwrap() <= 1e-7);
        assert!(fit.final_residual <= 1e-8);
    }
}

#[test]
fn dominating_penalty_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let x = gaussian_matrix(&mut rng, 30, 8);
    let z: Array1<f64> = (0..30).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let data = Dataset64::new(x, z).unwrap();
    let g0 = grad_nll(Family::Linear, &data, Array1::zeros(8).view()).unwrap();
    let fit = fit_l1(Family::Linear, &data, sup_norm(g0.view()), &SolverOpts::default()).unwrap();
    assert!(fit.beta_hat.iter().all(|v| *v == 0.0));
    assert_eq!(fit.iterations, 0);
}

#[test]
fn kkt_residual_detects_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = orthonormal_design(&mut rng, 50, 5);
    let z: Array1<f64> = (0..50).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let data = Dataset64::new(x, z).unwrap();
    let opts = SolverOpts::default();
    let fit = fit_l1(Family::Linear, &data, 0.2, &opts).unwrap();
    let mut bumped = fit.beta_hat.clone();
    bumped[0] += 0.1;
    assert!(kkt_residual(Family::Linear, &data, bumped.view(), 0.2).unwrap() > opts.grad_tol);

    let zero = Dataset64::new(data.x().to_owned(), Array1::zeros(50)).unwrap();
    assert_eq!(kkt_residual(Family::Linear, &zero, Array1::zeros(5).view(), 10.0).unwrap(), 0.0);
}

#[test]
fn random_instances_reach_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let opts = SolverOpts::default();
    for _ in 0..5 {
        // low-dimensional: both families, plain and weighted
        let x = gaussian_matrix(&mut rng, 200, 5);
        let truth: Array1<f64> = (0..5).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let eta = x.dot(&truth);
        let z_lin: Array1<f64> = eta.mapv(|e| e + rng.sample::<f64, _>(StandardNormal));
        let z_log: Array1<f64> = eta.mapv(|e| f64::from(rng.random_bool(1.0 / (1.0 + (-e).exp()))));
        let lin = Dataset64::new(x.clone(), z_lin).unwrap();
        let log = Dataset64::new(x, z_log).unwrap();
        assert!(fit_mle(Family::Linear, &lin, &opts, None).unwrap().final_residual <= opts.grad_tol);
        assert!(fit_mle(Family::Logistic, &log, &opts, None).unwrap().final_residual <= opts.grad_tol);
        // weighted loss: moderate signal keeps it bounded below
        let small = &log.x().to_owned() * 0.3;
        let z_small: Array1<f64> = small
            .dot(&truth)
            .mapv(|e| f64::from(rng.random_bool(1.0 / (1.0 + (-e).exp()))));
        let weighted = Dataset64::new(small, z_small).unwrap();
        let w = fit_mle(Family::Logistic, &weighted, &opts, Some(0.1)).unwrap();
        assert!(w.converged && w.final_residual <= opts.grad_tol, "{}", w.final_residual);

        // high-dimensional sparse
        let x = gaussian_matrix(&mut rng, 200, 50);
        let mut truth = Array1::zeros(50);
        truth[0] = 1.0;
        truth[1] = 1.0;
        truth[2] = -1.0;
        let eta = x.dot(&truth);
        let z_lin: Array1<f64> = eta.mapv(|e| e + rng.sample::<f64, _>(StandardNormal));
        let z_log: Array1<f64> = eta.mapv(|e| f64::from(rng.random_bool(1.0 / (1.0 + (-e).exp()))));
        let lambda = default_lambda(200, 50, 1.0).unwrap();
        for (family, z) in [(Family::Linear, z_lin), (Family::Logistic, z_log)] {
            let data = Dataset64::new(x.clone(), z).unwrap();
            let fit = fit_l1(family, &data, lambda, &opts).unwrap();
            assert!(fit.converged);
            let kkt = kkt_residual(family, &data, fit.beta_hat.view(), lambda).unwrap();
            assert!(kkt <= opts.grad_tol);
        }
    }
}

#[test]
fn unbounded_weighted_loss_is_reported() {
    // separable labels: weighted objective decreases without bound
    let x = Array2::from_shape_fn((40, 1), |(i, _)| if i % 2 == 0 { 1.0 + i as f64 } else { -1.0 - i as f64 });
    let z = Array1::from_iter((0..40).map(|i| f64::from(i % 2 == 0)));
    let data = Dataset64::new(x, z).unwrap();
    let opts = SolverOpts { max_iters: 200, ..SolverOpts::default() };
    match fit_mle(Family::Logistic, &data, &opts, Some(0.1)) {
        Ok(fit) => assert!(!fit.converged && fit.final_residual > opts.grad_tol),
        Err(e) => assert!(matches!(e, heavyglm::Error::Diverged { .. }), "{e}"),
    }
}

#[test]
fn support_shrinks_along_lambda_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    for _ in 0..10 {
        let x = orthonormal_design(&mut rng, 60, 10);
        let z: Array1<f64> = (0..60).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let data = Dataset64::new(x, z).unwrap();
        let lambdas: Vec<f64> = (0..10).map(|k| 0.05 * 1.5f64.powi(k)).collect();
        let fits = fit_l1_path(&Loss::Glm(Family::Linear), &data, &lambdas, &SolverOpts::default()).unwrap();
        let supports: Vec<usize> = fits.iter().map(|f| f.beta_hat.iter().filter(|v| **v != 0.0).count()).collect();
        assert!(supports.windows(2).all(|w| w[0] >= w[1]), "{supports:?}");
        for (f, &lam) in fits.iter().zip(&lambdas) {
            let cold = minimize_l1(&Loss::Glm(Family::Linear), &data, lam, &SolverOpts::default()).unwrap();
            assert!(sup_norm((&f.beta_hat - &cold.beta_hat).view()) <= 1e-7);
        }
    }
}

#[test]
fn fits_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let x = gaussian_matrix(&mut rng, 100, 20);
    let z: Array1<f64> = (0..100).map(|_| f64::from(rng.random_bool(0.4))).collect();
    let data = Dataset64::new(x, z).unwrap();
    let a = fit_l1(Family::Logistic, &data, 0.05, &SolverOpts::default()).unwrap();
    let b = fit_l1(Family::Logistic, &data, 0.05, &SolverOpts::default()).unwrap();
    assert_eq!(a, b);
    let a = fit_mle(Family::Logistic, &data, &SolverOpts::default(), Some(0.2));
    let b = fit_mle(Family::Logistic, &data, &SolverOpts::default(), Some(0.2));
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn f32_matches_f64() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let x = gaussian_matrix(&mut rng, 80, 4);
    let z: Array1<f64> = (0..80).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let d64 = Dataset64::new(x.clone(), z.clone()).unwrap();
    let d32 = heavyglm::Dataset32::new(x.mapv(|v| v as f32), z.mapv(|v| v as f32)).unwrap();
    let opts = SolverOpts::default().with_tol(1e-4);
    let a = fit_mle(Family::Linear, &d64, &opts, None).unwrap();
    let b = fit_mle(Family::Linear, &d32, &opts, None).unwrap();
    assert!(b.converged);
    for (u, v) in a.beta_hat.iter().zip(b.beta_hat.iter()) {
        assert!((u - f64::from(*v)).abs() < 1e-3);
    }
}
