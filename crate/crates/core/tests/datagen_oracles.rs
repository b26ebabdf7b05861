use std::f64::consts::PI;

use heavyglm::datagen::{
    flip_labels, flip_with_mask, gen_features, gen_linear, gen_logistic, make_beta, BetaPattern, CorruptionSpec,
    FeatureDist,
};
use heavyglm::Dataset64;
use ndarray::{array, Array1, Array2};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn median_abs(v: &[f64]) -> f64 {
    let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(f64::total_cmp);
    a[a.len() / 2]
}

/// Student-t CDF for three degrees of freedom, closed form.
fn t3_cdf(t: f64) -> f64 {
    let s = t / 3f64.sqrt();
    0.5 + (s / (1.0 + s * s) + s.atan()) / PI
}

/// Median of `|T₃|`, by bisection on the closed-form CDF.
fn t3_abs_median() -> f64 {
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t3_cdf(mid) < 0.75 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn gaussian_features_have_unit_moments() {
    let x = gen_features(50_000, 2, FeatureDist::GaussianStd, 1).unwrap();
    for col in x.columns() {
        let v = col.to_vec();
        let se = (1.0 / v.len() as f64).sqrt();
        assert!(mean(&v).abs() < 5.0 * se);
        assert!((variance(&v) - 1.0).abs() < 5.0 * (2.0 / v.len() as f64).sqrt());
    }
}

#[test]
fn student_t_variance_and_tails() {
    let nu = 10.0;
    let x = gen_features(100_000, 1, FeatureDist::student_t(nu).unwrap(), 2).unwrap();
    let v = x.column(0).to_vec();
    assert!((variance(&v) - nu / (nu - 2.0)).abs() < 0.03);
    assert_eq!(FeatureDist::student_t(nu).unwrap().std_dev(), Some((1.25f64).sqrt()));

    let x = gen_features(100_000, 1, FeatureDist::student_t(3.0).unwrap(), 3).unwrap();
    let v = x.column(0).to_vec();
    let tail = v.iter().filter(|t| t.abs() > 3.0).count() as f64 / v.len() as f64;
    let oracle = 2.0 * (1.0 - t3_cdf(3.0));
    assert!((tail - oracle).abs() < 5.0 * (oracle * (1.0 - oracle) / v.len() as f64).sqrt());

    // Cauchy: half the mass beyond one
    let x = gen_features(100_000, 1, FeatureDist::student_t(1.0).unwrap(), 4).unwrap();
    let beyond = x.iter().filter(|t| t.abs() > 1.0).count() as f64 / 100_000.0;
    assert!((beyond - 0.5).abs() < 5.0 * (0.25f64 / 100_000.0).sqrt());
    assert_eq!(FeatureDist::student_t(2.1).unwrap().std_dev().map(|s| (s * s * 1e6).round()), Some(21e6));
    assert_eq!(FeatureDist::student_t(2.0).unwrap().std_dev(), None);
}

#[test]
fn additive_noise_hits_target_scale() {
    let n = 100_000;
    let x = Array2::from_elem((n, 1), 1.0);
    let gauss = CorruptionSpec::AdditiveNoise { noise_dist: FeatureDist::GaussianStd, target_sd: 5.0 };
    let data = gen_linear(x.clone(), array![0.0].view(), &gauss, 5).unwrap();
    let sd = variance(&data.z().to_vec()).sqrt();
    assert!((4.8..=5.2).contains(&sd), "sd {sd}");

    // t₃ noise scaled by 5/√3: check the median of |ε| against the closed form
    let t3 = CorruptionSpec::AdditiveNoise { noise_dist: "t:3".parse().unwrap(), target_sd: 5.0 };
    let data = gen_linear(x, array![2.0].view(), &t3, 6).unwrap();
    let eps: Vec<f64> = data.z().iter().map(|z| z - 2.0).collect();
    let oracle = 5.0 / 3f64.sqrt() * t3_abs_median();
    assert!((median_abs(&eps) / oracle - 1.0).abs() < 0.02);
    assert_eq!(data.y_clean().unwrap(), Array1::from_elem(n, 2.0));
}

#[test]
fn zero_noise_is_exact() {
    let x = gen_features(30, 4, FeatureDist::GaussianStd, 7).unwrap();
    let beta = array![1.0, -2.0, 0.0, 0.5];
    let spec = CorruptionSpec::AdditiveNoise { noise_dist: FeatureDist::GaussianStd, target_sd: 0.0 };
    let data = gen_linear(x.clone(), beta.view(), &spec, 8).unwrap();
    assert_eq!(data.z(), x.dot(&beta));
    assert!(gen_linear(x.clone(), beta.view(), &CorruptionSpec::LabelFlip { flip_p: 0.1 }, 8).is_err());
    let infinite = CorruptionSpec::AdditiveNoise { noise_dist: "t:2".parse().unwrap(), target_sd: 1.0 };
    assert!(gen_linear(x, beta.view(), &infinite, 8).is_err());
}

#[test]
fn logistic_label_frequencies() {
    let n = 40_000;
    let x = Array2::from_elem((n, 1), 1.0);
    for (b, p) in [(0.0, 0.5), (3f64.ln(), 0.75), (-(9f64.ln()), 0.1)] {
        let data = gen_logistic(x.clone(), array![b].view(), 9).unwrap();
        let freq = data.z().sum() / n as f64;
        assert!((freq - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt(), "{freq} vs {p}");
        assert!(data.is_binary());
        assert_eq!(data.y_clean().unwrap(), data.z());
    }
}

#[test]
fn label_flips_follow_the_mask() {
    let n = 50_000;
    let x = Array2::from_elem((n, 1), 1.0);
    let clean = gen_logistic(x, array![0.3].view(), 10).unwrap();
    let p = 0.1;
    let noisy = flip_labels(&clean, p, 11).unwrap();
    let mask = noisy.flip_mask().unwrap().to_vec();
    let rate = mask.iter().filter(|m| **m).count() as f64 / n as f64;
    assert!((rate - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt());
    for i in 0..n {
        assert_eq!(noisy.z()[i] != clean.z()[i], mask[i]);
    }
    assert_eq!(noisy.y_clean(), clean.y_clean());
    let back = flip_with_mask(&noisy, mask).unwrap();
    assert_eq!(back.z(), clean.z());
    assert_eq!(flip_labels(&clean, 0.0, 11).unwrap().z(), clean.z());

    assert!(flip_labels(&clean, 0.5, 11).is_err());
    assert!(flip_labels(&clean, -0.1, 11).is_err());
    let soft = Dataset64::new(array![[1.0]], array![0.5]).unwrap();
    assert!(flip_labels(&soft, 0.1, 11).is_err());
}

#[test]
fn beta_patterns() {
    assert_eq!(make_beta(7, &BetaPattern::FiveOnes).unwrap(), array![1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
    let h = make_beta(12, &BetaPattern::HalfPmHalf).unwrap();
    assert_eq!(h.slice(ndarray::s![..5]), Array1::from_elem(5, 0.5));
    assert_eq!(h.slice(ndarray::s![5..10]), Array1::from_elem(5, -0.5));
    assert_eq!(h.slice(ndarray::s![10..]), Array1::<f64>::zeros(2));
    assert_eq!(make_beta(3, &BetaPattern::SparsePm1).unwrap(), array![1.0, 1.0, -1.0]);
    assert_eq!(make_beta(2, &"0.5,-1".parse().unwrap()).unwrap(), array![0.5, -1.0]);
    assert!(make_beta(3, &BetaPattern::FiveOnes).is_err());
    assert!(make_beta(9, &BetaPattern::HalfPmHalf).is_err());
    assert!(make_beta(3, &"1,2".parse().unwrap()).is_err());
    assert!("ones".parse::<BetaPattern>().is_err());
    for p in ["five_ones", "half_pm_half", "sparse_pm1", "1,-0.5"] {
        assert_eq!(p.parse::<BetaPattern>().unwrap().to_string(), p);
    }
}

#[test]
fn generation_is_deterministic_and_row_stable() {
    let dist = FeatureDist::student_t(4.1).unwrap();
    let a = gen_features(20, 6, dist, 42).unwrap();
    assert_eq!(a, gen_features(20, 6, dist, 42).unwrap());
    assert_ne!(a, gen_features(20, 6, dist, 43).unwrap());
    // row i depends only on (seed, i)
    let short = gen_features(8, 6, dist, 42).unwrap();
    assert_eq!(short, a.slice(ndarray::s![..8, ..]));

    let beta = make_beta(6, &BetaPattern::FiveOnes).unwrap();
    let l1 = gen_logistic(a.clone(), beta.view(), 5).unwrap();
    assert_eq!(l1, gen_logistic(a.clone(), beta.view(), 5).unwrap());
    assert_eq!(flip_labels(&l1, 0.2, 1).unwrap(), flip_labels(&l1, 0.2, 1).unwrap());
    assert!(gen_features(0, 3, dist, 1).is_err());
    assert!(gen_logistic(a, array![1.0].view(), 5).is_err());
}
