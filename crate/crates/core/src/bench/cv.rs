//! K-fold cross-validation over shrinkage thresholds and penalty levels.

use ndarray::Array1;
use rand::seq::SliceRandom;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::glm::{nll, Family, Loss};
use crate::optimize::{fit_l1_path, minimize_smooth, SolverOpts};
use crate::rng::stream;
use crate::shrink::{apply_shrink, FeatureMode, ResponseMode, ShrinkSpec};

/// What is being tuned: the loss, whether it carries an ℓ1 penalty, and the
/// shrinkage operators whose thresholds are searched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvTask {
    pub loss: Loss,
    pub penalized: bool,
    pub feature_mode: FeatureMode,
    pub response_mode: ResponseMode,
    pub preserve_sign: bool,
}

impl CvTask {
    fn shrink_spec(&self, tau1: f64, tau2: f64) -> ShrinkSpec {
        ShrinkSpec {
            feature_mode: self.feature_mode,
            tau1,
            response_mode: self.response_mode,
            tau2,
            preserve_response_sign: self.preserve_sign,
        }
    }
}

/// Absolute candidate values. `f64::INFINITY` in a threshold grid means no
/// shrinkage. The lambda grid is ignored for unpenalized tasks.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CvGrid {
    pub tau1: Vec<f64>,
    pub tau2: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Search `(tau1[k], tau2[k])` pairs instead of the full product.
    pub paired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvPoint {
    pub tau1: f64,
    pub tau2: f64,
    pub lambda: f64,
    /// Held-out loss averaged over folds.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub tau1: f64,
    pub tau2: f64,
    pub lambda: f64,
    /// One entry per grid point, thresholds and lambda in descending order.
    pub points: Vec<CvPoint>,
}

/// Held-out criterion on raw (unshrunk) data: squared prediction error for the
/// linear family, plain negative log-likelihood on the observed labels for the
/// logistic family.
pub fn held_out_loss(family: Family, test: &Dataset<f64>, beta: &Array1<f64>) -> Result<f64> {
    match family {
        Family::Linear => {
            let pred = test.x().dot(beta);
            let sse: f64 = pred.iter().zip(test.z().iter()).map(|(p, z)| (z - p) * (z - p)).sum();
            Ok(sse / test.n() as f64)
        }
        Family::Logistic => nll(Family::Logistic, test, beta.view()),
    }
}

/// Contiguous fold blocks of a seeded permutation of the rows.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream(seed, "cv-permutation", &[n as u64]));
    (0..folds)
        .map(|k| {
            let mut block = perm[k * n / folds..(k + 1) * n / folds].to_vec();
            block.sort_unstable();
            block
        })
        .collect()
}

fn sorted_desc(v: &[f64], name: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::invalid_param(format!("{name} grid is empty")));
    }
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::invalid_param(format!("{name} grid entries must be positive")));
    }
    let mut out = v.to_vec();
    out.sort_by(|a, b| b.partial_cmp(a).expect("no NaN after check"));
    out.dedup();
    Ok(out)
}

/// Selects `(tau1, tau2, lambda)` minimizing the average held-out loss on raw
/// held-out rows, so every candidate is scored against the untransformed model.
///
/// Exact ties go to the larger threshold (less shrinkage), then the larger
/// lambda. Fits that fail inside a fold score `+inf` for that point.
pub fn cross_validate(
    data: &Dataset<f64>,
    task: &CvTask,
    grid: &CvGrid,
    folds: usize,
    seed: u64,
    opts: &SolverOpts,
) -> Result<CvOutcome> {
    if folds < 2 {
        return Err(Error::invalid_param(format!("need at least 2 folds, got {folds}")));
    }
    if data.n() < folds {
        return Err(Error::invalid_param(format!("{} rows cannot fill {folds} folds", data.n())));
    }
    task.loss.validate(data)?;
    let single = [f64::INFINITY];
    let tau1 = if task.feature_mode == FeatureMode::None || grid.paired {
        single.to_vec()
    } else {
        sorted_desc(&grid.tau1, "tau1")?
    };
    let tau2 = if task.response_mode == ResponseMode::None || grid.paired {
        single.to_vec()
    } else {
        sorted_desc(&grid.tau2, "tau2")?
    };
    let lambda = if task.penalized {
        let l = sorted_desc(&grid.lambda, "lambda")?;
        if l.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid_param("lambda grid entries must be finite"));
        }
        l
    } else {
        vec![0.0]
    };

    let pairs: Vec<(f64, f64)> = if grid.paired {
        if task.feature_mode == FeatureMode::None || task.response_mode == ResponseMode::None {
            return Err(Error::invalid_param("paired thresholds need both feature and response shrinkage"));
        }
        if grid.tau1.len() != grid.tau2.len() {
            return Err(Error::invalid_param("paired threshold grids must have equal length"));
        }
        let mut p: Vec<(f64, f64)> = grid.tau1.iter().copied().zip(grid.tau2.iter().copied()).collect();
        if p.iter().any(|&(a, b)| !(a > 0.0 && b > 0.0)) {
            return Err(Error::invalid_param("threshold grid entries must be positive"));
        }
        p.sort_by(|a, b| b.partial_cmp(a).expect("no NaN after check"));
        p.dedup();
        p
    } else {
        tau1.iter().flat_map(|&a| tau2.iter().map(move |&b| (a, b))).collect()
    };

    let per_pair = lambda.len();
    let mut totals = vec![0.0; pairs.len() * per_pair];
    let family = task.loss.family();
    let blocks = fold_assignment(data.n(), folds, seed);
    let mut in_test = vec![false; data.n()];
    for block in &blocks {
        in_test.iter_mut().for_each(|f| *f = false);
        block.iter().for_each(|&i| in_test[i] = true);
        let train_rows: Vec<usize> = (0..data.n()).filter(|&i| !in_test[i]).collect();
        let train = data.select_rows(&train_rows);
        let test = data.select_rows(block);
        for (q, &(t1, t2)) in pairs.iter().enumerate() {
            let base = q * per_pair;
            let shrunk = apply_shrink(&train, &task.shrink_spec(t1, t2))?;
            let fits = if task.penalized {
                fit_l1_path(&task.loss, &shrunk, &lambda, opts).map(|fits| fits.into_iter().map(|f| f.beta_hat).collect())
            } else {
                minimize_smooth(&task.loss, &shrunk, opts).map(|f| vec![f.beta_hat])
            };
            match fits {
                Ok(betas) => {
                    for (k, beta) in betas.iter().enumerate() {
                        totals[base + k] += held_out_loss(family, &test, beta)?;
                    }
                }
                Err(Error::Diverged { .. }) => {
                    totals[base..base + per_pair].iter_mut().for_each(|t| *t = f64::INFINITY);
                }
                Err(e) => return Err(e),
            }
        }
    }

    let mut points = Vec::with_capacity(totals.len());
    let mut best: Option<CvPoint> = None;
    for (q, &(t1, t2)) in pairs.iter().enumerate() {
        for (k, &lam) in lambda.iter().enumerate() {
            let loss = totals[q * per_pair + k] / folds as f64;
            let loss = if loss.is_nan() { f64::INFINITY } else { loss };
            let point = CvPoint {
                tau1: t1,
                tau2: t2,
                lambda: lam,
                loss,
            };
            // grid is walked in descending order, so strict `<` keeps the
            // larger values on ties
            if best.is_none_or(|b| point.loss < b.loss) {
                best = Some(point);
            }
            points.push(point);
        }
    }
    let best = best.expect("grid is non-empty");
    Ok(CvOutcome {
        tau1: best.tau1,
        tau2: best.tau2,
        lambda: best.lambda,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_features, gen_linear, CorruptionSpec, FeatureDist};
    use ndarray::array;

    #[test]
    fn folds_partition_rows() {
        let blocks = fold_assignment(23, 5, 3);
        let mut all: Vec<usize> = blocks.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(blocks.iter().all(|b| b.len() == 4 || b.len() == 5));
        assert_eq!(blocks, fold_assignment(23, 5, 3));
    }

    #[test]
    fn single_point_grid_is_returned() {
        let x = gen_features(40, 3, FeatureDist::GaussianStd, 1).unwrap();
        let noise = CorruptionSpec::AdditiveNoise {
            noise_dist: FeatureDist::GaussianStd,
            target_sd: 1.0,
        };
        let data = gen_linear(x, array![1.0, 0.0, -1.0].view(), &noise, 2).unwrap();
        let task = CvTask {
            loss: Loss::Glm(Family::Linear),
            penalized: true,
            feature_mode: FeatureMode::ElementwiseClip,
            response_mode: ResponseMode::Clip,
            preserve_sign: true,
        };
        let grid = CvGrid {
            tau1: vec![1.7],
            tau2: vec![f64::INFINITY],
            lambda: vec![0.3],
            paired: false,
        };
        let out = cross_validate(&data, &task, &grid, 4, 9, &SolverOpts::default()).unwrap();
        assert_eq!((out.tau1, out.tau2, out.lambda), (1.7, f64::INFINITY, 0.3));
        assert_eq!(out.points.len(), 1);
    }

    #[test]
    fn too_few_rows() {
        let data = Dataset::new(array![[1.0], [2.0]], array![1.0, 2.0]).unwrap();
        let task = CvTask {
            loss: Loss::Glm(Family::Linear),
            penalized: false,
            feature_mode: FeatureMode::None,
            response_mode: ResponseMode::None,
            preserve_sign: true,
        };
        let grid = CvGrid {
            tau1: vec![],
            tau2: vec![],
            lambda: vec![],
            paired: false,
        };
        assert!(matches!(
            cross_validate(&data, &task, &grid, 3, 0, &SolverOpts::default()),
            Err(Error::InvalidParameter(_))
        ));
    }
}
