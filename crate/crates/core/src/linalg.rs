//! Small dense helpers used by the solvers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::scalar::Scalar;

pub fn sup_norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

pub fn l1_norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l2_norm<T: Scalar>(v: ArrayView1<'_, T>) -> T {
    v.dot(&v).sqrt()
}

/// Lower Cholesky factor of a symmetric matrix, or `None` when a pivot is not
/// safely positive.
pub fn cholesky<T: Scalar>(a: ArrayView2<'_, T>) -> Option<Array2<T>> {
    let d = a.nrows();
    debug_assert_eq!(d, a.ncols());
    let max_diag = (0..d).fold(T::zero(), |m, i| m.max(a[[i, i]].abs()));
    let floor = max_diag * T::epsilon() * T::lit(d.max(1) as f64);
    let mut l = Array2::<T>::zeros((d, d));
    for j in 0..d {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > floor) {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..d {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the lower factor `L`.
pub fn cholesky_solve<T: Scalar>(l: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Array1<T> {
    let d = l.nrows();
    let mut y = b.to_owned();
    for i in 0..d {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in (i + 1)..d {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Solves the symmetric positive definite system `a x = b`.
pub fn solve_spd<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView1<'_, T>) -> Option<Array1<T>> {
    let l = cholesky(a)?;
    let x = cholesky_solve(l.view(), b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 3.0, 0.4], [0.6, 0.4, 2.0]];
        let b = array![1.0, -2.0, 0.5];
        let x = solve_spd(a.view(), b.view()).unwrap();
        let r = a.dot(&x) - &b;
        assert!(sup_norm(r.view()) < 1e-14);
    }

    #[test]
    fn singular_fails() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(solve_spd(a.view(), array![1.0, 0.0].view()).is_none());
        let a = array![[-1.0, 0.0], [0.0, 1.0]];
        assert!(cholesky(a.view()).is_none());
    }

    #[test]
    fn norms() {
        let v = array![3.0, -4.0];
        assert_eq!(sup_norm(v.view()), 4.0);
        assert_eq!(l1_norm(v.view()), 7.0);
        assert_eq!(l2_norm(v.view()), 5.0);
    }
}
