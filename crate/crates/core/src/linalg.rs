//! Small dense symmetric solvers for subset-sized systems.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Systems whose 1-norm condition estimate exceeds this are rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<F> {
    l: Array2<F>,
    condition: F,
}

impl<F: Scalar> Cholesky<F> {
    /// Factors `a` and rejects it if it is not numerically positive definite
    /// or its condition estimate exceeds [`CONDITION_LIMIT`].
    pub fn factor(a: ArrayView2<F>) -> Result<Self> {
        let m = a.nrows();
        if a.ncols() != m {
            return Err(Error::InvalidArgument(format!("expected a square matrix, got {}x{}", m, a.ncols())));
        }
        if m == 0 {
            return Ok(Self { l: Array2::zeros((0, 0)), condition: F::one() });
        }
        let max_diag = a.diag().iter().fold(F::zero(), |acc, &v| acc.max(v.abs()));
        let pivot_floor = F::epsilon() * F::from_count(m) * max_diag;
        let mut l = Array2::<F>::zeros((m, m));
        for j in 0..m {
            let mut s = a[[j, j]];
            for k in 0..j {
                s -= l[[j, k]] * l[[j, k]];
            }
            if !(s > pivot_floor) || !s.is_finite() {
                return Err(Error::Singular { condition: f64::INFINITY });
            }
            let ljj = s.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..m {
                let mut t = a[[i, j]];
                for k in 0..j {
                    t -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = t / ljj;
            }
        }
        let mut chol = Self { l, condition: F::one() };
        let inv = chol.inverse();
        chol.condition = one_norm(a) * one_norm(inv.view());
        if !(chol.condition.as_f64() < CONDITION_LIMIT) {
            return Err(Error::Singular { condition: chol.condition.as_f64() });
        }
        Ok(chol)
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// 1-norm condition number of the factored matrix.
    pub fn condition(&self) -> F {
        self.condition
    }

    pub fn factor_l(&self) -> &Array2<F> {
        &self.l
    }

    pub fn solve(&self, b: ArrayView1<F>) -> Array1<F> {
        let mut x = b.to_owned();
        self.solve_in_place(x.as_slice_mut().expect("owned vector is contiguous"));
        x
    }

    pub fn solve_in_place(&self, x: &mut [F]) {
        let m = self.dim();
        debug_assert_eq!(x.len(), m);
        for i in 0..m {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[[i, k]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
        for i in (0..m).rev() {
            let mut s = x[i];
            for k in (i + 1)..m {
                s -= self.l[[k, i]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
    }

    pub fn inverse(&self) -> Array2<F> {
        let m = self.dim();
        let mut inv = Array2::<F>::zeros((m, m));
        let mut col = vec![F::zero(); m];
        for j in 0..m {
            col.iter_mut().for_each(|v| *v = F::zero());
            col[j] = F::one();
            self.solve_in_place(&mut col);
            for i in 0..m {
                inv[[i, j]] = col[i];
            }
        }
        // symmetrize away rounding asymmetry
        for i in 0..m {
            for j in (i + 1)..m {
                let avg = (inv[[i, j]] + inv[[j, i]]) * F::lit(0.5);
                inv[[i, j]] = avg;
                inv[[j, i]] = avg;
            }
        }
        inv
    }
}

/// True when `a + shift·I` admits a Cholesky factorization, i.e. the smallest
/// eigenvalue of `a` exceeds `-shift` (up to rounding).
pub fn is_positive_definite_shifted<F: Scalar>(a: ArrayView2<F>, shift: F) -> bool {
    let m = a.nrows();
    let mut l = Array2::<F>::zeros((m, m));
    for j in 0..m {
        let mut s = a[[j, j]] + shift;
        for k in 0..j {
            s -= l[[j, k]] * l[[j, k]];
        }
        if !(s > F::zero()) {
            return false;
        }
        let ljj = s.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..m {
            let mut t = a[[i, j]];
            for k in 0..j {
                t -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = t / ljj;
        }
    }
    true
}

fn one_norm<F: Scalar>(a: ArrayView2<F>) -> F {
    a.columns().into_iter().map(|c| c.iter().fold(F::zero(), |acc, &v| acc + v.abs())).fold(F::zero(), F::max)
}

/// `xᵀ A y` for a square `A`.
pub fn bilinear<F: Scalar>(x: ArrayView1<F>, a: ArrayView2<F>, y: ArrayView1<F>) -> F {
    x.dot(&a.dot(&y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_spd_system() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let chol = Cholesky::factor(a.view()).unwrap();
        let x = chol.solve(array![1.0, 2.0].view());
        let r = a.dot(&x) - array![1.0, 2.0];
        assert!(r.iter().all(|v: &f64| v.abs() < 1e-14));
        let inv = chol.inverse();
        let eye = a.dot(&inv);
        assert!((eye[[0, 0]] - 1.0f64).abs() < 1e-14 && eye[[0, 1]].abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_is_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        match Cholesky::<f64>::factor(a.view()) {
            Err(Error::Singular { .. }) => {}
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn ill_conditioned_is_rejected() {
        let a = array![[1.0, 0.0], [0.0, 1e-14]];
        assert!(matches!(Cholesky::<f64>::factor(a.view()), Err(Error::Singular { .. })));
    }
}
