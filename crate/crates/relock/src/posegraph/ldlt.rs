//! Dense LDLT factorization for the damped normal equations.
//!
//! Unit-lower-triangular L and diagonal D, no pivoting: the damped
//! Gauss-Newton matrix is symmetric positive definite whenever the damping
//! is adequate, and a non-positive or non-finite pivot is exactly the
//! signal the optimizer uses to raise lambda.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("LDLT pivot {pivot} at column {column} is not positive")]
pub struct LdltError {
    pub column: usize,
    pub pivot: f64,
}

#[derive(Debug)]
pub struct Ldlt {
    /// L below the diagonal, D on the diagonal.
    packed: DMatrix<f64>,
}

impl Ldlt {
    /// Factor a symmetric matrix (lower triangle is read).
    pub fn factor(a: &DMatrix<f64>) -> Result<Self, LdltError> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "matrix must be square");
        let mut m = a.clone_owned();
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                let ljk = m[(j, k)];
                d -= ljk * ljk * m[(k, k)];
            }
            if !(d.is_finite() && d > 0.0) {
                return Err(LdltError { column: j, pivot: d });
            }
            m[(j, j)] = d;
            for i in (j + 1)..n {
                let mut v = m[(i, j)];
                for k in 0..j {
                    v -= m[(i, k)] * m[(j, k)] * m[(k, k)];
                }
                m[(i, j)] = v / d;
            }
        }
        Ok(Self { packed: m })
    }

    /// Solve `A x = b` given the factorization.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.packed.nrows();
        let mut x = b.clone_owned();
        // forward: L y = b
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= self.packed[(i, k)] * x[k];
            }
            x[i] = v;
        }
        // diagonal: D z = y
        for i in 0..n {
            x[i] /= self.packed[(i, i)];
        }
        // backward: L^T x = z
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v -= self.packed[(k, i)] * x[k];
            }
            x[i] = v;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn solves_random_spd_systems() {
        let mut rng = StdRng::seed_from_u64(21);
        for n in [1usize, 3, 7, 25] {
            let j = DMatrix::from_fn(n + 2, n, |_, _| rng.gen_range(-1.0..1.0));
            let a = j.transpose() * &j + DMatrix::identity(n, n) * 0.1;
            let x_true = DVector::from_fn(n, |i, _| (i as f64 + 1.0) * 0.5);
            let b = &a * &x_true;
            let x = Ldlt::factor(&a).unwrap().solve(&b);
            // cross-check against nalgebra's LU as an independent route
            let x_lu = a.clone().lu().solve(&b).unwrap();
            assert!((&x - &x_true).norm() < 1e-9, "n={n}");
            assert!((&x - &x_lu).norm() < 1e-9, "n={n}");
        }
    }

    #[test]
    fn rejects_indefinite_matrices() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]); // eigenvalues 3, -1
        let err = Ldlt::factor(&a).unwrap_err();
        assert_eq!(err.column, 1);
        assert!(err.pivot < 0.0);
    }
}
