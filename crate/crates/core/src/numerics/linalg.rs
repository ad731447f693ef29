//! Symmetric positive-definite factorisation, log-determinants, solves and
//! the symmetric eigenproblem.

use crate::error::{Error, Result};
use crate::numerics::matrix::Mat;
use crate::scalar::Scalar;

/// Relative asymmetry accepted as "symmetric".
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative jitter used for the single retry after a failed factorisation.
pub const RETRY_JITTER: f64 = 1e-10;
pub const JACOBI_MAX_SWEEPS: usize = 100;
pub const JACOBI_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    l: Mat<T>,
}

fn check_symmetric<T: Scalar>(a: &Mat<T>) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::dims("symmetric matrix", a.rows(), a.cols()));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("symmetric matrix"));
    }
    let tol = T::lit(SYMMETRY_TOL) * a.max_abs();
    let asym = a.asymmetry();
    if asym > tol {
        return Err(Error::NotSymmetric {
            asymmetry: asym.as_f64(),
            tolerance: tol.as_f64(),
        });
    }
    Ok(())
}

fn factor_raw<T: Scalar>(a: &Mat<T>, jitter: T) -> Option<Mat<T>> {
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)] + jitter;
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return None;
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            // Lower triangle only; the upper is assumed to mirror it.
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Some(l)
}

impl<T: Scalar> Cholesky<T> {
    /// Factors `A + jitter·I`. On failure retries once with an extra
    /// `1e-10·tr(A)/n` on the diagonal before giving up.
    pub fn factor(a: &Mat<T>, jitter: T) -> Result<Self> {
        check_symmetric(a)?;
        if jitter < T::zero() {
            return Err(Error::InvalidConfig("negative jitter".into()));
        }
        if let Some(l) = factor_raw(a, jitter) {
            return Ok(Self { l });
        }
        let n = T::from_usize_lossy(a.rows().max(1));
        let retry = jitter + T::lit(RETRY_JITTER) * a.trace() / n;
        factor_raw(a, retry)
            .map(|l| Self { l })
            .ok_or(Error::NotPositiveDefinite)
    }

    pub fn factor_l(&self) -> &Mat<T> {
        &self.l
    }

    pub fn logdet(&self) -> T {
        let two = T::lit(2.0);
        two * (0..self.l.rows()).map(|i| self.l[(i, i)].ln()).sum::<T>()
    }

    /// Solves `A X = B` by forward then backward substitution.
    pub fn solve(&self, b: &Mat<T>) -> Result<Mat<T>> {
        let n = self.l.rows();
        if b.rows() != n {
            return Err(Error::dims("Cholesky::solve", n, b.rows()));
        }
        let mut x = b.clone();
        let m = b.cols();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == T::zero() {
                    continue;
                }
                for c in 0..m {
                    let v = x[(k, c)];
                    x[(i, c)] -= lik * v;
                }
            }
            let lii = self.l[(i, i)];
            for c in 0..m {
                x[(i, c)] /= lii;
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)];
                if lki == T::zero() {
                    continue;
                }
                for c in 0..m {
                    let v = x[(k, c)];
                    x[(i, c)] -= lki * v;
                }
            }
            let lii = self.l[(i, i)];
            for c in 0..m {
                x[(i, c)] /= lii;
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Mat<T> {
        self.solve(&Mat::identity(self.l.rows()))
            .expect("identity has matching rows")
    }
}

/// `log det(A + jitter·I)` via `2 Σ log diag(L)`.
pub fn cholesky_logdet<T: Scalar>(a: &Mat<T>, jitter: T) -> Result<T> {
    Ok(Cholesky::factor(a, jitter)?.logdet())
}

/// Solves `A X = B` for symmetric positive-definite `A`.
pub fn spd_solve<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Result<Mat<T>> {
    Cholesky::factor(a, T::zero())?.solve(b)
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEig<T> {
    /// Ascending.
    pub values: Vec<T>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: Mat<T>,
}

/// Cyclic Jacobi eigen-solver.
pub fn sym_eig<T: Scalar>(a: &Mat<T>) -> Result<SymEig<T>> {
    check_symmetric(a)?;
    let n = a.rows();
    let mut m = a.clone();
    // Symmetrise so rotations act on an exactly symmetric matrix.
    for i in 0..n {
        for j in 0..i {
            let avg = (m[(i, j)] + m[(j, i)]) * T::lit(0.5);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    let mut v = Mat::identity(n);
    let scale = m.frobenius();
    let tol = T::lit(JACOBI_TOL).max(T::epsilon() * T::lit(10.0)) * scale;

    let off = |m: &Mat<T>| -> T {
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..i {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        (s * T::lit(2.0)).sqrt()
    };

    let mut converged = off(&m) <= tol;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps: JACOBI_MAX_SWEEPS,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off(&m) <= tol;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).expect("finite eigenvalues"));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let vectors = v.select_cols(&order);
    Ok(SymEig { values, vectors })
}
