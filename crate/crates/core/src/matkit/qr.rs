use super::{Matrix, Scalar, RANK_TOL};
use crate::error::{Error, Result};

/// QR factorization with a strictly positive real diagonal on `r`.
///
/// Under that convention the factorization is unique and coincides with
/// classical Gram–Schmidt applied to the columns: column `k` of `q` is the
/// normalized component of column `k` orthogonal to the earlier ones, and
/// `r[(k, k)]` is the length of that component.
#[derive(Debug, Clone, PartialEq)]
pub struct QrPair<T> {
    pub q: Matrix<T>,
    pub r: Matrix<T>,
}

/// QR of a nonsingular square matrix using the default rank tolerance.
pub fn qr<T: Scalar>(m: &Matrix<T>) -> Result<QrPair<T>> {
    qr_with_tol(m, RANK_TOL)
}

/// QR of a square matrix; fails when some `r[(k, k)] <= rel_tol * |m|_F`.
pub fn qr_with_tol<T: Scalar>(m: &Matrix<T>, rel_tol: f64) -> Result<QrPair<T>> {
    let n = m.require_square()?;
    let (q, r) = householder(m);
    let threshold = rel_tol * m.norm_fro();
    for k in 0..n {
        let d = r[(k, k)].re();
        if !(d > threshold) {
            return Err(Error::SingularInput { index: k, value: d });
        }
    }
    Ok(QrPair { q, r })
}

/// Full Householder QR of an `m x n` matrix with `m >= n`: returns a unitary
/// `m x m` factor and an `m x n` upper-trapezoidal factor whose leading
/// diagonal is real and non-negative.
pub(crate) fn householder<T: Scalar>(a: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let (rows, cols) = (a.nrows(), a.ncols());
    let mut r = a.clone();
    let mut q = Matrix::<T>::identity(rows);
    let mut v = vec![T::zero(); rows];

    for k in 0..cols.min(rows) {
        let xnorm = (k..rows).map(|i| r[(i, k)].abs2()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let alpha = -(r[(k, k)].phase()) * T::from_real(xnorm);
        for i in k..rows {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..rows).map(|i| v[i].abs2()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = T::from_real(2.0 / vnorm2);

        // r <- (I - beta v v^H) r
        for j in k..cols {
            let mut s = T::zero();
            for i in k..rows {
                s += v[i].conj() * r[(i, j)];
            }
            s *= beta;
            for i in k..rows {
                let vi = v[i];
                r[(i, j)] -= vi * s;
            }
        }
        // q <- q (I - beta v v^H)
        for i in 0..rows {
            let mut s = T::zero();
            for l in k..rows {
                s += q[(i, l)] * v[l];
            }
            s *= beta;
            for l in k..rows {
                let vl = v[l].conj();
                q[(i, l)] -= s * vl;
            }
        }
        for i in (k + 1)..rows {
            r[(i, k)] = T::zero();
        }
    }

    // Rotate phases so the diagonal of r is real and non-negative.
    for k in 0..cols.min(rows) {
        let d = r[(k, k)].phase();
        if d == T::one() {
            continue;
        }
        let dc = d.conj();
        for j in k..cols {
            r[(k, j)] = dc * r[(k, j)];
        }
        r[(k, k)] = T::from_real(r[(k, k)].abs());
        for i in 0..rows {
            q[(i, k)] *= d;
        }
    }
    (q, r)
}
