//! One-sided Jacobi SVD. Only singular values and right singular vectors are
//! produced, which is all kernel extraction and 2-norms need.

use super::{Matrix, Scalar};

const MAX_SWEEPS: usize = 80;

/// Singular values (descending) and matching right singular vectors as the
/// columns of `v`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub values: Vec<f64>,
    pub v: Matrix<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn compute(a: &Matrix<T>) -> Self {
        let (rows, cols) = (a.nrows(), a.ncols());
        let mut w = a.clone();
        let mut v = Matrix::<T>::identity(cols);

        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..cols {
                for q in (p + 1)..cols {
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = T::zero();
                    for i in 0..rows {
                        alpha += w[(i, p)].abs2();
                        beta += w[(i, q)].abs2();
                        gamma += w[(i, p)].conj() * w[(i, q)];
                    }
                    let g = gamma.abs();
                    if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    // Remove the phase of gamma from column q, then rotate as in the real case.
                    let ph = gamma.phase().conj();
                    for i in 0..rows {
                        w[(i, q)] *= ph;
                    }
                    for i in 0..cols {
                        v[(i, q)] *= ph;
                    }
                    let zeta = (beta - alpha) / (2.0 * g);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    let (c, s) = (T::from_real(c), T::from_real(s));
                    for i in 0..rows {
                        let (x, y) = (w[(i, p)], w[(i, q)]);
                        w[(i, p)] = c * x - s * y;
                        w[(i, q)] = s * x + c * y;
                    }
                    for i in 0..cols {
                        let (x, y) = (v[(i, p)], v[(i, q)]);
                        v[(i, p)] = c * x - s * y;
                        v[(i, q)] = s * x + c * y;
                    }
                }
            }
            if !rotated {
                break;
            }
        }

        let mut order: Vec<(f64, usize)> = (0..cols)
            .map(|j| ((0..rows).map(|i| w[(i, j)].abs2()).sum::<f64>().sqrt(), j))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let values = order.iter().map(|&(s, _)| s).collect();
        let v = Matrix::from_fn(cols, cols, |i, j| v[(i, order[j].1)]);
        Svd { values, v }
    }
}

pub fn singular_values<T: Scalar>(a: &Matrix<T>) -> Vec<f64> {
    Svd::compute(a).values
}

/// Largest singular value; the operator 2-norm.
pub fn spectral_norm<T: Scalar>(a: &Matrix<T>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// Orthonormal basis of the numerical kernel: right singular vectors whose
/// singular value is at most `tol` times the largest one. A zero matrix has
/// the whole space as kernel.
pub fn nullspace<T: Scalar>(a: &Matrix<T>, tol: f64) -> Vec<Vec<T>> {
    let svd = Svd::compute(a);
    let smax = svd.values.first().copied().unwrap_or(0.0);
    let cutoff = tol * smax;
    let mut out = Vec::new();
    for (j, &s) in svd.values.iter().enumerate() {
        if s <= cutoff {
            out.push(svd.v.column(j));
        }
    }
    // Tall matrices with fewer rows than columns have implicit zero singular
    // values; those directions are already among the trailing columns above.
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::{dot, norm2, CMatrix, RMatrix};
    use num_complex::Complex64;

    #[test]
    fn identity_has_empty_kernel() {
        assert!(nullspace(&RMatrix::identity(3), 1e-9).is_empty());
    }

    #[test]
    fn zero_matrix_kernel_is_everything() {
        let k = nullspace(&RMatrix::zeros(3, 3), 1e-9);
        assert_eq!(k.len(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let d = dot(&k[i], &k[j]);
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn tiny_singular_value_detected() {
        let m = RMatrix::diag(&[1.0, 1e-14]);
        let k = nullspace(&m, 1e-9);
        assert_eq!(k.len(), 1);
        assert!((k[0][1].abs() - 1.0).abs() < 1e-15 && k[0][0].abs() < 1e-15);
    }

    #[test]
    fn known_singular_values() {
        // [[3, 0], [4, 5]] has singular values sqrt(45) and sqrt(5).
        let m = RMatrix::from_rows(&[vec![3.0, 0.0], vec![4.0, 5.0]]).unwrap();
        let s = singular_values(&m);
        assert!((s[0] - 45f64.sqrt()).abs() < 1e-13);
        assert!((s[1] - 5f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn complex_rank_one_kernel() {
        let u = [
            Complex64::new(1.0, 1.0),
            Complex64::new(0.0, 2.0),
            Complex64::new(-1.0, 0.5),
        ];
        let w = [
            Complex64::new(0.5, -1.0),
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 1.0),
        ];
        let m = CMatrix::from_fn(3, 3, |i, j| u[i] * w[j].conj());
        let k = nullspace(&m, 1e-9);
        assert_eq!(k.len(), 2);
        for v in &k {
            assert!((norm2(v) - 1.0).abs() < 1e-13);
            assert!(norm2(&m.matvec(v)) < 1e-13);
        }
    }

    #[test]
    fn wide_matrix_has_kernel() {
        let m = RMatrix::from_row_major(1, 3, vec![1.0, 2.0, 2.0]).unwrap();
        let k = nullspace(&m, 1e-9);
        assert_eq!(k.len(), 2);
    }
}
