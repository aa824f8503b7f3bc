//! Eigenvalues by Householder reduction to Hessenberg form followed by
//! single-shift complex QR iteration with Wilkinson shifts.

use num_complex::Complex64;

use super::{CMatrix, Matrix, Scalar};
use crate::error::{Error, Result};

/// A real matrix is called Hurwitz when its spectral abscissa is below `-HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-9;

/// All `n` eigenvalues with multiplicity, sorted by descending real part
/// (ties broken by descending imaginary part).
pub fn eigenvalues<T: Scalar>(m: &Matrix<T>) -> Result<Vec<Complex64>> {
    let n = m.require_square()?;
    let mut h = m.to_complex();
    hessenberg_in_place(&mut h);
    let mut eig = hessenberg_qr(&mut h, 100 * n.max(1))?;
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(eig)
}

/// Unit eigenvector for an (approximate) eigenvalue `lambda`, taken as the
/// right singular vector of `m - lambda I` with the smallest singular value.
pub fn eigenvector<T: Scalar>(m: &Matrix<T>, lambda: Complex64) -> Result<Vec<Complex64>> {
    let n = m.require_square()?;
    let mut shifted = m.to_complex();
    for i in 0..n {
        shifted[(i, i)] -= lambda;
    }
    let svd = super::Svd::compute(&shifted);
    Ok(svd.v.column(n - 1))
}

pub fn spectral_abscissa<T: Scalar>(m: &Matrix<T>) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// True iff every eigenvalue has real part below `-HURWITZ_MARGIN`.
pub fn is_hurwitz(m: &Matrix<f64>) -> Result<bool> {
    Ok(spectral_abscissa(m)? < -HURWITZ_MARGIN)
}

fn hessenberg_in_place(h: &mut CMatrix) {
    let n = h.nrows();
    if n < 3 {
        return;
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n - 2 {
        let xnorm = ((k + 1)..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        let below = ((k + 2)..n).map(|i| h[(i, k)].norm_sqr()).sum::<f64>();
        if xnorm == 0.0 || below == 0.0 {
            continue;
        }
        let alpha = -h[(k + 1, k)].phase() * xnorm;
        for i in (k + 1)..n {
            v[i] = h[(i, k)];
        }
        v[k + 1] -= alpha;
        let vnorm2: f64 = ((k + 1)..n).map(|i| v[i].norm_sqr()).sum();
        let beta = 2.0 / vnorm2;
        // h <- P h, P = I - beta v v^H
        for j in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for i in (k + 1)..n {
                s += v[i].conj() * h[(i, j)];
            }
            s *= beta;
            for i in (k + 1)..n {
                let vi = v[i];
                h[(i, j)] -= vi * s;
            }
        }
        // h <- h P
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for l in (k + 1)..n {
                s += h[(i, l)] * v[l];
            }
            s *= beta;
            for l in (k + 1)..n {
                let vl = v[l].conj();
                h[(i, l)] -= s * vl;
            }
        }
        for i in (k + 2)..n {
            h[(i, k)] = Complex64::new(0.0, 0.0);
        }
    }
}

fn wilkinson_shift(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Complex64 {
    let half_tr = (a + d) * 0.5;
    let disc = ((a - d) * 0.5).powi(2) + b * c;
    let root = disc.sqrt();
    let (l1, l2) = (half_tr + root, half_tr - root);
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

fn hessenberg_qr(h: &mut CMatrix, max_sweeps: usize) -> Result<Vec<Complex64>> {
    let n = h.nrows();
    let mut eig = Vec::with_capacity(n);
    if n == 0 {
        return Ok(eig);
    }
    let scale = h.max_abs();
    let zero = Complex64::new(0.0, 0.0);
    let mut hi = n - 1;
    let mut sweeps = 0;
    let mut since_deflation = 0;
    let mut rot: Vec<(f64, Complex64)> = Vec::with_capacity(n);

    while hi > 0 {
        let mut lo = hi;
        while lo > 0 {
            let mut s = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            if s == 0.0 {
                s = scale;
            }
            if h[(lo, lo - 1)].norm() <= f64::EPSILON * s {
                h[(lo, lo - 1)] = zero;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig.push(h[(hi, hi)]);
            hi -= 1;
            since_deflation = 0;
            continue;
        }

        sweeps += 1;
        since_deflation += 1;
        if sweeps > max_sweeps {
            return Err(Error::NoConvergence { sweeps: max_sweeps });
        }
        let mu = if since_deflation % 11 == 10 {
            // Exceptional shift to break symmetric stalls.
            h[(hi, hi)] + Complex64::new(0.75 * h[(hi, hi - 1)].norm(), 0.25 * h[(hi, hi - 1)].norm())
        } else {
            wilkinson_shift(h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)])
        };

        for i in lo..=hi {
            h[(i, i)] -= mu;
        }
        // H - mu I = QR by Givens rotations on rows.
        rot.clear();
        for k in lo..hi {
            let a = h[(k, k)];
            let b = h[(k + 1, k)];
            let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let (c, s) = if r == 0.0 {
                (1.0, zero)
            } else if a.norm() == 0.0 {
                (0.0, Complex64::new(1.0, 0.0))
            } else {
                (a.norm() / r, a.phase() * b.conj() / r)
            };
            for j in k..=hi {
                let (x, y) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = x * c + s * y;
                h[(k + 1, j)] = -s.conj() * x + y * c;
            }
            rot.push((c, s));
        }
        // RQ: apply the adjoint rotations on columns.
        for (idx, k) in (lo..hi).enumerate() {
            let (c, s) = rot[idx];
            for i in lo..=(k + 2).min(hi) {
                let (x, y) = (h[(i, k)], h[(i, k + 1)]);
                h[(i, k)] = x * c + y * s.conj();
                h[(i, k + 1)] = -x * s + y * c;
            }
        }
        for i in lo..=hi {
            h[(i, i)] += mu;
        }
    }
    eig.push(h[(0, 0)]);
    Ok(eig)
}

/// `|m v - lambda v|`.
#[cfg(test)]
fn eigen_residual<T: Scalar>(m: &Matrix<T>, lambda: Complex64, v: &[Complex64]) -> f64 {
    let mv = m.to_complex().matvec(v);
    mv.iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::{solve, RMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
    }

    #[test]
    fn diagonal() {
        let e = eigenvalues(&RMatrix::diag(&[1.0, 2.0])).unwrap();
        assert!(close(&e, &[c(2.0, 0.0), c(1.0, 0.0)], 1e-14));
    }

    #[test]
    fn rotation_generator() {
        let m = RMatrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap();
        let e = eigenvalues(&m).unwrap();
        assert!(close(&e, &[c(0.0, 1.0), c(0.0, -1.0)], 1e-14));
        assert!(!is_hurwitz(&m).unwrap());
    }

    #[test]
    fn companion_matrix() {
        // λ² + 3λ + 2 = (λ + 1)(λ + 2)
        let m = RMatrix::from_rows(&[vec![0.0, 1.0], vec![-2.0, -3.0]]).unwrap();
        let e = eigenvalues(&m).unwrap();
        assert!(close(&e, &[c(-1.0, 0.0), c(-2.0, 0.0)], 1e-13));
        assert!(is_hurwitz(&m).unwrap());
        assert!(is_hurwitz(&RMatrix::identity(3).scale_real(-1.0)).unwrap());
    }

    #[test]
    fn upper_triangular_spectrum_is_exact_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=8 {
            let m = RMatrix::from_fn(n, n, |i, j| if i <= j { rng.random_range(-3.0..3.0) } else { 0.0 });
            let mut want: Vec<Complex64> = m.diagonal().into_iter().map(|x| c(x, 0.0)).collect();
            want.sort_by(|a, b| b.re.total_cmp(&a.re));
            let got = eigenvalues(&m).unwrap();
            assert!(close(&got, &want, 1e-12), "n = {n}");
        }
    }

    #[test]
    fn repeated_eigenvalues_of_marcus_yamabe_frozen_matrix() {
        // The frozen Marcus–Yamabe coefficient matrix has -1 as a double eigenvalue.
        for &t in &[0.0, 0.4, 1.3, 2.9] {
            let (s, co) = (f64::sin(t), f64::cos(t));
            let m = RMatrix::from_rows(&[
                vec![-2.0 + 2.0 * co * co, 1.0 - (2.0 * t).sin()],
                vec![-1.0 - (2.0 * t).sin(), -2.0 + 2.0 * s * s],
            ])
            .unwrap();
            let e = eigenvalues(&m).unwrap();
            for z in e {
                assert!((z - c(-1.0, 0.0)).norm() < 1e-7, "t = {t}: {z}");
            }
        }
    }

    #[test]
    fn eigenvector_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..=16 {
            let m = RMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            for lambda in eigenvalues(&m).unwrap() {
                let v = eigenvector(&m, lambda).unwrap();
                assert!(eigen_residual(&m, lambda, &v) <= 1e-8 * m.norm_fro(), "n = {n}");
            }
        }
    }

    #[test]
    fn trace_and_determinant_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 2..=12 {
            let m = RMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
            let e = eigenvalues(&m).unwrap();
            let tr: Complex64 = e.iter().sum();
            assert!((tr.re - m.trace()).abs() < 1e-10 && tr.im.abs() < 1e-10);
        }
    }

    /// Lyapunov-equation oracle: A is Hurwitz iff AᵀP + PA = -I has a
    /// positive definite solution. Solved via the Kronecker linear system and
    /// tested with a Cholesky factorization.
    fn lyapunov_oracle(a: &RMatrix) -> bool {
        let n = a.nrows();
        let nn = n * n;
        // vec(AᵀP + PA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) with column-major vec.
        let k = RMatrix::from_fn(nn, nn, |r, s| {
            let (i, j) = (r % n, r / n);
            let (p, q) = (s % n, s / n);
            let mut v = 0.0;
            if q == j {
                v += a[(p, i)];
            }
            if p == i {
                v += a[(q, j)];
            }
            v
        });
        let rhs = RMatrix::from_fn(nn, 1, |r, _| if r % n == r / n { -1.0 } else { 0.0 });
        let Ok(x) = solve(&k, &rhs) else { return false };
        let p = RMatrix::from_fn(n, n, |i, j| 0.5 * (x[(i + j * n, 0)] + x[(j + i * n, 0)]));
        // Cholesky
        let mut l = RMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = p[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if d <= 0.0 {
                return false;
            }
            l[(j, j)] = d.sqrt();
            for i in (j + 1)..n {
                let mut s = p[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / l[(j, j)];
            }
        }
        true
    }

    #[test]
    fn hurwitz_agrees_with_lyapunov_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut agree = 0;
        let mut hurwitz = 0;
        let mut checked = 0;
        while checked < 200 {
            let n = rng.random_range(2..=5);
            let shift = rng.random_range(-1.5..1.0);
            let m = RMatrix::from_fn(n, n, |i, j| {
                rng.random_range(-1.0..1.0) + if i == j { shift } else { 0.0 }
            });
            // Skip matrices too close to the imaginary axis for either test.
            if spectral_abscissa(&m).unwrap().abs() < 1e-3 {
                continue;
            }
            checked += 1;
            let h = is_hurwitz(&m).unwrap();
            hurwitz += h as usize;
            if h == lyapunov_oracle(&m) {
                agree += 1;
            }
        }
        assert_eq!(agree, 200);
        assert!(hurwitz > 20 && hurwitz < 180, "unbalanced sample: {hurwitz}");
    }

    proptest! {
        #[test]
        fn similarity_preserves_spectrum(d in prop::collection::vec(-3.0f64..3.0, 4), t in prop::collection::vec(-0.3f64..0.3, 16)) {
            let mut tm = RMatrix::from_row_major(4, 4, t).unwrap();
            for i in 0..4 { tm[(i, i)] += 1.0; }
            let ti = crate::matkit::inverse(&tm).unwrap();
            let m = &(&ti * &RMatrix::diag(&d)) * &tm;
            let got = eigenvalues(&m).unwrap();
            let mut want: Vec<f64> = d.clone();
            want.sort_by(|a, b| b.total_cmp(a));
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g.re - w).abs() < 1e-6 && g.im.abs() < 1e-6);
            }
        }
    }
}
