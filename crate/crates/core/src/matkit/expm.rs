//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham's 2005 degree selection).

use super::{solve, Matrix, Scalar};

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `e^m` for a square matrix.
///
/// Panics if `m` is not square or has non-finite entries.
pub fn expm<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let n = m.require_square().expect("expm requires a square matrix");
    assert!(m.is_finite(), "expm requires finite entries");
    if n == 0 {
        return m.clone();
    }
    let norm = m.norm_one();
    if norm == 0.0 {
        return Matrix::identity(n);
    }
    for &(deg, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match deg {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(m, coeffs);
        }
    }
    let s = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = m.scale_real(0.5f64.powi(s));
    let mut r = pade13(&scaled);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn axpy_terms<T: Scalar>(terms: &[(f64, &Matrix<T>)], n: usize) -> Matrix<T> {
    let mut out = Matrix::zeros(n, n);
    for &(c, mat) in terms {
        out = &out + &mat.scale_real(c);
    }
    out
}

fn finish<T: Scalar>(u: &Matrix<T>, v: &Matrix<T>) -> Matrix<T> {
    // The denominator V - U is well conditioned for the admissible norms.
    solve(&(v - u), &(v + u)).expect("Padé denominator is nonsingular within theta bounds")
}

fn pade_low<T: Scalar>(a: &Matrix<T>, b: &[f64]) -> Matrix<T> {
    let n = a.nrows();
    let id = Matrix::identity(n);
    let a2 = a * a;
    let mut powers = vec![id];
    for k in 1..b.len() / 2 {
        let next = &powers[k - 1] * &a2;
        powers.push(next);
    }
    let mut odd = Matrix::zeros(n, n);
    let mut even = Matrix::zeros(n, n);
    for (k, p) in powers.iter().enumerate() {
        odd = &odd + &p.scale_real(b[2 * k + 1]);
        even = &even + &p.scale_real(b[2 * k]);
    }
    let u = a * &odd;
    finish(&u, &even)
}

fn pade13<T: Scalar>(a: &Matrix<T>) -> Matrix<T> {
    let n = a.nrows();
    let b = &B13;
    let id = Matrix::identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = axpy_terms(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], n);
    let u_tail = axpy_terms(&[(b[7], &a6), (b[5], &a4), (b[3], &a2), (b[1], &id)], n);
    let u = a * &(&(&a6 * &u_inner) + &u_tail);
    let v_inner = axpy_terms(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], n);
    let v_tail = axpy_terms(&[(b[6], &a6), (b[4], &a4), (b[2], &a2), (b[0], &id)], n);
    let v = &(&a6 * &v_inner) + &v_tail;
    finish(&u, &v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkit::{CMatrix, RMatrix};
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn rel_err(a: &RMatrix, b: &RMatrix) -> f64 {
        (a - b).norm_fro() / b.norm_fro()
    }

    #[test]
    fn zero_gives_identity() {
        assert_eq!(expm(&RMatrix::zeros(3, 3)), RMatrix::identity(3));
    }

    #[test]
    fn diagonal_case() {
        let e = expm(&RMatrix::diag(&[1.0, -2.0]));
        let want = RMatrix::diag(&[1f64.exp(), (-2f64).exp()]);
        assert!(rel_err(&e, &want) < 1e-14);
    }

    #[test]
    fn nilpotent_series_truncates() {
        let n = RMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let want = RMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!((&expm(&n) - &want).max_abs() < 1e-15);
    }

    #[test]
    fn rotation_generator_at_all_scales() {
        for &t in &[1e-3, 0.1, 0.9, 2.0, 7.5, 10.0] {
            let g = RMatrix::from_rows(&[vec![0.0, t], vec![-t, 0.0]]).unwrap();
            let want = RMatrix::from_rows(&[vec![t.cos(), t.sin()], vec![-t.sin(), t.cos()]]).unwrap();
            assert!(rel_err(&expm(&g), &want) < 1e-13, "t = {t}");
        }
    }

    #[test]
    fn jordan_block_with_large_norm() {
        // exp([[a, b], [0, a]]) = e^a [[1, b], [0, 1]]
        let (a, b) = (-3.0, 7.0);
        let m = RMatrix::from_rows(&[vec![a, b], vec![0.0, a]]).unwrap();
        let ea = f64::exp(a);
        let want = RMatrix::from_rows(&[vec![ea, ea * b], vec![0.0, ea]]).unwrap();
        assert!(rel_err(&expm(&m), &want) < 1e-12);
    }

    #[test]
    fn complex_scalar_exponent() {
        let z = Complex64::new(0.3, 1.7);
        let e = expm(&CMatrix::diag(&[z]));
        assert!((e[(0, 0)] - z.exp()).norm() < 1e-14);
    }

    proptest! {
        #[test]
        fn group_property(entries in prop::collection::vec(-1.0f64..1.0, 9), scale in 0.1f64..5.0) {
            let mut m = RMatrix::from_row_major(3, 3, entries).unwrap();
            let f = m.norm_fro();
            if f > 0.0 {
                m = m.scale_real(scale / f);
            }
            let prod = &expm(&m) * &expm(&m.scale_real(-1.0));
            prop_assert!((&prod - &RMatrix::identity(3)).max_abs() <= 1e-10);
        }
    }
}
