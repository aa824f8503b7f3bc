//! Lie-algebraic analysis of a finite matrix family: bracket closure, derived
//! series, solvability, simultaneous triangularization and the closed-form
//! almost-sure exponents that triangularization yields.

mod span;
mod triangularize;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matkit::{commutator, is_hurwitz, CMatrix, Matrix, RMatrix, Scalar};

pub(crate) use span::Span;
pub use triangularize::{simultaneous_triangularize, Triangularization};

/// Independence tolerance used when adjoining brackets to a span.
pub const LIE_SPAN_TOL: f64 = 1e-9;

/// The subsystem matrices `A_1, ..., A_N` of a switched system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FamilyRepr", into = "FamilyRepr")]
pub struct MatrixFamily {
    n: usize,
    mats: Vec<RMatrix>,
    labels: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyRepr {
    matrices: Vec<RMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<String>>,
}

impl TryFrom<FamilyRepr> for MatrixFamily {
    type Error = Error;
    fn try_from(r: FamilyRepr) -> Result<Self> {
        let fam = MatrixFamily::new(r.matrices)?;
        match r.labels {
            Some(l) => fam.with_labels(l),
            None => Ok(fam),
        }
    }
}

impl From<MatrixFamily> for FamilyRepr {
    fn from(f: MatrixFamily) -> Self {
        FamilyRepr {
            matrices: f.mats,
            labels: f.labels,
        }
    }
}

impl MatrixFamily {
    pub fn new(mats: Vec<RMatrix>) -> Result<Self> {
        let first = mats
            .first()
            .ok_or_else(|| Error::InvalidInput("matrix family must contain at least one matrix".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("matrices must be non-empty".into()));
        }
        for (i, m) in mats.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "matrix {i} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if !m.is_finite() {
                return Err(Error::InvalidInput(format!("matrix {i} has non-finite entries")));
            }
        }
        Ok(Self { n, mats, labels: None })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.mats.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mats.len(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// State dimension `n`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of subsystems `N`.
    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn mats(&self) -> &[RMatrix] {
        &self.mats
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Largest Frobenius norm among the subsystem matrices.
    pub fn max_norm(&self) -> f64 {
        self.mats.iter().map(Matrix::norm_fro).fold(0.0, f64::max)
    }

    /// The averaged matrix `Σ_k α_k A_k`.
    pub fn mean(&self, alpha: &ProbabilityVector) -> Result<RMatrix> {
        self.check_alpha(alpha)?;
        let mut acc = RMatrix::zeros(self.n, self.n);
        for (m, &a) in self.mats.iter().zip(alpha.as_slice()) {
            acc = &acc + &m.scale_real(a);
        }
        Ok(acc)
    }

    pub(crate) fn check_alpha(&self, alpha: &ProbabilityVector) -> Result<()> {
        if alpha.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: alpha.len(),
            });
        }
        Ok(())
    }
}

/// A strictly positive probability vector `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidInput("probability vector is empty".into()));
        }
        if let Some((i, a)) = alpha.iter().enumerate().find(|(_, a)| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidInput(format!("alpha[{i}] = {a} must be positive")));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidInput(format!("alpha sums to {sum}, expected 1")));
        }
        Ok(Self(alpha))
    }

    /// Uniform vector on `n` symbols.
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(p: ProbabilityVector) -> Self {
        p.0
    }
}

/// A basis of the Lie algebra generated by a family, orthonormal in the
/// Frobenius inner product.
#[derive(Debug, Clone)]
pub struct LieBasis {
    pub basis: Vec<CMatrix>,
    /// Longest bracket nesting needed to reach the last basis element.
    pub depth: usize,
}

impl LieBasis {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

/// `[a, b] = ab - ba`.
pub fn bracket<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    commutator(a, b)
}

/// Smallest Lie algebra containing the family.
pub fn generate_lie_algebra(fam: &MatrixFamily) -> LieBasis {
    let gens: Vec<CMatrix> = fam.mats().iter().map(Matrix::to_complex).collect();
    lie_closure(&gens)
}

/// Bracket closure of an arbitrary list of complex matrices.
pub fn lie_closure(gens: &[CMatrix]) -> LieBasis {
    let Some(n) = gens.first().map(Matrix::nrows) else {
        return LieBasis {
            basis: Vec::new(),
            depth: 0,
        };
    };
    let scale = gens.iter().map(Matrix::norm_fro).fold(0.0, f64::max);
    let mut span = Span::new(LIE_SPAN_TOL);
    let mut depth = Vec::new();
    if scale > 0.0 {
        for g in gens {
            if span.try_add(g.scale_real(1.0 / scale)) {
                depth.push(0usize);
            }
        }
    }
    let max_dim = n * n;
    let mut processed = 0;
    while processed < span.len() && span.len() < max_dim {
        let k = processed;
        for j in 0..k {
            let c = bracket(&span.basis()[j], &span.basis()[k]);
            if span.try_add(c) {
                depth.push(depth[j].max(depth[k]) + 1);
                if span.len() == max_dim {
                    break;
                }
            }
        }
        processed += 1;
    }
    LieBasis {
        depth: depth.into_iter().max().unwrap_or(0),
        basis: span.into_basis(),
    }
}

/// Orthonormal basis of `[L, L]`, the span of all pairwise brackets.
pub fn derived_algebra(basis: &[CMatrix]) -> Vec<CMatrix> {
    let mut span = Span::new(LIE_SPAN_TOL);
    for i in 0..basis.len() {
        for j in (i + 1)..basis.len() {
            span.try_add(bracket(&basis[i], &basis[j]));
        }
    }
    span.into_basis()
}

/// Dimensions of `L, [L, L], ...` until the series hits zero or stops shrinking.
pub fn derived_series(basis: &LieBasis) -> Vec<usize> {
    let mut dims = vec![basis.dim()];
    let mut current = basis.basis.clone();
    while !current.is_empty() {
        let next = derived_algebra(&current);
        let (prev, d) = (current.len(), next.len());
        dims.push(d);
        if d == prev {
            // stabilized at a nonzero perfect algebra
            break;
        }
        current = next;
    }
    dims
}

/// Outcome of the solvability test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solvability {
    pub solvable: bool,
    /// First index at which the derived series vanishes.
    pub ell: Option<usize>,
    pub series: Vec<usize>,
}

pub fn is_solvable(fam: &MatrixFamily) -> Solvability {
    let series = derived_series(&generate_lie_algebra(fam));
    let ell = series.iter().position(|&d| d == 0);
    Solvability {
        solvable: ell.is_some(),
        ell,
        series,
    }
}

/// Per-coordinate averages `θ_i = Σ_j α_j Re(ã_j^{ii})` and their maximum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedForm {
    pub theta: Vec<f64>,
    pub chi: f64,
}

pub fn closed_form_exponents(tri: &Triangularization, alpha: &ProbabilityVector) -> Result<ClosedForm> {
    if alpha.len() != tri.diag.len() {
        return Err(Error::DimensionMismatch {
            expected: tri.diag.len(),
            found: alpha.len(),
        });
    }
    let n = tri.t.nrows();
    let theta: Vec<f64> = (0..n)
        .map(|i| tri.diag.iter().zip(alpha.as_slice()).map(|(d, &a)| a * d[i].re).sum())
        .collect();
    let chi = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ClosedForm { theta, chi })
}

/// Whether `Σ_k α_k A_k` is Hurwitz.
pub fn star_condition(fam: &MatrixFamily, alpha: &ProbabilityVector) -> Result<bool> {
    is_hurwitz(&fam.mean(alpha)?)
}

/// Flattened Frobenius inner product of two matrices of equal shape.
pub(crate) fn frob_dot(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rm(rows: &[&[f64]]) -> RMatrix {
        RMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn e_f() -> (RMatrix, RMatrix) {
        (rm(&[&[0.0, 1.0], &[0.0, 0.0]]), rm(&[&[0.0, 0.0], &[1.0, 0.0]]))
    }

    fn diag_pair() -> MatrixFamily {
        MatrixFamily::new(vec![RMatrix::diag(&[-2.0, 1.0]), RMatrix::diag(&[1.0, -2.0])]).unwrap()
    }

    #[test]
    fn bracket_examples() {
        let d1 = RMatrix::diag(&[1.0, 3.0]);
        let d2 = RMatrix::diag(&[-2.0, 5.0]);
        assert_eq!(bracket(&d1, &d2).max_abs(), 0.0);
        assert_eq!(bracket(&d1, &d1).max_abs(), 0.0);
        let (e, f) = e_f();
        assert_eq!(bracket(&e, &f), RMatrix::diag(&[1.0, -1.0]));
    }

    #[test]
    fn closure_dimensions() {
        let single = MatrixFamily::new(vec![rm(&[&[1.0, 2.0], &[3.0, 4.0]])]).unwrap();
        assert_eq!(generate_lie_algebra(&single).dim(), 1);
        let (e, f) = e_f();
        let sl2 = MatrixFamily::new(vec![e, f]).unwrap();
        let b = generate_lie_algebra(&sl2);
        assert_eq!(b.dim(), 3);
        assert_eq!(b.depth, 1);
        assert_eq!(generate_lie_algebra(&diag_pair()).dim(), 2);
    }

    #[test]
    fn closure_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = rng.random_range(2..=4);
            let fam = MatrixFamily::new(
                (0..2)
                    .map(|_| RMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)))
                    .collect(),
            )
            .unwrap();
            let b = generate_lie_algebra(&fam);
            assert!(b.dim() <= n * n);
            let again = lie_closure(&b.basis);
            assert_eq!(again.dim(), b.dim());
        }
    }

    #[test]
    fn derived_series_examples() {
        let commuting = generate_lie_algebra(&diag_pair());
        assert_eq!(derived_series(&commuting), vec![2, 0]);
        let (e, f) = e_f();
        let sl2 = generate_lie_algebra(&MatrixFamily::new(vec![e.clone(), f]).unwrap());
        assert_eq!(derived_series(&sl2), vec![3, 3]);
        let h = RMatrix::diag(&[1.0, 0.0]);
        let k = RMatrix::diag(&[0.0, 1.0]);
        let upper = generate_lie_algebra(&MatrixFamily::new(vec![e, h, k]).unwrap());
        assert_eq!(derived_series(&upper), vec![3, 1, 0]);
    }

    #[test]
    fn solvability_examples() {
        let single = MatrixFamily::new(vec![rm(&[&[1.0, 2.0], &[3.0, 4.0]])]).unwrap();
        let s = is_solvable(&single);
        assert!(s.solvable && s.ell.unwrap() <= 1);
        let (e, f) = e_f();
        let s = is_solvable(&MatrixFamily::new(vec![e, f]).unwrap());
        assert!(!s.solvable && s.ell.is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in 2..=5 {
            let mats = (0..2)
                .map(|_| RMatrix::from_fn(n, n, |i, j| if i <= j { rng.random_range(-1.0..1.0) } else { 0.0 }))
                .collect();
            let s = is_solvable(&MatrixFamily::new(mats).unwrap());
            assert!(s.solvable && s.ell.unwrap() <= n, "n = {n}: {:?}", s.series);
        }
    }

    #[test]
    fn closed_form_diag_example() {
        let fam = diag_pair();
        let tri = simultaneous_triangularize(&fam).unwrap();
        let half = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        let cf = closed_form_exponents(&tri, &half).unwrap();
        let mut th = cf.theta.clone();
        th.sort_by(f64::total_cmp);
        assert!((th[0] + 0.5).abs() < 1e-14 && (th[1] + 0.5).abs() < 1e-14);
        assert!((cf.chi + 0.5).abs() < 1e-14);

        let skew = ProbabilityVector::new(vec![0.9, 0.1]).unwrap();
        let cf = closed_form_exponents(&tri, &skew).unwrap();
        let mut th = cf.theta.clone();
        th.sort_by(f64::total_cmp);
        assert!((th[0] + 1.7).abs() < 1e-14 && (th[1] - 0.7).abs() < 1e-14);
        assert!((cf.chi - 0.7).abs() < 1e-14);
    }

    #[test]
    fn closed_form_single_matrix_is_spectral_abscissa() {
        let a = rm(&[&[0.0, 1.0], &[-2.0, -3.0]]);
        let fam = MatrixFamily::new(vec![a]).unwrap();
        let tri = simultaneous_triangularize(&fam).unwrap();
        let cf = closed_form_exponents(&tri, &ProbabilityVector::new(vec![1.0]).unwrap()).unwrap();
        let mut th = cf.theta.clone();
        th.sort_by(f64::total_cmp);
        assert!((th[0] + 2.0).abs() < 1e-9 && (th[1] + 1.0).abs() < 1e-9);
        assert!((cf.chi + 1.0).abs() < 1e-9);
    }

    #[test]
    fn star_condition_examples() {
        let fam = diag_pair();
        assert!(star_condition(&fam, &ProbabilityVector::new(vec![0.5, 0.5]).unwrap()).unwrap());
        assert!(!star_condition(&fam, &ProbabilityVector::new(vec![0.9, 0.1]).unwrap()).unwrap());
        let hurwitz = MatrixFamily::new(vec![
            RMatrix::diag(&[-1.0, -0.2, -3.0]),
            RMatrix::diag(&[-0.5, -2.0, -0.1]),
            RMatrix::diag(&[-4.0, -1.0, -1.0]),
        ])
        .unwrap();
        let alpha = ProbabilityVector::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(star_condition(&hurwitz, &alpha).unwrap());
    }

    #[test]
    fn probability_vector_validation() {
        assert!(ProbabilityVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbabilityVector::new(vec![1.0, 0.0]).is_err());
        assert!(ProbabilityVector::new(vec![]).is_err());
        assert!(ProbabilityVector::new(vec![0.2, 0.3, 0.5]).is_ok());
        let fam = diag_pair();
        assert!(fam.mean(&ProbabilityVector::new(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn family_serde_roundtrip() {
        let fam = diag_pair().with_labels(vec!["a".into(), "b".into()]).unwrap();
        let s = serde_json::to_string(&fam).unwrap();
        let back: MatrixFamily = serde_json::from_str(&s).unwrap();
        assert_eq!(back, fam);
        let bad = r#"{"matrices": [[[1.0]], [[1.0, 0.0], [0.0, 1.0]]]}"#;
        assert!(serde_json::from_str::<MatrixFamily>(bad).is_err());
    }
}
