//! Constructive simultaneous triangularization of a solvable family.
//!
//! A common eigenvector of a solvable Lie algebra `L` acting on `C^d` is found
//! by induction on `dim L`: pick a codimension-one ideal `K ⊇ [L, L]`, find a
//! common eigenvector of `K` recursively, form the weight space of its weight
//! (which `L` leaves invariant) and diagonalize the remaining generator there.
//! Abelian algebras are handled directly by intersecting eigenspaces, and
//! families whose generic combination has simple spectrum skip the recursion. The
//! eigenvector is then split off with a unitary change of basis and the
//! construction repeats on the quotient, so the resulting `T` is unitary.

use num_complex::Complex64;
use serde::Serialize;

use super::{derived_algebra, is_solvable, lie_closure, MatrixFamily, Span, LIE_SPAN_TOL};
use crate::error::{Error, Result};
use crate::matkit::qr::householder;
use crate::matkit::{eigenvalues, eigenvector, inverse, CMatrix, Matrix, Svd};

/// Relative tolerance for eigenspace and weight-space extraction.
pub const EIGENSPACE_TOL: f64 = 1e-7;
/// Eigenvalues closer than this (relative to the operator scale) form one weight.
pub const WEIGHT_CLUSTER_TOL: f64 = 1e-6;
/// Allowed sub-diagonal residue of the triangularized matrices, relative to their norm.
pub const TRIANGULAR_TOL: f64 = 1e-8;
/// Minimum eigenvalue separation for the generic-element shortcut.
const GENERIC_GAP: f64 = 1e-4;

/// `T A_i T⁻¹ = Ã_i` with every `Ã_i` upper-triangular.
#[derive(Debug, Clone, Serialize)]
pub struct Triangularization {
    #[serde(skip)]
    pub t: CMatrix,
    #[serde(skip)]
    pub t_inv: CMatrix,
    #[serde(skip)]
    pub triangulars: Vec<CMatrix>,
    /// Diagonal of each `Ã_i`.
    #[serde(serialize_with = "ser_complex_rows")]
    pub diag: Vec<Vec<Complex64>>,
    /// Largest relative sub-diagonal residue over the family.
    pub lower_residue: f64,
    /// Largest `|T A_i T⁻¹ - Ã_i|` over the family (zero when `Ã_i` is formed that way).
    pub conjugation_defect: f64,
}

fn ser_complex_rows<S: serde::Serializer>(rows: &[Vec<Complex64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(rows.len()))?;
    for r in rows {
        let pairs: Vec<[f64; 2]> = r.iter().map(|z| [z.re, z.im]).collect();
        seq.serialize_element(&pairs)?;
    }
    seq.end()
}

impl Triangularization {
    /// Accepts a caller-supplied transform, for families that are
    /// triangularizable without being solvable.
    pub fn from_transform(fam: &MatrixFamily, t: CMatrix) -> Result<Self> {
        if t.nrows() != fam.dim() || !t.is_square() {
            return Err(Error::DimensionMismatch {
                expected: fam.dim(),
                found: t.nrows(),
            });
        }
        let t_inv = inverse(&t)?;
        let tri = Self::assemble(fam, t, t_inv);
        if tri.lower_residue > TRIANGULAR_TOL {
            return Err(Error::InvalidInput(format!(
                "supplied transform leaves sub-diagonal residue {:e}",
                tri.lower_residue
            )));
        }
        Ok(tri)
    }

    fn assemble(fam: &MatrixFamily, t: CMatrix, t_inv: CMatrix) -> Self {
        let triangulars: Vec<CMatrix> = fam.mats().iter().map(|a| &(&t * &a.to_complex()) * &t_inv).collect();
        let lower_residue = triangulars
            .iter()
            .map(|m| m.lower_max_abs() / m.norm_fro().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        let diag = triangulars.iter().map(Matrix::diagonal).collect();
        Triangularization {
            t,
            t_inv,
            triangulars,
            diag,
            lower_residue,
            conjugation_defect: 0.0,
        }
    }
}

/// Finds `T` with every `T A_i T⁻¹` upper-triangular.
pub fn simultaneous_triangularize(fam: &MatrixFamily) -> Result<Triangularization> {
    let solv = is_solvable(fam);
    if !solv.solvable {
        return Err(Error::NotSolvable { series: solv.series });
    }
    let mats: Vec<CMatrix> = fam.mats().iter().map(Matrix::to_complex).collect();
    let u = flag_basis(&mats)?;
    // u is unitary: its columns are the constructed basis, T = u^H.
    let t = u.adjoint();
    let mut tri = Triangularization::assemble(fam, t, u);
    if tri.lower_residue > TRIANGULAR_TOL {
        return Err(Error::NumericalBreakdown(format!(
            "triangularized family keeps sub-diagonal residue {:e}",
            tri.lower_residue
        )));
    }
    // Zero the numerical residue so Ã_i is exactly upper-triangular.
    let mut defect: f64 = 0.0;
    for m in &mut tri.triangulars {
        let n = m.nrows();
        for i in 0..n {
            for j in 0..i {
                defect = defect.max(m[(i, j)].norm());
                m[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    tri.conjugation_defect = defect;
    Ok(tri)
}

/// Unitary whose columns give a flag of common invariant subspaces.
fn flag_basis(mats: &[CMatrix]) -> Result<CMatrix> {
    let d = mats[0].nrows();
    if d == 1 {
        return Ok(CMatrix::identity(1));
    }
    let v = match generic_eigenvector(mats)? {
        Some(v) => v,
        None => common_eigenvector(&lie_closure(mats).basis, d)?,
    };
    let u0 = unitary_with_first_column(&v);
    let quotient: Vec<CMatrix> = mats
        .iter()
        .map(|a| (&(&u0.adjoint() * a) * &u0).block(1, d, 1, d))
        .collect();
    let rest = flag_basis(&quotient)?;
    let mut embed = CMatrix::identity(d);
    for i in 0..d - 1 {
        for j in 0..d - 1 {
            embed[(i + 1, j + 1)] = rest[(i, j)];
        }
    }
    Ok(&u0 * &embed)
}

/// When a fixed generic combination of the family has simple spectrum, a
/// common eigenvector must be one of its eigenvectors; the best candidate is
/// returned if it is common to the whole family.
fn generic_eigenvector(mats: &[CMatrix]) -> Result<Option<Vec<Complex64>>> {
    let d = mats[0].nrows();
    let mut x = CMatrix::zeros(d, d);
    for (i, a) in mats.iter().enumerate() {
        let c = Complex64::from_polar(1.0 / (1.0 + 0.37 * i as f64), 0.61 + 1.13 * i as f64);
        let s = a.norm_fro();
        if s > 0.0 {
            x = &x + &a.scale(c / s);
        }
    }
    let unit = x.norm_fro();
    if unit == 0.0 {
        return Ok(None);
    }
    let eig = eigenvalues(&x)?;
    for i in 0..d {
        for j in 0..i {
            if (eig[i] - eig[j]).norm() <= GENERIC_GAP * unit {
                return Ok(None);
            }
        }
    }
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for &lambda in &eig {
        let v = eigenvector(&x, lambda)?;
        let res = mats
            .iter()
            .map(|a| {
                let av = a.matvec(&v);
                let rq: Complex64 = v.iter().zip(&av).map(|(p, q)| p.conj() * q).sum();
                let r: f64 = av.iter().zip(&v).map(|(p, q)| (p - rq * q).norm_sqr()).sum();
                r.sqrt() / a.norm_fro().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(b, _)| res < *b) {
            best = Some((res, v));
        }
    }
    Ok(best.filter(|(r, _)| *r <= TRIANGULAR_TOL).map(|(_, v)| v))
}

fn unitary_with_first_column(v: &[Complex64]) -> CMatrix {
    let col = CMatrix::from_columns(&[v.to_vec()]);
    let (q, _) = householder(&col);
    q
}

/// Common eigenvector of the solvable Lie algebra spanned by `basis`, acting on `C^d`.
fn common_eigenvector(basis: &[CMatrix], d: usize) -> Result<Vec<Complex64>> {
    if d == 1 || basis.is_empty() {
        let mut e = vec![Complex64::new(0.0, 0.0); d];
        e[0] = Complex64::new(1.0, 0.0);
        return Ok(e);
    }
    let derived = derived_algebra(basis);
    if derived.is_empty() {
        return abelian_common_eigenvector(basis, d);
    }
    if derived.len() >= basis.len() {
        return Err(Error::NumericalBreakdown(
            "derived algebra does not shrink; algebra is not solvable at tolerance".into(),
        ));
    }

    // K = [L, L] + all complement directions but the last; z spans L / K.
    let mut span = Span::new(LIE_SPAN_TOL);
    for m in &derived {
        span.try_add(m.clone());
    }
    let mut complement = Vec::new();
    for b in basis {
        if span.try_add(b.clone()) {
            complement.push(b.clone());
        }
    }
    let z = complement
        .pop()
        .ok_or_else(|| Error::NumericalBreakdown("no complement to the derived algebra".into()))?;
    let mut ideal = Span::new(LIE_SPAN_TOL);
    for m in derived.iter().chain(complement.iter()) {
        ideal.try_add(m.clone());
    }
    let ideal = ideal.into_basis();

    let v = common_eigenvector(&ideal, d)?;
    let weight_space = joint_weight_space(&ideal, &v, d)?;
    let zw = restrict(&z, &weight_space);
    let u = any_eigenvector(&zw)?;
    Ok(weight_space.matvec(&u))
}

fn abelian_common_eigenvector(basis: &[CMatrix], d: usize) -> Result<Vec<Complex64>> {
    let mut q = CMatrix::identity(d);
    for x in basis {
        let xw = restrict(x, &q);
        let kernel = eigenspace(&xw, x.norm_fro())?;
        q = &q * &CMatrix::from_columns(&kernel);
    }
    Ok(q.column(0))
}

/// Orthonormal basis (as columns) of `{w : k w = λ(k) w for all k in K}`,
/// with the weight `λ` read off the common eigenvector `v`.
fn joint_weight_space(ideal: &[CMatrix], v: &[Complex64], d: usize) -> Result<CMatrix> {
    let vv: f64 = v.iter().map(|x| x.norm_sqr()).sum();
    let mut stacked = CMatrix::zeros(d * ideal.len(), d);
    let mut scale: f64 = 0.0;
    for (b, k) in ideal.iter().enumerate() {
        let kv = k.matvec(v);
        let lambda = v.iter().zip(&kv).map(|(a, b)| a.conj() * b).sum::<Complex64>() / vv;
        scale = scale.max(k.norm_fro());
        for i in 0..d {
            for j in 0..d {
                stacked[(b * d + i, j)] = k[(i, j)] - if i == j { lambda } else { Complex64::new(0.0, 0.0) };
            }
        }
    }
    let kernel = kernel(&stacked, scale);
    if kernel.is_empty() {
        return Err(Error::NumericalBreakdown("empty weight space".into()));
    }
    Ok(CMatrix::from_columns(&kernel))
}

/// `q^H x q` for a matrix `q` with orthonormal columns spanning an `x`-invariant subspace.
fn restrict(x: &CMatrix, q: &CMatrix) -> CMatrix {
    &(&q.adjoint() * x) * q
}

/// Right singular vectors with singular value below `EIGENSPACE_TOL` times
/// the larger of the top singular value and `scale`.
fn kernel(m: &CMatrix, scale: f64) -> Vec<Vec<Complex64>> {
    let svd = Svd::compute(m);
    let smax = svd.values.first().copied().unwrap_or(0.0);
    let cutoff = EIGENSPACE_TOL * smax.max(scale);
    svd.values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(j, _)| svd.v.column(j))
        .collect()
}

/// Eigenspace of the eigenvalue cluster with the largest real part.
///
/// A defective eigenvalue of multiplicity `k` comes back from the QR
/// iteration scattered over a disc of radius about `ε^(1/k)`, while the mean
/// of the scattered values stays accurate to `ε`. Radii are tried from the
/// widest such disc down to `WEIGHT_CLUSTER_TOL`; a radius that merges
/// genuinely distinct eigenvalues leaves `m - μI` nonsingular and is skipped.
fn eigenspace(m: &CMatrix, scale: f64) -> Result<Vec<Vec<Complex64>>> {
    let w = m.nrows();
    let eig = eigenvalues(m)?;
    let unit = m.norm_fro().max(scale).max(f64::MIN_POSITIVE);
    let mut radii: Vec<f64> = (2..=w).map(|k| 4.0 * f64::EPSILON.powf(1.0 / k as f64)).collect();
    radii.push(WEIGHT_CLUSTER_TOL);
    radii.sort_by(|a, b| b.total_cmp(a));
    radii.dedup();
    let mut last_size = 0;
    for r in radii {
        let cluster = single_linkage(&eig, r * unit);
        if cluster.len() == last_size {
            continue;
        }
        last_size = cluster.len();
        let mu = cluster.iter().sum::<Complex64>() / cluster.len() as f64;
        let mut shifted = m.clone();
        for i in 0..w {
            shifted[(i, i)] -= mu;
        }
        let k = kernel(&shifted, scale);
        if !k.is_empty() {
            return Ok(k);
        }
    }
    Err(Error::NumericalBreakdown(
        "no common eigenvector survives the eigenspace tolerance".into(),
    ))
}

/// Eigenvalues reachable from the first one through steps of at most `radius`.
fn single_linkage(eig: &[Complex64], radius: f64) -> Vec<Complex64> {
    let mut taken = vec![false; eig.len()];
    taken[0] = true;
    let mut members = vec![eig[0]];
    let mut grew = true;
    while grew {
        grew = false;
        for (i, z) in eig.iter().enumerate() {
            if !taken[i] && members.iter().any(|m| (m - z).norm() <= radius) {
                taken[i] = true;
                members.push(*z);
                grew = true;
            }
        }
    }
    members
}

fn any_eigenvector(m: &CMatrix) -> Result<Vec<Complex64>> {
    let k = eigenspace(m, m.norm_fro())?;
    Ok(k.into_iter().next().expect("eigenspace is non-empty"))
}
