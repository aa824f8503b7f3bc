use crate::matkit::CMatrix;

use super::frob_dot;

/// Orthonormal basis of a growing subspace of matrices, built by Gram–Schmidt
/// with one reorthogonalization pass.
#[derive(Debug, Clone)]
pub(crate) struct Span {
    basis: Vec<CMatrix>,
    tol: f64,
}

impl Span {
    pub fn new(tol: f64) -> Self {
        Self { basis: Vec::new(), tol }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMatrix] {
        &self.basis
    }

    pub fn into_basis(self) -> Vec<CMatrix> {
        self.basis
    }

    /// Component of `m` orthogonal to the span.
    pub fn residual(&self, m: &CMatrix) -> CMatrix {
        let mut r = m.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let c = frob_dot(b, &r);
                r = &r - &b.scale(c);
            }
        }
        r
    }

    /// Adjoins the normalized residual of `m` when its norm exceeds the
    /// tolerance; returns whether the span grew.
    pub fn try_add(&mut self, m: CMatrix) -> bool {
        let r = self.residual(&m);
        let nr = r.norm_fro();
        if nr > self.tol {
            self.basis.push(r.scale_real(1.0 / nr));
            true
        } else {
            false
        }
    }
}
