//! Cholesky factorization with diagonal jitter escalation and a few
//! triangular helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const JITTER_START: f64 = 1e-10;
pub const JITTER_MAX: f64 = 1e-6;

/// A lower Cholesky factor together with the jitter that was added to the
/// diagonal to obtain it.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl JitteredCholesky {
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// ln det of the (jittered) matrix.
    pub fn ln_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    /// L⁻¹ b.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let mut x = b.clone();
        forward_substitute(l, &mut x);
        x
    }

    /// L z.
    pub fn mul_lower(&self, z: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let n = z.len();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..=i {
                s += l[(i, j)] * z[j];
            }
            out[i] = s;
        }
        out
    }
}

fn forward_substitute(l: &DMatrix<f64>, x: &mut DVector<f64>) {
    let n = x.len();
    for i in 0..n {
        let mut s = x[i];
        for j in 0..i {
            s -= l[(i, j)] * x[j];
        }
        x[i] = s / l[(i, i)];
    }
}

/// Cholesky factor of `m`, retrying with jitter 1e-10, 1e-9, …, 1e-6 on the
/// diagonal. Fails if even the largest jitter does not give a positive
/// definite matrix.
pub fn jittered_cholesky(m: &DMatrix<f64>) -> Result<JitteredCholesky> {
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(JitteredCholesky { chol, jitter: 0.0 });
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut a = m.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok(JitteredCholesky { chol, jitter });
        }
        jitter *= 10.0;
    }
    Err(Error::NotPositiveDefinite { jitter: JITTER_MAX })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let e = m.clone().symmetric_eigen();
    e.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
