//! Small dense-matrix helpers shared across the crate.

use nalgebra::{DMatrix, SymmetricEigen};

/// Assembles `blocks` into one block-diagonal matrix.
///
/// Blocks may be rectangular; rows and columns accumulate independently.
pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Symmetrizes a near-symmetric matrix: (X + Xᵀ)/2.
pub fn symmetrize(x: &DMatrix<f64>) -> DMatrix<f64> {
    (x + x.transpose()) * 0.5
}

/// Symmetric PSD square root via eigendecomposition.
///
/// Eigenvalues in [-tol, 0) are clamped to zero so that singular
/// covariances (e.g. a zero process-noise block) factor cleanly.
/// Unlike Cholesky this never rejects a PSD-but-singular input.
pub fn sym_sqrt(x: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(x));
    let sqrt_vals = eig.eigenvalues.map(|l| {
        debug_assert!(l >= -tol, "sym_sqrt called on a non-PSD matrix (eig {l})");
        l.max(0.0).sqrt()
    });
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals);
    scaled * eig.eigenvectors.transpose()
}

/// Finite Neumann sum I + X + X² + … + X^terms, evaluated Horner-style.
///
/// Equals (I − X)⁻¹ exactly whenever X^(terms+1) = 0, which holds for all
/// the strictly-block-triangular products this crate inverts; no dense LU
/// is ever needed.
pub fn neumann_sum(x: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let n = x.nrows();
    debug_assert_eq!(n, x.ncols());
    let mut s = DMatrix::identity(n, n);
    for _ in 0..terms {
        s = x * s;
        for i in 0..n {
            s[(i, i)] += 1.0;
        }
    }
    s
}

/// Smallest eigenvalue of the symmetrized input.
pub fn min_eig_sym(x: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(x)).eigenvalues.min()
}

/// Largest absolute entry (the stationarity residual norm).
pub fn max_abs(x: &DMatrix<f64>) -> f64 {
    x.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()))
}

/// Squared Frobenius norm.
pub fn frob2(x: &DMatrix<f64>) -> f64 {
    x.iter().map(|v| v * v).sum()
}
