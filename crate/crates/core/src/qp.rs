//! Exact convex solve of the disturbance-feedback problem restricted to a
//! constraint subspace — the independent global-optimality oracle.
//!
//! On the subspace basis the Q-domain cost is a strictly convex quadratic
//! in r coordinates; its unique minimizer is one SPD linear solve. For QI
//! instances the recovered controller K = h(Q*) is the global optimum of
//! the original (non-convex) K-domain problem, which is what the projected
//! gradient results are checked against.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::cost::{h_map, QDomainQuadratic};
use crate::error::{Error, Result};
use crate::model::CompactSystem;
use crate::subspace::SubspaceSpec;

/// Restriction of the Q-domain quadratic to a subspace basis:
/// J̃(unvec(M·α)) = ½·αᵀ·Hr·α + grᵀ·α + c.
#[derive(Debug, Clone)]
pub struct ReducedQuadratic {
    /// r×r symmetric positive definite.
    pub hr: DMatrix<f64>,
    /// r-vector linear coefficient.
    pub gr: DVector<f64>,
    /// Constant term (open-loop cost).
    pub c: f64,
}

impl ReducedQuadratic {
    /// ½αᵀHrα + grᵀα + c.
    pub fn value(&self, alpha: &DVector<f64>) -> f64 {
        0.5 * alpha.dot(&(&self.hr * alpha)) + self.gr.dot(alpha) + self.c
    }

    /// Hr·α + gr.
    pub fn grad(&self, alpha: &DVector<f64>) -> DVector<f64> {
        &self.hr * alpha + &self.gr
    }

    pub fn dim(&self) -> usize {
        self.gr.len()
    }
}

/// Restricts the quadratic to the subspace: Hr[a,b] = 2·⟨B_a, X·B_b·Y⟩,
/// gr[a] = ⟨B_a, G_lin⟩ over the orthonormal basis columns B_a.
///
/// For sparsity subspaces the basis columns are unit vectors, so the
/// entries collapse to Hr[a,b] = 2·Y[j_a,j_b]·X[i_a,i_b] over the free
/// entry list — evaluated directly instead of through matrix products.
pub fn reduce_quadratic(quad: &QDomainQuadratic, spec: &SubspaceSpec) -> ReducedQuadratic {
    let r = spec.dim();
    let mut hr = DMatrix::zeros(r, r);
    let mut gr = DVector::zeros(r);

    if let Some(pattern) = spec.pattern() {
        // free entries in the basis's column-major scan order
        let mut idx = Vec::with_capacity(r);
        for j in 0..pattern.matrix().ncols() {
            for i in 0..pattern.matrix().nrows() {
                if pattern.matrix()[(i, j)] == 1 {
                    idx.push((i, j));
                }
            }
        }
        debug_assert_eq!(idx.len(), r);
        for (a, &(ia, ja)) in idx.iter().enumerate() {
            gr[a] = quad.g_lin[(ia, ja)];
            for (b, &(ib, jb)) in idx.iter().enumerate() {
                hr[(a, b)] = 2.0 * quad.y[(ja, jb)] * quad.x[(ia, ib)];
            }
        }
    } else {
        let (rows, cols) = spec.controller_shape();
        let basis = spec.basis();
        let g_vec = DVector::from_column_slice(quad.g_lin.as_slice());
        for b in 0..r {
            let bb = DMatrix::from_column_slice(rows, cols, basis.column(b).as_slice());
            let t = 2.0 * (&quad.x * bb * &quad.y);
            let t_vec = DVector::from_column_slice(t.as_slice());
            let col = basis.tr_mul(&t_vec);
            hr.column_mut(b).copy_from(&col);
        }
        gr = basis.tr_mul(&g_vec);
    }

    // symmetrize away the last bits of rounding
    let hr = crate::linalg::symmetrize(&hr);
    ReducedQuadratic { hr, gr, c: quad.c }
}

/// Minimizes the reduced quadratic: α\* = −Hr⁻¹·gr by Cholesky.
pub fn solve_reduced(rq: &ReducedQuadratic) -> Result<(DVector<f64>, f64)> {
    if rq.dim() == 0 {
        return Ok((DVector::zeros(0), rq.c));
    }
    let chol = Cholesky::new(rq.hr.clone()).ok_or(Error::NumericallyIndefinite)?;
    let alpha = chol.solve(&(-&rq.gr));
    let j = rq.value(&alpha);
    Ok((alpha, j))
}

/// The Q-domain optimum on a subspace.
#[derive(Debug, Clone)]
pub struct QSolution {
    /// Minimizer coordinates on the orthonormal basis.
    pub alpha_star: DVector<f64>,
    /// Q\* = unvec(M·α\*).
    pub q_star: DMatrix<f64>,
    /// Optimal value J̃(Q\*).
    pub j_star: f64,
}

/// Solves min J̃(Q) over the subspace. Always well-posed (the quadratic is
/// strictly convex); whether Q\* corresponds to a feasible controller for
/// the original problem depends on QI and is the caller's concern.
pub fn solve_q_domain(cs: &CompactSystem, spec: &SubspaceSpec) -> Result<QSolution> {
    let quad = QDomainQuadratic::new(cs);
    let rq = reduce_quadratic(&quad, spec);
    let (alpha_star, j_star) = solve_reduced(&rq)?;
    let q_star = spec.matrix_from_coords(&alpha_star);
    Ok(QSolution {
        alpha_star,
        q_star,
        j_star,
    })
}

/// Relative subspace-escape tolerance for recovered controllers.
const RECOVER_TOL: f64 = 1e-8;

/// Maps a Q-domain optimum back to a controller, K = h(Q\*).
///
/// Under QI the result provably stays in the subspace; `qi_claimed`
/// enforces that with a residual check and errors with
/// [`Error::SubspaceEscape`] if the claim is inconsistent. With
/// `qi_claimed = false` the (generally infeasible) controller is returned
/// as-is so callers can inspect the escape.
pub fn recover_controller(
    cs: &CompactSystem,
    spec: &SubspaceSpec,
    q_star: &DMatrix<f64>,
    qi_claimed: bool,
) -> Result<DMatrix<f64>> {
    let k = h_map(q_star, &cs.g, cs.horizon);
    if qi_claimed {
        let residual = spec.residual(&k) / k.norm().max(1.0);
        if residual >= RECOVER_TOL {
            return Err(Error::SubspaceEscape { residual });
        }
    }
    Ok(k)
}
