//! Sparsity algebra, constraint-subspace bases and projections, and the
//! QI / strong-QI structural tests.
//!
//! Controllers live in mN×pN block space; causality means zero above the
//! block diagonal. Constraint subspaces are described either by a binary
//! sparsity pattern or by tied-entry families (e.g. the repeated static
//! diagonal gain I_N ⊗ diag(…)), all carried uniformly as an orthonormal
//! basis of vec(K) space.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Threshold below which an entry counts as a structural zero.
pub const STRUCT_ZERO_TOL: f64 = 1e-10;

/// Frobenius-relative residual above which a matrix has left a subspace.
pub const SUBSPACE_RESIDUAL_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// causality
// ---------------------------------------------------------------------------

/// First nonzero entry of `k` strictly above the m×p block diagonal, in
/// column-major scan order, if any.
pub fn causal_violation(k: &DMatrix<f64>, m: usize, p: usize) -> Option<(usize, usize)> {
    for j in 0..k.ncols() {
        for i in 0..k.nrows() {
            if j / p > i / m && k[(i, j)] != 0.0 {
                return Some((i, j));
            }
        }
    }
    None
}

/// True iff `k` has no support above the block diagonal.
pub fn is_causal(k: &DMatrix<f64>, m: usize, p: usize) -> bool {
    causal_violation(k, m, p).is_none()
}

/// Errors with [`Error::NonCausalController`] if `k` is not causal.
pub fn require_causal(k: &DMatrix<f64>, m: usize, p: usize) -> Result<()> {
    match causal_violation(k, m, p) {
        Some((row, col)) => Err(Error::NonCausalController { row, col }),
        None => Ok(()),
    }
}

/// The all-ones block lower-triangular causal mask (1 in block (i,j) iff j ≤ i).
pub fn causal_mask(m: usize, p: usize, nsteps: usize) -> DMatrix<u8> {
    DMatrix::from_fn(m * nsteps, p * nsteps, |i, j| u8::from(j / p <= i / m))
}

/// Causal coordinates in column-major scan order; the canonical indexing
/// for the restricted quadratic form.
pub fn causal_indices(m: usize, p: usize, nsteps: usize) -> Vec<(usize, usize)> {
    let mut idx = Vec::with_capacity(m * p * nsteps * (nsteps + 1) / 2);
    for j in 0..p * nsteps {
        for i in 0..m * nsteps {
            if j / p <= i / m {
                idx.push((i, j));
            }
        }
    }
    idx
}

// ---------------------------------------------------------------------------
// binary structure algebra
// ---------------------------------------------------------------------------

/// Struct(Y): 1 where |Y| exceeds `zero_tol`, else 0.
pub fn struct_of(y: &DMatrix<f64>, zero_tol: f64) -> DMatrix<u8> {
    y.map(|v| u8::from(v.abs() > zero_tol))
}

fn check_binary_shapes(
    a: (usize, usize),
    b: (usize, usize),
    what: &str,
    expected_rel: bool,
) -> Result<()> {
    let ok = if expected_rel {
        a == b // elementwise comparison
    } else {
        a.1 == b.0 // product conformability
    };
    if !ok {
        return Err(Error::DimensionMismatch {
            what: what.to_string(),
            expected: format!("{}x{}", a.0, a.1),
            got: format!("{}x{}", b.0, b.1),
        });
    }
    Ok(())
}

/// Elementwise x ≤ x̂ over binary matrices.
pub fn binary_le(x: &DMatrix<u8>, xhat: &DMatrix<u8>) -> Result<bool> {
    check_binary_shapes(x.shape(), xhat.shape(), "binary comparison", true)?;
    Ok(x.iter().zip(xhat.iter()).all(|(a, b)| a <= b))
}

/// Boolean (saturating) matrix product: Struct of the integer product.
pub fn binary_product(x: &DMatrix<u8>, z: &DMatrix<u8>) -> Result<DMatrix<u8>> {
    check_binary_shapes(x.shape(), z.shape(), "binary product", false)?;
    let (rows, inner, cols) = (x.nrows(), x.ncols(), z.ncols());
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if (0..inner).any(|k| x[(i, k)] == 1 && z[(k, j)] == 1) {
                out[(i, j)] = 1;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// sparsity patterns
// ---------------------------------------------------------------------------

/// A causal binary support pattern for the controller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    s: DMatrix<u8>,
    input_dim: usize,
    output_dim: usize,
    horizon: usize,
}

impl SparsityPattern {
    /// Wraps an explicit mN×pN 0/1 matrix, rejecting non-binary entries and
    /// support above the block diagonal.
    pub fn new(
        s: DMatrix<u8>,
        input_dim: usize,
        output_dim: usize,
        horizon: usize,
    ) -> Result<Self> {
        let expected = (input_dim * horizon, output_dim * horizon);
        if s.shape() != expected {
            return Err(Error::DimensionMismatch {
                what: "sparsity pattern".to_string(),
                expected: format!("{}x{}", expected.0, expected.1),
                got: format!("{}x{}", s.nrows(), s.ncols()),
            });
        }
        if let Some(v) = s.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidConfig(format!(
                "sparsity pattern entries must be 0 or 1, found {v}"
            )));
        }
        for j in 0..s.ncols() {
            for i in 0..s.nrows() {
                if j / output_dim > i / input_dim && s[(i, j)] != 0 {
                    return Err(Error::NonCausalPattern { row: i, col: j });
                }
            }
        }
        Ok(Self {
            s,
            input_dim,
            output_dim,
            horizon,
        })
    }

    /// T ⊗ S_small with T the N×N lower-triangular all-ones matrix: the
    /// time-replicated pattern both worked examples use.
    pub fn from_causal_kron(s_small: &DMatrix<u8>, horizon: usize) -> Result<Self> {
        let (m, p) = s_small.shape();
        let mut s = DMatrix::zeros(m * horizon, p * horizon);
        for bi in 0..horizon {
            for bj in 0..=bi {
                s.view_mut((bi * m, bj * p), (m, p)).copy_from(s_small);
            }
        }
        Self::new(s, m, p, horizon)
    }

    /// The unconstrained (centralized) causal pattern.
    pub fn causal(input_dim: usize, output_dim: usize, horizon: usize) -> Self {
        Self {
            s: causal_mask(input_dim, output_dim, horizon),
            input_dim,
            output_dim,
            horizon,
        }
    }

    pub fn matrix(&self) -> &DMatrix<u8> {
        &self.s
    }

    /// Number of free entries |S|.
    pub fn ones(&self) -> usize {
        self.s.iter().filter(|&&v| v == 1).count()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

// ---------------------------------------------------------------------------
// subspace specifications
// ---------------------------------------------------------------------------

/// Which family a constraint subspace belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceKind {
    /// Free entries on a binary support.
    Sparsity,
    /// K = I_N ⊗ diag(α_1..α_m): one static diagonal gain repeated in time.
    StaticDiag,
    /// K = I_N ⊗ K_small with K_small supported on a small pattern.
    StaticPattern,
    /// Arbitrary user-supplied causal basis columns.
    ExplicitBasis,
}

impl SubspaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SubspaceKind::Sparsity => "sparsity",
            SubspaceKind::StaticDiag => "static_diag",
            SubspaceKind::StaticPattern => "static_pattern",
            SubspaceKind::ExplicitBasis => "explicit_basis",
        }
    }
}

/// A linear constraint subspace for the controller, carried as an
/// orthonormal basis of vec(K) space (column-major vec convention).
///
/// Two coordinate systems coexist deliberately:
/// - *orthonormal* coordinates (the basis columns), used for projection and
///   for reducing the Q-domain quadratic;
/// - *natural* coordinates, in which every tied entry carries the raw
///   coordinate value (basis column × √ties). The restricted cost f̲ and its
///   Hessian are reported in natural coordinates so that, e.g., a repeated
///   diagonal gain family is parameterized by the gains themselves.
///
/// For sparsity subspaces the two coincide.
#[derive(Debug, Clone)]
pub struct SubspaceSpec {
    kind: SubspaceKind,
    input_dim: usize,
    output_dim: usize,
    horizon: usize,
    basis: DMatrix<f64>,
    ties: Vec<f64>,
    pattern: Option<SparsityPattern>,
}

impl SubspaceSpec {
    /// Free entries on a causal binary support; basis columns are standard
    /// unit vectors in column-major scan order of the pattern.
    pub fn sparsity(pattern: SparsityPattern) -> Self {
        let (m, p, nsteps) = (pattern.input_dim(), pattern.output_dim(), pattern.horizon());
        let (rows, cols) = (m * nsteps, p * nsteps);
        let r = pattern.ones();
        let mut basis = DMatrix::zeros(rows * cols, r);
        let mut col = 0;
        for j in 0..cols {
            for i in 0..rows {
                if pattern.matrix()[(i, j)] == 1 {
                    basis[(j * rows + i, col)] = 1.0;
                    col += 1;
                }
            }
        }
        Self {
            kind: SubspaceKind::Sparsity,
            input_dim: m,
            output_dim: p,
            horizon: nsteps,
            basis,
            ties: vec![1.0; r],
            pattern: Some(pattern),
        }
    }

    /// The unconstrained causal subspace (all block lower-triangular K).
    pub fn causal_full(input_dim: usize, output_dim: usize, horizon: usize) -> Self {
        Self::sparsity(SparsityPattern::causal(input_dim, output_dim, horizon))
    }

    /// K = I_N ⊗ diag(α_1..α_dim): requires square blocks (m = p = dim).
    pub fn static_diag(dim: usize, horizon: usize) -> Self {
        Self::static_pattern(&DMatrix::identity(dim, dim), horizon)
            .expect("identity small pattern is always binary")
    }

    /// K = I_N ⊗ K_small with K_small free exactly on `s_small`'s support.
    /// Each basis column ties the N time-replicated copies of one entry.
    pub fn static_pattern(s_small: &DMatrix<u8>, horizon: usize) -> Result<Self> {
        if let Some(v) = s_small.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidConfig(format!(
                "small pattern entries must be 0 or 1, found {v}"
            )));
        }
        let (m, p) = s_small.shape();
        let rows = m * horizon;
        let scale = 1.0 / (horizon as f64).sqrt();
        let mut columns = Vec::new();
        for j in 0..p {
            for i in 0..m {
                if s_small[(i, j)] == 1 {
                    let mut col = DVector::zeros(rows * p * horizon);
                    for t in 0..horizon {
                        col[(t * p + j) * rows + (t * m + i)] = scale;
                    }
                    columns.push(col);
                }
            }
        }
        let r = columns.len();
        let mut basis = DMatrix::zeros(rows * p * horizon, r);
        for (c, col) in columns.iter().enumerate() {
            basis.set_column(c, col);
        }
        let is_identity =
            m == p && (0..m).all(|i| (0..p).all(|j| s_small[(i, j)] == u8::from(i == j)));
        let kind = if is_identity {
            SubspaceKind::StaticDiag
        } else {
            SubspaceKind::StaticPattern
        };
        Ok(Self {
            kind,
            input_dim: m,
            output_dim: p,
            horizon,
            basis,
            ties: vec![horizon as f64; r],
            pattern: None,
        })
    }

    /// Arbitrary causal basis columns (vec convention, mN·pN rows).
    /// Columns are orthonormalized; linearly dependent ones are dropped.
    pub fn explicit_basis(
        columns: DMatrix<f64>,
        input_dim: usize,
        output_dim: usize,
        horizon: usize,
    ) -> Result<Self> {
        let (rows, cols) = (input_dim * horizon, output_dim * horizon);
        if columns.nrows() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "explicit basis".to_string(),
                expected: format!("{} rows", rows * cols),
                got: format!("{} rows", columns.nrows()),
            });
        }
        // every generator must itself be causal
        for c in 0..columns.ncols() {
            let mat = DMatrix::from_column_slice(rows, cols, columns.column(c).as_slice());
            if let Some((row, col)) = causal_violation(&mat, input_dim, output_dim) {
                return Err(Error::NonCausalPattern { row, col });
            }
        }
        // modified Gram-Schmidt, dropping dependent columns
        let mut ortho: Vec<DVector<f64>> = Vec::new();
        for c in 0..columns.ncols() {
            let mut v = columns.column(c).clone_owned();
            for q in &ortho {
                let coeff = q.dot(&v);
                v -= q * coeff;
            }
            let norm = v.norm();
            if norm > 1e-10 {
                ortho.push(v / norm);
            }
        }
        let r = ortho.len();
        let mut basis = DMatrix::zeros(rows * cols, r);
        for (c, col) in ortho.iter().enumerate() {
            basis.set_column(c, col);
        }
        Ok(Self {
            kind: SubspaceKind::ExplicitBasis,
            input_dim,
            output_dim,
            horizon,
            basis,
            ties: vec![1.0; r],
            pattern: None,
        })
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    /// Subspace dimension r.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Orthonormal basis, (mN·pN) × r.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Tied-entry multiplicity per basis column.
    pub fn ties(&self) -> &[f64] {
        &self.ties
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Controller shape (mN, pN).
    pub fn controller_shape(&self) -> (usize, usize) {
        (
            self.input_dim * self.horizon,
            self.output_dim * self.horizon,
        )
    }

    /// The sparsity pattern for sparsity-kind subspaces.
    pub fn pattern(&self) -> Option<&SparsityPattern> {
        self.pattern.as_ref()
    }

    /// Union of the basis supports: the tightest sparsity pattern containing
    /// the subspace. For sparsity kinds this is the pattern itself.
    pub fn sparsity_envelope(&self) -> SparsityPattern {
        if let Some(pat) = &self.pattern {
            return pat.clone();
        }
        let (rows, cols) = self.controller_shape();
        let mut s = DMatrix::zeros(rows, cols);
        for c in 0..self.basis.ncols() {
            for (v, s_entry) in self.basis.column(c).iter().zip(s.iter_mut()) {
                if v.abs() > 0.0 {
                    *s_entry = 1;
                }
            }
        }
        SparsityPattern::new(s, self.input_dim, self.output_dim, self.horizon)
            .expect("basis columns are causal by construction")
    }

    fn vec_of(&self, k: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_column_slice(k.as_slice())
    }

    fn unvec(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let (rows, cols) = self.controller_shape();
        DMatrix::from_column_slice(rows, cols, v.as_slice())
    }

    /// Orthogonal projection onto the subspace. For sparsity kinds this is
    /// the elementwise mask K ⊙ S; in general unvec(B·Bᵀ·vec(K)).
    pub fn project(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        if let Some(pat) = &self.pattern {
            return DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| {
                if pat.matrix()[(i, j)] == 1 {
                    k[(i, j)]
                } else {
                    0.0
                }
            });
        }
        let coords = self.basis.tr_mul(&self.vec_of(k));
        self.unvec(&(&self.basis * coords))
    }

    /// K from orthonormal coordinates: unvec(B·α).
    pub fn matrix_from_coords(&self, alpha: &DVector<f64>) -> DMatrix<f64> {
        self.unvec(&(&self.basis * alpha))
    }

    /// Orthonormal coordinates of K (exact when K lies in the subspace).
    pub fn coords_of(&self, k: &DMatrix<f64>) -> DVector<f64> {
        self.basis.tr_mul(&self.vec_of(k))
    }

    /// K from natural coordinates (every tied entry carries the raw value).
    pub fn matrix_from_natural(&self, alpha: &DVector<f64>) -> DMatrix<f64> {
        let scaled = DVector::from_fn(alpha.len(), |c, _| alpha[c] * self.ties[c].sqrt());
        self.matrix_from_coords(&scaled)
    }

    /// Natural coordinates of K (exact when K lies in the subspace).
    pub fn natural_of(&self, k: &DMatrix<f64>) -> DVector<f64> {
        let coords = self.coords_of(k);
        DVector::from_fn(coords.len(), |c, _| coords[c] / self.ties[c].sqrt())
    }

    /// Pulls an entrywise cost gradient back to natural coordinates: the
    /// derivative w.r.t. a tied family is the *sum* over its entries (chain
    /// rule), in contrast to [`Self::natural_of`], which averages values.
    pub fn natural_gradient(&self, grad: &DMatrix<f64>) -> DVector<f64> {
        let coords = self.coords_of(grad);
        DVector::from_fn(coords.len(), |c, _| coords[c] * self.ties[c].sqrt())
    }

    /// Frobenius distance from K to the subspace.
    pub fn residual(&self, k: &DMatrix<f64>) -> f64 {
        (k - self.project(k)).norm()
    }
}

// ---------------------------------------------------------------------------
// QI tests
// ---------------------------------------------------------------------------

/// The binary strong-QI test S·Δ·S ≤ S over the boolean structure algebra.
/// For sparsity subspaces this is exact: QI, strong QI, and this structural
/// containment all coincide.
pub fn qi_test_binary(pattern: &SparsityPattern, delta: &DMatrix<u8>) -> Result<bool> {
    let s = pattern.matrix();
    if delta.shape() != (s.ncols(), s.nrows()) {
        return Err(Error::DimensionMismatch {
            what: "plant structure Delta".to_string(),
            expected: format!("{}x{}", s.ncols(), s.nrows()),
            got: format!("{}x{}", delta.nrows(), delta.ncols()),
        });
    }
    let sds = binary_product(&binary_product(s, delta)?, s)?;
    binary_le(&sds, s)
}

/// A matrix that left the subspace during a definitional QI test.
#[derive(Debug, Clone)]
pub struct QiWitness {
    /// The offending product K·G·K (or K₁·G·K₂).
    pub matrix: DMatrix<f64>,
    /// Index of the largest off-subspace entry.
    pub worst_entry: (usize, usize),
    /// Frobenius norm of the off-subspace component.
    pub residual: f64,
}

/// Outcome of the randomized definitional QI test.
#[derive(Debug, Clone)]
pub struct QiDefinition {
    /// No sampled K₁·G·K₂ left the subspace.
    pub strong_qi: bool,
    /// No sampled K·G·K left the subspace.
    pub qi: bool,
    /// First violation observed, if any.
    pub witness: Option<QiWitness>,
}

fn off_subspace(spec: &SubspaceSpec, x: &DMatrix<f64>) -> Option<QiWitness> {
    let diff = x - spec.project(x);
    let residual = diff.norm();
    let threshold = (SUBSPACE_RESIDUAL_TOL * x.norm()).max(1e-12);
    if residual <= threshold {
        return None;
    }
    let mut worst = (0, 0);
    let mut best = -1.0;
    for j in 0..diff.ncols() {
        for i in 0..diff.nrows() {
            if diff[(i, j)].abs() > best {
                best = diff[(i, j)].abs();
                worst = (i, j);
            }
        }
    }
    Some(QiWitness {
        matrix: x.clone(),
        worst_entry: worst,
        residual,
    })
}

/// Randomized falsification of the QI and strong-QI definitions: samples
/// subspace elements with standard-normal coordinates and checks that the
/// products K·G·K and K₁·G·K₂ stay in the subspace (Frobenius-relative
/// residual ≤ 1e−8, absolute floor 1e−12). Reproducible for a fixed seed.
pub fn qi_test_definition(
    spec: &SubspaceSpec,
    g: &DMatrix<f64>,
    trials: usize,
    seed: u64,
) -> QiDefinition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = spec.dim();
    let draw = |rng: &mut ChaCha8Rng| {
        let coords = DVector::from_fn(r, |_, _| StandardNormal.sample(rng));
        spec.matrix_from_coords(&coords)
    };
    let mut result = QiDefinition {
        strong_qi: true,
        qi: true,
        witness: None,
    };
    for _ in 0..trials {
        let k = draw(&mut rng);
        if result.qi {
            if let Some(w) = off_subspace(spec, &(&k * g * &k)) {
                result.qi = false;
                result.witness.get_or_insert(w);
            }
        }
        let k1 = draw(&mut rng);
        let k2 = draw(&mut rng);
        if result.strong_qi {
            if let Some(w) = off_subspace(spec, &(&k1 * g * &k2)) {
                result.strong_qi = false;
                result.witness.get_or_insert(w);
            }
        }
        if !result.qi && !result.strong_qi {
            break;
        }
    }
    result
}
