//! Plant, noise, and cost-weight data over a finite horizon, plus the
//! stacked compact form on which every cost and gradient in this crate
//! is evaluated.
//!
//! The compact form collects the whole horizon into block matrices: the
//! stacked state is driven by `x = P11 w + P12 u` with `w` holding the
//! initial state and all process noise, and the stacked measurement is
//! `y = C x + v`. All operators that need inverting are nilpotent
//! perturbations of the identity, so inverses are finite Neumann sums —
//! exact, with no conditioning concerns.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{block_diag, max_abs, min_eig_sym, neumann_sum, sym_sqrt, symmetrize};
use crate::subspace::require_causal;

/// Eigenvalue slack when testing positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-9;
/// Eigenvalue threshold when testing strict positive definiteness.
pub const PD_TOL: f64 = 1e-9;

/// Time-varying plant description over `horizon` steps.
///
/// Dynamics: x_{t+1} = A_t x_t + B_t u_t + w_t, y_t = C_t x_t + v_t, with
/// x_0 ~ N(mu0, Sigma0), w_t ~ N(0, SigmaW_t), v_t ~ N(0, SigmaV_t), and
/// cost sum_t x_tᵀ M_t x_t + u_tᵀ R_t u_t (state weights run to t = N).
///
/// Construct the fields directly, then pass through [`validate_system_data`]
/// before handing the value to anything else in the crate.
#[derive(Debug, Clone)]
pub struct SystemData {
    /// Number of control steps N.
    pub horizon: usize,
    /// State dimension n.
    pub state_dim: usize,
    /// Input dimension m.
    pub input_dim: usize,
    /// Output dimension p.
    pub output_dim: usize,
    /// A_0..A_{N-1}, each n×n.
    pub a_seq: Vec<DMatrix<f64>>,
    /// B_0..B_{N-1}, each n×m.
    pub b_seq: Vec<DMatrix<f64>>,
    /// C_0..C_{N-1}, each p×n.
    pub c_seq: Vec<DMatrix<f64>>,
    /// M_0..M_N, each n×n, PSD.
    pub m_seq: Vec<DMatrix<f64>>,
    /// R_0..R_{N-1}, each m×m, PD.
    pub r_seq: Vec<DMatrix<f64>>,
    /// Initial-state covariance, n×n, PSD.
    pub sigma0: DMatrix<f64>,
    /// Process-noise covariances, each n×n, PSD.
    pub sigma_w_seq: Vec<DMatrix<f64>>,
    /// Measurement-noise covariances, each p×p, PD.
    pub sigma_v_seq: Vec<DMatrix<f64>>,
    /// Initial-state mean, length n.
    pub mu0: DVector<f64>,
}

fn check_shape(mat: &DMatrix<f64>, rows: usize, cols: usize, what: String) -> Result<()> {
    if mat.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch {
            what,
            expected: format!("{rows}x{cols}"),
            got: format!("{}x{}", mat.nrows(), mat.ncols()),
        });
    }
    Ok(())
}

fn check_len(len: usize, expected: usize, what: &str) -> Result<()> {
    if len != expected {
        return Err(Error::DimensionMismatch {
            what: format!("{what} sequence length"),
            expected: expected.to_string(),
            got: len.to_string(),
        });
    }
    Ok(())
}

fn check_psd(mat: &DMatrix<f64>, what: String) -> Result<DMatrix<f64>> {
    let sym = symmetrize(mat);
    let eig = min_eig_sym(&sym);
    if eig < -PSD_TOL {
        return Err(Error::NotPsd {
            what,
            eigenvalue: eig,
        });
    }
    Ok(sym)
}

fn check_pd(mat: &DMatrix<f64>, what: String) -> Result<DMatrix<f64>> {
    let sym = symmetrize(mat);
    let eig = min_eig_sym(&sym);
    if eig <= PD_TOL {
        return Err(Error::NotPd {
            what,
            eigenvalue: eig,
        });
    }
    Ok(sym)
}

/// Checks every structural and definiteness invariant of `raw` and returns
/// the canonicalized system (near-symmetric weight/covariance inputs are
/// symmetrized as (X + Xᵀ)/2 before the eigenvalue tests).
pub fn validate_system_data(raw: SystemData) -> Result<SystemData> {
    let (nsteps, n, m, p) = (raw.horizon, raw.state_dim, raw.input_dim, raw.output_dim);
    if nsteps == 0 || n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidConfig(format!(
            "horizon and dims must be positive (N={nsteps}, n={n}, m={m}, p={p})"
        )));
    }

    check_len(raw.a_seq.len(), nsteps, "A")?;
    check_len(raw.b_seq.len(), nsteps, "B")?;
    check_len(raw.c_seq.len(), nsteps, "C")?;
    check_len(raw.m_seq.len(), nsteps + 1, "M")?;
    check_len(raw.r_seq.len(), nsteps, "R")?;
    check_len(raw.sigma_w_seq.len(), nsteps, "SigmaW")?;
    check_len(raw.sigma_v_seq.len(), nsteps, "SigmaV")?;

    for (t, a) in raw.a_seq.iter().enumerate() {
        check_shape(a, n, n, format!("A at t={t}"))?;
    }
    for (t, b) in raw.b_seq.iter().enumerate() {
        check_shape(b, n, m, format!("B at t={t}"))?;
    }
    for (t, c) in raw.c_seq.iter().enumerate() {
        check_shape(c, p, n, format!("C at t={t}"))?;
    }
    check_shape(&raw.sigma0, n, n, "Sigma0".to_string())?;
    if raw.mu0.len() != n {
        return Err(Error::DimensionMismatch {
            what: "mu0".to_string(),
            expected: n.to_string(),
            got: raw.mu0.len().to_string(),
        });
    }

    let mut out = raw;
    for (t, mat) in out.m_seq.iter_mut().enumerate() {
        check_shape(mat, n, n, format!("M at t={t}"))?;
        *mat = check_psd(mat, format!("M at t={t}"))?;
    }
    for (t, mat) in out.r_seq.iter_mut().enumerate() {
        check_shape(mat, m, m, format!("R at t={t}"))?;
        *mat = check_pd(mat, format!("R at t={t}"))?;
    }
    out.sigma0 = check_psd(&out.sigma0, "Sigma0".to_string())?;
    for (t, mat) in out.sigma_w_seq.iter_mut().enumerate() {
        check_shape(mat, n, n, format!("SigmaW at t={t}"))?;
        *mat = check_psd(mat, format!("SigmaW at t={t}"))?;
    }
    for (t, mat) in out.sigma_v_seq.iter_mut().enumerate() {
        check_shape(mat, p, p, format!("SigmaV at t={t}"))?;
        *mat = check_pd(mat, format!("SigmaV at t={t}"))?;
    }
    Ok(out)
}

/// The stacked compact representation of a validated [`SystemData`].
///
/// Dimensions: the stacked state has length n(N+1) (states x_0..x_N), the
/// stacked input mN, and the stacked output pN (y_N is never measured, so
/// `c_big` carries a trailing n-column zero block).
#[derive(Debug, Clone)]
pub struct CompactSystem {
    pub horizon: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// blkdiag(A_0..A_{N-1}, 0_n); the trailing zero block keeps Z·A_big
    /// strictly block subdiagonal.
    pub a_big: DMatrix<f64>,
    /// [blkdiag(B_0..B_{N-1}); 0_{n×mN}].
    pub b_big: DMatrix<f64>,
    /// [blkdiag(C_0..C_{N-1}), 0_{pN×n}].
    pub c_big: DMatrix<f64>,
    /// Block down-shift with identity blocks on the first subdiagonal.
    pub z: DMatrix<f64>,
    /// (I − Z·A_big)⁻¹, built by forward block substitution.
    pub p11: DMatrix<f64>,
    /// P11·Z·B_big: influence of stacked inputs on stacked states.
    pub p12: DMatrix<f64>,
    /// C·P12, the plant block the QI tests structure against; strictly
    /// block lower-triangular in p×m blocks.
    pub g: DMatrix<f64>,
    pub m_big: DMatrix<f64>,
    pub r_big: DMatrix<f64>,
    /// blkdiag(Sigma0, SigmaW_0..SigmaW_{N-1}).
    pub sigma_w: DMatrix<f64>,
    pub sigma_v: DMatrix<f64>,
    /// [mu0; 0; …; 0].
    pub mu_w: DVector<f64>,
    pub m_half: DMatrix<f64>,
    pub r_half: DMatrix<f64>,
    pub sigma_w_half: DMatrix<f64>,
    pub sigma_v_half: DMatrix<f64>,
}

impl CompactSystem {
    /// Stacked state length n(N+1).
    pub fn nx(&self) -> usize {
        self.state_dim * (self.horizon + 1)
    }

    /// Stacked input length mN (the controller row dimension).
    pub fn nu(&self) -> usize {
        self.input_dim * self.horizon
    }

    /// Stacked output length pN (the controller column dimension).
    pub fn ny(&self) -> usize {
        self.output_dim * self.horizon
    }
}

/// Builds the compact form of a validated system.
pub fn assemble_compact(sys: &SystemData) -> CompactSystem {
    let (nsteps, n, m, p) = (sys.horizon, sys.state_dim, sys.input_dim, sys.output_dim);
    let nx = n * (nsteps + 1);
    let (nu, ny) = (m * nsteps, p * nsteps);

    let mut a_blocks = sys.a_seq.clone();
    a_blocks.push(DMatrix::zeros(n, n));
    let a_big = block_diag(&a_blocks);

    let mut b_big = DMatrix::zeros(nx, nu);
    b_big
        .view_mut((0, 0), (n * nsteps, nu))
        .copy_from(&block_diag(&sys.b_seq));

    let mut c_big = DMatrix::zeros(ny, nx);
    c_big
        .view_mut((0, 0), (ny, n * nsteps))
        .copy_from(&block_diag(&sys.c_seq));

    let mut z = DMatrix::zeros(nx, nx);
    for i in 0..n * nsteps {
        z[(n + i, i)] = 1.0;
    }

    // P11 = (I − Z·A_big)⁻¹ by forward block substitution: block (i, j) is
    // the transition product A_{i-1}···A_j for i > j, the identity on the
    // diagonal, and zero above.
    let mut p11 = DMatrix::zeros(nx, nx);
    for j in 0..=nsteps {
        p11.view_mut((j * n, j * n), (n, n))
            .copy_from(&DMatrix::identity(n, n));
        for i in (j + 1)..=nsteps {
            let prev = p11.view(((i - 1) * n, j * n), (n, n)).clone_owned();
            let blk = &sys.a_seq[i - 1] * prev;
            p11.view_mut((i * n, j * n), (n, n)).copy_from(&blk);
        }
    }

    let p12 = &p11 * (&z * &b_big);
    let g = &c_big * &p12;

    let m_big = block_diag(&sys.m_seq);
    let r_big = block_diag(&sys.r_seq);
    let mut w_blocks = Vec::with_capacity(nsteps + 1);
    w_blocks.push(sys.sigma0.clone());
    w_blocks.extend(sys.sigma_w_seq.iter().cloned());
    let sigma_w = block_diag(&w_blocks);
    let sigma_v = block_diag(&sys.sigma_v_seq);

    let mut mu_w = DVector::zeros(nx);
    mu_w.rows_mut(0, n).copy_from(&sys.mu0);

    let m_half = sym_sqrt(&m_big, PSD_TOL);
    let r_half = sym_sqrt(&r_big, PSD_TOL);
    let sigma_w_half = sym_sqrt(&sigma_w, PSD_TOL);
    let sigma_v_half = sym_sqrt(&sigma_v, PSD_TOL);

    CompactSystem {
        horizon: nsteps,
        state_dim: n,
        input_dim: m,
        output_dim: p,
        a_big,
        b_big,
        c_big,
        z,
        p11,
        p12,
        g,
        m_big,
        r_big,
        sigma_w,
        sigma_v,
        mu_w,
        m_half,
        r_half,
        sigma_w_half,
        sigma_v_half,
    }
}

/// Stacked closed-loop trajectories for one noise realization.
#[derive(Debug, Clone)]
pub struct Trajectories {
    /// States x_0..x_N stacked, length n(N+1).
    pub x: DVector<f64>,
    /// Measurements y_0..y_{N-1} stacked, length pN.
    pub y: DVector<f64>,
    /// Inputs u_0..u_{N-1} stacked, length mN.
    pub u: DVector<f64>,
}

/// The affine closed-loop response under a fixed causal controller,
/// assembled once so repeated noise realizations cost two mat-vecs each
/// (the Monte-Carlo estimator leans on this).
#[derive(Debug)]
pub struct ClosedLoopMap<'a> {
    cs: &'a CompactSystem,
    k: DMatrix<f64>,
    /// x = t_wx·w + t_vx·v with t_wx = (I−P12KC)⁻¹P11, t_vx = (I−P12KC)⁻¹P12K.
    t_wx: DMatrix<f64>,
    t_vx: DMatrix<f64>,
}

impl<'a> ClosedLoopMap<'a> {
    pub fn new(cs: &'a CompactSystem, k: &DMatrix<f64>) -> Result<Self> {
        check_controller_shape(cs, k)?;
        require_causal(k, cs.input_dim, cs.output_dim)?;
        let pk = &cs.p12 * k;
        // (P12KC)^{N+1} = 0: the product is strictly block subdiagonal on
        // the n-block grid, so the Neumann sum to N terms is the exact inverse.
        let inv = neumann_sum(&(&pk * &cs.c_big), cs.horizon);
        let t_wx = &inv * &cs.p11;
        let t_vx = inv * pk;
        Ok(Self {
            cs,
            k: k.clone(),
            t_wx,
            t_vx,
        })
    }

    /// Evaluates (x, y, u) for one stacked noise realization.
    pub fn trajectories(&self, w: &DVector<f64>, v: &DVector<f64>) -> Result<Trajectories> {
        if w.len() != self.cs.nx() {
            return Err(Error::DimensionMismatch {
                what: "process noise vector w".to_string(),
                expected: self.cs.nx().to_string(),
                got: w.len().to_string(),
            });
        }
        if v.len() != self.cs.ny() {
            return Err(Error::DimensionMismatch {
                what: "measurement noise vector v".to_string(),
                expected: self.cs.ny().to_string(),
                got: v.len().to_string(),
            });
        }
        let x = &self.t_wx * w + &self.t_vx * v;
        let y = &self.cs.c_big * &x + v;
        let u = &self.k * &y;
        Ok(Trajectories { x, y, u })
    }

    /// The realized cost xᵀMx + uᵀRu of one trajectory.
    pub fn sample_cost(&self, w: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let t = self.trajectories(w, v)?;
        Ok((t.x.dot(&(&self.cs.m_big * &t.x))) + (t.u.dot(&(&self.cs.r_big * &t.u))))
    }
}

pub(crate) fn check_controller_shape(cs: &CompactSystem, k: &DMatrix<f64>) -> Result<()> {
    if k.shape() != (cs.nu(), cs.ny()) {
        return Err(Error::DimensionMismatch {
            what: "controller K".to_string(),
            expected: format!("{}x{}", cs.nu(), cs.ny()),
            got: format!("{}x{}", k.nrows(), k.ncols()),
        });
    }
    Ok(())
}

/// Closed-loop response x = (I−P12KC)⁻¹(P11 w + P12 K v) and the matching
/// y and u, for a causal K and one noise realization.
pub fn closed_loop_trajectories(
    cs: &CompactSystem,
    k: &DMatrix<f64>,
    w: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<Trajectories> {
    ClosedLoopMap::new(cs, k)?.trajectories(w, v)
}

/// Debug aid: max-abs residual of (I − Z·A_big)·P11 − I.
pub fn p11_residual(cs: &CompactSystem) -> f64 {
    let nx = cs.nx();
    let id = DMatrix::identity(nx, nx);
    max_abs(&((&id - &cs.z * &cs.a_big) * &cs.p11 - id))
}
