//! Exact finite-horizon LQG costs and gradients in both the controller
//! domain (K) and the disturbance-feedback domain (Q), the invertible map
//! between the two, and a seeded Monte-Carlo validator.
//!
//! In the Q domain the cost is an explicit convex quadratic
//! J̃(Q) = ⟨Q, X·Q·Y⟩ + ⟨G_lin, Q⟩ + c with X ≻ 0 and Y ⪰ 0; every analytic
//! gradient in the K domain is obtained by pulling that quadratic back
//! through the map K ↦ Q = (I − K·G)⁻¹·K, whose Jacobian is available in
//! closed form because all the resolvents are finite Neumann sums.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::Result;
use crate::linalg::neumann_sum;
use crate::model::{check_controller_shape, ClosedLoopMap, CompactSystem};
use crate::subspace::{causal_mask, require_causal};

/// K from Q: K = (I + Q·G)⁻¹·Q, computed with the exact Neumann expansion
/// of (−Q·G). Maps causal Q to causal K.
pub fn h_map(q: &DMatrix<f64>, g: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
    neumann_sum(&(-(q * g)), horizon) * q
}

/// Q from K: Q = (I − K·G)⁻¹·K, the inverse of [`h_map`].
pub fn h_inv(k: &DMatrix<f64>, g: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
    neumann_sum(&(k * g), horizon) * k
}

/// Exact expected cost E[xᵀMx + uᵀRu] under the causal controller u = K y.
///
/// Evaluated as six squared Frobenius/Euclidean norms of closed-loop
/// factors — numerically benign (no cancellation between terms, each term
/// is a variance or squared-mean contribution).
pub fn cost_k(cs: &CompactSystem, k: &DMatrix<f64>) -> Result<f64> {
    check_controller_shape(cs, k)?;
    require_causal(k, cs.input_dim, cs.output_dim)?;
    // (P12·K·C)^{N+1} = 0 on the state-block grid and (G·K)^N = 0 on the
    // output-block grid, so both resolvents are exact Neumann sums.
    let tk = neumann_sum(&(&cs.p12 * k * &cs.c_big), cs.horizon);
    let lk = neumann_sum(&(&cs.g * k), cs.horizon);
    let klk = k * &lk;
    let tp11 = &tk * &cs.p11;
    let cp11 = &cs.c_big * &cs.p11;

    let t1 = (&cs.m_half * &tp11 * &cs.sigma_w_half).norm_squared();
    let t2 = (&cs.m_half * &cs.p12 * &klk * &cs.sigma_v_half).norm_squared();
    let t3 = (&cs.r_half * &klk * &cp11 * &cs.sigma_w_half).norm_squared();
    let t4 = (&cs.r_half * &klk * &cs.sigma_v_half).norm_squared();
    let t5 = (&cs.m_half * &tp11 * &cs.mu_w).norm_squared();
    let t6 = (&cs.r_half * &klk * &cp11 * &cs.mu_w).norm_squared();
    Ok(t1 + t2 + t3 + t4 + t5 + t6)
}

/// Exact expected cost of the disturbance-feedback parameter Q (causal),
/// i.e. J̃(Q) = J(h_map(Q)).
pub fn cost_q(cs: &CompactSystem, q: &DMatrix<f64>) -> Result<f64> {
    check_controller_shape(cs, q)?;
    require_causal(q, cs.input_dim, cs.output_dim)?;
    let w = DMatrix::identity(cs.nx(), cs.nx()) + &cs.p12 * q * &cs.c_big;
    let wp11 = &w * &cs.p11;
    let qcp11 = q * &cs.c_big * &cs.p11;

    let t1 = (&cs.m_half * &wp11 * &cs.sigma_w_half).norm_squared();
    let t2 = (&cs.m_half * &cs.p12 * q * &cs.sigma_v_half).norm_squared();
    let t3 = (&cs.r_half * &qcp11 * &cs.sigma_w_half).norm_squared();
    let t4 = (&cs.r_half * q * &cs.sigma_v_half).norm_squared();
    let t5 = (&cs.r_half * &qcp11 * &cs.mu_w).norm_squared();
    let t6 = (&cs.m_half * &wp11 * &cs.mu_w).norm_squared();
    Ok(t1 + t2 + t3 + t4 + t5 + t6)
}

/// The Q-domain cost written out as a quadratic:
/// J̃(Q) = ⟨Q, X·Q·Y⟩_F + ⟨G_lin, Q⟩_F + c.
///
/// X = R + P12ᵀ·M·P12 is PD, Y = Σv + C·P11·(Σw + μμᵀ)·P11ᵀ·Cᵀ is PD, so the
/// form is strictly convex in Q; the full-space Hessian acting on vec(Q) is
/// 2·Y ⊗ X.
#[derive(Debug, Clone)]
pub struct QDomainQuadratic {
    /// Input-side kernel factor, mN×mN, PD.
    pub x: DMatrix<f64>,
    /// Output-side kernel factor, pN×pN, PD.
    pub y: DMatrix<f64>,
    /// Linear coefficient, mN×pN.
    pub g_lin: DMatrix<f64>,
    /// Constant term: the open-loop cost.
    pub c: f64,
}

impl QDomainQuadratic {
    pub fn new(cs: &CompactSystem) -> Self {
        let second_moment = &cs.sigma_w + &cs.mu_w * cs.mu_w.transpose();
        let cp11 = &cs.c_big * &cs.p11;
        let x = &cs.r_big + cs.p12.tr_mul(&cs.m_big) * &cs.p12;
        let y = &cs.sigma_v + &cp11 * &second_moment * cp11.transpose();
        let g_lin = 2.0 * cs.p12.tr_mul(&cs.m_big) * &cs.p11 * &second_moment * cp11.transpose();
        let c = (&cs.m_half * &cs.p11 * &cs.sigma_w_half).norm_squared()
            + (&cs.m_half * &cs.p11 * &cs.mu_w).norm_squared();
        Self { x, y, g_lin, c }
    }

    /// Evaluates the quadratic (agrees with [`cost_q`] to rounding).
    pub fn value(&self, q: &DMatrix<f64>) -> f64 {
        let xqy = &self.x * q * &self.y;
        q.dot(&xqy) + self.g_lin.dot(q) + self.c
    }

    /// Unconstrained gradient 2·X·Q·Y + G_lin.
    pub fn grad_full(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        2.0 * (&self.x * q * &self.y) + &self.g_lin
    }
}

/// Gradient of J̃ over the causal entries of Q (entries above the block
/// diagonal are not coordinates of the domain, so they are reported as 0).
pub fn grad_q(cs: &CompactSystem, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_controller_shape(cs, q)?;
    require_causal(q, cs.input_dim, cs.output_dim)?;
    let full = QDomainQuadratic::new(cs).grad_full(q);
    Ok(mask_causal(cs, full))
}

/// Gradient of J over the causal entries of K.
///
/// Chain rule through Q = (I − K·G)⁻¹·K: the unconstrained gradient is
/// (I − K·G)⁻ᵀ · ∇J̃(Q) · (I − G·K)⁻ᵀ, which is *not* causal in general;
/// only its causal part is a derivative of the constrained problem, so
/// that is what is returned.
pub fn grad_k(cs: &CompactSystem, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_controller_shape(cs, k)?;
    require_causal(k, cs.input_dim, cs.output_dim)?;
    let quad = QDomainQuadratic::new(cs);
    Ok(grad_k_with(cs, &quad, k))
}

pub(crate) fn grad_k_with(
    cs: &CompactSystem,
    quad: &QDomainQuadratic,
    k: &DMatrix<f64>,
) -> DMatrix<f64> {
    let left = neumann_sum(&(k * &cs.g), cs.horizon); // (I − K·G)⁻¹
    let right = neumann_sum(&(&cs.g * k), cs.horizon); // (I − G·K)⁻¹
    let q = &left * k;
    let full = left.tr_mul(&quad.grad_full(&q)) * right.transpose();
    mask_causal(cs, full)
}

fn mask_causal(cs: &CompactSystem, mut mat: DMatrix<f64>) -> DMatrix<f64> {
    let mask = causal_mask(cs.input_dim, cs.output_dim, cs.horizon);
    for (entry, keep) in mat.iter_mut().zip(mask.iter()) {
        if *keep == 0 {
            *entry = 0.0;
        }
    }
    mat
}

/// Monte-Carlo estimate of the closed-loop cost.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub mean: f64,
    /// Standard error of the mean (sample std / √n).
    pub std_err: f64,
    pub nsamples: usize,
}

impl McEstimate {
    /// Studentized distance from a reference value.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.mean - reference) / self.std_err
    }
}

const MC_CHUNK: usize = 2048;

/// Simulates `nsamples` independent noise realizations through the
/// closed-loop affine map and averages the realized costs.
///
/// Sampling is chunked, with chunk i drawn from stream i of a counter-based
/// generator seeded by `seed`, and the chunk sums are reduced in index
/// order — the estimate is bit-identical regardless of thread count.
pub fn monte_carlo_cost(
    cs: &CompactSystem,
    k: &DMatrix<f64>,
    nsamples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let map = ClosedLoopMap::new(cs, k)?;
    let nchunks = nsamples.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..nchunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let lo = chunk * MC_CHUNK;
            let hi = ((chunk + 1) * MC_CHUNK).min(nsamples);
            let (mut sum, mut sumsq) = (0.0, 0.0);
            for _ in lo..hi {
                let z1 = DVector::from_fn(cs.nx(), |_, _| StandardNormal.sample(&mut rng));
                let z2 = DVector::from_fn(cs.ny(), |_, _| StandardNormal.sample(&mut rng));
                let w = &cs.mu_w + &cs.sigma_w_half * z1;
                let v = &cs.sigma_v_half * z2;
                let cost = map
                    .sample_cost(&w, &v)
                    .expect("noise vectors are sized from the system itself");
                sum += cost;
                sumsq += cost * cost;
            }
            (sum, sumsq)
        })
        .collect();

    let (sum, sumsq) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, sq)| (a + s, b + sq));
    let n = nsamples as f64;
    let mean = sum / n;
    let var = ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        std_err: (var / n).sqrt(),
        nsamples,
    })
}
