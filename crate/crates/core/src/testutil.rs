//! Shared fixtures for the unit and integration tests: the two worked
//! examples with published optima, and seeded random instance generators.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{CompactSystem, SystemData};
use crate::subspace::SparsityPattern;

/// The 5-state, horizon-3 benchmark with a strongly-QI sparsity constraint.
/// Optimal constrained cost ≈ 796.5627.
pub fn example1() -> SystemData {
    let a = DMatrix::from_row_slice(
        5,
        5,
        &[
            1.6, 0.0, 0.0, 0.0, 0.0, //
            0.5, 1.6, 0.0, 0.0, 0.0, //
            2.5, 2.5, -1.4, 0.0, 0.0, //
            -2.0, 1.0, -2.0, 0.1, 0.0, //
            0.0, 2.0, 0.0, -0.5, 1.1,
        ],
    );
    let eye = DMatrix::identity(5, 5);
    SystemData {
        horizon: 3,
        state_dim: 5,
        input_dim: 5,
        output_dim: 5,
        a_seq: vec![a; 3],
        b_seq: vec![eye.clone(); 3],
        c_seq: vec![eye.clone(); 3],
        m_seq: vec![eye.clone(); 4],
        r_seq: vec![eye.clone(); 3],
        sigma0: eye.clone(),
        sigma_w_seq: vec![eye.clone(); 3],
        sigma_v_seq: vec![eye; 3],
        mu0: DVector::from_column_slice(&[1.0, -1.0, 2.0, -3.0, 3.0]),
    }
}

/// Per-step support of the example-1 constraint; the full pattern is its
/// causal time replication (every past measurement respecting the support).
pub fn example1_small_pattern() -> DMatrix<u8> {
    DMatrix::from_row_slice(
        5,
        5,
        &[
            0, 0, 0, 0, 0, //
            0, 1, 0, 0, 0, //
            0, 1, 0, 0, 0, //
            0, 1, 0, 0, 0, //
            0, 1, 0, 0, 1,
        ],
    )
}

/// The 30-dimensional sparsity pattern for [`example1`].
pub fn example1_pattern() -> SparsityPattern {
    SparsityPattern::from_causal_kron(&example1_small_pattern(), 3).unwrap()
}

/// The 2-state, horizon-2 benchmark constrained to a repeated static
/// diagonal gain diag(a, b). Its restricted cost is the quartic
/// 4a⁴ + 8a³ + 28a² − 38a + 6b⁴ − 42b³ + 149b² − 216b + 18ab + 166
/// with minimum ≈ 58.80797 at (a, b) ≈ (0.2752, 1.1354).
pub fn example2() -> SystemData {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, -3.0]);
    let eye = DMatrix::identity(2, 2);
    SystemData {
        horizon: 2,
        state_dim: 2,
        input_dim: 2,
        output_dim: 2,
        a_seq: vec![a; 2],
        b_seq: vec![eye.clone(); 2],
        c_seq: vec![eye.clone(); 2],
        m_seq: vec![eye.clone(); 3],
        r_seq: vec![eye.clone(); 2],
        sigma0: eye.clone(),
        sigma_w_seq: vec![DMatrix::zeros(2, 2); 2],
        sigma_v_seq: vec![eye; 2],
        mu0: DVector::from_column_slice(&[0.0, 1.0]),
    }
}

/// Minimal 1-D plant: x_{t+1} = a x_t + u_t + w_t, unit weights and noises.
pub fn scalar_system(nsteps: usize, a: f64) -> SystemData {
    let one = DMatrix::from_element(1, 1, 1.0);
    SystemData {
        horizon: nsteps,
        state_dim: 1,
        input_dim: 1,
        output_dim: 1,
        a_seq: vec![DMatrix::from_element(1, 1, a); nsteps],
        b_seq: vec![one.clone(); nsteps],
        c_seq: vec![one.clone(); nsteps],
        m_seq: vec![one.clone(); nsteps + 1],
        r_seq: vec![one.clone(); nsteps],
        sigma0: one.clone(),
        sigma_w_seq: vec![one.clone(); nsteps],
        sigma_v_seq: vec![one; nsteps],
        mu0: DVector::from_element(1, 1.0),
    }
}

/// A dense causal controller with entries uniform on [−1, 1].
pub fn random_causal(cs: &CompactSystem, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, p) = (cs.input_dim, cs.output_dim);
    DMatrix::from_fn(cs.nu(), cs.ny(), |i, j| {
        if j / p <= i / m {
            rng.random_range(-1.0..1.0)
        } else {
            0.0
        }
    })
}

fn random_psd<R: Rng>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    g.tr_mul(&g)
}

fn random_pd<R: Rng>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    random_psd(rng, dim) + DMatrix::identity(dim, dim) * 0.1
}

/// A small random instance: dims ≤ 3, horizon ≤ 3, generic PSD/PD weights
/// and covariances. Always passes validation.
pub fn random_instance<R: Rng>(rng: &mut R) -> SystemData {
    let n = rng.random_range(1..=3usize);
    let m = rng.random_range(1..=2usize);
    let p = rng.random_range(1..=2usize);
    let nsteps = rng.random_range(1..=3usize);
    let mat = |rng: &mut R, r: usize, c: usize| {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    };
    SystemData {
        horizon: nsteps,
        state_dim: n,
        input_dim: m,
        output_dim: p,
        a_seq: (0..nsteps).map(|_| mat(rng, n, n)).collect(),
        b_seq: (0..nsteps).map(|_| mat(rng, n, m)).collect(),
        c_seq: (0..nsteps).map(|_| mat(rng, p, n)).collect(),
        m_seq: (0..=nsteps).map(|_| random_psd(rng, n)).collect(),
        r_seq: (0..nsteps).map(|_| random_pd(rng, m)).collect(),
        sigma0: random_psd(rng, n),
        sigma_w_seq: (0..nsteps).map(|_| random_psd(rng, n)).collect(),
        sigma_v_seq: (0..nsteps).map(|_| random_pd(rng, p)).collect(),
        mu0: DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
    }
}

/// A random causal sparsity pattern (each causal entry kept with prob. 1/2).
pub fn random_pattern<R: Rng>(
    rng: &mut R,
    input_dim: usize,
    output_dim: usize,
    horizon: usize,
) -> SparsityPattern {
    let s = DMatrix::from_fn(input_dim * horizon, output_dim * horizon, |i, j| {
        if j / output_dim <= i / input_dim && rng.random_bool(0.5) {
            1u8
        } else {
            0u8
        }
    });
    SparsityPattern::new(s, input_dim, output_dim, horizon).unwrap()
}
