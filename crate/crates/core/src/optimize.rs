//! Projected gradient descent on the constraint subspace with a
//! Wolfe-condition bisection line search.
//!
//! Every iterate stays exactly in the subspace (step directions are
//! projected gradients), every accepted step satisfies both Wolfe
//! conditions along the ray, and the loop stops when the max-abs projected
//! gradient falls below the stationarity threshold. On QI instances any
//! stationary point is the global optimum, which the certificate field
//! records; on uniquely-stationary instances a supplied certificate is
//! forwarded the same way.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cost::{cost_k, grad_k_with, QDomainQuadratic};
use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::model::CompactSystem;
use crate::subspace::{qi_test_binary, struct_of, SubspaceSpec, STRUCT_ZERO_TOL};
use crate::ustest::UsCertificate;

/// Tuning knobs for the synthesis loop. `Default` matches the benchmark
/// setups: c1 = 1e−4, c2 = 0.9, stop_tol = 5e−5, max_iters = 5000,
/// max_bisect = 64, init_range = 10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Sufficient-decrease constant, 0 < c1 < c2.
    pub c1: f64,
    /// Curvature constant, c1 < c2 < 1.
    pub c2: f64,
    /// Stationarity threshold on the max-abs projected gradient.
    pub stop_tol: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Line-search probe cap.
    pub max_bisect: usize,
    /// Half-width of the uniform random initialization box.
    pub init_range: f64,
    /// Base seed: start i of a multi-start run initializes from seed + i.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.9,
            stop_tol: 5e-5,
            max_iters: 5000,
            max_bisect: 64,
            init_range: 10.0,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1={}, c2={}",
                self.c1, self.c2
            )));
        }
        if !self.stop_tol.is_finite() || self.stop_tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "stop_tol must be positive, got {}",
                self.stop_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be ≥ 1".to_string()));
        }
        Ok(())
    }
}

/// What the final iterate is known to be, beyond stationary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    /// The constraint is QI (binary test): stationary ⇒ globally optimal.
    QiGlobal,
    /// A unique-stationarity certificate was supplied for this instance.
    UsGlobal,
    /// Stationarity is all that is claimed.
    StationaryOnly,
}

impl Certificate {
    pub fn name(self) -> &'static str {
        match self {
            Certificate::QiGlobal => "QI_GLOBAL",
            Certificate::UsGlobal => "US_GLOBAL",
            Certificate::StationaryOnly => "STATIONARY_ONLY",
        }
    }
}

/// Outcome of one synthesis run.
#[derive(Debug, Clone)]
pub struct SynthesisReport {
    pub k_final: DMatrix<f64>,
    pub j_final: f64,
    /// Max-abs projected gradient at `k_final`.
    pub residual: f64,
    /// Gradient steps taken.
    pub iterations: usize,
    pub converged: bool,
    /// J at the start and after each step; strictly decreasing while steps
    /// are taken. Kept in full through 10⁴ iterations, then decimated 10×.
    pub trace: Vec<f64>,
    /// Present only when converged.
    pub certificate: Option<Certificate>,
    pub wall_time: Duration,
    /// Seed this run was initialized from (multi-start bookkeeping).
    pub seed: u64,
}

/// Finds a step satisfying both Wolfe conditions along a descent ray by
/// bracketing expansion then bisection. `phi` maps a step length to
/// (value, directional derivative); it is probed at 0 once and then at
/// most `max_bisect` times.
pub fn wolfe_bisection<F>(phi: F, c1: f64, c2: f64, max_bisect: usize) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    wolfe_bisection_from(phi, c1, c2, max_bisect, 1.0)
}

/// [`wolfe_bisection`] with a caller-chosen first trial step; the descent
/// loop feeds in a Barzilai–Borwein estimate so the search usually accepts
/// immediately instead of walking down from 1.
pub(crate) fn wolfe_bisection_from<F>(
    mut phi: F,
    c1: f64,
    c2: f64,
    max_bisect: usize,
    first_trial: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (phi0, d0) = phi(0.0);
    if d0 >= 0.0 {
        return Err(Error::NotDescent { slope: d0 });
    }
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let mut t = first_trial;
    for _ in 0..max_bisect {
        let (val, slope) = phi(t);
        if val > phi0 + c1 * t * d0 {
            // too long: sufficient decrease failed
            hi = t;
            t = 0.5 * (lo + hi);
        } else if slope < c2 * d0 {
            // too short: still descending steeply
            lo = t;
            t = if hi.is_infinite() {
                2.0 * lo
            } else {
                0.5 * (lo + hi)
            };
        } else {
            return Ok(t);
        }
    }
    Err(Error::LineSearchStall { probes: max_bisect })
}

/// Draws K0 with each free (natural) coordinate i.i.d. uniform on
/// [−range, range]; entries outside the subspace are zero. range = 0 gives
/// the zero controller.
pub fn random_init(spec: &SubspaceSpec, range: f64, seed: u64) -> DMatrix<f64> {
    let r = spec.dim();
    let coords = if range <= 0.0 {
        nalgebra::DVector::zeros(r)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        nalgebra::DVector::from_fn(r, |_, _| rng.random_range(-range..=range))
    };
    spec.matrix_from_natural(&coords)
}

fn check_spec_matches(cs: &CompactSystem, spec: &SubspaceSpec) -> Result<()> {
    if spec.controller_shape() != (cs.nu(), cs.ny())
        || spec.input_dim() != cs.input_dim
        || spec.output_dim() != cs.output_dim
        || spec.horizon() != cs.horizon
    {
        return Err(Error::DimensionMismatch {
            what: "subspace / system".to_string(),
            expected: format!(
                "controller {}x{} (m={}, p={}, N={})",
                cs.nu(),
                cs.ny(),
                cs.input_dim,
                cs.output_dim,
                cs.horizon
            ),
            got: format!(
                "subspace for {}x{} (m={}, p={}, N={})",
                spec.controller_shape().0,
                spec.controller_shape().1,
                spec.input_dim(),
                spec.output_dim(),
                spec.horizon()
            ),
        });
    }
    Ok(())
}

const TRACE_FULL_LEN: usize = 10_000;

/// Projected gradient descent from `k0`.
///
/// `us` optionally carries a unique-stationarity certificate for this
/// instance; a positive one upgrades the convergence certificate when the
/// binary QI test does not already apply.
pub fn projected_gradient_descent(
    cs: &CompactSystem,
    spec: &SubspaceSpec,
    k0: &DMatrix<f64>,
    cfg: &OptimizerConfig,
    us: Option<&UsCertificate>,
) -> Result<SynthesisReport> {
    cfg.validate()?;
    check_spec_matches(cs, spec)?;
    let start = Instant::now();

    let quad = QDomainQuadratic::new(cs);
    let mut k = spec.project(k0);
    let mut j = cost_k(cs, &k)?;
    let mut trace = vec![j];

    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None; // (K, projected grad)
    let mut iterations = 0;
    let mut converged = false;
    let mut residual;

    loop {
        let gproj = spec.project(&grad_k_with(cs, &quad, &k));
        residual = max_abs(&gproj);
        if residual < cfg.stop_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }

        // Barzilai–Borwein trial step from the previous (s, y) pair; falls
        // back to 1 when undefined or absurd. Every accepted step still
        // passes both Wolfe tests, so this only changes where probing starts.
        let trial = match &prev {
            Some((k_prev, g_prev)) => {
                let s = &k - k_prev;
                let y = &gproj - g_prev;
                let sty = s.dot(&y);
                if sty > 0.0 {
                    let t = s.dot(&s) / sty;
                    if (1e-12..=1e6).contains(&t) {
                        t
                    } else {
                        1.0
                    }
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        let direction = -&gproj;
        let d0 = gproj.dot(&direction); // = −‖gproj‖²
        let phi = |eta: f64| {
            if eta == 0.0 {
                return (j, d0);
            }
            let kt = &k + eta * &direction;
            let val = cost_k(cs, &kt).expect("iterates stay causal");
            let slope = grad_k_with(cs, &quad, &kt).dot(&direction);
            (val, slope)
        };
        let eta = match wolfe_bisection_from(phi, cfg.c1, cfg.c2, cfg.max_bisect, trial) {
            Ok(eta) => eta,
            Err(source) => {
                return Err(Error::OptimizeAborted {
                    iteration: iterations,
                    cost: j,
                    iterate: Box::new(k),
                    source: Box::new(source),
                })
            }
        };

        let k_next = spec.project(&(&k + eta * &direction));
        let j_next = cost_k(cs, &k_next)?;
        prev = Some((std::mem::replace(&mut k, k_next), gproj));
        j = j_next;
        iterations += 1;
        if iterations <= TRACE_FULL_LEN || iterations % 10 == 0 {
            trace.push(j);
        }
    }

    let certificate = if converged {
        let envelope = spec.sparsity_envelope();
        let delta = struct_of(&cs.g, STRUCT_ZERO_TOL);
        let qi = qi_test_binary(&envelope, &delta).unwrap_or(false);
        Some(if qi {
            Certificate::QiGlobal
        } else if us.is_some_and(|c| c.is_positive()) {
            Certificate::UsGlobal
        } else {
            Certificate::StationaryOnly
        })
    } else {
        None
    };

    Ok(SynthesisReport {
        k_final: k,
        j_final: j,
        residual,
        iterations,
        converged,
        trace,
        certificate,
        wall_time: start.elapsed(),
        seed: cfg.seed,
    })
}

/// Runs `nstarts` independent descents, start i initialized from
/// seed + i, in parallel; reports come back in seed order regardless of
/// thread scheduling.
pub fn multi_start(
    cs: &CompactSystem,
    spec: &SubspaceSpec,
    cfg: &OptimizerConfig,
    nstarts: usize,
    us: Option<&UsCertificate>,
) -> Result<Vec<SynthesisReport>> {
    cfg.validate()?;
    (0..nstarts)
        .into_par_iter()
        .map(|i| {
            let mut run_cfg = *cfg;
            run_cfg.seed = cfg.seed + i as u64;
            let k0 = random_init(spec, cfg.init_range, run_cfg.seed);
            projected_gradient_descent(cs, spec, &k0, &run_cfg, us)
        })
        .collect()
}

/// Index of the run to report: the lowest-cost converged run, or the
/// lowest-cost run overall if none converged.
pub fn pick_best(reports: &[SynthesisReport]) -> Option<usize> {
    let by_cost = |&(_, r): &(usize, &SynthesisReport)| r.j_final;
    let converged_best = reports
        .iter()
        .enumerate()
        .filter(|(_, r)| r.converged)
        .min_by(|a, b| by_cost(a).total_cmp(&by_cost(b)))
        .map(|(i, _)| i);
    converged_best.or_else(|| {
        reports
            .iter()
            .enumerate()
            .min_by(|a, b| by_cost(a).total_cmp(&by_cost(b)))
            .map(|(i, _)| i)
    })
}
