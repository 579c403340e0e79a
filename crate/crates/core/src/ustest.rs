//! Unique-Stationarity certification.
//!
//! Two routes: the structural shortcut (strong QI of a sparsity pattern
//! implies every stationary point of the restricted cost is the global
//! optimum) and a sampled-eigenvalue convexity probe of the restricted
//! cost's Hessian. Sampling can certify nothing — deciding positivity of a
//! multivariate polynomial is NP-hard — so the convexity verdict is
//! explicitly heuristic, while a negative eigenvalue is a hard witness.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::cost::{cost_k, grad_k_with, QDomainQuadratic};
use crate::error::{Error, Result};
use crate::linalg::{min_eig_sym, symmetrize};
use crate::model::CompactSystem;
use crate::subspace::{qi_test_binary, SubspaceSpec};

/// Eigenvalue tolerance for the sampled convexity verdicts; matches the
/// noise floor of the finite-difference Hessian at step 1e−4.
pub const EIG_TOL: f64 = 1e-6;

/// FD step for the restricted Hessian (central differences of the
/// analytic gradient).
const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UsVerdict {
    /// The sparsity pattern passed the binary strong-QI test.
    UsByStrongQi,
    /// All sampled restricted Hessians were positive definite (heuristic).
    UsBySampledConvexity,
    /// Nothing was established either way.
    Inconclusive,
    /// A point with an indefinite restricted Hessian was found.
    NonconvexWitness,
}

impl UsVerdict {
    pub fn name(self) -> &'static str {
        match self {
            UsVerdict::UsByStrongQi => "US_BY_STRONG_QI",
            UsVerdict::UsBySampledConvexity => "US_BY_SAMPLED_CONVEXITY",
            UsVerdict::Inconclusive => "INCONCLUSIVE",
            UsVerdict::NonconvexWitness => "NONCONVEX_WITNESS",
        }
    }
}

/// What a certificate's verdict rests on.
#[derive(Debug, Clone)]
pub struct UsEvidence {
    /// Which test produced the verdict.
    pub test: String,
    /// Number of Hessian sample points evaluated (0 for structural tests).
    pub samples: usize,
    /// Minimum eigenvalue observed across samples, if any were taken.
    pub min_eigenvalue: Option<f64>,
    /// Coordinates of a nonconvexity witness, when the verdict is one.
    pub witness: Option<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct UsCertificate {
    pub verdict: UsVerdict,
    pub evidence: UsEvidence,
}

impl UsCertificate {
    /// True when the verdict actually certifies unique stationarity.
    pub fn is_positive(&self) -> bool {
        matches!(
            self.verdict,
            UsVerdict::UsByStrongQi | UsVerdict::UsBySampledConvexity
        )
    }
}

/// The strong-QI shortcut: for a sparsity subspace, S·Δ·S ≤ S certifies
/// unique stationarity outright. Failing the test certifies nothing
/// (non-QI problems can still be US), so the negative verdict is
/// INCONCLUSIVE, never a witness.
pub fn us_via_strong_qi(spec: &SubspaceSpec, delta: &DMatrix<u8>) -> Result<UsCertificate> {
    let Some(pattern) = spec.pattern() else {
        return Err(Error::WrongSubspaceKind {
            expected: "sparsity",
            got: spec.kind().name(),
        });
    };
    let verdict = if qi_test_binary(pattern, delta)? {
        UsVerdict::UsByStrongQi
    } else {
        UsVerdict::Inconclusive
    };
    Ok(UsCertificate {
        verdict,
        evidence: UsEvidence {
            test: "strong_qi_binary".to_string(),
            samples: 0,
            min_eigenvalue: None,
            witness: None,
        },
    })
}

/// The cost as a function of the subspace's natural coordinates,
/// f̲(α) = J(K(α)), with analytic gradient. A polynomial of degree at most
/// 2(N+1) in α (nilpotence truncates every resolvent series).
pub struct RestrictedCost<'a> {
    cs: &'a CompactSystem,
    spec: &'a SubspaceSpec,
    quad: QDomainQuadratic,
}

impl<'a> RestrictedCost<'a> {
    pub fn new(cs: &'a CompactSystem, spec: &'a SubspaceSpec) -> Self {
        Self {
            cs,
            spec,
            quad: QDomainQuadratic::new(cs),
        }
    }

    /// Number of coordinates r.
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn value(&self, alpha: &DVector<f64>) -> f64 {
        let k = self.spec.matrix_from_natural(alpha);
        cost_k(self.cs, &k).expect("subspace elements are causal by construction")
    }

    /// ∇f̲(α): the cost gradient pulled back through the tied-coordinate
    /// parameterization.
    pub fn gradient(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let k = self.spec.matrix_from_natural(alpha);
        let g = grad_k_with(self.cs, &self.quad, &k);
        self.spec.natural_gradient(&g)
    }

    pub fn spec(&self) -> &SubspaceSpec {
        self.spec
    }
}

/// Central finite-difference Hessian of the restricted cost at `alpha`,
/// differentiating the analytic gradient and symmetrizing.
pub fn restricted_hessian(rc: &RestrictedCost, alpha: &DVector<f64>) -> DMatrix<f64> {
    let r = rc.dim();
    let mut hess = DMatrix::zeros(r, r);
    for j in 0..r {
        let mut plus = alpha.clone();
        plus[j] += FD_STEP;
        let mut minus = alpha.clone();
        minus[j] -= FD_STEP;
        let col = (rc.gradient(&plus) - rc.gradient(&minus)) / (2.0 * FD_STEP);
        hess.column_mut(j).copy_from(&col);
    }
    symmetrize(&hess)
}

/// Samples λ_min(∇²f̲) at `npoints` points uniform in the ball of the given
/// radius, plus the origin and any caller-supplied anchor points (e.g. the
/// optimizer's current best iterate).
///
/// All-positive eigenvalues yield the (heuristic) convexity verdict; any
/// eigenvalue below −[`EIG_TOL`] yields a hard nonconvexity witness.
/// Points are generated sequentially from the seed and evaluated in
/// parallel with an order-fixed reduction, so the verdict is independent
/// of thread count.
pub fn sampled_convexity_test(
    rc: &RestrictedCost,
    npoints: usize,
    radius: f64,
    seed: u64,
    anchors: &[DVector<f64>],
) -> UsCertificate {
    let r = rc.dim();
    let mut points = Vec::with_capacity(npoints + 1 + anchors.len());
    points.push(DVector::zeros(r));
    points.extend(anchors.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..npoints {
        let mut dir = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        }
        let u: f64 = rng.random_range(0.0..1.0f64);
        let rad = if r > 0 {
            radius * u.powf(1.0 / r as f64)
        } else {
            0.0
        };
        points.push(dir * rad);
    }

    let eigs: Vec<f64> = points
        .par_iter()
        .map(|alpha| {
            let h = restricted_hessian(rc, alpha);
            if h.nrows() == 0 {
                f64::INFINITY
            } else {
                min_eig_sym(&h)
            }
        })
        .collect();

    let (argmin, &min_eig) = eigs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap_or((0, &f64::INFINITY));

    let (verdict, witness) = if min_eig < -EIG_TOL {
        (UsVerdict::NonconvexWitness, Some(points[argmin].clone()))
    } else if min_eig > EIG_TOL {
        (UsVerdict::UsBySampledConvexity, None)
    } else {
        (UsVerdict::Inconclusive, None)
    };
    UsCertificate {
        verdict,
        evidence: UsEvidence {
            test: "sampled_convexity (heuristic: positivity is only sampled, never proven)"
                .to_string(),
            samples: points.len(),
            min_eigenvalue: if points.is_empty() {
                None
            } else {
                Some(min_eig)
            },
            witness,
        },
    }
}
