//! dlqg — finite-horizon distributed LQG synthesis from the command line.
//!
//! Four subcommands: `validate` (schema and semantic checks), `analyze`
//! (QI / strong-QI / unique-stationarity structure), `synthesize`
//! (multi-start projected gradient descent with an optional convex-oracle
//! cross-check), and `simulate` (Monte-Carlo validation of a controller
//! file). Every report is a JSON document on stdout (or `--out`) embedding
//! a manifest with the fully resolved configuration; re-running a manifest
//! reproduces the report bit-for-bit apart from timestamps and wall times.
//!
//! Exit codes: 0 success, 2 input/usage error, 3 non-convergence,
//! 4 simulation mismatch (|z| > 5).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{debug, info};
use serde_json::{json, Map, Value};

use dlqg_core::subspace::{struct_of, STRUCT_ZERO_TOL};
use dlqg_core::{
    assemble_compact, cost_k, matrix_rows, monte_carlo_cost, multi_start, parse_controller_str,
    parse_problem_str, pick_best, qi_test_binary, qi_test_definition, recover_controller,
    sampled_convexity_test, solve_q_domain, us_via_strong_qi, CompactSystem, Error,
    OptimizerConfig, Problem, RestrictedCost, SynthesisReport, UsCertificate,
};

/// Randomized-test sizes fixed by convention: definitional QI trials and
/// convexity sample points, with the sampling ball at twice the optimizer's
/// initialization range.
const QI_TRIALS: usize = 200;
const US_POINTS: usize = 200;

#[derive(Parser)]
#[command(
    name = "dlqg",
    version,
    about = "Distributed LQG synthesis over constrained information structures",
    after_help = "Seed precedence: --seed beats the problem file's \"seed\" field, which beats 0.\n\
                  Set DLQG_LOG=error|info|debug to control progress logging on stderr."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Write the report JSON here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads for multi-start and Monte-Carlo work (default: all
    /// cores). Reports never depend on this.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Override the RNG seed (takes precedence over the problem file).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Args)]
struct ProblemArg {
    /// Problem description (JSON).
    problem: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a problem file: schema, dimensions, definiteness, subspace.
    Validate(ProblemArg),
    /// Report the information structure: QI tests and US certification.
    Analyze(ProblemArg),
    /// Synthesize a controller by projected gradient descent.
    Synthesize {
        #[command(flatten)]
        problem: ProblemArg,
        /// Independent random starts, seeded seed, seed+1, ….
        #[arg(long, default_value_t = 1, value_name = "N")]
        starts: usize,
        /// Also solve the convex Q-domain program and report the gap.
        #[arg(long)]
        oracle: bool,
        /// Iteration cap per start.
        #[arg(long, value_name = "N")]
        max_iters: Option<usize>,
        /// Stationarity threshold on the max-abs projected gradient.
        #[arg(long, value_name = "X")]
        stop_tol: Option<f64>,
    },
    /// Monte-Carlo validate a controller against the analytic cost.
    Simulate {
        #[command(flatten)]
        problem: ProblemArg,
        /// Controller file, {"K": [[…]]}.
        controller: PathBuf,
        /// Number of simulated noise realizations.
        #[arg(long, default_value_t = 100_000, value_name = "N")]
        samples: usize,
    },
}

fn main() {
    let filter = std::env::var("DLQG_LOG").unwrap_or_else(|_| "error".to_string());
    env_logger::Builder::new().parse_filters(&filter).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("--jobs must be at least 1");
            std::process::exit(2);
        }
        // ignore the error if a pool already exists (tests call run twice)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let out = cli.out.clone();
    let (doc, code) = match &cli.cmd {
        Cmd::Validate(arg) => cmd_validate(&arg.problem, cli.seed),
        Cmd::Analyze(arg) => cmd_analyze(&arg.problem, cli.seed),
        Cmd::Synthesize {
            problem,
            starts,
            oracle,
            max_iters,
            stop_tol,
        } => cmd_synthesize(
            &problem.problem,
            *starts,
            *oracle,
            *max_iters,
            *stop_tol,
            cli.seed,
        ),
        Cmd::Simulate {
            problem,
            controller,
            samples,
        } => cmd_simulate(&problem.problem, controller, *samples, cli.seed),
    };
    if let Err(e) = emit(&doc, out.as_deref()) {
        eprintln!("cannot write report: {e}");
        return 2;
    }
    code
}

fn emit(doc: &Value, out: Option<&Path>) -> std::io::Result<()> {
    let text = format!("{:#}\n", doc);
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// 3 for optimizer failures, 2 for anything wrong with the input.
fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NotDescent { .. }
        | Error::LineSearchStall { .. }
        | Error::OptimizeAborted { .. } => 3,
        _ => 2,
    }
}

fn manifest(command: &str, problem: &Path, config: Map<String, Value>) -> Value {
    json!({
        "command": command,
        "problem": problem.display().to_string(),
        "artifact_version": env!("CARGO_PKG_VERSION"),
        "timestamp": chrono::Utc::now().to_rfc3339(),
        "config": Value::Object(config),
    })
}

fn config_map(entries: &[(&str, Value)]) -> Map<String, Value> {
    entries
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn error_doc(manifest: Value, err: &Error) -> (Value, i32) {
    (
        json!({
            "manifest": manifest,
            "status": "error",
            "error": err.to_string(),
        }),
        exit_code_for(err),
    )
}

fn load_problem(path: &Path) -> Result<Problem, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ProblemFormat(format!("cannot read {}: {e}", path.display())))?;
    let problem = parse_problem_str(&text)?;
    info!(
        "loaded {}: n={} m={} p={} N={} subspace={} (r={})",
        path.display(),
        problem.system.state_dim,
        problem.system.input_dim,
        problem.system.output_dim,
        problem.system.horizon,
        problem.spec.kind().name(),
        problem.spec.dim()
    );
    Ok(problem)
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> u64 {
    flag.or(file).unwrap_or(0)
}

fn us_certificate_json(cert: &UsCertificate) -> Value {
    json!({
        "verdict": cert.verdict.name(),
        "test": cert.evidence.test,
        "samples": cert.evidence.samples,
        "min_eigenvalue": cert.evidence.min_eigenvalue,
        "witness": cert.evidence.witness.as_ref().map(|w| w.iter().copied().collect::<Vec<f64>>()),
    })
}

/// Structural shortcut first (sparsity subspaces that pass strong QI),
/// sampled Hessian convexity otherwise.
fn certify_us(cs: &CompactSystem, problem: &Problem, seed: u64) -> UsCertificate {
    if problem.spec.pattern().is_some() {
        let delta = struct_of(&cs.g, STRUCT_ZERO_TOL);
        let cert =
            us_via_strong_qi(&problem.spec, &delta).expect("pattern presence was just checked");
        if cert.is_positive() {
            return cert;
        }
    }
    let rc = RestrictedCost::new(cs, &problem.spec);
    let radius = 2.0 * OptimizerConfig::default().init_range;
    sampled_convexity_test(&rc, US_POINTS, radius, seed, &[])
}

fn cmd_validate(path: &Path, seed_flag: Option<u64>) -> (Value, i32) {
    let mf = manifest(
        "validate",
        path,
        config_map(&[("seed", json!(resolve_seed(seed_flag, None)))]),
    );
    let problem = match load_problem(path) {
        Ok(p) => p,
        Err(e) => return error_doc(mf, &e),
    };
    let cs = assemble_compact(&problem.system);
    let doc = json!({
        "manifest": mf,
        "status": "ok",
        "dimensions": {
            "state_dim": problem.system.state_dim,
            "input_dim": problem.system.input_dim,
            "output_dim": problem.system.output_dim,
            "horizon": problem.system.horizon,
            "controller_rows": cs.nu(),
            "controller_cols": cs.ny(),
        },
        "subspace": {
            "kind": problem.spec.kind().name(),
            "dim": problem.spec.dim(),
        },
    });
    (doc, 0)
}

fn cmd_analyze(path: &Path, seed_flag: Option<u64>) -> (Value, i32) {
    let mf_for_err = manifest(
        "analyze",
        path,
        config_map(&[
            ("seed", json!(resolve_seed(seed_flag, None))),
            ("qi_trials", json!(QI_TRIALS)),
            ("us_points", json!(US_POINTS)),
        ]),
    );
    let problem = match load_problem(path) {
        Ok(p) => p,
        Err(e) => return error_doc(mf_for_err, &e),
    };
    let seed = resolve_seed(seed_flag, problem.seed);
    let mf = manifest(
        "analyze",
        path,
        config_map(&[
            ("seed", json!(seed)),
            ("qi_trials", json!(QI_TRIALS)),
            ("us_points", json!(US_POINTS)),
        ]),
    );
    let cs = assemble_compact(&problem.system);
    let delta = struct_of(&cs.g, STRUCT_ZERO_TOL);
    let qi_binary = qi_test_binary(&problem.spec.sparsity_envelope(), &delta).unwrap_or(false);
    let def = qi_test_definition(&problem.spec, &cs.g, QI_TRIALS, seed);
    let us = certify_us(&cs, &problem, seed);
    debug!(
        "analysis: qi_binary={qi_binary} strong_qi={} us={}",
        def.strong_qi,
        us.verdict.name()
    );
    let doc = json!({
        "manifest": mf,
        "qi_binary": qi_binary,
        "strong_qi_randomized": {
            "strong_qi": def.strong_qi,
            "qi": def.qi,
            "trials": QI_TRIALS,
            "witness_residual": def.witness.as_ref().map(|w| w.residual),
        },
        "us_certificate": us_certificate_json(&us),
        "subspace_dim": problem.spec.dim(),
    });
    (doc, 0)
}

fn cmd_synthesize(
    path: &Path,
    starts: usize,
    oracle: bool,
    max_iters: Option<usize>,
    stop_tol: Option<f64>,
    seed_flag: Option<u64>,
) -> (Value, i32) {
    let build_manifest = |cfg: &OptimizerConfig| {
        manifest(
            "synthesize",
            path,
            config_map(&[
                ("c1", json!(cfg.c1)),
                ("c2", json!(cfg.c2)),
                ("stop_tol", json!(cfg.stop_tol)),
                ("max_iters", json!(cfg.max_iters)),
                ("max_bisect", json!(cfg.max_bisect)),
                ("init_range", json!(cfg.init_range)),
                ("seed", json!(cfg.seed)),
                ("starts", json!(starts)),
                ("oracle", json!(oracle)),
                ("jobs", json!(rayon::current_num_threads())),
            ]),
        )
    };
    let mut cfg = OptimizerConfig::default();
    if let Some(v) = max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = stop_tol {
        cfg.stop_tol = v;
    }
    cfg.seed = resolve_seed(seed_flag, None);

    if starts == 0 {
        let err = Error::InvalidConfig("--starts must be at least 1".to_string());
        return error_doc(build_manifest(&cfg), &err);
    }
    let problem = match load_problem(path) {
        Ok(p) => p,
        Err(e) => return error_doc(build_manifest(&cfg), &e),
    };
    cfg.seed = resolve_seed(seed_flag, problem.seed);
    let mf = build_manifest(&cfg);

    let cs = assemble_compact(&problem.system);
    let delta = struct_of(&cs.g, STRUCT_ZERO_TOL);
    let qi_binary = qi_test_binary(&problem.spec.sparsity_envelope(), &delta).unwrap_or(false);
    // a US certificate only matters when QI does not already apply
    let us = if qi_binary {
        None
    } else {
        Some(certify_us(&cs, &problem, cfg.seed))
    };

    let reports = match multi_start(&cs, &problem.spec, &cfg, starts, us.as_ref()) {
        Ok(r) => r,
        Err(e) => return error_doc(mf, &e),
    };
    let best_idx = pick_best(&reports).expect("starts ≥ 1");
    let best = &reports[best_idx];
    info!(
        "best start: seed {} J = {} after {} iterations (converged: {})",
        best.seed, best.j_final, best.iterations, best.converged
    );

    let oracle_doc = if oracle {
        match oracle_block(&cs, &problem, best, qi_binary) {
            Ok(v) => Some(v),
            Err(e) => return error_doc(mf, &e),
        }
    } else {
        None
    };

    let starts_doc: Vec<Value> = reports.iter().map(run_summary).collect();
    let doc = json!({
        "manifest": mf,
        "converged": best.converged,
        "iterations": best.iterations,
        "J_final": best.j_final,
        "residual": best.residual,
        "certificate": best.certificate.map(|c| c.name()),
        "K_final": matrix_rows(&best.k_final),
        "cost_trace": best.trace,
        "wall_time_s": best.wall_time.as_secs_f64(),
        "best_start_seed": best.seed,
        "qi_binary": qi_binary,
        "us_certificate": us.as_ref().map(us_certificate_json),
        "starts": starts_doc,
        "oracle": oracle_doc,
    });
    (doc, if best.converged { 0 } else { 3 })
}

fn run_summary(rep: &SynthesisReport) -> Value {
    json!({
        "seed": rep.seed,
        "converged": rep.converged,
        "iterations": rep.iterations,
        "J_final": rep.j_final,
        "residual": rep.residual,
        "wall_time_s": rep.wall_time.as_secs_f64(),
    })
}

fn oracle_block(
    cs: &CompactSystem,
    problem: &Problem,
    best: &SynthesisReport,
    qi_binary: bool,
) -> Result<Value, Error> {
    let sol = solve_q_domain(cs, &problem.spec)?;
    let k = recover_controller(cs, &problem.spec, &sol.q_star, qi_binary)?;
    let escape = problem.spec.residual(&k) / k.norm().max(1.0);
    info!(
        "oracle: J* = {} (gap {}), recovered-controller escape residual {escape:.2e}",
        sol.j_star,
        (best.j_final - sol.j_star).abs()
    );
    Ok(json!({
        "J_star": sol.j_star,
        "gap": (best.j_final - sol.j_star).abs(),
        "qi_binary": qi_binary,
        "K_recovered": matrix_rows(&k),
        "subspace_escape_residual": escape,
        "note": if qi_binary {
            "Q-domain optimum; controller-feasible under QI"
        } else {
            "Q-domain optimum (not controller-feasible unless QI)"
        },
    }))
}

fn cmd_simulate(
    path: &Path,
    controller: &Path,
    samples: usize,
    seed_flag: Option<u64>,
) -> (Value, i32) {
    let build_manifest = |seed: u64| {
        manifest(
            "simulate",
            path,
            config_map(&[
                ("controller", json!(controller.display().to_string())),
                ("samples", json!(samples)),
                ("seed", json!(seed)),
            ]),
        )
    };
    if samples < 2 {
        let err = Error::InvalidConfig(format!(
            "--samples must be at least 2 to estimate a standard error, got {samples}"
        ));
        return error_doc(build_manifest(resolve_seed(seed_flag, None)), &err);
    }
    let problem = match load_problem(path) {
        Ok(p) => p,
        Err(e) => return error_doc(build_manifest(resolve_seed(seed_flag, None)), &e),
    };
    let seed = resolve_seed(seed_flag, problem.seed);
    let mf = build_manifest(seed);

    let k = match std::fs::read_to_string(controller)
        .map_err(|e| Error::ProblemFormat(format!("cannot read {}: {e}", controller.display())))
        .and_then(|text| parse_controller_str(&text))
    {
        Ok(k) => k,
        Err(e) => return error_doc(mf, &e),
    };

    let cs = assemble_compact(&problem.system);
    let analytic = match cost_k(&cs, &k) {
        Ok(j) => j,
        Err(e) => return error_doc(mf, &e),
    };
    let est = match monte_carlo_cost(&cs, &k, samples, seed) {
        Ok(e) => e,
        Err(e) => return error_doc(mf, &e),
    };
    let z = est.z_score(analytic);
    info!(
        "simulate: analytic {analytic}, MC {} ± {} ({} samples), z = {z:+.3}",
        est.mean, est.std_err, est.nsamples
    );
    let doc = json!({
        "manifest": mf,
        "analytic_J": analytic,
        "mc_mean": est.mean,
        "mc_stderr": est.std_err,
        "z_score": z,
        "samples": est.nsamples,
    });
    (doc, if z.abs() > 5.0 { 4 } else { 0 })
}
