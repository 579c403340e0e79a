//! Fixture loading for the benchmark targets. The benchmarks run on the
//! bundled problem files, parsed through the same path the CLI uses.

use std::path::Path;

use dlqg_core::{assemble_compact, parse_problem_str, CompactSystem, Problem};

/// Parse a problem from the workspace `problems/` directory.
pub fn load(name: &str) -> Problem {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../problems")
        .join(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    parse_problem_str(&text).expect("bundled problems parse")
}

pub fn compact(problem: &Problem) -> CompactSystem {
    assemble_compact(&problem.system)
}
