//! Problem-file ingestion: JSON descriptions of a plant, its noise and
//! cost data, and the constraint subspace.
//!
//! Schema (all matrices are row-major nested arrays):
//!
//! ```json
//! {
//!   "horizon": 3,
//!   "A": [[…]]  or [ [[…]], … ],   // one matrix (replicated) or N matrices
//!   "B": …, "C": …,                 // likewise
//!   "M": …,                         // N+1 matrices when given as a list
//!   "R": …, "SigmaW": …, "SigmaV": …,
//!   "Sigma0": [[…]],
//!   "mu0": [ … ],
//!   "subspace": { "kind": "sparsity", "S_small": [[0,1],[1,0]] },
//!   "seed": 7                       // optional
//! }
//! ```
//!
//! Subspace kinds: `"sparsity"` (give `S`, the full mN×pN 0/1 pattern, or
//! `S_small`, the per-step support replicated causally in time),
//! `"static_diag"`, `"static_pattern"` (give `S_small`), `"causal"`, and
//! `"explicit_basis"` (give `generators`, a list of mN×pN matrices whose
//! span is the subspace). Controller files are `{"K": [[…]]}`.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{validate_system_data, SystemData};
use crate::subspace::{SparsityPattern, SubspaceSpec};

/// A parsed, validated problem: system data, constraint subspace, and the
/// file-level seed if one was given.
#[derive(Debug, Clone)]
pub struct Problem {
    pub system: SystemData,
    pub spec: SubspaceSpec,
    pub seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(Vec<Vec<f64>>),
    Many(Vec<Vec<Vec<f64>>>),
}

impl OneOrMany {
    fn expand(self, count: usize, what: &str) -> Result<Vec<DMatrix<f64>>> {
        match self {
            OneOrMany::One(rows) => {
                let m = to_matrix(&rows, what)?;
                Ok(vec![m; count])
            }
            OneOrMany::Many(seq) => seq
                .iter()
                .enumerate()
                .map(|(t, rows)| to_matrix(rows, &format!("{what}[{t}]")))
                .collect(),
        }
    }
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ProblemFormat(format!(
            "{what}: matrix rows have inconsistent lengths"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn to_binary_matrix(rows: &[Vec<u8>], what: &str) -> Result<DMatrix<u8>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ProblemFormat(format!(
            "{what}: matrix rows have inconsistent lengths"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[derive(Deserialize)]
struct SubspaceFile {
    kind: String,
    #[serde(rename = "S")]
    s: Option<Vec<Vec<u8>>>,
    #[serde(rename = "S_small")]
    s_small: Option<Vec<Vec<u8>>>,
    generators: Option<Vec<Vec<Vec<f64>>>>,
}

#[derive(Deserialize)]
struct ProblemFile {
    horizon: usize,
    #[serde(rename = "A")]
    a: OneOrMany,
    #[serde(rename = "B")]
    b: OneOrMany,
    #[serde(rename = "C")]
    c: OneOrMany,
    #[serde(rename = "M")]
    m: OneOrMany,
    #[serde(rename = "R")]
    r: OneOrMany,
    #[serde(rename = "Sigma0")]
    sigma0: Vec<Vec<f64>>,
    #[serde(rename = "SigmaW")]
    sigma_w: OneOrMany,
    #[serde(rename = "SigmaV")]
    sigma_v: OneOrMany,
    mu0: Vec<f64>,
    subspace: SubspaceFile,
    seed: Option<u64>,
}

fn build_subspace(
    sub: &SubspaceFile,
    input_dim: usize,
    output_dim: usize,
    horizon: usize,
) -> Result<SubspaceSpec> {
    match sub.kind.as_str() {
        "sparsity" => match (&sub.s, &sub.s_small) {
            (Some(_), Some(_)) => Err(Error::ProblemFormat(
                "subspace: give either S or S_small, not both".to_string(),
            )),
            (Some(rows), None) => {
                let s = to_binary_matrix(rows, "S")?;
                Ok(SubspaceSpec::sparsity(SparsityPattern::new(
                    s, input_dim, output_dim, horizon,
                )?))
            }
            (None, Some(rows)) => {
                let s_small = to_binary_matrix(rows, "S_small")?;
                if s_small.shape() != (input_dim, output_dim) {
                    return Err(Error::DimensionMismatch {
                        what: "S_small".to_string(),
                        expected: format!("{input_dim}x{output_dim}"),
                        got: format!("{}x{}", s_small.nrows(), s_small.ncols()),
                    });
                }
                Ok(SubspaceSpec::sparsity(SparsityPattern::from_causal_kron(
                    &s_small, horizon,
                )?))
            }
            (None, None) => Err(Error::ProblemFormat(
                "subspace kind \"sparsity\" requires S or S_small".to_string(),
            )),
        },
        "static_diag" => {
            if input_dim != output_dim {
                return Err(Error::ProblemFormat(format!(
                    "static_diag needs square blocks, got m={input_dim}, p={output_dim}"
                )));
            }
            Ok(SubspaceSpec::static_diag(input_dim, horizon))
        }
        "static_pattern" => {
            let rows = sub.s_small.as_ref().ok_or_else(|| {
                Error::ProblemFormat(
                    "subspace kind \"static_pattern\" requires S_small".to_string(),
                )
            })?;
            let s_small = to_binary_matrix(rows, "S_small")?;
            if s_small.shape() != (input_dim, output_dim) {
                return Err(Error::DimensionMismatch {
                    what: "S_small".to_string(),
                    expected: format!("{input_dim}x{output_dim}"),
                    got: format!("{}x{}", s_small.nrows(), s_small.ncols()),
                });
            }
            SubspaceSpec::static_pattern(&s_small, horizon)
        }
        "causal" => Ok(SubspaceSpec::causal_full(input_dim, output_dim, horizon)),
        "explicit_basis" => {
            let gens = sub.generators.as_ref().ok_or_else(|| {
                Error::ProblemFormat(
                    "subspace kind \"explicit_basis\" requires generators".to_string(),
                )
            })?;
            if gens.is_empty() {
                return Err(Error::ProblemFormat(
                    "explicit_basis needs at least one generator".to_string(),
                ));
            }
            let (rows, cols) = (input_dim * horizon, output_dim * horizon);
            let mut columns = DMatrix::zeros(rows * cols, gens.len());
            for (i, rows_i) in gens.iter().enumerate() {
                let mat = to_matrix(rows_i, &format!("generators[{i}]"))?;
                if mat.shape() != (rows, cols) {
                    return Err(Error::DimensionMismatch {
                        what: format!("generators[{i}]"),
                        expected: format!("{rows}x{cols}"),
                        got: format!("{}x{}", mat.nrows(), mat.ncols()),
                    });
                }
                columns
                    .column_mut(i)
                    .copy_from(&DVector::from_column_slice(mat.as_slice()));
            }
            SubspaceSpec::explicit_basis(columns, input_dim, output_dim, horizon)
        }
        other => Err(Error::ProblemFormat(format!(
            "unknown subspace kind \"{other}\" (expected sparsity, static_diag, \
             static_pattern, causal, or explicit_basis)"
        ))),
    }
}

/// Parses and fully validates a problem document.
pub fn parse_problem_str(text: &str) -> Result<Problem> {
    let file: ProblemFile = serde_json::from_str(text)?;
    let nsteps = file.horizon;

    let a_seq = file.a.expand(nsteps, "A")?;
    let b_seq = file.b.expand(nsteps, "B")?;
    let c_seq = file.c.expand(nsteps, "C")?;
    let m_seq = file.m.expand(nsteps + 1, "M")?;
    let r_seq = file.r.expand(nsteps, "R")?;
    let sigma_w_seq = file.sigma_w.expand(nsteps, "SigmaW")?;
    let sigma_v_seq = file.sigma_v.expand(nsteps, "SigmaV")?;
    let sigma0 = to_matrix(&file.sigma0, "Sigma0")?;

    let state_dim = a_seq.first().map_or(0, DMatrix::nrows);
    let input_dim = b_seq.first().map_or(0, DMatrix::ncols);
    let output_dim = c_seq.first().map_or(0, DMatrix::nrows);

    let system = validate_system_data(SystemData {
        horizon: nsteps,
        state_dim,
        input_dim,
        output_dim,
        a_seq,
        b_seq,
        c_seq,
        m_seq,
        r_seq,
        sigma0,
        sigma_w_seq,
        sigma_v_seq,
        mu0: DVector::from_column_slice(&file.mu0),
    })?;

    let spec = build_subspace(&file.subspace, input_dim, output_dim, nsteps)?;
    Ok(Problem {
        system,
        spec,
        seed: file.seed,
    })
}

#[derive(Deserialize)]
struct ControllerFile {
    #[serde(rename = "K")]
    k: Vec<Vec<f64>>,
}

/// Parses a controller document `{"K": [[…]]}`.
pub fn parse_controller_str(text: &str) -> Result<DMatrix<f64>> {
    let file: ControllerFile = serde_json::from_str(text)?;
    to_matrix(&file.k, "K")
}

/// Row-major nested-array form of a matrix, for report serialization.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
