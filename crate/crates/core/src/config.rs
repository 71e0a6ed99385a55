//! Problem files.
//!
//! A problem is a TOML document with one `[[agents]]` table per agent and a
//! `[coupling]` table holding `A` row by row and `b`:
//!
//! ```toml
//! [[agents]]
//! quad = [1.8]        # a_j > 0
//! center = [5.9]      # m_j
//! offset = -62.658    # f_i(x) = sum_j a_j (x_j - m_j)^2 + offset
//! lower = [0.0]
//! upper = [5.9]
//!
//! [coupling]
//! a = [[1.0], [0.0]]  # m rows, each with one entry per variable
//! b = [15.0, 17.0]
//! ```
//!
//! Agents own consecutive columns of `A` in file order.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problem::{BoxQuadraticAgent, CoupledProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub quad: Vec<f64>,
    pub center: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub agents: Vec<AgentSpec>,
    pub coupling: CouplingSpec,
}

impl ProblemFile {
    pub fn from_problem(problem: &CoupledProblem) -> Self {
        let agents = problem
            .agents()
            .iter()
            .map(|a| AgentSpec {
                quad: a.quad().to_vec(),
                center: a.center().to_vec(),
                offset: a.offset(),
                lower: a.lower().to_vec(),
                upper: a.upper().to_vec(),
            })
            .collect();
        let a = problem
            .a()
            .row_iter()
            .map(|row| row.iter().copied().collect())
            .collect();
        Self {
            agents,
            coupling: CouplingSpec {
                a,
                b: problem.b().iter().copied().collect(),
            },
        }
    }

    pub fn to_problem(&self) -> Result<CoupledProblem> {
        let agents = self
            .agents
            .iter()
            .map(|s| {
                BoxQuadraticAgent::new(
                    s.quad.clone(),
                    s.center.clone(),
                    s.offset,
                    s.lower.clone(),
                    s.upper.clone(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let n: usize = agents.iter().map(BoxQuadraticAgent::dim).sum();
        let rows = &self.coupling.a;
        if let Some((j, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InvalidProblem(format!(
                "coupling row {j} has {} entries, expected {n}",
                row.len()
            )));
        }
        let a = DMatrix::from_fn(rows.len(), n, |j, c| rows[j][c]);
        CoupledProblem::new(agents, a, DVector::from_column_slice(&self.coupling.b))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem file serializes")
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<CoupledProblem> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ProblemFile::from_toml(&text)
        .map_err(|message| Error::Parse {
            path: path.to_owned(),
            message,
        })?
        .to_problem()
}

pub fn save_problem(problem: &CoupledProblem, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ProblemFile::from_problem(problem).to_toml()).map_err(|e| Error::io(path, e))
}

/// SHA-256 over the exact bit patterns of the problem data, hex encoded.
pub fn problem_hash(problem: &CoupledProblem) -> String {
    let mut h = Sha256::new();
    let put_len = |h: &mut Sha256, n: usize| h.update((n as u64).to_le_bytes());
    let put = |h: &mut Sha256, xs: &[f64]| {
        for x in xs {
            h.update(x.to_bits().to_le_bytes());
        }
    };
    put_len(&mut h, problem.n_agents());
    for a in problem.agents() {
        put_len(&mut h, a.dim());
        put(&mut h, a.quad());
        put(&mut h, a.center());
        put(&mut h, &[a.offset()]);
        put(&mut h, a.lower());
        put(&mut h, a.upper());
    }
    put_len(&mut h, problem.m());
    put(&mut h, problem.a().as_slice());
    put(&mut h, problem.b().as_slice());
    hex::encode(h.finalize())
}
