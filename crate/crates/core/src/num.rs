//! The six-source, seven-link network utility maximization benchmark and its
//! four canonical experiment scenarios.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::engine::RunConfig;
use crate::error::{Error, Result};
use crate::problem::{BoxQuadraticAgent, CoupledProblem};
use crate::subproblem::InexactOracle;

/// Seed shared by the canonical scenarios.
pub const SCENARIO_SEED: u64 = 20_210_517;

pub const SCENARIO_STEP_SIZE: f64 = 0.004;

pub const SCENARIO_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub lower: f64,
    pub upper: f64,
    pub c_a: f64,
    pub c_b: f64,
}

/// Sources with fixed routes over capacitated links.
///
/// Each source minimizes `C_a (x - upper)^2 - C_b`, i.e. the negated utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumInstance {
    /// Zero-based link indices, in route order.
    pub paths: Vec<Vec<usize>>,
    pub link_capacities: Vec<f64>,
    pub sources: Vec<SourceParams>,
}

impl NumInstance {
    pub fn benchmark_network() -> Self {
        let table = [
            (5.9, 1.8, 62.658, vec![1, 2, 7]),
            (6.6, 2.2, 95.832, vec![6, 5, 4]),
            (7.5, 2.7, 151.875, vec![7, 5, 6, 1]),
            (4.8, 3.5, 80.640, vec![3, 2, 6, 5]),
            (5.4, 1.2, 34.992, vec![4, 3, 2, 1]),
            (8.1, 0.5, 32.805, vec![6, 2, 3, 4]),
        ];
        let (sources, paths) = table
            .into_iter()
            .map(|(upper, c_a, c_b, path)| {
                (
                    SourceParams {
                        lower: 0.0,
                        upper,
                        c_a,
                        c_b,
                    },
                    path.into_iter().map(|link: usize| link - 1).collect(),
                )
            })
            .unzip();
        Self {
            paths,
            link_capacities: vec![15.0, 17.0, 20.0, 15.0, 20.0, 20.0, 15.0],
            sources,
        }
    }

    /// `A[j, i] = 1` iff link `j` carries source `i`.
    pub fn incidence(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.link_capacities.len(), self.sources.len());
        for (i, path) in self.paths.iter().enumerate() {
            for &link in path {
                a[(link, i)] = 1.0;
            }
        }
        a
    }

    pub fn to_problem(&self) -> Result<CoupledProblem> {
        if self.paths.len() != self.sources.len() {
            return Err(Error::InvalidProblem(format!(
                "{} paths for {} sources",
                self.paths.len(),
                self.sources.len()
            )));
        }
        let links = self.link_capacities.len();
        if let Some(bad) = self.paths.iter().flatten().find(|&&l| l >= links) {
            return Err(Error::InvalidProblem(format!(
                "path uses unknown link {bad}"
            )));
        }
        let agents = self
            .sources
            .iter()
            .map(|s| BoxQuadraticAgent::scalar(s.c_a, s.upper, -s.c_b, s.lower, s.upper))
            .collect::<Result<Vec<_>>>()?;
        CoupledProblem::new(
            agents,
            self.incidence(),
            DVector::from_column_slice(&self.link_capacities),
        )
    }
}

/// The benchmark problem: 6 agents, 7 links.
pub fn build_num() -> CoupledProblem {
    NumInstance::benchmark_network()
        .to_problem()
        .expect("built-in instance is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SyncExact,
    AsyncExact,
    SyncInexact,
    AsyncInexact,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::SyncExact,
        Scenario::AsyncExact,
        Scenario::SyncInexact,
        Scenario::AsyncInexact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SyncExact => "sync_exact",
            Scenario::AsyncExact => "async_exact",
            Scenario::SyncInexact => "sync_inexact",
            Scenario::AsyncInexact => "async_inexact",
        }
    }

    pub fn k0(self) -> usize {
        match self {
            Scenario::SyncExact | Scenario::SyncInexact => 0,
            Scenario::AsyncExact | Scenario::AsyncInexact => 4,
        }
    }

    /// Total inexactness `eps_D`.
    pub fn eps_total(self) -> f64 {
        match self {
            Scenario::SyncExact | Scenario::AsyncExact => 0.0,
            Scenario::SyncInexact | Scenario::AsyncInexact => 30.0,
        }
    }

    pub fn is_exact(self) -> bool {
        self.eps_total() == 0.0
    }

    /// Run configuration for an instance with `n_agents` agents.
    ///
    /// The budget is split equally. Inexact scenarios use the level-set oracle:
    /// under the boxed oracle every source undershoots at `lambda = 0`, the
    /// network is strictly feasible and the multipliers never leave zero.
    /// Canonical runs go the full horizon; the dual iterate of the exact runs
    /// reaches a floating-point fixed point where `E_k = 0`.
    pub fn config_for(self, n_agents: usize) -> RunConfig {
        let eps_i = self.eps_total() / n_agents as f64;
        RunConfig {
            alpha: SCENARIO_STEP_SIZE,
            tolerance: None,
            max_iters: SCENARIO_MAX_ITERS,
            k0: self.k0(),
            eps_per_agent: vec![eps_i; n_agents],
            seed: SCENARIO_SEED,
            record_every: 1,
            lambda0: None,
            oracle: if self.is_exact() {
                InexactOracle::Boxed
            } else {
                InexactOracle::LevelSet
            },
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_owned()))
    }
}

/// Canonical run configuration for the NUM benchmark.
pub fn scenario(name: &str) -> Result<RunConfig> {
    Ok(name.parse::<Scenario>()?.config_for(6))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agent_three_route() {
        let a = build_num().a().clone();
        let rows: Vec<usize> = (0..7)
            .filter(|&j| a[(j, 2)] == 1.0)
            .map(|j| j + 1)
            .collect();
        assert_eq!(rows, vec![1, 5, 6, 7]);
    }

    #[test]
    fn capacities_and_shape() {
        let p = build_num();
        assert_eq!(p.b()[1], 17.0);
        assert_eq!((p.n(), p.m()), (6, 7));
        assert!(p.a().iter().all(|&v| v == 0.0 || v == 1.0));
        let ones = p.a().iter().filter(|&&v| v == 1.0).count();
        assert_eq!(ones, 22);
    }

    #[test]
    fn num_constants() {
        let lips = build_num().lipschitz_data();
        assert_eq!(lips.c_f, 1.0);
        assert!((lips.dual - 22.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_parameters() {
        let c = scenario("sync_exact").unwrap();
        assert_eq!((c.k0, c.alpha), (0, 0.004));
        assert_eq!(c.eps_per_agent.iter().sum::<f64>(), 0.0);
        let c = scenario("async_inexact").unwrap();
        assert_eq!(c.k0, 4);
        assert!((c.eps_per_agent.iter().sum::<f64>() - 30.0).abs() < 1e-12);
        assert_eq!(c.eps_per_agent[0], 5.0);
        assert_eq!(c.max_iters, 100_000);
    }

    #[test]
    fn every_scenario_step_size_admissible() {
        let lips = build_num().lipschitz_data();
        for sc in Scenario::ALL {
            let c = sc.config_for(6);
            assert!(c.alpha < lips.max_step_size(c.k0), "{sc}");
            c.validate(&lips, 6).unwrap();
        }
    }

    #[test]
    fn unknown_scenario() {
        assert!(matches!(scenario("fast"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.to_string().parse::<Scenario>().unwrap(), sc);
        }
    }
}
