//! Ground truth `x*`, `lambda*`, `F* = D*` by maximizing the dual to high
//! accuracy, plus the four solution-quality metrics of a running average.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::problem::{CoupledProblem, LipschitzData};
use crate::subproblem::evaluate_dual;

/// Relative stopping tolerance on `||lambda^{k+1} - lambda^k||`.
pub const REFERENCE_TOLERANCE: f64 = 1e-12;

pub const REFERENCE_MAX_ITERS: usize = 10_000_000;

/// Environment variable naming the directory for cached reference solutions.
pub const CACHE_DIR_ENV: &str = "DDOPT_CACHE_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// Norm of the projected dual gradient step at the returned multiplier.
    pub final_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    #[serde(with = "plain_vector")]
    pub x_star: DVector<f64>,
    #[serde(with = "plain_vector")]
    pub lambda_star: DVector<f64>,
    pub f_star: f64,
    pub d_star: f64,
    /// `F* - D*`.
    pub duality_gap: f64,
    pub report: SolverReport,
}

impl ReferenceSolution {
    /// `||[A x* - b]^+||`.
    pub fn feasibility_residual(&self, problem: &CoupledProblem) -> Result<f64> {
        Ok(problem.eval_violation(&self.x_star)?.norm())
    }

    /// `|<lambda*, A x* - b>|`.
    pub fn complementary_slackness(&self, problem: &CoupledProblem) -> Result<f64> {
        Ok(self.lambda_star.dot(&problem.residual(&self.x_star)?).abs())
    }

    fn from_multiplier(
        problem: &CoupledProblem,
        lambda: DVector<f64>,
        report: SolverReport,
    ) -> Result<Self> {
        let dual = evaluate_dual(problem, &lambda)?;
        let f_star = problem.eval_objective(&dual.x)?;
        Ok(Self {
            x_star: dual.x,
            lambda_star: lambda,
            f_star,
            d_star: dual.value,
            duality_gap: f_star - dual.value,
            report,
        })
    }
}

mod plain_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Vec::<f64>::deserialize(d).map(DVector::from_vec)
    }
}

/// Projected gradient ascent on the dual with step `1/(2 L_D)` from `lambda = 0`.
pub fn solve_reference(
    problem: &CoupledProblem,
    lips: &LipschitzData,
) -> Result<ReferenceSolution> {
    let m = problem.m();
    let mut lambda = DVector::zeros(m);
    if lips.dual <= 0.0 {
        return ReferenceSolution::from_multiplier(
            problem,
            lambda,
            SolverReport {
                iterations: 0,
                final_residual: 0.0,
            },
        );
    }
    let step = 1.0 / (2.0 * lips.dual);
    let mut residual = f64::INFINITY;
    for k in 0..REFERENCE_MAX_ITERS {
        let grad = evaluate_dual(problem, &lambda)?.gradient;
        let next = lambda.zip_map(&grad, |l, g| (l + step * g).max(0.0));
        residual = (&next - &lambda).norm();
        if !residual.is_finite() {
            return Err(Error::Divergence {
                what: "reference dual ascent",
                k,
            });
        }
        let scale = 1.0 + lambda.norm();
        lambda = next;
        if residual <= REFERENCE_TOLERANCE * scale {
            return ReferenceSolution::from_multiplier(
                problem,
                lambda,
                SolverReport {
                    iterations: k + 1,
                    final_residual: residual,
                },
            );
        }
    }
    Err(Error::NoConvergence {
        iterations: REFERENCE_MAX_ITERS,
        residual,
    })
}

/// Cyclic coordinate ascent on the dual, each coordinate maximized by bisection
/// on its partial derivative. Independent of [`solve_reference`]; used to
/// cross-check it.
pub fn solve_reference_coordinate(
    problem: &CoupledProblem,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<ReferenceSolution> {
    let m = problem.m();
    let mut lambda = DVector::zeros(m);
    let partial = |lambda: &DVector<f64>, j: usize| -> Result<f64> {
        Ok(evaluate_dual(problem, lambda)?.gradient[j])
    };
    let mut moved = f64::INFINITY;
    for sweep in 0..max_sweeps {
        moved = 0.0;
        for j in 0..m {
            let old = lambda[j];
            let mut probe = lambda.clone();
            probe[j] = 0.0;
            let target = if partial(&probe, j)? <= 0.0 {
                0.0
            } else {
                let mut lo = 0.0;
                let mut hi = old.max(1.0);
                loop {
                    probe[j] = hi;
                    if partial(&probe, j)? <= 0.0 {
                        break;
                    }
                    lo = hi;
                    hi *= 2.0;
                    if !hi.is_finite() {
                        return Err(Error::Divergence {
                            what: "coordinate ascent bracket",
                            k: sweep,
                        });
                    }
                }
                while hi - lo > f64::EPSILON * hi.max(1.0) {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    probe[j] = mid;
                    if partial(&probe, j)? > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            lambda[j] = target;
            moved = f64::max(moved, (target - old).abs());
        }
        if moved <= tolerance {
            return ReferenceSolution::from_multiplier(
                problem,
                lambda,
                SolverReport {
                    iterations: sweep + 1,
                    final_residual: moved,
                },
            );
        }
    }
    Err(Error::NoConvergence {
        iterations: max_sweeps,
        residual: moved,
    })
}

/// Quality of a running-average pair `(x_bar, lambda_bar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `||[A x_bar - b]^+||`.
    pub violation_norm: f64,
    /// `F(x_bar) - F*`.
    pub primal_dev: f64,
    /// `D* - D(lambda_bar)`, from exact solves.
    pub dual_dev: f64,
    /// `||x_bar - x*||^2`.
    pub xdev_sq: f64,
}

pub fn metrics(
    reference: &ReferenceSolution,
    problem: &CoupledProblem,
    x_bar: &DVector<f64>,
    lambda_bar: &DVector<f64>,
) -> Result<Metrics> {
    check_len("reference solution", problem.n(), reference.x_star.len())?;
    let violation_norm = problem.eval_violation(x_bar)?.norm();
    let primal_dev = problem.objective_unchecked(x_bar) - reference.f_star;
    let dual_dev = reference.d_star - evaluate_dual(problem, lambda_bar)?.value;
    let xdev_sq = (x_bar - &reference.x_star).norm_squared();
    Ok(Metrics {
        violation_norm,
        primal_dev,
        dual_dev,
        xdev_sq,
    })
}

/// Cache directory from [`CACHE_DIR_ENV`], if set.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

pub fn cache_path(dir: &Path, problem: &CoupledProblem) -> PathBuf {
    dir.join(format!(
        "reference-{}.json",
        crate::config::problem_hash(problem)
    ))
}

/// [`solve_reference`] through the on-disk cache in `dir`.
///
/// A missing or unreadable cache entry is recomputed and rewritten.
pub fn solve_reference_in(
    dir: &Path,
    problem: &CoupledProblem,
    lips: &LipschitzData,
) -> Result<ReferenceSolution> {
    let path = cache_path(dir, problem);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(cached) = serde_json::from_str::<ReferenceSolution>(&text) {
            if cached.x_star.len() == problem.n() && cached.lambda_star.len() == problem.m() {
                return Ok(cached);
            }
        }
    }
    let solution = solve_reference(problem, lips)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = serde_json::to_string_pretty(&solution)
        .map_err(|e| Error::Trace(format!("cannot serialize reference: {e}")))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(solution)
}

/// [`solve_reference`], cached when [`CACHE_DIR_ENV`] is set.
pub fn solve_reference_cached(
    problem: &CoupledProblem,
    lips: &LipschitzData,
) -> Result<ReferenceSolution> {
    match cache_dir() {
        Some(dir) => solve_reference_in(&dir, problem, lips),
        None => solve_reference(problem, lips),
    }
}
