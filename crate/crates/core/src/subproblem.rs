//! Per-agent minimization of the partial Lagrangian `f_i(x) + <A_i^T lambda, x>`.
//!
//! The exact solve is closed form for box quadratics. The inexact oracles return
//! the worst point whose Lagrangian gap to the exact minimum stays within the
//! agent's budget `eps_i`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::problem::{BoxQuadraticAgent, CoupledProblem};

/// Two candidate gaps closer than this (relative to `max(1, eps)`) count as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub x: Vec<f64>,
    pub lagrangian_value: f64,
    pub is_exact: bool,
    pub inexactness_budget: f64,
}

/// How an inexact agent picks its answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InexactOracle {
    /// Worst point inside the box whose gap is at most `eps_i`.
    #[default]
    Boxed,
    /// Worst point on the `eps_i` level set of the gap, without the box
    /// constraint. Both roots of the level set always tie, so every solve
    /// flips a coin. The answer can leave the box.
    LevelSet,
}

/// The interface the engine uses to talk to an agent.
pub trait LocalSubproblem {
    fn dim(&self) -> usize;

    fn strong_convexity(&self) -> f64;

    /// `f_i(x) + <price, x>` where `price = A_i^T lambda`.
    fn lagrangian(&self, x: &[f64], price: &[f64]) -> f64;

    fn solve_exact(&self, price: &[f64]) -> Result<SubproblemResult>;

    fn solve_inexact<R: Rng + ?Sized>(
        &self,
        price: &[f64],
        eps: f64,
        oracle: InexactOracle,
        rng: &mut R,
    ) -> Result<SubproblemResult>;
}

impl LocalSubproblem for BoxQuadraticAgent {
    fn dim(&self) -> usize {
        BoxQuadraticAgent::dim(self)
    }

    fn strong_convexity(&self) -> f64 {
        BoxQuadraticAgent::strong_convexity(self)
    }

    fn lagrangian(&self, x: &[f64], price: &[f64]) -> f64 {
        self.cost(x) + price.iter().zip(x).map(|(q, v)| q * v).sum::<f64>()
    }

    fn solve_exact(&self, price: &[f64]) -> Result<SubproblemResult> {
        solve_exact(self, price)
    }

    fn solve_inexact<R: Rng + ?Sized>(
        &self,
        price: &[f64],
        eps: f64,
        oracle: InexactOracle,
        rng: &mut R,
    ) -> Result<SubproblemResult> {
        match oracle {
            InexactOracle::Boxed => solve_worst_case_inexact(self, price, eps, rng),
            InexactOracle::LevelSet => solve_level_set_inexact(self, price, eps, rng),
        }
    }
}

/// Unconstrained minimizer of coordinate `j` of the partial Lagrangian.
fn free_minimizer(agent: &BoxQuadraticAgent, price: &[f64], j: usize) -> f64 {
    agent.center()[j] - price[j] / (2.0 * agent.quad()[j])
}

/// Closed-form minimizer over the box: `clamp(center_j - q_j / (2 a_j))`.
pub fn solve_exact(agent: &BoxQuadraticAgent, price: &[f64]) -> Result<SubproblemResult> {
    check_len("agent price vector", agent.dim(), price.len())?;
    let x: Vec<f64> = (0..agent.dim())
        .map(|j| agent.clamp(j, free_minimizer(agent, price, j)))
        .collect();
    let lagrangian_value = agent.lagrangian(&x, price);
    Ok(SubproblemResult {
        x,
        lagrangian_value,
        is_exact: true,
        inexactness_budget: 0.0,
    })
}

/// Gap `a (x - m)^2 - a (x* - m)^2` in factored form.
fn coordinate_gap(a: f64, m: f64, exact: f64, x: f64) -> f64 {
    a * (x - exact) * (x + exact - 2.0 * m)
}

fn worst_coordinate<R: Rng + ?Sized>(
    agent: &BoxQuadraticAgent,
    price: &[f64],
    j: usize,
    budget: f64,
    boxed: bool,
    rng: &mut R,
) -> f64 {
    let a = agent.quad()[j];
    let m = free_minimizer(agent, price, j);
    let exact = agent.clamp(j, m);
    let radius = ((exact - m) * (exact - m) + budget / a).sqrt();
    let (mut left, mut right) = (m - radius, m + radius);
    if boxed {
        left = agent.clamp(j, left);
        right = agent.clamp(j, right);
    }
    let gap_left = coordinate_gap(a, m, exact, left);
    let gap_right = coordinate_gap(a, m, exact, right);
    if (gap_left - gap_right).abs() <= TIE_TOLERANCE * budget.max(1.0) {
        if rng.gen::<bool>() {
            right
        } else {
            left
        }
    } else if gap_right > gap_left {
        right
    } else {
        left
    }
}

fn inexact_with<R: Rng + ?Sized>(
    agent: &BoxQuadraticAgent,
    price: &[f64],
    eps: f64,
    boxed: bool,
    rng: &mut R,
) -> Result<SubproblemResult> {
    check_len("agent price vector", agent.dim(), price.len())?;
    if !(eps >= 0.0) {
        return Err(Error::NegativeBudget(eps));
    }
    if eps == 0.0 {
        return solve_exact(agent, price);
    }
    let budget = eps / agent.dim() as f64;
    let x: Vec<f64> = (0..agent.dim())
        .map(|j| worst_coordinate(agent, price, j, budget, boxed, rng))
        .collect();
    let lagrangian_value = agent.lagrangian(&x, price);
    Ok(SubproblemResult {
        x,
        lagrangian_value,
        is_exact: false,
        inexactness_budget: eps,
    })
}

/// Worst feasible point with Lagrangian gap at most `eps`.
///
/// Per coordinate (budget split equally), the candidates are the two roots of the
/// gap level set clamped to the box; the larger gap wins and exact ties are
/// broken with one fair draw from `rng`.
pub fn solve_worst_case_inexact<R: Rng + ?Sized>(
    agent: &BoxQuadraticAgent,
    price: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<SubproblemResult> {
    inexact_with(agent, price, eps, true, rng)
}

/// Level-set variant of [`solve_worst_case_inexact`] with no box clamp.
pub fn solve_level_set_inexact<R: Rng + ?Sized>(
    agent: &BoxQuadraticAgent,
    price: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<SubproblemResult> {
    inexact_with(agent, price, eps, false, rng)
}

/// `x(lambda)`, `D(lambda)` and `grad D(lambda) = A x(lambda) - b` from exact solves.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEvaluation {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient: DVector<f64>,
}

pub fn evaluate_dual(problem: &CoupledProblem, lambda: &DVector<f64>) -> Result<DualEvaluation> {
    check_len("multiplier vector", problem.m(), lambda.len())?;
    let mut x = DVector::zeros(problem.n());
    let mut value = -lambda.dot(problem.b());
    for (i, agent) in problem.agents().iter().enumerate() {
        let sol = solve_exact(agent, &problem.price(i, lambda))?;
        value += sol.lagrangian_value;
        x.rows_mut(problem.block(i).start, agent.dim())
            .copy_from_slice(&sol.x);
    }
    let gradient = problem.residual_unchecked(&x);
    Ok(DualEvaluation { x, value, gradient })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn num_agent_1() -> BoxQuadraticAgent {
        BoxQuadraticAgent::scalar(1.8, 5.9, -62.658, 0.0, 5.9).unwrap()
    }

    fn grid_argmin(agent: &BoxQuadraticAgent, price: f64, step: f64) -> (f64, f64) {
        let (lo, hi) = (agent.lower()[0], agent.upper()[0]);
        let steps = ((hi - lo) / step).round() as usize;
        (0..=steps)
            .map(|s| (lo + s as f64 * step).min(hi))
            .map(|x| (x, agent.lagrangian(&[x], &[price])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
    }

    #[test]
    fn exact_interior_num_agent() {
        let agent = num_agent_1();
        let r = solve_exact(&agent, &[3.0]).unwrap();
        assert_relative_eq!(r.x[0], 5.9 - 3.0 / 3.6, epsilon = 1e-12);
        assert_relative_eq!(r.lagrangian_value, -46.208, epsilon = 1e-3);
        assert!(r.is_exact);
        let (gx, gv) = grid_argmin(&agent, 3.0, 1e-4);
        assert!((gx - r.x[0]).abs() <= 1e-4);
        assert!(r.lagrangian_value <= gv + 1e-12);
    }

    #[test]
    fn exact_at_zero_price_is_center() {
        let centers = [5.9, 6.6, 7.5, 4.8, 5.4, 8.1];
        for (i, agent) in crate::num::build_num().agents().iter().enumerate() {
            assert_eq!(solve_exact(agent, &[0.0]).unwrap().x, vec![centers[i]]);
        }
    }

    #[test]
    fn exact_clamps_to_lower_bound() {
        let agent6 = BoxQuadraticAgent::scalar(0.5, 8.1, -32.805, 0.0, 8.1).unwrap();
        let r = solve_exact(&agent6, &[20.0]).unwrap();
        assert_eq!(r.x, vec![0.0]);
    }

    #[test]
    fn exact_price_length_checked() {
        assert!(solve_exact(&num_agent_1(), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn inexact_interior_picks_either_root() {
        let agent = num_agent_1();
        let exact = solve_exact(&agent, &[3.0]).unwrap();
        let m = 5.9 - 3.0 / 3.6;
        let r = (0.5_f64 / 1.8).sqrt();
        let (mut saw_low, mut saw_high) = (false, false);
        for seed in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = solve_worst_case_inexact(&agent, &[3.0], 0.5, &mut rng).unwrap();
            let gap = out.lagrangian_value - exact.lagrangian_value;
            assert_relative_eq!(gap, 0.5, epsilon = 1e-10);
            if (out.x[0] - (m - r)).abs() < 1e-12 {
                saw_low = true;
            } else {
                assert_relative_eq!(out.x[0], m + r, epsilon = 1e-12);
                saw_high = true;
            }
        }
        assert!(saw_low && saw_high);
        assert_relative_eq!(m - r, 4.5397, epsilon = 1e-4);
        assert_relative_eq!(m + r, 5.5937, epsilon = 1e-4);
    }

    #[test]
    fn zero_budget_is_exact() {
        let agent = num_agent_1();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for oracle in [InexactOracle::Boxed, InexactOracle::LevelSet] {
            let out = agent.solve_inexact(&[3.0], 0.0, oracle, &mut rng).unwrap();
            assert_eq!(out, solve_exact(&agent, &[3.0]).unwrap());
        }
    }

    #[test]
    fn unattainable_budget_goes_to_far_corner() {
        let agent = BoxQuadraticAgent::scalar(1.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = solve_worst_case_inexact(&agent, &[0.0], 100.0, &mut rng).unwrap();
        assert_eq!(out.x, vec![1.0]);
        assert_relative_eq!(out.lagrangian_value, 1.0);
        // grid oracle: the gap over the box peaks at the far corner
        let best = (0..=10_000)
            .map(|s| s as f64 * 1e-4)
            .max_by(|a, b| (a * a).total_cmp(&(b * b)))
            .unwrap();
        assert_eq!(best, 1.0);
    }

    #[test]
    fn negative_budget_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            solve_worst_case_inexact(&num_agent_1(), &[0.0], -1.0, &mut rng),
            Err(Error::NegativeBudget(_))
        ));
        assert!(solve_level_set_inexact(&num_agent_1(), &[0.0], f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn level_set_hits_budget_exactly_and_may_leave_box() {
        let agent = num_agent_1();
        let exact = solve_exact(&agent, &[0.0]).unwrap();
        let mut outside = false;
        for seed in 0..32 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = solve_level_set_inexact(&agent, &[0.0], 5.0, &mut rng).unwrap();
            assert_relative_eq!(
                out.lagrangian_value - exact.lagrangian_value,
                5.0,
                epsilon = 1e-9
            );
            outside |= !agent.contains(&out.x);
        }
        assert!(outside);
    }

    #[test]
    fn one_draw_per_tie() {
        // Both roots interior: exactly one bool drawn per coordinate.
        let agent = BoxQuadraticAgent::new(
            vec![1.0; 3],
            vec![0.0; 3],
            0.0,
            vec![-10.0; 3],
            vec![10.0; 3],
        )
        .unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        solve_worst_case_inexact(&agent, &[0.0; 3], 3.0, &mut a).unwrap();
        for _ in 0..3 {
            b.gen::<bool>();
        }
        assert_eq!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn kkt_variational_inequality_at_exact_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let dim = rng.gen_range(1..4);
            let quad: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.1..5.0)).collect();
            let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let lower: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..0.0)).collect();
            let upper: Vec<f64> = lower.iter().map(|l| l + rng.gen_range(0.0..6.0)).collect();
            let agent =
                BoxQuadraticAgent::new(quad, center, 0.0, lower.clone(), upper.clone()).unwrap();
            let price: Vec<f64> = (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let x = solve_exact(&agent, &price).unwrap().x;
            let grad: Vec<f64> = agent
                .gradient(&x)
                .iter()
                .zip(&price)
                .map(|(g, q)| g + q)
                .collect();
            for _ in 0..20 {
                let y: Vec<f64> = (0..dim)
                    .map(|j| rng.gen_range(lower[j]..=upper[j]))
                    .collect();
                let ip: f64 = grad
                    .iter()
                    .zip(y.iter().zip(&x))
                    .map(|(g, (yj, xj))| g * (yj - xj))
                    .sum();
                assert!(ip >= -1e-9, "KKT inequality violated: {ip}");
            }
        }
    }

    fn agent_strategy() -> impl Strategy<Value = (BoxQuadraticAgent, Vec<f64>, f64)> {
        (1usize..4).prop_flat_map(|dim| {
            (
                prop::collection::vec(0.05f64..10.0, dim),
                prop::collection::vec(-10.0f64..10.0, dim),
                prop::collection::vec(-10.0f64..10.0, dim),
                prop::collection::vec(0.0f64..10.0, dim),
                prop::collection::vec(-20.0f64..20.0, dim),
                0.0f64..50.0,
            )
                .prop_map(|(quad, center, lower, width, price, eps)| {
                    let upper = lower.iter().zip(&width).map(|(l, w)| l + w).collect();
                    (
                        BoxQuadraticAgent::new(quad, center, 0.0, lower, upper).unwrap(),
                        price,
                        eps,
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn boxed_oracle_stays_in_budget((agent, price, eps) in agent_strategy(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let exact = solve_exact(&agent, &price).unwrap();
            let out = solve_worst_case_inexact(&agent, &price, eps, &mut rng).unwrap();
            let gap = out.lagrangian_value - exact.lagrangian_value;
            prop_assert!(agent.contains(&out.x));
            prop_assert!(gap >= -1e-9 && gap <= eps + 1e-9 * (1.0 + eps), "gap {gap} eps {eps}");
            let dist2: f64 = out.x.iter().zip(&exact.x).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(dist2 <= 2.0 * eps / agent.strong_convexity() + 1e-9);
        }
    }
}
