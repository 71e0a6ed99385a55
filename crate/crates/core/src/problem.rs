//! The coupled primal problem
//!
//! ```text
//! minimize  F(x) = sum_i f_i(x_i)
//! s.t.      x_i in X_i         (per-agent boxes)
//!           A x <= b           (coupling constraints)
//! ```
//!
//! and the curvature and Lipschitz constants the rest of the crate is built on.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// One agent's separable quadratic cost `sum_j a_j (x_j - center_j)^2 + offset`
/// over the box `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxQuadraticAgent {
    quad: Vec<f64>,
    center: Vec<f64>,
    offset: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxQuadraticAgent {
    pub fn new(
        quad: Vec<f64>,
        center: Vec<f64>,
        offset: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let dim = quad.len();
        if dim == 0 {
            return Err(Error::InvalidProblem("agent with zero dimension".into()));
        }
        check_len("agent center", dim, center.len())?;
        check_len("agent lower bound", dim, lower.len())?;
        check_len("agent upper bound", dim, upper.len())?;
        let finite = quad
            .iter()
            .chain(&center)
            .chain(&lower)
            .chain(&upper)
            .chain(std::iter::once(&offset))
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidProblem("non-finite agent parameter".into()));
        }
        if let Some(j) = quad.iter().position(|&a| a <= 0.0) {
            return Err(Error::InvalidProblem(format!(
                "quadratic coefficient {j} is {} (must be > 0)",
                quad[j]
            )));
        }
        if let Some(j) = (0..dim).find(|&j| lower[j] > upper[j]) {
            return Err(Error::InvalidProblem(format!(
                "empty box in coordinate {j}: lower {} > upper {}",
                lower[j], upper[j]
            )));
        }
        Ok(Self {
            quad,
            center,
            offset,
            lower,
            upper,
        })
    }

    /// A one-dimensional agent, the shape of every NUM source.
    pub fn scalar(quad: f64, center: f64, offset: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![quad], vec![center], offset, vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.quad.len()
    }

    pub fn quad(&self) -> &[f64] {
        &self.quad
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Strong convexity modulus `c_i = 2 min_j a_j`.
    pub fn strong_convexity(&self) -> f64 {
        2.0 * self.quad.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn cost(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.quad
            .iter()
            .zip(&self.center)
            .zip(x)
            .map(|((a, c), xj)| a * (xj - c) * (xj - c))
            .sum::<f64>()
            + self.offset
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.quad
            .iter()
            .zip(&self.center)
            .zip(x)
            .map(|((a, c), xj)| 2.0 * a * (xj - c))
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn clamp(&self, j: usize, v: f64) -> f64 {
        v.clamp(self.lower[j], self.upper[j])
    }
}

/// Per-agent and global Lipschitz constants of the dual gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzData {
    pub per_agent: Vec<f64>,
    pub dual: f64,
    pub frob_a: f64,
    pub frob_blocks: Vec<f64>,
    pub c_f: f64,
}

impl LipschitzData {
    /// Largest admissible step size (exclusive), `min{1/((2k0+1/2) L_D), 1/(2 L_D)}`.
    ///
    /// Returns `+inf` when `L_D = 0` (no coupling).
    pub fn max_step_size(&self, k0: usize) -> f64 {
        max_step_size(self.dual, k0)
    }
}

pub fn max_step_size(l_dual: f64, k0: usize) -> f64 {
    if l_dual <= 0.0 {
        return f64::INFINITY;
    }
    let async_limit = 1.0 / ((2.0 * k0 as f64 + 0.5) * l_dual);
    let dual_limit = 1.0 / (2.0 * l_dual);
    async_limit.min(dual_limit)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupledProblem {
    agents: Vec<BoxQuadraticAgent>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    blocks: Vec<Range<usize>>,
}

impl CoupledProblem {
    /// Builds the problem; the columns of `a` are assigned to agents in order.
    pub fn new(agents: Vec<BoxQuadraticAgent>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidProblem("no agents".into()));
        }
        let n: usize = agents.iter().map(BoxQuadraticAgent::dim).sum();
        check_len("coupling matrix columns", n, a.ncols())?;
        check_len("capacity vector", a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite coupling data".into()));
        }
        let mut blocks = Vec::with_capacity(agents.len());
        let mut start = 0;
        for agent in &agents {
            blocks.push(start..start + agent.dim());
            start += agent.dim();
        }
        Ok(Self {
            agents,
            a,
            b,
            blocks,
        })
    }

    pub fn agents(&self) -> &[BoxQuadraticAgent] {
        &self.agents
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    /// Total number of decision variables.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Number of coupling constraints.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn block(&self, i: usize) -> Range<usize> {
        self.blocks[i].clone()
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// `A_i^T lambda` for agent `i`.
    pub fn price(&self, i: usize, lambda: &DVector<f64>) -> Vec<f64> {
        let r = &self.blocks[i];
        self.a
            .columns(r.start, r.len())
            .tr_mul(lambda)
            .iter()
            .copied()
            .collect()
    }

    /// `A x - b` without a length check.
    pub(crate) fn residual_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x - &self.b
    }

    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("primal vector", self.n(), x.len())?;
        Ok(self.residual_unchecked(x))
    }

    pub fn eval_objective(&self, x: &DVector<f64>) -> Result<f64> {
        check_len("primal vector", self.n(), x.len())?;
        Ok(self.objective_unchecked(x))
    }

    pub(crate) fn objective_unchecked(&self, x: &DVector<f64>) -> f64 {
        self.agents
            .iter()
            .zip(&self.blocks)
            .map(|(agent, r)| agent.cost(&x.as_slice()[r.clone()]))
            .sum()
    }

    /// Componentwise `max(A x - b, 0)`.
    pub fn eval_violation(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.residual(x)?.map(|v| v.max(0.0)))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.n()
            && self
                .agents
                .iter()
                .zip(&self.blocks)
                .all(|(agent, r)| agent.contains(&x.as_slice()[r.clone()]))
    }

    pub fn lipschitz_data(&self) -> LipschitzData {
        let frob_blocks: Vec<f64> = self
            .blocks
            .iter()
            .map(|r| self.a.columns(r.start, r.len()).norm())
            .collect();
        let per_agent = frob_blocks
            .iter()
            .zip(&self.agents)
            .map(|(f, agent)| f * f / agent.strong_convexity())
            .collect();
        let c_f = self
            .agents
            .iter()
            .map(BoxQuadraticAgent::strong_convexity)
            .fold(f64::INFINITY, f64::min);
        let frob_a = self.a.norm();
        LipschitzData {
            per_agent,
            dual: frob_a * frob_a / c_f,
            frob_a,
            frob_blocks,
            c_f,
        }
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::num::build_num;

    fn single(a: f64, center: f64, lo: f64, hi: f64, link: f64, cap: f64) -> CoupledProblem {
        CoupledProblem::new(
            vec![BoxQuadraticAgent::scalar(a, center, 0.0, lo, hi).unwrap()],
            DMatrix::from_element(1, 1, link),
            DVector::from_element(1, cap),
        )
        .unwrap()
    }

    #[test]
    fn objective_at_num_centers_is_minus_sum_of_offsets() {
        let p = build_num();
        let x = DVector::from_vec(vec![5.9, 6.6, 7.5, 4.8, 5.4, 8.1]);
        let expected = -(62.658 + 95.832 + 151.875 + 80.640 + 34.992 + 32.805);
        assert_relative_eq!(p.eval_objective(&x).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(expected, -458.802, epsilon = 1e-9);
    }

    #[test]
    fn objective_at_num_origin_matches_hand_sum() {
        let p = build_num();
        let x = DVector::zeros(6);
        // sum C_a * xbar^2 - sum C_b, term by term
        let hand = 1.8 * 5.9 * 5.9
            + 2.2 * 6.6 * 6.6
            + 2.7 * 7.5 * 7.5
            + 3.5 * 4.8 * 4.8
            + 1.2 * 5.4 * 5.4
            + 0.5 * 8.1 * 8.1
            - 458.802;
        assert_relative_eq!(p.eval_objective(&x).unwrap(), hand, epsilon = 1e-9);
    }

    #[test]
    fn objective_single_agent() {
        let p = single(1.0, 0.0, -5.0, 5.0, 1.0, 1.0);
        assert_eq!(
            p.eval_objective(&DVector::from_element(1, 2.0)).unwrap(),
            4.0
        );
    }

    #[test]
    fn objective_dimension_mismatch() {
        let p = build_num();
        assert!(matches!(
            p.eval_objective(&DVector::zeros(5)),
            Err(Error::Dimension {
                expected: 6,
                got: 5,
                ..
            })
        ));
        assert!(p.eval_violation(&DVector::zeros(7)).is_err());
    }

    #[test]
    fn violation_at_num_centers() {
        let p = build_num();
        let x = DVector::from_vec(vec![5.9, 6.6, 7.5, 4.8, 5.4, 8.1]);
        // row sums over each link's sources, minus capacity
        let paths: [&[usize]; 6] = [
            &[1, 2, 7],
            &[6, 5, 4],
            &[7, 5, 6, 1],
            &[3, 2, 6, 5],
            &[4, 3, 2, 1],
            &[6, 2, 3, 4],
        ];
        let caps: [f64; 7] = [15.0, 17.0, 20.0, 15.0, 20.0, 20.0, 15.0];
        let mut load = [0.0f64; 7];
        for (i, path) in paths.iter().enumerate() {
            for &link in *path {
                load[link - 1] += x[i];
            }
        }
        let brute: Vec<f64> = load
            .iter()
            .zip(caps)
            .map(|(l, c)| (l - c).max(0.0))
            .collect();
        let v = p.eval_violation(&x).unwrap();
        let expected = [3.8, 7.2, 0.0, 5.1, 0.0, 7.0, 0.0];
        for j in 0..7 {
            assert_relative_eq!(v[j], brute[j], epsilon = 1e-12);
            assert_relative_eq!(v[j], expected[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn violation_zero_when_feasible() {
        let p = build_num();
        assert!(p
            .eval_violation(&DVector::zeros(6))
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn violation_single_agent() {
        let p = single(1.0, 0.0, 0.0, 5.0, 1.0, 1.0);
        let v = p.eval_violation(&DVector::from_element(1, 3.0)).unwrap();
        assert_eq!(v.as_slice(), &[2.0]);
    }

    #[test]
    fn num_lipschitz_constants() {
        let lips = build_num().lipschitz_data();
        assert_relative_eq!(lips.frob_a * lips.frob_a, 22.0, epsilon = 1e-12);
        assert_relative_eq!(lips.c_f, 1.0, epsilon = 1e-12);
        assert_relative_eq!(lips.dual, 22.0, epsilon = 1e-12);
        assert_relative_eq!(lips.per_agent[0], 3.0 / 3.6, epsilon = 1e-12);
        let total: f64 = lips.per_agent.iter().sum();
        assert!(lips.dual >= total);
    }

    #[test]
    fn zero_coupling_gives_zero_constants() {
        let p = CoupledProblem::new(
            vec![
                BoxQuadraticAgent::scalar(1.0, 0.0, 0.0, -1.0, 1.0).unwrap(),
                BoxQuadraticAgent::scalar(2.0, 0.0, 0.0, -1.0, 1.0).unwrap(),
            ],
            DMatrix::zeros(3, 2),
            DVector::zeros(3),
        )
        .unwrap();
        let lips = p.lipschitz_data();
        assert_eq!(lips.dual, 0.0);
        assert!(lips.per_agent.iter().all(|&l| l == 0.0));
        assert_eq!(lips.max_step_size(3), f64::INFINITY);
    }

    #[test]
    fn step_size_limits() {
        assert_relative_eq!(max_step_size(22.0, 4), 1.0 / 187.0, epsilon = 1e-15);
        assert!(0.004 < max_step_size(22.0, 4));
        assert_relative_eq!(max_step_size(22.0, 0), 1.0 / 44.0, epsilon = 1e-15);
        assert_eq!(max_step_size(1.0, 0), 0.5);
    }

    #[test]
    fn rejects_bad_agents() {
        assert!(BoxQuadraticAgent::scalar(0.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(BoxQuadraticAgent::scalar(1.0, 0.0, 0.0, 2.0, 1.0).is_err());
        assert!(
            BoxQuadraticAgent::new(vec![1.0], vec![0.0, 1.0], 0.0, vec![0.0], vec![1.0]).is_err()
        );
        assert!(BoxQuadraticAgent::scalar(1.0, f64::NAN, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn rejects_column_mismatch() {
        let agents = vec![BoxQuadraticAgent::scalar(1.0, 0.0, 0.0, 0.0, 1.0).unwrap()];
        assert!(
            CoupledProblem::new(agents.clone(), DMatrix::zeros(2, 2), DVector::zeros(2)).is_err()
        );
        assert!(CoupledProblem::new(agents, DMatrix::zeros(2, 1), DVector::zeros(3)).is_err());
    }

    #[test]
    fn blocks_partition_columns() {
        let agents = vec![
            BoxQuadraticAgent::new(
                vec![1.0, 2.0],
                vec![0.0; 2],
                0.0,
                vec![-1.0; 2],
                vec![1.0; 2],
            )
            .unwrap(),
            BoxQuadraticAgent::scalar(1.0, 0.0, 0.0, 0.0, 1.0).unwrap(),
            BoxQuadraticAgent::new(vec![3.0; 3], vec![0.0; 3], 0.0, vec![-1.0; 3], vec![1.0; 3])
                .unwrap(),
        ];
        let p = CoupledProblem::new(agents, DMatrix::zeros(2, 6), DVector::zeros(2)).unwrap();
        assert_eq!(p.blocks(), &[0..2, 2..3, 3..6]);
        assert_eq!(p.agents()[0].strong_convexity(), 2.0);
    }
}
