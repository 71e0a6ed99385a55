//! Dual ascent with stale reads and inexact agents, driven by an [`AsyncSchedule`].
//!
//! At every global tick `k`:
//!
//! 1. each agent whose clock contains `k` reads `lambda^{k - delta_di(k)}` and
//!    solves its subproblem (inexactly when `eps_i > 0`); everyone else keeps
//!    the previous answer;
//! 2. if `k` is a coordinator slot, the coordinator reads each agent's buffer as
//!    it was at `k - delta_pi(k)`, forms `nu^k = A x_hat^k - b` and takes a
//!    projected step; otherwise `lambda^{k+1} = lambda^k`;
//! 3. with a tolerance set, the run stops at a coordinator slot with
//!    `||lambda^{k+1} - lambda^k|| <= tolerance`.
//!
//! With `k0 = 0` and exact agents this is plain synchronous dual decomposition,
//! and [`run_synchronous`] reproduces it bit for bit.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::problem::{CoupledProblem, LipschitzData};
use crate::schedule::AsyncSchedule;
use crate::subproblem::{InexactOracle, LocalSubproblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub alpha: f64,
    /// Stopping tolerance on `E_k`; `None` runs all `max_iters` ticks.
    pub tolerance: Option<f64>,
    pub max_iters: usize,
    pub k0: usize,
    pub eps_per_agent: Vec<f64>,
    pub seed: u64,
    pub record_every: usize,
    /// Starting multiplier; zero when absent.
    pub lambda0: Option<Vec<f64>>,
    pub oracle: InexactOracle,
}

impl RunConfig {
    /// Total inexactness `eps_D = sum_i eps_i`.
    pub fn eps_total(&self) -> f64 {
        self.eps_per_agent.iter().sum()
    }

    pub fn lambda0_vector(&self, m: usize) -> Result<DVector<f64>> {
        match &self.lambda0 {
            None => Ok(DVector::zeros(m)),
            Some(v) => {
                check_len("initial multiplier", m, v.len())?;
                if v.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "initial multiplier must be finite and nonnegative".into(),
                    ));
                }
                Ok(DVector::from_column_slice(v))
            }
        }
    }

    pub fn validate(&self, lips: &LipschitzData, n_agents: usize) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {}",
                self.alpha
            )));
        }
        let limit = lips.max_step_size(self.k0);
        if self.alpha >= limit {
            return Err(Error::StepSize {
                alpha: self.alpha,
                limit,
                k0: self.k0,
                lipschitz: lips.dual,
            });
        }
        if let Some(tol) = self.tolerance {
            if !(tol > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "tolerance must be positive, got {tol}"
                )));
            }
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if self.record_every < 1 {
            return Err(Error::InvalidConfig(
                "record_every must be at least 1".into(),
            ));
        }
        check_len("per-agent inexactness", n_agents, self.eps_per_agent.len())?;
        if let Some(&e) = self
            .eps_per_agent
            .iter()
            .find(|e| !(**e >= 0.0) || !e.is_finite())
        {
            return Err(Error::NegativeBudget(e));
        }
        Ok(())
    }
}

/// `[lambda + alpha nu]^+`.
pub fn dual_step(lambda: &DVector<f64>, nu: &DVector<f64>, alpha: f64) -> Result<DVector<f64>> {
    check_len("dual step direction", lambda.len(), nu.len())?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "step size must be positive, got {alpha}"
        )));
    }
    Ok(project_step(lambda, nu, alpha))
}

fn project_step(lambda: &DVector<f64>, nu: &DVector<f64>, alpha: f64) -> DVector<f64> {
    lambda.zip_map(nu, |l, v| (l + alpha * v).max(0.0))
}

/// One recorded tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub in_kd: bool,
    /// `lambda^k`.
    pub lambda: DVector<f64>,
    /// `lambda^{k+1}`.
    pub lambda_next: DVector<f64>,
    /// Agents' buffered answers `x~^k` after this tick's solves.
    pub x_tilde: DVector<f64>,
    /// Stale primal read by the coordinator, `x_hat^k` (coordinator slots only).
    pub x_hat: Option<DVector<f64>>,
    /// `nu^k = A x_hat^k - b` (coordinator slots only).
    pub nu: Option<DVector<f64>>,
    /// `E_k = ||sigma^k||`.
    pub e_k: f64,
    /// `S^k = sum_{kappa <= k} ||sigma^kappa||^2`.
    pub s_cum: f64,
    /// Running primal average over `K_D^k`.
    pub x_bar: DVector<f64>,
    /// Running dual average `lambda_bar^{k+1}` over `K_D^k`.
    pub lambda_bar: DVector<f64>,
    /// `|K_D^k|`.
    pub n_kd: usize,
    /// Largest composite staleness `k - (index of lambda behind x_hat_i)` over agents.
    pub staleness: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// `E_k <= tolerance` at coordinator slot `k`.
    Tolerance {
        k: usize,
    },
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub termination: Termination,
    /// Ticks executed.
    pub iterations: usize,
    pub record_every: usize,
    /// Largest composite staleness seen at any coordinator slot.
    pub max_staleness: usize,
    /// The last stale primal the coordinator used: the algorithm's answer.
    pub output: DVector<f64>,
    pub final_lambda: DVector<f64>,
}

impl RunTrace {
    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("a run records at least one row")
    }

    pub fn row_at(&self, k: usize) -> Option<&TraceRow> {
        self.rows
            .binary_search_by_key(&k, |r| r.k)
            .ok()
            .map(|i| &self.rows[i])
    }
}

/// Dense per-tick view of a schedule.
struct TickTable {
    /// `agent_delay[i][k]` is `Some(delta_di(k))` iff `k` is in agent `i`'s clock.
    agent_delay: Vec<Vec<Option<usize>>>,
    /// Position of `k` in the coordinator's slot list.
    coordinator_pos: Vec<Option<usize>>,
}

impl TickTable {
    fn new(schedule: &AsyncSchedule, ticks: usize) -> Self {
        let agent_delay = schedule
            .agent_slots
            .iter()
            .zip(&schedule.dual_delays)
            .map(|(slots, delays)| {
                let mut row = vec![None; ticks];
                for (&k, &d) in slots.iter().zip(delays) {
                    if k < ticks {
                        row[k] = Some(d);
                    }
                }
                row
            })
            .collect();
        let mut coordinator_pos = vec![None; ticks];
        for (pos, &k) in schedule.coordinator_slots.iter().enumerate() {
            if k < ticks {
                coordinator_pos[k] = Some(pos);
            }
        }
        Self {
            agent_delay,
            coordinator_pos,
        }
    }
}

/// Sliding window over the last `len` values indexed by tick.
struct Window<T> {
    items: VecDeque<T>,
    first: usize,
    len: usize,
}

impl<T> Window<T> {
    fn new(len: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(len + 1),
            first: 0,
            len,
        }
    }

    fn push(&mut self, item: T) {
        self.items.push_back(item);
        if self.items.len() > self.len {
            self.items.pop_front();
            self.first += 1;
        }
    }

    fn get(&self, k: usize) -> &T {
        &self.items[k - self.first]
    }
}

fn check_schedule(
    problem: &CoupledProblem,
    config: &RunConfig,
    schedule: &AsyncSchedule,
) -> Result<()> {
    if schedule.n_agents() != problem.n_agents() {
        return Err(Error::Schedule(format!(
            "schedule has {} agents, problem has {}",
            schedule.n_agents(),
            problem.n_agents()
        )));
    }
    if schedule.k0 != config.k0 {
        return Err(Error::Schedule(format!(
            "schedule k0 = {} but run config k0 = {}",
            schedule.k0, config.k0
        )));
    }
    if schedule.horizon + 1 < config.max_iters {
        return Err(Error::Schedule(format!(
            "schedule covers ticks 0..={} but the run needs {} ticks",
            schedule.horizon, config.max_iters
        )));
    }
    let violations = schedule.validate();
    if let Some(first) = violations.first() {
        return Err(Error::Schedule(format!(
            "{} violation(s), first: {first}",
            violations.len()
        )));
    }
    Ok(())
}

fn ensure_finite(v: &DVector<f64>, what: &'static str, k: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { what, k })
    }
}

/// Runs the asynchronous, inexact algorithm over `schedule`.
///
/// Tie-breaks of the inexact oracles draw from a ChaCha8 stream seeded with
/// `config.seed`, in agent order within each tick.
pub fn run(
    problem: &CoupledProblem,
    config: &RunConfig,
    schedule: &AsyncSchedule,
) -> Result<RunTrace> {
    let lips = problem.lipschitz_data();
    config.validate(&lips, problem.n_agents())?;
    check_schedule(problem, config, schedule)?;

    let n = problem.n();
    let window = config.k0 + 1;
    let ticks = config.max_iters;
    let table = TickTable::new(schedule, ticks);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let mut lambda = config.lambda0_vector(problem.m())?;
    let mut lambdas: Window<DVector<f64>> = Window::new(window);
    lambdas.push(lambda.clone());

    // buffered agent answers and the lambda index each was computed from
    let mut x_tilde = DVector::zeros(n);
    let mut source = vec![0usize; problem.n_agents()];
    let mut buffers: Window<(DVector<f64>, Vec<usize>)> = Window::new(window);

    let mut x_sum = DVector::zeros(n);
    let mut lambda_sum = DVector::zeros(problem.m());
    let mut n_kd = 0usize;
    let mut s_cum = 0.0;
    let mut max_staleness = 0;
    let mut output = DVector::zeros(n);
    let mut rows = Vec::with_capacity(ticks / config.record_every + 2);
    let mut termination = Termination::MaxIters;
    let mut iterations = 0;

    for k in 0..ticks {
        iterations = k + 1;
        for (i, agent) in problem.agents().iter().enumerate() {
            let Some(delay) = table.agent_delay[i][k] else {
                continue;
            };
            let read = lambdas.get(k - delay);
            let price = problem.price(i, read);
            let eps = config.eps_per_agent[i];
            let sol = if eps == 0.0 {
                agent.solve_exact(&price)?
            } else {
                agent.solve_inexact(&price, eps, config.oracle, &mut rng)?
            };
            x_tilde
                .rows_mut(problem.block(i).start, agent.dim())
                .copy_from_slice(&sol.x);
            source[i] = k - delay;
        }
        ensure_finite(&x_tilde, "agent solutions", k)?;
        buffers.push((x_tilde.clone(), source.clone()));

        let (lambda_next, x_hat, nu, staleness) = match table.coordinator_pos[k] {
            Some(pos) => {
                let mut x_hat = DVector::zeros(n);
                let mut stale = 0;
                for i in 0..problem.n_agents() {
                    let read_at = k - schedule.primal_delays[i][pos];
                    let (buffer, sources) = buffers.get(read_at);
                    let r = problem.block(i);
                    x_hat
                        .rows_mut(r.start, r.len())
                        .copy_from(&buffer.rows(r.start, r.len()));
                    stale = stale.max(k - sources[i]);
                }
                let nu = problem.residual_unchecked(&x_hat);
                let next = project_step(&lambda, &nu, config.alpha);
                ensure_finite(&next, "dual update", k)?;
                n_kd += 1;
                x_sum += &x_hat;
                lambda_sum += &next;
                max_staleness = max_staleness.max(stale);
                output.copy_from(&x_hat);
                (next, Some(x_hat), Some(nu), Some(stale))
            }
            None => (lambda.clone(), None, None, None),
        };

        let e_k = (&lambda_next - &lambda).norm();
        s_cum += e_k * e_k;
        let stop = x_hat.is_some() && config.tolerance.is_some_and(|tol| e_k <= tol);
        let last = stop || k + 1 == ticks;

        if k % config.record_every == 0 || last {
            let scale = 1.0 / n_kd as f64;
            rows.push(TraceRow {
                k,
                in_kd: x_hat.is_some(),
                lambda: lambda.clone(),
                lambda_next: lambda_next.clone(),
                x_tilde: x_tilde.clone(),
                x_hat,
                nu,
                e_k,
                s_cum,
                x_bar: &x_sum * scale,
                lambda_bar: &lambda_sum * scale,
                n_kd,
                staleness,
            });
        }

        lambda = lambda_next;
        lambdas.push(lambda.clone());
        if stop {
            termination = Termination::Tolerance { k };
            break;
        }
    }

    Ok(RunTrace {
        rows,
        termination,
        iterations,
        record_every: config.record_every,
        max_staleness,
        output,
        final_lambda: lambda,
    })
}

/// Re-derives `(x_bar^k, lambda_bar^{k+1})` from the stored rows.
///
/// Needs an unthinned trace (`record_every == 1`).
pub fn running_averages(trace: &RunTrace, k: usize) -> Result<(DVector<f64>, DVector<f64>)> {
    if trace.record_every != 1 {
        return Err(Error::Trace(format!(
            "trace thinned to every {} ticks; averages need every tick",
            trace.record_every
        )));
    }
    if trace.rows.last().is_none_or(|r| r.k < k) {
        return Err(Error::Trace(format!("iteration {k} was not recorded")));
    }
    let mut count = 0usize;
    let mut x_sum: Option<DVector<f64>> = None;
    let mut lambda_sum: Option<DVector<f64>> = None;
    for row in trace.rows.iter().take_while(|r| r.k <= k) {
        if let Some(x_hat) = &row.x_hat {
            count += 1;
            match (&mut x_sum, &mut lambda_sum) {
                (Some(xs), Some(ls)) => {
                    *xs += x_hat;
                    *ls += &row.lambda_next;
                }
                _ => {
                    x_sum = Some(x_hat.clone());
                    lambda_sum = Some(row.lambda_next.clone());
                }
            }
        }
    }
    match (x_sum, lambda_sum) {
        (Some(xs), Some(ls)) => {
            let scale = 1.0 / count as f64;
            Ok((xs * scale, ls * scale))
        }
        _ => Err(Error::Trace(format!(
            "no coordinator slot up to iteration {k}"
        ))),
    }
}

/// Iterates of the plain synchronous, exact algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncRun {
    /// `lambda^0, lambda^1, ...` (one more than `primals`).
    pub lambdas: Vec<DVector<f64>>,
    /// `x^k = x(lambda^k)`.
    pub primals: Vec<DVector<f64>>,
    pub errors: Vec<f64>,
    pub converged: bool,
}

/// Synchronous exact dual decomposition written out directly, with no schedule
/// machinery.
pub fn run_synchronous(
    problem: &CoupledProblem,
    alpha: f64,
    lambda0: DVector<f64>,
    max_iters: usize,
    tolerance: Option<f64>,
) -> Result<SyncRun> {
    check_len("initial multiplier", problem.m(), lambda0.len())?;
    let mut out = SyncRun {
        lambdas: vec![lambda0],
        primals: Vec::new(),
        errors: Vec::new(),
        converged: false,
    };
    for _ in 0..max_iters {
        let lambda = out.lambdas.last().unwrap();
        let mut x = DVector::zeros(problem.n());
        for (i, agent) in problem.agents().iter().enumerate() {
            let sol = agent.solve_exact(&problem.price(i, lambda))?;
            x.rows_mut(problem.block(i).start, agent.dim())
                .copy_from_slice(&sol.x);
        }
        let next = dual_step(lambda, &problem.residual(&x)?, alpha)?;
        let e = (&next - lambda).norm();
        out.primals.push(x);
        out.errors.push(e);
        out.lambdas.push(next);
        if tolerance.is_some_and(|t| e <= t) {
            out.converged = true;
            break;
        }
    }
    Ok(out)
}
