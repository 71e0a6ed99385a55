//! A hand-built problem: two agents sharing one budget, saved to TOML and
//! solved with an asynchronous, inexact run.
//!
//! ```text
//! cargo run --example custom_problem
//! ```

use nalgebra::{DMatrix, DVector};

use ddopt::config::{load_problem, save_problem};
use ddopt::engine::{run, RunConfig};
use ddopt::reference::solve_reference;
use ddopt::subproblem::InexactOracle;
use ddopt::{generate_schedule, BoxQuadraticAgent, CoupledProblem};

fn main() -> ddopt::Result<()> {
    // each agent wants 3 units of two goods; together they may use 4 of each
    let agent = || {
        BoxQuadraticAgent::new(
            vec![1.0, 2.0],
            vec![3.0, 3.0],
            0.0,
            vec![0.0; 2],
            vec![5.0; 2],
        )
    };
    let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    let problem = CoupledProblem::new(
        vec![agent()?, agent()?],
        a,
        DVector::from_vec(vec![4.0, 4.0]),
    )?;

    let path = std::env::temp_dir().join("ddopt_custom_problem.toml");
    save_problem(&problem, &path)?;
    let problem = load_problem(&path)?;
    println!("saved and reloaded {}", path.display());

    let lips = problem.lipschitz_data();
    let k0 = 2;
    let config = RunConfig {
        alpha: 0.5 * lips.max_step_size(k0),
        tolerance: None,
        max_iters: 20_000,
        k0,
        eps_per_agent: vec![0.01, 0.01],
        seed: 7,
        record_every: 1,
        lambda0: None,
        oracle: InexactOracle::Boxed,
    };
    let schedule = generate_schedule(2, config.max_iters, k0, config.seed)?;
    let trace = run(&problem, &config, &schedule)?;
    let reference = solve_reference(&problem, &lips)?;

    println!("alpha = {:.4}", config.alpha);
    println!("x_bar   = {:.4?}", trace.last().x_bar.as_slice());
    println!("x*      = {:.4?}", reference.x_star.as_slice());
    println!("lambda* = {:.4?}", reference.lambda_star.as_slice());
    Ok(())
}
