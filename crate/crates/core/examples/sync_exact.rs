//! Plain dual decomposition: synchronous coordinator, exact agents, stopped
//! when the multiplier stops moving.
//!
//! ```text
//! cargo run --example sync_exact
//! ```

use ddopt::engine::{run, RunConfig, Termination};
use ddopt::reference::solve_reference;
use ddopt::{build_num, AsyncSchedule, Scenario};

fn main() -> ddopt::Result<()> {
    let problem = build_num();
    let reference = solve_reference(&problem, &problem.lipschitz_data())?;
    let config = RunConfig {
        tolerance: Some(1e-8),
        ..Scenario::SyncExact.config_for(problem.n_agents())
    };
    let trace = run(
        &problem,
        &config,
        &AsyncSchedule::synchronous(6, config.max_iters),
    )?;

    match trace.termination {
        Termination::Tolerance { k } => println!("stopped at k = {k}"),
        Termination::MaxIters => println!("ran all {} iterations", trace.iterations),
    }
    let last = trace.last();
    println!("x       = {:.5?}", trace.output.as_slice());
    println!("x*      = {:.5?}", reference.x_star.as_slice());
    println!("lambda  = {:.5?}", last.lambda_next.as_slice());
    println!("lambda* = {:.5?}", reference.lambda_star.as_slice());
    println!(
        "||x - x*||     = {:.3e}",
        (&trace.output - &reference.x_star).norm()
    );
    println!(
        "||x_bar - x*|| = {:.3e}",
        (&last.x_bar - &reference.x_star).norm()
    );
    Ok(())
}
