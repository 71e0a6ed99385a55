//! Ground truth for the benchmark from two independent dual solvers.
//!
//! ```text
//! cargo run --example reference_solution
//! ```

use ddopt::build_num;
use ddopt::reference::{solve_reference, solve_reference_coordinate};

fn main() -> ddopt::Result<()> {
    let problem = build_num();
    let pga = solve_reference(&problem, &problem.lipschitz_data())?;
    let cd = solve_reference_coordinate(&problem, 1e-13, 1_000_000)?;

    println!("x*      = {:.8?}", pga.x_star.as_slice());
    println!("lambda* = {:.8?}", pga.lambda_star.as_slice());
    println!("F* = {:.10}, D* = {:.10}", pga.f_star, pga.d_star);
    println!("projected gradient: {} iterations", pga.report.iterations);
    println!("coordinate ascent:  {} sweeps", cd.report.iterations);
    println!(
        "solver disagreement {:.2e}",
        (&pga.lambda_star - &cd.lambda_star).amax()
    );
    println!("feasibility {:.2e}", pga.feasibility_residual(&problem)?);
    println!("slackness   {:.2e}", pga.complementary_slackness(&problem)?);
    Ok(())
}
