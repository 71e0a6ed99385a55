//! Stale reads and inexact agents. The dual iterate keeps moving, so the
//! accumulated movement `S^k` grows like `k` and the running averages settle
//! into a neighbourhood of the optimum rather than onto it.
//!
//! ```text
//! cargo run --release --example async_inexact
//! ```

use ddopt::engine::run;
use ddopt::reference::{metrics, solve_reference};
use ddopt::{build_num, generate_schedule, Scenario};

fn main() -> ddopt::Result<()> {
    let problem = build_num();
    let reference = solve_reference(&problem, &problem.lipschitz_data())?;
    let config = Scenario::AsyncInexact.config_for(problem.n_agents());
    let schedule = generate_schedule(problem.n_agents(), config.max_iters, config.k0, config.seed)?;
    let trace = run(&problem, &config, &schedule)?;

    println!(
        "largest staleness seen: {} (2 k0 = {})",
        trace.max_staleness,
        2 * config.k0
    );
    println!(
        "{:>7} {:>10} {:>10} {:>11} {:>11}",
        "k", "sqrt(S)", "violation", "F - F*", "|x - x*|^2"
    );
    for k in [99, 999, 9_999, 99_999] {
        let row = trace.row_at(k).expect("every tick recorded");
        let m = metrics(&reference, &problem, &row.x_bar, &row.lambda_bar)?;
        println!(
            "{k:>7} {:>10.4} {:>10.2e} {:>11.3e} {:>11.3e}",
            row.s_cum.sqrt(),
            m.violation_norm,
            m.primal_dev,
            m.xdev_sq
        );
    }
    Ok(())
}
