//! Measured quantities against their closed-form envelopes for one scenario.
//!
//! ```text
//! cargo run --release --example envelope_check -- async_exact
//! ```

use ddopt::experiment::{dominance_failures, run_experiment, ExperimentSpec, Metric};
use ddopt::Scenario;

fn main() -> ddopt::Result<()> {
    let sc: Scenario = std::env::args()
        .nth(1)
        .as_deref()
        .unwrap_or("async_inexact")
        .parse()?;
    let exp = run_experiment(&ExperimentSpec::scenario(sc))?;
    let c = &exp.constants;
    println!("{sc}: gamma_alpha = {:.3}", c.gamma_alpha);
    println!(
        "M_1/2 = {:.4}, M_1 = {:.4}, N_0 = {:.4}, N_1/2 = {:.4}, N_1 = {:.4}, N_1' = {:.4}",
        c.m_half, c.m_one, c.n_zero, c.n_half, c.n_one, c.n_one_prime
    );

    for k in [0usize, 99, 9_999, 99_999] {
        let r = &exp.rows[k];
        let b = r.bounds.unwrap();
        println!("k = {k}");
        println!("  sqrt(S)   {:>12.5e} <= {:>12.5e}", r.sqrt_s, b.sqrt_s);
        println!(
            "  violation {:>12.5e} <= {:>12.5e}",
            r.violation, b.violation
        );
        println!(
            "  F - F*    {:>12.5e} in [{:.5e}, {:.5e}]",
            r.primal_dev, b.primal_lower, b.primal_upper
        );
        println!("  D* - D    {:>12.5e} <= {:>12.5e}", r.dual_dev, b.dual);
    }
    for m in Metric::ALL {
        println!(
            "{:<20} {} rows outside",
            m.name(),
            dominance_failures(&exp.rows, m).unwrap()
        );
    }
    Ok(())
}
