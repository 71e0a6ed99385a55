//! Exact and inexact agent solves on one benchmark source.
//!
//! ```text
//! cargo run --example subproblem_oracles
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ddopt::subproblem::{InexactOracle, LocalSubproblem};
use ddopt::BoxQuadraticAgent;

fn main() {
    // source 1 of the benchmark, priced by three busy links
    let agent = BoxQuadraticAgent::scalar(1.8, 5.9, -62.658, 0.0, 5.9).unwrap();
    let price = [3.0];
    let exact = agent.solve_exact(&price).unwrap();
    println!(
        "exact: x = {:.6}, L = {:.6}",
        exact.x[0], exact.lagrangian_value
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for eps in [0.1, 0.5, 2.0, 10.0] {
        for oracle in [InexactOracle::Boxed, InexactOracle::LevelSet] {
            let r = agent.solve_inexact(&price, eps, oracle, &mut rng).unwrap();
            let gap = r.lagrangian_value - exact.lagrangian_value;
            let dist2 = (r.x[0] - exact.x[0]).powi(2);
            println!(
                "eps = {eps:>4}, {oracle:?}: x = {:.6}, gap = {gap:.6}, |x - x*|^2 = {dist2:.6} <= {:.6}",
                r.x[0],
                2.0 * eps / agent.strong_convexity()
            );
        }
    }
}
