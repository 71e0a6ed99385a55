//! The network utility maximization benchmark: routes, capacities and the
//! constants that govern admissible step sizes.
//!
//! ```text
//! cargo run --example num_instance
//! ```

use ddopt::num::NumInstance;

fn main() {
    let net = NumInstance::benchmark_network();
    let problem = net.to_problem().expect("valid instance");

    println!("{} sources, {} links", problem.n_agents(), problem.m());
    for (i, (path, s)) in net.paths.iter().zip(&net.sources).enumerate() {
        let route: Vec<String> = path.iter().map(|l| format!("E{}", l + 1)).collect();
        println!(
            "  source {}: rate in [{}, {}], cost {} (x - {})^2 - {}, route {}",
            i + 1,
            s.lower,
            s.upper,
            s.c_a,
            s.upper,
            s.c_b,
            route.join(" -> ")
        );
    }
    println!("capacities b = {:?}", net.link_capacities);

    let lips = problem.lipschitz_data();
    println!("||A||_F^2 = {}", lips.frob_a * lips.frob_a);
    println!("c_F = {}, L_D = {}", lips.c_f, lips.dual);
    for k0 in [0, 1, 4, 8] {
        println!("  k0 = {k0}: alpha < {:.6}", lips.max_step_size(k0));
    }
}
