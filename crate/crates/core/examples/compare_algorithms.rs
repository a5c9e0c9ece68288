//! Solves one case with every algorithm and prints a comparison table.
//!
//! ```text
//! cargo run --release --example compare_algorithms -- data/case30.m
//! ```

use condensed_opf::ipm::{solve, Algorithm, SolverOptions};
use condensed_opf::matpower::{read_case, to_per_unit, ConversionOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let path = std::env::args().nth(1).unwrap_or_else(|| format!("{}/data/case9.m", env!("CARGO_MANIFEST_DIR")));
    let net = to_per_unit(&read_case(&path)?, ConversionOptions::default())?;
    let opts = SolverOptions::default();
    println!(
        "{:<8} {:>14} {:>6} {:>20} {:>10} {:>10} {:>9}",
        "algo", "status", "iters", "objective", "primal", "dual", "time (s)"
    );
    for algorithm in Algorithm::ALL {
        let r = solve(&net, algorithm, &opts);
        println!(
            "{:<8} {:>14} {:>6} {:>20.10} {:>10.2e} {:>10.2e} {:>9.3}",
            algorithm.name(),
            r.status.to_string(),
            r.iterations,
            r.objective,
            r.primal_inf,
            r.dual_inf,
            r.timings.total
        );
    }
    Ok(())
}
