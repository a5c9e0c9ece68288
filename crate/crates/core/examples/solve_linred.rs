//! Solves a case with linearize-then-reduce and prints the iteration log
//! and the generator dispatch.
//!
//! ```text
//! cargo run --release --example solve_linred -- data/case118.m
//! ```

use condensed_opf::ipm::{solve, Algorithm, SolverOptions};
use condensed_opf::matpower::{read_case, to_per_unit, ConversionOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let path = std::env::args().nth(1).unwrap_or_else(|| format!("{}/data/case30.m", env!("CARGO_MANIFEST_DIR")));
    let net = to_per_unit(&read_case(&path)?, ConversionOptions::default())?;
    let report = solve(&net, Algorithm::LinRed, &SolverOptions::default());

    println!(
        "{:>4} {:>16} {:>10} {:>10} {:>10} {:>9} {:>8}",
        "iter", "objective", "primal", "dual", "mu", "alpha", "delta"
    );
    for rec in &report.trace {
        println!(
            "{:>4} {:>16.6} {:>10.2e} {:>10.2e} {:>10.2e} {:>9.2e} {:>8.1e}",
            rec.iteration, rec.objective, rec.primal_inf, rec.dual_inf, rec.mu, rec.alpha_primal, rec.delta
        );
    }
    println!("{} after {} iterations, objective {:.6}", report.status, report.iterations, report.objective);
    println!(
        "reduction {:.3}s, factorization {:.3}s of {:.3}s total",
        report.timings.reduction, report.timings.factorization, report.timings.total
    );
    let base = net.base_mva();
    for (g, gen) in net.generators().iter().enumerate() {
        println!(
            "generator {g:>3} at bus {:>4}: {:>9.3} MW {:>9.3} MVAr",
            gen.bus,
            report.solution.pg[g] * base,
            report.solution.qg[g] * base
        );
    }
    Ok(())
}
