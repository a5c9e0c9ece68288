//! Solves a case with reduce-then-linearize and shows that every iterate
//! satisfies the power flow equations.
//!
//! ```text
//! cargo run --release --example solve_redlin -- data/case118.m
//! ```

use condensed_opf::ipm::{solve, Algorithm, SolverOptions};
use condensed_opf::matpower::{read_case, to_per_unit, ConversionOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let path = std::env::args().nth(1).unwrap_or_else(|| format!("{}/data/case30.m", env!("CARGO_MANIFEST_DIR")));
    let net = to_per_unit(&read_case(&path)?, ConversionOptions::default())?;
    let report = solve(&net, Algorithm::RedLin, &SolverOptions::default());

    println!("{:>4} {:>16} {:>10} {:>10} {:>12}", "iter", "objective", "primal", "dual", "|g|_inf");
    for rec in &report.trace {
        println!(
            "{:>4} {:>16.6} {:>10.2e} {:>10.2e} {:>12.2e}",
            rec.iteration, rec.objective, rec.primal_inf, rec.dual_inf, rec.state_residual
        );
    }
    let worst = report.trace.iter().map(|r| r.state_residual).fold(0.0_f64, f64::max);
    println!("{} after {} iterations, objective {:.6}", report.status, report.iterations, report.objective);
    println!("largest power flow residual over the path: {worst:.2e}");
    println!("time in power flow projections: {:.3}s of {:.3}s", report.timings.power_flow, report.timings.total);
    Ok(())
}
