//! Solves the power flow at the case's dispatch with Newton–Raphson, then
//! uses the final factorization for an adjoint solve.
//!
//! ```text
//! cargo run --example power_flow -- data/case300.m
//! ```

use condensed_opf::lu::SparseLu;
use condensed_opf::matpower::{read_case, to_per_unit, ConversionOptions};
use condensed_opf::model::{OpfModel, StateBounds};
use condensed_opf::powerflow::{adjoint_solve, NewtonOptions, PowerFlowSolver};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| format!("{}/data/case30.m", env!("CARGO_MANIFEST_DIR")));
    let net = to_per_unit(&read_case(&path)?, ConversionOptions::default())?;
    let model = OpfModel::new(net, StateBounds::Variables);
    let (u, x0) = model.initial_point();

    let mut solver = PowerFlowSolver::new();
    let outcome = solver.solve(&model, &u, &x0, NewtonOptions::default())?;
    for (k, r) in outcome.residuals.iter().enumerate() {
        println!("iteration {k:>2}: |g|_inf = {r:.3e}");
    }

    let (vm, va) = model.voltages(&u, &outcome.x);
    let (lo, hi) = vm.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let spread = va.iter().fold(0.0_f64, |m, a| m.max(a.abs())).to_degrees();
    println!("voltage magnitudes in [{lo:.4}, {hi:.4}] p.u., largest angle {spread:.2} deg");
    println!("objective at this dispatch: {:.4}", model.objective(&u, &outcome.x));

    // sensitivity of the cost to the states, through the transpose system
    let bundle = model.derivatives(&u, &outcome.x, None);
    let lu = SparseLu::factorize(&bundle.state_jac_x)?;
    let lambda = adjoint_solve(&lu, &bundle.grad_x);
    let largest = lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    println!("adjoint multipliers: largest magnitude {largest:.4}");
    Ok(())
}
