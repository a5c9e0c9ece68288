//! Forms the reduced Hessian `K̂_uu` with batched sensitivity products and
//! reports the kernel counts and time for several batch sizes.
//!
//! ```text
//! cargo run --release --example batched_reduction -- data/case300.m
//! ```

use std::time::Instant;

use condensed_opf::kkt::{assemble_condensed, batched_reduce, naive_reduce, KktBlocks};
use condensed_opf::lu::SparseLu;
use condensed_opf::matpower::{read_case, to_per_unit, ConversionOptions};
use condensed_opf::model::{Multipliers, OpfModel, StateBounds};
use condensed_opf::sparse::KernelStats;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| format!("{}/data/case118.m", env!("CARGO_MANIFEST_DIR")));
    let net = to_per_unit(&read_case(&path)?, ConversionOptions::default())?;
    let model = OpfModel::new(net, StateBounds::Variables);
    let (u, x) = model.initial_point();

    let lambda = vec![0.5; model.n_states()];
    let y = vec![0.1; model.n_constraints()];
    let weights = Multipliers { objective: 1e-3, state: &lambda, constraints: &y };
    let bundle = model.derivatives(&u, &x, Some(weights));
    let sigma_u = vec![1.0; model.n_controls()];
    let sigma_x = vec![0.1; model.n_states()];
    let sigma_s = vec![1.0; model.n_constraints()];
    let blocks = KktBlocks { bundle: &bundle, sigma_u: &sigma_u, sigma_x: &sigma_x, sigma_s: &sigma_s };

    let k = assemble_condensed(&blocks);
    let lu = SparseLu::factorize(&bundle.state_jac_x)?;
    let g_u_t = bundle.state_jac_u.transpose();
    let oracle = naive_reduce(&k, &bundle.state_jac_x, &bundle.state_jac_u);
    println!("n_u = {}, n_x = {}", model.n_controls(), model.n_states());
    println!("{:>6} {:>8} {:>8} {:>12} {:>10}", "N", "spmm", "spsm", "max diff", "time (ms)");
    for batch in [1, 8, 32, 256] {
        let mut stats = KernelStats::default();
        let start = Instant::now();
        let reduced = batched_reduce(&k, &lu, &bundle.state_jac_u, &g_u_t, batch, &mut stats);
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let diff = (&reduced - &oracle).amax();
        println!("{batch:>6} {:>8} {:>8} {diff:>12.2e} {ms:>10.2}", stats.spmm, stats.spsm);
    }
    Ok(())
}
