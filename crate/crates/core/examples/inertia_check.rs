//! Compares the inertia of the augmented KKT matrix with the outcome of a
//! Cholesky factorization of the condensed matrix, then shows the
//! regularization needed when the Hessian is made indefinite.
//!
//! ```text
//! cargo run --example inertia_check
//! ```

use condensed_opf::dense::{eigen_inertia, Cholesky};
use condensed_opf::kkt::reference::{augmented_dense, condensed_dense};
use condensed_opf::kkt::{augmented_inertia_target, FullSpaceSolver, KktBlocks};
use condensed_opf::matpower::{read_case, to_per_unit, ConversionOptions};
use condensed_opf::model::{Multipliers, OpfModel, StateBounds};
use condensed_opf::sparse::KernelStats;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| format!("{}/data/case9.m", env!("CARGO_MANIFEST_DIR")));
    let net = to_per_unit(&read_case(&path)?, ConversionOptions::default())?;
    let model = OpfModel::new(net, StateBounds::Variables);
    let (u, x) = model.initial_point();
    let (n_u, n_x, m) = (model.n_controls(), model.n_states(), model.n_constraints());
    let target = augmented_inertia_target(n_u, n_x, m);
    println!("target inertia (+, -, 0) = ({}, {}, {})", target.positive, target.negative, target.zero);

    for scale in [0.0, 10.0, 1000.0] {
        let lambda = vec![scale; n_x];
        let y = vec![0.0; m];
        let bundle = model.derivatives(&u, &x, Some(Multipliers { objective: 1e-3, state: &lambda, constraints: &y }));
        let (sigma_u, sigma_x, sigma_s) = (vec![1.0; n_u], vec![0.1; n_x], vec![1.0; m]);
        let blocks = KktBlocks { bundle: &bundle, sigma_u: &sigma_u, sigma_x: &sigma_x, sigma_s: &sigma_s };

        let inertia = eigen_inertia(&augmented_dense(&blocks), 1e-9);
        let definite = Cholesky::factorize(&condensed_dense(&blocks)).is_some();
        let f = FullSpaceSolver::default().factor(&blocks, 0.0, None, &mut KernelStats::default())?;
        println!(
            "multipliers {scale:>5}: inertia ({}, {}, {}), condensed Cholesky {}, regularization {:.1e} after {} attempts",
            inertia.positive,
            inertia.negative,
            inertia.zero,
            if definite { "succeeds" } else { "fails" },
            f.delta,
            f.attempts
        );
    }
    Ok(())
}
