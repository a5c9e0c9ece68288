//! Reads a MATPOWER case, converts it to per unit and prints the network
//! summary and the control/state partition.
//!
//! ```text
//! cargo run --example parse_case -- data/case118.m
//! ```

use condensed_opf::matpower::{read_case, to_per_unit, ConversionOptions};
use condensed_opf::model::{OpfModel, StateBounds};
use condensed_opf::network::BusRole;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| format!("{}/data/case9.m", env!("CARGO_MANIFEST_DIR")));
    let case = read_case(&path)?;
    let (buses, branches, gens) = case.counts();
    println!("{path}: {buses} buses, {gens} generators, {branches} branches, base {} MVA", case.base_mva);

    let net = to_per_unit(&case, ConversionOptions::default())?;
    let count = |role| net.roles().iter().filter(|&&r| r == role).count();
    println!(
        "roles: reference bus {}, {} generator buses, {} load buses",
        net.reference(),
        count(BusRole::Generator),
        count(BusRole::Load)
    );
    println!("admittance matrix: {} nonzeros", net.ybus().nnz());

    let model = OpfModel::new(net, StateBounds::Variables);
    println!(
        "n_u = {}, n_x = {}, inequality rows = {} ({} rate-limited lines)",
        model.n_controls(),
        model.n_states(),
        model.n_constraints(),
        model.limited_lines().len()
    );
    Ok(())
}
