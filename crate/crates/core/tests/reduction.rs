mod common;

use common::{case_instance, model, random_instance};
use condensed_opf::kkt::reference::condensed_dense;
use condensed_opf::kkt::{assemble_condensed, batched_reduce, naive_reduce, ReducedSystem};
use condensed_opf::lu::SparseLu;
use condensed_opf::model::StateBounds;
use condensed_opf::sparse::KernelStats;
use nalgebra::DMatrix;

fn max_entry_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

#[test]
fn batched_reduction_matches_dense_sensitivity_on_cases() {
    for case in ["case9", "case30", "case118"] {
        let m = model(case, StateBounds::Variables);
        let inst = case_instance(&m, 11);
        let blocks = inst.blocks();
        let k = assemble_condensed(&blocks);
        let b = &inst.bundle;
        let oracle = naive_reduce(&k, &b.state_jac_x, &b.state_jac_u);
        let lu = SparseLu::factorize(&b.state_jac_x).unwrap();
        let n_u = m.n_controls();
        for batch in [1, 8, 32] {
            let mut stats = KernelStats::default();
            let reduced = batched_reduce(&k, &lu, &b.state_jac_u, &b.state_jac_u.transpose(), batch, &mut stats);
            assert!(max_entry_diff(&reduced, &oracle) < 1e-10, "{case} N={batch}");
            let products = n_u.div_ceil(batch);
            assert_eq!((stats.spmm, stats.spsm), (7 * products, 4 * products), "{case} N={batch}");
        }
    }
}

#[test]
fn reduced_system_includes_slack_condensation() {
    let inst = random_instance(21, 9, 30, 12, 0.0);
    let lu = SparseLu::factorize(&inst.bundle.state_jac_x).unwrap();
    let mut stats = KernelStats::default();
    let sys = ReducedSystem::new(inst.blocks(), &lu, 4, &mut stats);
    let oracle = condensed_dense(&inst.blocks());
    assert!(max_entry_diff(sys.reduced_matrix(), &oracle) < 1e-10);
    assert_eq!(stats.spmm, 7 * 3);
    assert_eq!(stats.spsm, 4 * 3);
}

#[test]
fn batch_size_does_not_change_result() {
    let inst = random_instance(22, 17, 40, 10, 0.5);
    let k = assemble_condensed(&inst.blocks());
    let b = &inst.bundle;
    let lu = SparseLu::factorize(&b.state_jac_x).unwrap();
    let gut = b.state_jac_u.transpose();
    let mut stats = KernelStats::default();
    let whole = batched_reduce(&k, &lu, &b.state_jac_u, &gut, 17, &mut stats);
    for batch in [1, 2, 5, 16, 256] {
        let other = batched_reduce(&k, &lu, &b.state_jac_u, &gut, batch, &mut stats);
        assert!(max_entry_diff(&other, &whole) < 1e-12);
    }
}
