mod common;

use common::{model, random_vec, rng};
use condensed_opf::lu::SparseLu;
use condensed_opf::model::StateBounds;
use condensed_opf::powerflow::{adjoint_solve, newton_raphson, NewtonOptions, PowerFlowSolver};
use condensed_opf::sparse::KernelStats;
use nalgebra::DMatrix;

#[test]
fn state_jacobian_solve_round_trip_case118() {
    let m = model("case118", StateBounds::Variables);
    let (u, x) = m.initial_point();
    let (_, gx) = m.state_system(&u, &x);
    let lu = SparseLu::factorize(&gx).unwrap();
    let b = random_vec(&mut rng(5), m.n_states(), -1.0, 1.0);
    let sol = lu.solve(&b);
    let back = gx.mul_vec(&sol);
    let err = back.iter().zip(&b).fold(0.0_f64, |e, (a, c)| e.max((a - c).abs()));
    assert!(err < 1e-10, "{err}");
    let lam = adjoint_solve(&lu, &b);
    let back = gx.tr_mul_vec(&lam);
    let err = back.iter().zip(&b).fold(0.0_f64, |e, (a, c)| e.max((a + c).abs()));
    assert!(err < 1e-10, "{err}");
}

#[test]
fn batched_solve_equals_column_solves() {
    let m = model("case30", StateBounds::Variables);
    let (u, x) = m.initial_point();
    let (_, gx) = m.state_system(&u, &x);
    let lu = SparseLu::factorize(&gx).unwrap();
    let n = m.n_states();
    let data = random_vec(&mut rng(6), n * 5, -1.0, 1.0);
    let b = DMatrix::from_column_slice(n, 5, &data);
    let mut stats = KernelStats::default();
    let batch = lu.solve_batch(&b, &mut stats);
    let batch_t = lu.solve_transpose_batch(&b, &mut stats);
    for j in 0..5 {
        let col: Vec<f64> = b.column(j).iter().copied().collect();
        assert_eq!(batch.column(j).as_slice(), lu.solve(&col).as_slice());
        assert_eq!(batch_t.column(j).as_slice(), lu.solve_transpose(&col).as_slice());
    }
    // each batched solve is one lower and one upper triangular sweep
    assert_eq!(stats.spsm, 4);
}

#[test]
fn newton_from_flat_start_converges_on_all_cases() {
    for case in ["case9", "case14", "case30", "case57", "case118", "case300"] {
        let m = model(case, StateBounds::Variables);
        let (u, x0) = m.initial_point();
        let n_angles = m.partition().angle_buses().len();
        let flat: Vec<f64> = (0..x0.len()).map(|k| if k < n_angles { 0.0 } else { 1.0 }).collect();
        let out = newton_raphson(&m, &u, &flat, NewtonOptions::default()).unwrap();
        assert!(out.residual() <= 1e-10, "{case}");
        assert!(out.iterations <= 10, "{case}: {} iterations", out.iterations);
    }
}

#[test]
fn solver_reuses_symbolic_analysis() {
    let m = model("case118", StateBounds::Constraints);
    let (u, x0) = m.initial_point();
    let mut pf = PowerFlowSolver::new();
    let first = pf.solve(&m, &u, &x0, NewtonOptions::default()).unwrap();
    let u2: Vec<f64> = u.iter().map(|v| v * 1.001).collect();
    let second = pf.solve(&m, &u2, &first.x, NewtonOptions::default()).unwrap();
    assert!(second.residual() <= 1e-10);
    assert!(pf.refactorizations() >= first.iterations + second.iterations - 1);
}

#[test]
fn divergence_is_reported() {
    let m = model("case9", StateBounds::Variables);
    let (u, x0) = m.initial_point();
    let wild: Vec<f64> = u.iter().map(|v| v * 40.0).collect();
    let res = newton_raphson(&m, &wild, &x0, NewtonOptions { tol: 1e-10, max_iter: 3 });
    assert!(res.is_err());
}
