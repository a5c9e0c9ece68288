//! Acceptance suite. Prints one line per criterion and exits with a
//! nonzero status if any criterion fails.

mod common;

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use common::fd::{first_derivative_error, hessian_product_error, perturbed_point, reduced_gradient_error};
use common::{case_instance, model, network, random_instance, reference_objective, rel_diff, rel_diff_vec, rng};
use condensed_opf::dense::{eigen_inertia, Cholesky};
use condensed_opf::ipm::{solve, Algorithm, SolveReport, SolverOptions, Status};
use condensed_opf::kkt::reference::{augmented_dense, augmented_step, condensed_dense};
use condensed_opf::kkt::{assemble_condensed, augmented_inertia_target, batched_reduce, naive_reduce, ReducedSystem};
use condensed_opf::lu::SparseLu;
use condensed_opf::model::StateBounds;
use condensed_opf::sparse::KernelStats;
use rand::Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Solves shared by several criteria, computed once.
struct Solves {
    opts: SolverOptions,
    reports: HashMap<(&'static str, Algorithm), SolveReport>,
}

impl Solves {
    fn new() -> Self {
        Self { opts: SolverOptions { record_iterates: true, ..Default::default() }, reports: HashMap::new() }
    }

    fn get(&mut self, case: &'static str, algorithm: Algorithm) -> &SolveReport {
        let opts = &self.opts;
        self.reports.entry((case, algorithm)).or_insert_with(|| solve(&network(case), algorithm, opts))
    }
}

fn dimensions() -> Outcome {
    let mut found = Vec::new();
    for (case, expected) in [("case118", (181, 107)), ("case300", (530, 137))] {
        let m = model(case, StateBounds::Variables);
        let got = (m.n_states(), m.n_controls());
        ensure!(got == expected, "{case}: (n_x, n_u) = {got:?}, expected {expected:?}");
        found.push(format!("{case} n_x={} n_u={}", got.0, got.1));
    }
    Ok(found.join(", "))
}

fn convergence(solves: &mut Solves) -> Outcome {
    let tol = solves.opts.tol;
    let mut worst_gap = 0.0_f64;
    for case in ["case9", "case30", "case118", "case300"] {
        for algorithm in Algorithm::ALL {
            let r = solves.get(case, algorithm);
            ensure!(r.status == Status::Optimal, "{case} {algorithm}: {}", r.status);
            ensure!(
                r.primal_inf <= tol && r.dual_inf <= tol,
                "{case} {algorithm}: primal {:e}, dual {:e}",
                r.primal_inf,
                r.dual_inf
            );
            worst_gap = worst_gap.max(rel_diff(r.objective, reference_objective(case)));
        }
    }
    let iterations = solves.get("case118", Algorithm::LinRed).iterations;
    ensure!((8..=40).contains(&iterations), "case118 linred took {iterations} iterations");
    Ok(format!(
        "12 solves optimal, case118 linred {iterations} iterations, max gap to reference objective {worst_gap:.1e}"
    ))
}

fn equivalence(solves: &mut Solves) -> Outcome {
    let mut compared = Vec::new();
    for case in ["case9", "case30"] {
        let full = solves.get(case, Algorithm::FullSpace).trace.clone();
        let linred = &solves.get(case, Algorithm::LinRed).trace;
        let mut count = 0;
        for (a, b) in full.iter().zip(linred) {
            if a.delta > 0.0 || b.delta > 0.0 {
                break;
            }
            let wa: Vec<f64> = a.u.iter().chain(&a.x).flatten().copied().collect();
            let wb: Vec<f64> = b.u.iter().chain(&b.x).flatten().copied().collect();
            let diff = rel_diff_vec(&wa, &wb);
            ensure!(diff <= 1e-6, "{case} iteration {}: iterates differ by {diff:.2e}", a.iteration);
            count += 1;
        }
        ensure!(count > 0, "{case}: no unregularized iterates to compare");
        compared.push(format!("{case} {count} iterates"));
    }
    for case in ["case9", "case30", "case118"] {
        let base = solves.get(case, Algorithm::FullSpace).objective;
        for algorithm in [Algorithm::LinRed, Algorithm::RedLin] {
            let gap = rel_diff(solves.get(case, algorithm).objective, base);
            ensure!(gap <= 1e-6, "{case}: {algorithm} objective differs from full by {gap:.2e}");
        }
    }
    Ok(format!("{}, objectives agree on case9/case30/case118", compared.join(", ")))
}

fn reduction() -> Outcome {
    let mut worst = 0.0_f64;
    for case in ["case9", "case30", "case118"] {
        let m = model(case, StateBounds::Variables);
        let inst = case_instance(&m, 11);
        let k = assemble_condensed(&inst.blocks());
        let b = &inst.bundle;
        let oracle = naive_reduce(&k, &b.state_jac_x, &b.state_jac_u);
        let lu = SparseLu::factorize(&b.state_jac_x).map_err(|e| format!("{case}: {e}"))?;
        let gut = b.state_jac_u.transpose();
        for batch in [1, 8, 32] {
            let mut stats = KernelStats::default();
            let reduced = batched_reduce(&k, &lu, &b.state_jac_u, &gut, batch, &mut stats);
            let diff = (&reduced - &oracle).amax() / oracle.amax().max(1.0);
            ensure!(diff <= 1e-10, "{case} N={batch}: entrywise difference {diff:.2e}");
            worst = worst.max(diff);
            let products = m.n_controls().div_ceil(batch);
            ensure!(
                stats.spmm == 7 * products && stats.spsm == 4 * products,
                "{case} N={batch}: {} multiplications and {} triangular solves over {products} products",
                stats.spmm,
                stats.spsm
            );
        }
    }
    Ok(format!("max entrywise difference {worst:.1e}, 7 multiplications and 4 solves per product"))
}

fn chain_equivalence() -> Outcome {
    let mut r = rng(505);
    let mut checked = 0;
    let mut worst = 0.0_f64;
    let mut seed = 0;
    while checked < 25 {
        seed += 1;
        ensure!(seed < 1000, "too few positive definite instances");
        let n_u = r.gen_range(2..30);
        let n_x = r.gen_range(2..80);
        let m = r.gen_range(1..(200 - n_u - n_x).min(60));
        let inst = random_instance(5000 + seed, n_u, n_x, m, 0.0);
        let lu = SparseLu::factorize(&inst.bundle.state_jac_x).map_err(|e| e.to_string())?;
        let mut stats = KernelStats::default();
        let sys = ReducedSystem::new(inst.blocks(), &lu, 8, &mut stats);
        let Some(chol) = Cholesky::factorize(sys.reduced_matrix()) else { continue };
        let res = inst.random_residuals(&mut r);
        let diff = rel_diff_vec(&sys.solve(&chol, &res).stacked(), &augmented_step(&inst.blocks(), &res).stacked());
        ensure!(diff <= 1e-8, "instance {seed} (n_u={n_u}, n_x={n_x}, m={m}): difference {diff:.2e}");
        worst = worst.max(diff);
        checked += 1;
    }
    Ok(format!("{checked} instances, max relative difference {worst:.1e}"))
}

fn inertia() -> Outcome {
    let mut r = rng(606);
    let (mut checked, mut definite, mut attempts) = (0, 0, 0);
    while checked < 60 {
        attempts += 1;
        ensure!(attempts < 2000, "too few well-conditioned instances");
        let n_u = r.gen_range(2..12);
        let n_x = r.gen_range(2..25);
        let m = r.gen_range(1..12);
        let shift = r.gen_range(0.0..3.0);
        let inst = random_instance(6000 + attempts, n_u, n_x, m, shift);
        let kc = condensed_dense(&inst.blocks());
        if kc.clone().symmetric_eigen().eigenvalues.iter().any(|e| e.abs() < 1e-6) {
            continue;
        }
        let chol_ok = Cholesky::factorize(&kc).is_some();
        let inertia = eigen_inertia(&augmented_dense(&inst.blocks()), 1e-9);
        let target = augmented_inertia_target(n_u, n_x, m);
        ensure!(chol_ok == (inertia == target), "instance {attempts}: cholesky {chol_ok}, inertia {inertia:?}");
        definite += usize::from(chol_ok);
        checked += 1;
    }
    ensure!(definite > 0 && definite < checked, "only one outcome exercised");
    Ok(format!("{checked} instances, {definite} with positive definite condensed matrix"))
}

fn feasible_path(solves: &mut Solves) -> Outcome {
    let mut worst = 0.0_f64;
    let mut total = 0;
    for case in ["case30", "case118"] {
        let r = solves.get(case, Algorithm::RedLin);
        ensure!(r.status.is_optimal(), "{case}: {}", r.status);
        for rec in &r.trace {
            ensure!(rec.state_residual <= 1e-10, "{case} iteration {}: {:e}", rec.iteration, rec.state_residual);
            worst = worst.max(rec.state_residual);
        }
        total += r.trace.len();
    }
    Ok(format!("{total} iterates, max power flow residual {worst:.1e}"))
}

fn derivatives() -> Outcome {
    let (mut first, mut hessian, mut reduced) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (i, case) in ["case9", "case14", "case30", "case118"].into_iter().enumerate() {
        let seed = 800 + i as u64;
        for layout in [StateBounds::Variables, StateBounds::Constraints] {
            let m = model(case, layout);
            let (u, x) = perturbed_point(&m, seed);
            first = first.max(first_derivative_error(&m, &u, &x));
            hessian = hessian.max(hessian_product_error(&m, &u, &x, seed + 100));
        }
        reduced = reduced.max(reduced_gradient_error(&model(case, StateBounds::Constraints), seed + 200));
    }
    ensure!(first <= 1e-6, "first derivatives off by {first:.2e}");
    ensure!(hessian <= 1e-5, "Hessian products off by {hessian:.2e}");
    ensure!(reduced <= 1e-5, "reduced gradient off by {reduced:.2e}");
    Ok(format!("jacobians {first:.1e}, hessian products {hessian:.1e}, reduced gradient {reduced:.1e}"))
}

fn main() -> ExitCode {
    let mut solves = Solves::new();
    let mut failures = 0;
    let mut report = |label: &str, check: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {label}: {detail} ({secs:.2}s)"),
            Err(detail) => {
                failures += 1;
                println!("FAIL  {label}: {detail} ({secs:.2}s)");
            }
        }
    };
    report("AC1 dimensions", &mut dimensions);
    report("AC2 convergence", &mut || convergence(&mut solves));
    report("AC3 algorithm equivalence", &mut || equivalence(&mut solves));
    report("AC4 batched reduction", &mut reduction);
    report("AC5 reduction chain", &mut chain_equivalence);
    report("AC6 inertia", &mut inertia);
    report("AC7 feasible path", &mut || feasible_path(&mut solves));
    report("AC8 derivatives", &mut derivatives);
    println!(
        "SKIP  AC9 excluded: wall-clock and accelerator timings, very large networks, third-party solver comparisons"
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
