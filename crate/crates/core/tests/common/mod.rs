#![allow(dead_code)]

pub mod fd;

use condensed_opf::kkt::{KktBlocks, Residuals};
use condensed_opf::matpower::{read_case, to_per_unit, ConversionOptions};
use condensed_opf::model::{DerivativeBundle, Evaluation, OpfModel, StateBounds};
use condensed_opf::network::PowerNetwork;
use condensed_opf::sparse::{CsrMatrix, Triplets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Optimal objectives ($/h) computed independently with PYPOWER 5.1.21's
/// interior-point OPF (`runopf` with default options).
pub const REFERENCE_OBJECTIVES: [(&str, f64); 4] = [
    ("case9", 5296.686203991521),
    ("case30", 576.8923368462027),
    ("case118", 129660.68501164945),
    ("case300", 719725.0765994793),
];

pub fn reference_objective(case: &str) -> f64 {
    REFERENCE_OBJECTIVES.iter().find(|(c, _)| *c == case).map(|(_, v)| *v).expect("known case")
}

pub fn case_path(name: &str) -> String {
    format!("{}/data/{name}.m", env!("CARGO_MANIFEST_DIR"))
}

pub fn network(name: &str) -> PowerNetwork {
    to_per_unit(&read_case(case_path(name)).unwrap(), ConversionOptions::default()).unwrap()
}

pub fn model(name: &str, layout: StateBounds) -> OpfModel {
    OpfModel::new(network(name), layout)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// `‖a − b‖∞ / max(1, ‖b‖∞)`
pub fn rel_diff_vec(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn random_sparse(rng: &mut ChaCha8Rng, r: usize, c: usize, density: f64) -> CsrMatrix {
    let mut t = Triplets::new(r, c);
    for i in 0..r {
        for j in 0..c {
            if rng.gen_bool(density) {
                t.push(i, j, rng.gen_range(-1.0..1.0));
            }
        }
    }
    t.to_csr()
}

/// Owned data of one structured KKT instance.
pub struct Instance {
    pub bundle: DerivativeBundle,
    pub sigma_u: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_s: Vec<f64>,
}

impl Instance {
    pub fn blocks(&self) -> KktBlocks<'_> {
        KktBlocks { bundle: &self.bundle, sigma_u: &self.sigma_u, sigma_x: &self.sigma_x, sigma_s: &self.sigma_s }
    }

    pub fn random_residuals(&self, rng: &mut ChaCha8Rng) -> Residuals {
        let (n_u, n_x, m) = (self.sigma_u.len(), self.sigma_x.len(), self.sigma_s.len());
        Residuals {
            r1: random_vec(rng, n_u, -1.0, 1.0),
            r2: random_vec(rng, n_x, -1.0, 1.0),
            r3: random_vec(rng, m, -1.0, 1.0),
            r4: random_vec(rng, n_x, -1.0, 1.0),
            r5: random_vec(rng, m, -1.0, 1.0),
        }
    }
}

/// Random instance with the sparsity structure of the optimal power flow
/// KKT system: a nonsingular unsymmetric `G_x`, sparse `G_u`, `A`, a
/// symmetric Hessian `W = BᵀB − shift·I` and positive slack weights.
pub fn random_instance(seed: u64, n_u: usize, n_x: usize, m: usize, shift: f64) -> Instance {
    let mut rng = rng(seed);
    let nw = n_u + n_x;

    let mut gx = Triplets::new(n_x, n_x);
    for i in 0..n_x {
        gx.push(i, i, rng.gen_range(2.0..4.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
        for j in 0..n_x {
            if j != i && rng.gen_bool(0.15) {
                gx.push(i, j, rng.gen_range(-0.4..0.4));
            }
        }
    }
    let b = random_sparse(&mut rng, nw, nw, 0.2);
    let btb = b.transpose().matmul(&b).to_dense();
    let mut t_uu = Triplets::new(n_u, n_u);
    let mut t_ux = Triplets::new(n_u, n_x);
    let mut t_xx = Triplets::new(n_x, n_x);
    for i in 0..nw {
        for j in 0..nw {
            let v = btb[(i, j)] - if i == j { shift } else { 0.0 };
            if v == 0.0 {
                continue;
            }
            match (i < n_u, j < n_u) {
                (true, true) => t_uu.push(i, j, v),
                (true, false) => t_ux.push(i, j - n_u, v),
                (false, false) => t_xx.push(i - n_u, j - n_u, v),
                (false, true) => {}
            }
        }
    }
    let bundle = DerivativeBundle {
        values: Evaluation {
            objective: rng.gen_range(-1.0..1.0),
            state: random_vec(&mut rng, n_x, -1.0, 1.0),
            constraints: random_vec(&mut rng, m, -1.0, 1.0),
        },
        grad_u: random_vec(&mut rng, n_u, -1.0, 1.0),
        grad_x: random_vec(&mut rng, n_x, -1.0, 1.0),
        state_jac_u: random_sparse(&mut rng, n_x, n_u, 0.25),
        state_jac_x: gx.to_csr(),
        ineq_jac_u: random_sparse(&mut rng, m, n_u, 0.25),
        ineq_jac_x: random_sparse(&mut rng, m, n_x, 0.2),
        hess_uu: t_uu.to_csr(),
        hess_ux: t_ux.to_csr(),
        hess_xx: t_xx.to_csr(),
    };
    Instance {
        bundle,
        sigma_u: random_vec(&mut rng, n_u, 0.0, 2.0),
        sigma_x: (0..n_x).map(|_| if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..2.0) }).collect(),
        sigma_s: random_vec(&mut rng, m, 0.1, 10.0),
    }
}

/// KKT blocks of a case at its starting point with random multipliers and
/// barrier weights, as seen in the first iterations of a solve.
pub fn case_instance(model: &OpfModel, seed: u64) -> Instance {
    let mut rng = rng(seed);
    let (u, x) = model.initial_point();
    let lambda = random_vec(&mut rng, model.n_states(), -1.0, 1.0);
    let y = random_vec(&mut rng, model.n_constraints(), 0.0, 1.0);
    let w = condensed_opf::model::Multipliers { objective: 1e-3, state: &lambda, constraints: &y };
    let bundle = model.derivatives(&u, &x, Some(w));
    Instance {
        sigma_u: random_vec(&mut rng, model.n_controls(), 1e-2, 10.0),
        sigma_x: random_vec(&mut rng, model.n_states(), 0.0, 1.0),
        sigma_s: random_vec(&mut rng, model.n_constraints(), 1e-2, 10.0),
        bundle,
    }
}
