//! Basis-function representation of bus injections and line flows.
//!
//! Every nonlinearity of the power flow equations lives in the vector
//! `ψ = (ψc, ψs, ψd)` with, for a line from `f` to `t`,
//! `ψc = v_f v_t cos(θ_f − θ_t)`, `ψs = v_f v_t sin(θ_f − θ_t)`, and
//! `ψd_i = v_i²` for each bus. Injections and line flows are linear in `ψ`.
//!
//! Bus-space coordinates are ordered `(v_0..v_{n−1}, θ_0..θ_{n−1})`.

use crate::network::PowerNetwork;
use crate::sparse::{CsrMatrix, Triplets};

/// Linear maps from `ψ` to injections and line flows.
#[derive(Debug, Clone)]
pub struct BasisMatrices {
    /// `2n × (2l + n)`: rows `0..n` are active injections, `n..2n` reactive.
    pub injection: CsrMatrix,
    /// `2l × (2l + n)`: from-end active flows then from-end reactive flows.
    pub from_flows: CsrMatrix,
    /// `2l × (2l + n)`: to-end active flows then to-end reactive flows.
    pub to_flows: CsrMatrix,
    endpoints: Vec<(usize, usize)>,
    n_buses: usize,
}

/// Values of the basis functions at a point, along with the trigonometric
/// terms reused by the derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVector {
    pub cos_terms: Vec<f64>,
    pub sin_terms: Vec<f64>,
    pub squares: Vec<f64>,
}

impl BasisVector {
    /// Concatenation `(ψc, ψs, ψd)`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cos_terms.len() * 2 + self.squares.len());
        out.extend_from_slice(&self.cos_terms);
        out.extend_from_slice(&self.sin_terms);
        out.extend_from_slice(&self.squares);
        out
    }
}

impl BasisMatrices {
    pub fn new(net: &PowerNetwork) -> Self {
        let n = net.n_buses();
        let l = net.n_branches();
        let width = 2 * l + n;
        let mut inj = Triplets::with_capacity(2 * n, width, 6 * l + 2 * n);
        let mut from = Triplets::with_capacity(2 * l, width, 6 * l);
        let mut to = Triplets::with_capacity(2 * l, width, 6 * l);
        let (c, s, d) = (0, l, 2 * l);
        let mut endpoints = Vec::with_capacity(l);
        for (k, (br, y)) in net.branches().iter().zip(net.line_admittances()).enumerate() {
            let (f, t) = (br.from, br.to);
            endpoints.push((f, t));
            let rows_from = [(c + k, y.ft.re, -y.ft.im), (s + k, y.ft.im, y.ft.re), (d + f, y.ff.re, -y.ff.im)];
            // active: Gft ψc + Bft ψs + Gff ψd_f ; reactive: −Bft ψc + Gft ψs − Bff ψd_f
            for &(col, p, q) in &rows_from {
                from.push(k, col, p);
                from.push(l + k, col, q);
                inj.push(f, col, p);
                inj.push(n + f, col, q);
            }
            // active: Gtf ψc − Btf ψs + Gtt ψd_t ; reactive: −Btf ψc − Gtf ψs − Btt ψd_t
            let rows_to = [(c + k, y.tf.re, -y.tf.im), (s + k, -y.tf.im, -y.tf.re), (d + t, y.tt.re, -y.tt.im)];
            for &(col, p, q) in &rows_to {
                to.push(k, col, p);
                to.push(l + k, col, q);
                inj.push(t, col, p);
                inj.push(n + t, col, q);
            }
        }
        for (i, b) in net.buses().iter().enumerate() {
            if b.gs != 0.0 || b.bs != 0.0 {
                inj.push(i, d + i, b.gs);
                inj.push(n + i, d + i, -b.bs);
            }
        }
        Self { injection: inj.to_csr(), from_flows: from.to_csr(), to_flows: to.to_csr(), endpoints, n_buses: n }
    }

    pub fn n_lines(&self) -> usize {
        self.endpoints.len()
    }

    pub fn n_buses(&self) -> usize {
        self.n_buses
    }

    pub fn eval(&self, vm: &[f64], va: &[f64]) -> BasisVector {
        let mut cos_terms = Vec::with_capacity(self.endpoints.len());
        let mut sin_terms = Vec::with_capacity(self.endpoints.len());
        for &(f, t) in &self.endpoints {
            let (sn, cs) = (va[f] - va[t]).sin_cos();
            let vv = vm[f] * vm[t];
            cos_terms.push(vv * cs);
            sin_terms.push(vv * sn);
        }
        BasisVector { cos_terms, sin_terms, squares: vm.iter().map(|v| v * v).collect() }
    }

    /// Jacobian of `ψ` in bus-space coordinates, `(2l + n) × 2n`.
    pub fn jacobian(&self, vm: &[f64], va: &[f64], psi: &BasisVector) -> CsrMatrix {
        let (l, n) = (self.endpoints.len(), self.n_buses);
        let mut t = Triplets::with_capacity(2 * l + n, 2 * n, 8 * l + n);
        for (k, &(f, to)) in self.endpoints.iter().enumerate() {
            let (sn, cs) = (va[f] - va[to]).sin_cos();
            let (pc, ps) = (psi.cos_terms[k], psi.sin_terms[k]);
            t.push(k, f, vm[to] * cs);
            t.push(k, to, vm[f] * cs);
            t.push(k, n + f, -ps);
            t.push(k, n + to, ps);
            t.push(l + k, f, vm[to] * sn);
            t.push(l + k, to, vm[f] * sn);
            t.push(l + k, n + f, pc);
            t.push(l + k, n + to, -pc);
        }
        for i in 0..n {
            t.push(2 * l + i, i, 2.0 * vm[i]);
        }
        t.to_csr()
    }

    /// Adds `Σ_k weights_k ∇²ψ_k` in bus-space coordinates to `out`. Both triangles are written.
    pub fn add_hessian(&self, vm: &[f64], va: &[f64], weights: &[f64], out: &mut Triplets) {
        let (l, n) = (self.endpoints.len(), self.n_buses);
        for (k, &(f, t)) in self.endpoints.iter().enumerate() {
            let (wc, ws) = (weights[k], weights[l + k]);
            if wc == 0.0 && ws == 0.0 {
                continue;
            }
            let (sn, cs) = (va[f] - va[t]).sin_cos();
            let (vf, vt) = (vm[f], vm[t]);
            let (pc, ps) = (vf * vt * cs, vf * vt * sn);
            // local order: vf, vt, θf, θt
            let idx = [f, t, n + f, n + t];
            let vv = wc * cs + ws * sn;
            let vf_af = -wc * vt * sn + ws * vt * cs;
            let vt_af = -wc * vf * sn + ws * vf * cs;
            let aa = -wc * pc - ws * ps;
            let upper = [(0, 1, vv), (0, 2, vf_af), (0, 3, -vf_af), (1, 2, vt_af), (1, 3, -vt_af), (2, 3, -aa)];
            for &(a, b, val) in &upper {
                out.push(idx[a], idx[b], val);
                out.push(idx[b], idx[a], val);
            }
            out.push(idx[2], idx[2], aa);
            out.push(idx[3], idx[3], aa);
        }
        for i in 0..n {
            let w = weights[2 * l + i];
            if w != 0.0 {
                out.push(i, i, 2.0 * w);
            }
        }
    }

    /// Active and reactive bus injections `M ψ`.
    pub fn injections(&self, psi: &BasisVector) -> Vec<f64> {
        self.injection.mul_vec(&psi.stacked())
    }
}

/// Line flows `(sp_f, sq_f, sp_t, sq_t)` per branch.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFlows {
    pub p_from: Vec<f64>,
    pub q_from: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_to: Vec<f64>,
}

impl LineFlows {
    pub fn eval(basis: &BasisMatrices, psi: &BasisVector) -> Self {
        let l = basis.n_lines();
        let stacked = psi.stacked();
        let from = basis.from_flows.mul_vec(&stacked);
        let to = basis.to_flows.mul_vec(&stacked);
        Self { p_from: from[..l].to_vec(), q_from: from[l..].to_vec(), p_to: to[..l].to_vec(), q_to: to[l..].to_vec() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpower::{parse_case, to_per_unit, ConversionOptions};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn load(name: &str) -> PowerNetwork {
        let path = format!("{}/data/{name}.m", env!("CARGO_MANIFEST_DIR"));
        let case = parse_case(&std::fs::read_to_string(path).unwrap()).unwrap();
        to_per_unit(&case, ConversionOptions::default()).unwrap()
    }

    fn random_point(n: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let vm = (0..n).map(|_| rng.gen_range(0.9..1.1)).collect();
        let va = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        (vm, va)
    }

    #[test]
    fn flat_start_values() {
        let net = load("case9");
        let b = BasisMatrices::new(&net);
        let psi = b.eval(&[1.0; 9], &[0.0; 9]);
        assert!(psi.cos_terms.iter().all(|&c| c == 1.0));
        assert!(psi.sin_terms.iter().all(|&s| s == 0.0));
        assert!(psi.squares.iter().all(|&d| d == 1.0));
    }

    #[test]
    fn injections_match_complex_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for name in ["case9", "case30", "case118"] {
            let net = load(name);
            let b = BasisMatrices::new(&net);
            let n = net.n_buses();
            for _ in 0..20 {
                let (vm, va) = random_point(n, &mut rng);
                let inj = b.injections(&b.eval(&vm, &va));
                let s = net.injections(&vm, &va);
                for i in 0..n {
                    assert!((inj[i] - s[i].re).abs() < 1e-10);
                    assert!((inj[n + i] - s[i].im).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn flows_match_complex_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = load("case30");
        let b = BasisMatrices::new(&net);
        let (yf, yt) = net.branch_admittance_matrices();
        for _ in 0..20 {
            let (vm, va) = random_point(net.n_buses(), &mut rng);
            let flows = LineFlows::eval(&b, &b.eval(&vm, &va));
            let v: Vec<Complex64> = vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
            let (i_f, i_t) = (yf.mul_vec(&v), yt.mul_vec(&v));
            for (k, br) in net.branches().iter().enumerate() {
                let sf = v[br.from] * i_f[k].conj();
                let st = v[br.to] * i_t[k].conj();
                assert!((flows.p_from[k] - sf.re).abs() < 1e-10);
                assert!((flows.q_from[k] - sf.im).abs() < 1e-10);
                assert!((flows.p_to[k] - st.re).abs() < 1e-10);
                assert!((flows.q_to[k] - st.im).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jacobian_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = load("case9");
        let b = BasisMatrices::new(&net);
        let n = net.n_buses();
        let (vm, va) = random_point(n, &mut rng);
        let psi = b.eval(&vm, &va);
        let jac = b.jacobian(&vm, &va, &psi).to_dense();
        let width = psi.stacked().len();
        let weights: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut h = Triplets::new(2 * n, 2 * n);
        b.add_hessian(&vm, &va, &weights, &mut h);
        let hess = h.to_csr().to_dense();
        let eps = 1e-6;
        let grad_at = |vm: &[f64], va: &[f64]| {
            let psi = b.eval(vm, va);
            let jac = b.jacobian(vm, va, &psi);
            jac.tr_mul_vec(&weights)
        };
        for j in 0..2 * n {
            let (mut vp, mut ap) = (vm.clone(), va.clone());
            let (mut vmn, mut amn) = (vm.clone(), va.clone());
            if j < n {
                vp[j] += eps;
                vmn[j] -= eps;
            } else {
                ap[j - n] += eps;
                amn[j - n] -= eps;
            }
            let (pp, pm) = (b.eval(&vp, &ap).stacked(), b.eval(&vmn, &amn).stacked());
            for k in 0..width {
                let fd = (pp[k] - pm[k]) / (2.0 * eps);
                assert!((fd - jac[(k, j)]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
            let (gp, gm) = (grad_at(&vp, &ap), grad_at(&vmn, &amn));
            for i in 0..2 * n {
                let fd = (gp[i] - gm[i]) / (2.0 * eps);
                assert!((fd - hess[(i, j)]).abs() < 1e-5 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn basis_identity_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = load("case30");
        let b = BasisMatrices::new(&net);
        let (vm, va) = random_point(net.n_buses(), &mut rng);
        let psi = b.eval(&vm, &va);
        for (k, br) in net.branches().iter().enumerate() {
            let lhs = psi.cos_terms[k].powi(2) + psi.sin_terms[k].powi(2);
            assert!((lhs - (vm[br.from] * vm[br.to]).powi(2)).abs() < 1e-12);
        }
    }
}
