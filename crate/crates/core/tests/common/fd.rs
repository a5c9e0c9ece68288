//! Finite-difference oracles for the model derivatives. Each check returns
//! the worst error relative to the magnitude of the quantity compared.

use condensed_opf::lu::SparseLu;
use condensed_opf::model::{Multipliers, OpfModel};
use condensed_opf::powerflow::{newton_raphson, NewtonOptions};

use super::{random_vec, rng};

pub fn perturbed_point(m: &OpfModel, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let (u, x) = m.initial_point();
    let du = random_vec(&mut r, u.len(), -0.02, 0.02);
    let dx = random_vec(&mut r, x.len(), -0.02, 0.02);
    (u.iter().zip(&du).map(|(a, b)| a + b).collect(), x.iter().zip(&dx).map(|(a, b)| a + b).collect())
}

fn shifted(v: &[f64], k: usize, h: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    out[k] += h;
    out
}

fn scale_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(1.0_f64, |m, x| m.max(x.abs()))
}

/// Gradient and Jacobian entries against central differences with step
/// `1e-6`; errors are relative to the largest entry of the gradient or of
/// the Jacobian row.
pub fn first_derivative_error(m: &OpfModel, u: &[f64], x: &[f64]) -> f64 {
    let h = 1e-6;
    let b = m.derivatives(u, x, None);
    let (n_u, n_x) = (u.len(), x.len());
    let gu = b.state_jac_u.to_dense();
    let gx = b.state_jac_x.to_dense();
    let au = b.ineq_jac_u.to_dense();
    let ax = b.ineq_jac_x.to_dense();
    let grad_scale = scale_of(b.grad_u.iter().chain(&b.grad_x).copied());
    let state_scale: Vec<f64> = (0..n_x).map(|i| scale_of(gu.row(i).iter().chain(gx.row(i).iter()).copied())).collect();
    let ineq_scale: Vec<f64> =
        (0..au.nrows()).map(|i| scale_of(au.row(i).iter().chain(ax.row(i).iter()).copied())).collect();
    let mut worst = 0.0_f64;
    for k in 0..n_u + n_x {
        let (plus, minus) = if k < n_u {
            (m.evaluate(&shifted(u, k, h), x), m.evaluate(&shifted(u, k, -h), x))
        } else {
            (m.evaluate(u, &shifted(x, k - n_u, h)), m.evaluate(u, &shifted(x, k - n_u, -h)))
        };
        let fd = (plus.objective - minus.objective) / (2.0 * h);
        let an = if k < n_u { b.grad_u[k] } else { b.grad_x[k - n_u] };
        worst = worst.max((fd - an).abs() / grad_scale);
        for i in 0..n_x {
            let fd = (plus.state[i] - minus.state[i]) / (2.0 * h);
            let an = if k < n_u { gu[(i, k)] } else { gx[(i, k - n_u)] };
            worst = worst.max((fd - an).abs() / state_scale[i]);
        }
        for i in 0..plus.constraints.len() {
            let fd = (plus.constraints[i] - minus.constraints[i]) / (2.0 * h);
            let an = if k < n_u { au[(i, k)] } else { ax[(i, k - n_u)] };
            worst = worst.max((fd - an).abs() / ineq_scale[i]);
        }
    }
    worst
}

/// Hessian-of-the-Lagrangian products `W d` against central differences
/// of the Lagrangian gradient along a random direction, with random
/// multipliers.
pub fn hessian_product_error(m: &OpfModel, u: &[f64], x: &[f64], seed: u64) -> f64 {
    let mut r = rng(seed);
    let lambda = random_vec(&mut r, m.n_states(), -1.0, 1.0);
    let y = random_vec(&mut r, m.n_constraints(), -1.0, 1.0);
    let sigma = 0.01;
    let du = random_vec(&mut r, u.len(), -1.0, 1.0);
    let dx = random_vec(&mut r, x.len(), -1.0, 1.0);
    let grad_l = |u: &[f64], x: &[f64]| -> Vec<f64> {
        let b = m.derivatives(u, x, None);
        let gu = b.state_jac_u.tr_mul_vec(&lambda);
        let gx = b.state_jac_x.tr_mul_vec(&lambda);
        let au = b.ineq_jac_u.tr_mul_vec(&y);
        let ax = b.ineq_jac_x.tr_mul_vec(&y);
        let mut out: Vec<f64> = (0..u.len()).map(|i| sigma * b.grad_u[i] + gu[i] + au[i]).collect();
        out.extend((0..x.len()).map(|i| sigma * b.grad_x[i] + gx[i] + ax[i]));
        out
    };
    let h = 1e-6;
    let along = |t: f64| -> (Vec<f64>, Vec<f64>) {
        (u.iter().zip(&du).map(|(a, d)| a + t * d).collect(), x.iter().zip(&dx).map(|(a, d)| a + t * d).collect())
    };
    let (up, xp) = along(h);
    let (um, xm) = along(-h);
    let fd: Vec<f64> = grad_l(&up, &xp).iter().zip(grad_l(&um, &xm)).map(|(a, b)| (a - b) / (2.0 * h)).collect();

    let weights = Multipliers { objective: sigma, state: &lambda, constraints: &y };
    let b = m.derivatives(u, x, Some(weights));
    let wu = b.hess_uu.mul_vec(&du).into_iter().zip(b.hess_ux.mul_vec(&dx)).map(|(a, c)| a + c);
    let wx = b.hess_ux.tr_mul_vec(&du).into_iter().zip(b.hess_xx.mul_vec(&dx)).map(|(a, c)| a + c);
    let an: Vec<f64> = wu.chain(wx).collect();
    let scale = scale_of(an.iter().copied());
    fd.iter().zip(&an).fold(0.0_f64, |w, (f, a)| w.max((f - a).abs() / scale))
}

/// Reduced gradient `g_u − G_uᵀ G_x⁻ᵀ g_x` against central differences of
/// `u ↦ f(u, x(u))`, with `x(u)` from Newton's method.
pub fn reduced_gradient_error(m: &OpfModel, seed: u64) -> f64 {
    let (u0, x0) = m.initial_point();
    let mut r = rng(seed);
    let u: Vec<f64> = u0.iter().zip(random_vec(&mut r, u0.len(), -0.005, 0.005)).map(|(a, b)| a + b).collect();
    let opts = NewtonOptions { tol: 1e-12, max_iter: 30 };
    let x = newton_raphson(m, &u, &x0, opts).unwrap().x;
    let b = m.derivatives(&u, &x, None);
    let lu = SparseLu::factorize(&b.state_jac_x).unwrap();
    let adj = lu.solve_transpose(&b.grad_x);
    let correction = b.state_jac_u.tr_mul_vec(&adj);
    let reduced: Vec<f64> = b.grad_u.iter().zip(&correction).map(|(g, c)| g - c).collect();
    let scale = scale_of(reduced.iter().copied());
    let h = 1e-5;
    let projected = |u: &[f64]| {
        let x = newton_raphson(m, u, &x, opts).unwrap().x;
        m.objective(u, &x)
    };
    (0..u.len())
        .map(|k| {
            let fd = (projected(&shifted(&u, k, h)) - projected(&shifted(&u, k, -h))) / (2.0 * h);
            (fd - reduced[k]).abs() / scale
        })
        .fold(0.0_f64, f64::max)
}
