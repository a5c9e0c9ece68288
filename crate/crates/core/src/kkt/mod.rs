//! Newton systems of the interior-point method.
//!
//! The primal-dual step `(p_u, p_x, p_s, p_λ, p_y)` solves the augmented system
//!
//! ```text
//! [ W_uu+Σ_u  W_ux       0    G_uᵀ  A_uᵀ ] [p_u]     [r1]
//! [ W_xu      W_xx+Σ_x   0    G_xᵀ  A_xᵀ ] [p_x]     [r2]
//! [ 0         0          Σ_s  0     −I   ] [p_s] = − [r3]
//! [ G_u       G_x        0    0     0    ] [p_λ]     [r4]
//! [ A_u       A_x        −I   0     0    ] [p_y]     [r5]
//! ```
//!
//! The condensed pipeline eliminates the slacks and inequality multipliers,
//! then the states and adjoints through the sensitivity `S = −G_x⁻¹ G_u`,
//! leaving the dense `n_u × n_u` matrix `K̂_uu = [I; S]ᵀ K [I; S]` with
//! `K = W + AᵀΣ_sA + diag(Σ_u, Σ_x)`.

mod condensed;
pub(crate) mod full;
mod reduction;
pub mod reference;

pub use condensed::{ReducedRhs, ReducedSystem};
pub use full::{assemble_augmented, augmented_inertia_target, AugmentedFactor, FullSpaceSolver};
pub use reduction::{batched_reduce, naive_reduce};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::dense::Cholesky;
use crate::lu::{LuError, SparseLu};
use crate::model::DerivativeBundle;
use crate::sparse::{CsrMatrix, Triplets};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KktError {
    #[error("state Jacobian is singular: {0}")]
    SingularJacobian(#[from] LuError),
    #[error("regularization exceeded {delta:.1e} without producing a positive definite condensed matrix")]
    MaxRegularization { delta: f64 },
}

/// Linearization of the barrier problem at one iterate.
#[derive(Debug, Clone, Copy)]
pub struct KktBlocks<'a> {
    pub bundle: &'a DerivativeBundle,
    pub sigma_u: &'a [f64],
    pub sigma_x: &'a [f64],
    pub sigma_s: &'a [f64],
}

impl<'a> KktBlocks<'a> {
    pub fn n_controls(&self) -> usize {
        self.sigma_u.len()
    }

    pub fn n_states(&self) -> usize {
        self.sigma_x.len()
    }

    pub fn n_ineq(&self) -> usize {
        self.sigma_s.len()
    }
}

/// Right-hand side blocks; the system solved is `K_aug p = −r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub r3: Vec<f64>,
    pub r4: Vec<f64>,
    pub r5: Vec<f64>,
}

impl Residuals {
    pub fn zeros(n_u: usize, n_x: usize, m: usize) -> Self {
        Self { r1: vec![0.0; n_u], r2: vec![0.0; n_x], r3: vec![0.0; m], r4: vec![0.0; n_x], r5: vec![0.0; m] }
    }

    /// Concatenation `(r1, r2, r3, r4, r5)`.
    pub fn stacked(&self) -> Vec<f64> {
        [&self.r1, &self.r2, &self.r3, &self.r4, &self.r5].iter().flat_map(|v| v.iter().copied()).collect()
    }
}

/// Primal-dual search direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub pu: Vec<f64>,
    pub px: Vec<f64>,
    pub ps: Vec<f64>,
    pub plam: Vec<f64>,
    pub py: Vec<f64>,
}

impl Step {
    pub fn stacked(&self) -> Vec<f64> {
        [&self.pu, &self.px, &self.ps, &self.plam, &self.py].iter().flat_map(|v| v.iter().copied()).collect()
    }

    pub fn from_stacked(v: &[f64], n_u: usize, n_x: usize, m: usize) -> Self {
        let mut it = v.iter().copied();
        let mut take = |k: usize| it.by_ref().take(k).collect::<Vec<_>>();
        Self { pu: take(n_u), px: take(n_x), ps: take(m), plam: take(n_x), py: take(m) }
    }
}

/// Full Hessian of the Lagrangian on the stacked variables `(u, x)`.
pub fn stacked_hessian(bundle: &DerivativeBundle) -> CsrMatrix {
    let n_u = bundle.hess_uu.nrows();
    let n_x = bundle.hess_xx.nrows();
    let mut t = Triplets::with_capacity(
        n_u + n_x,
        n_u + n_x,
        2 * bundle.hess_ux.nnz() + bundle.hess_uu.nnz() + bundle.hess_xx.nnz(),
    );
    for i in 0..n_u {
        for (j, v) in bundle.hess_uu.row(i) {
            t.push(i, j, v);
        }
        for (j, v) in bundle.hess_ux.row(i) {
            t.push(i, n_u + j, v);
            t.push(n_u + j, i, v);
        }
    }
    for i in 0..n_x {
        for (j, v) in bundle.hess_xx.row(i) {
            t.push(n_u + i, n_u + j, v);
        }
    }
    t.to_csr()
}

/// Inequality Jacobian `A = [A_u A_x]`.
pub fn stacked_ineq_jacobian(bundle: &DerivativeBundle) -> CsrMatrix {
    hstack(&bundle.ineq_jac_u, &bundle.ineq_jac_x)
}

/// State Jacobian `G = [G_u G_x]`.
pub fn stacked_state_jacobian(bundle: &DerivativeBundle) -> CsrMatrix {
    hstack(&bundle.state_jac_u, &bundle.state_jac_x)
}

fn hstack(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut t = Triplets::with_capacity(a.nrows(), a.ncols() + b.ncols(), a.nnz() + b.nnz());
    for i in 0..a.nrows() {
        for (j, v) in a.row(i) {
            t.push(i, j, v);
        }
        for (j, v) in b.row(i) {
            t.push(i, a.ncols() + j, v);
        }
    }
    t.to_csr()
}

/// `K = W + AᵀΣ_sA + diag(Σ_u, Σ_x)` on the stacked variables `(u, x)`.
pub fn assemble_condensed(blocks: &KktBlocks<'_>) -> CsrMatrix {
    let w = stacked_hessian(blocks.bundle);
    let a = stacked_ineq_jacobian(blocks.bundle);
    let diag: Vec<f64> = blocks.sigma_u.iter().chain(blocks.sigma_x).copied().collect();
    w.add(&a.gram(blocks.sigma_s)).add_diagonal(&diag)
}

/// Numerically refactorizes `G_x` when the stored factors have a matching
/// pattern; otherwise performs a fresh analysis.
pub fn refactorize_state_jacobian<'s>(slot: &'s mut Option<SparseLu>, gx: &CsrMatrix) -> Result<&'s SparseLu, LuError> {
    let reused = match slot.as_mut() {
        Some(lu) => lu.refactorize(gx).is_ok(),
        None => false,
    };
    if !reused {
        *slot = Some(SparseLu::factorize(gx)?);
    }
    Ok(slot.as_ref().unwrap())
}

/// Inertia-correcting regularization of a dense symmetric matrix.
#[derive(Debug, Clone, Copy)]
pub struct Regularization {
    pub first: f64,
    pub growth: f64,
    pub decrease: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self { first: 1e-4, growth: 8.0, decrease: 1.0 / 3.0, min: 1e-20, max: 1e40 }
    }
}

impl Regularization {
    /// Next trial after the unregularized attempt failed, given the last
    /// successful value.
    pub fn initial(&self, last: f64) -> f64 {
        if last == 0.0 {
            self.first
        } else {
            (last * self.decrease).max(self.min)
        }
    }

    /// Runs `try_factor(δ)` for `δ = 0` and then increasing values until it
    /// succeeds. Returns the result, the accepted `δ` and the number of
    /// attempts.
    pub fn run<T>(&self, last: f64, mut try_factor: impl FnMut(f64) -> Option<T>) -> Result<(T, f64, usize), KktError> {
        if let Some(f) = try_factor(0.0) {
            return Ok((f, 0.0, 1));
        }
        let mut delta = self.initial(last);
        let mut attempts = 1;
        loop {
            attempts += 1;
            if let Some(f) = try_factor(delta) {
                return Ok((f, delta, attempts));
            }
            delta *= self.growth;
            if delta > self.max {
                return Err(KktError::MaxRegularization { delta });
            }
        }
    }

    /// Cholesky of `M + δI` with the smallest `δ` of the sequence that works.
    pub fn cholesky(&self, m: &DMatrix<f64>, last: f64) -> Result<(Cholesky, f64, usize), KktError> {
        self.run(last, |delta| {
            if delta == 0.0 {
                Cholesky::factorize(m)
            } else {
                let mut shifted = m.clone();
                for i in 0..m.nrows() {
                    shifted[(i, i)] += delta;
                }
                Cholesky::factorize(&shifted)
            }
        })
    }
}

/// Outcome of the dense inertia test of the condensed matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    Indefinite,
}

/// Positive definiteness of a symmetric matrix decided by dense Cholesky.
pub fn inertia_check_dense(m: &DMatrix<f64>) -> Definiteness {
    match Cholesky::factorize(m) {
        Some(_) => Definiteness::PositiveDefinite,
        None => Definiteness::Indefinite,
    }
}
