//! Newton–Raphson solution of the state equation `g(x, u) = 0` and the
//! adjoint solve `G_xᵀ λ = −b`.

use thiserror::Error;

use crate::kkt::refactorize_state_jacobian;
use crate::lu::{LuError, SparseLu};
use crate::model::OpfModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("state Jacobian is singular: {0}")]
    SingularJacobian(#[from] LuError),
    #[error("Newton-Raphson did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Tolerance on `‖g‖∞`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖g‖∞` at every iterate, starting point included.
    pub residuals: Vec<f64>,
}

impl NewtonOutcome {
    pub fn residual(&self) -> f64 {
        *self.residuals.last().unwrap()
    }
}

/// Newton–Raphson driver that keeps the LU symbolic analysis of `G_x` alive
/// across calls and only refactorizes numerically.
#[derive(Debug, Default)]
pub struct PowerFlowSolver {
    lu: Option<SparseLu>,
}

impl PowerFlowSolver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of numeric factorizations that reused the stored pivots.
    pub fn refactorizations(&self) -> usize {
        self.lu.as_ref().map_or(0, |lu| lu.refactorization_count())
    }

    /// Solves `g(x, u) = 0` for `x` with full Newton steps from `x0`.
    pub fn solve(
        &mut self,
        model: &OpfModel,
        u: &[f64],
        x0: &[f64],
        opts: NewtonOptions,
    ) -> Result<NewtonOutcome, PowerFlowError> {
        let mut x = x0.to_vec();
        let mut residuals = Vec::new();
        for iter in 0..=opts.max_iter {
            let (g, jac) = model.state_system(u, &x);
            let res = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            residuals.push(res);
            if !res.is_finite() {
                return Err(PowerFlowError::NoConvergence { iterations: iter, residual: res });
            }
            if res <= opts.tol {
                return Ok(NewtonOutcome { x, iterations: iter, residuals });
            }
            if iter == opts.max_iter {
                return Err(PowerFlowError::NoConvergence { iterations: iter, residual: res });
            }
            let lu = refactorize_state_jacobian(&mut self.lu, &jac)?;
            let dx = lu.solve(&g);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi -= d;
            }
        }
        unreachable!()
    }
}

/// One-shot Newton–Raphson solve.
pub fn newton_raphson(
    model: &OpfModel,
    u: &[f64],
    x0: &[f64],
    opts: NewtonOptions,
) -> Result<NewtonOutcome, PowerFlowError> {
    PowerFlowSolver::new().solve(model, u, x0, opts)
}

/// Solves `G_xᵀ λ = −b` with an existing factorization of `G_x`.
pub fn adjoint_solve(lu: &SparseLu, b: &[f64]) -> Vec<f64> {
    let mut lambda = lu.solve_transpose(b);
    lambda.iter_mut().for_each(|v| *v = -*v);
    lambda
}
