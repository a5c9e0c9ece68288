//! Primal-dual interior-point method with a filter line search.
//!
//! Three ways of computing the Newton step share one driver:
//!
//! * [`Algorithm::FullSpace`] factorizes the augmented KKT system directly.
//! * [`Algorithm::LinRed`] linearizes, then reduces: the step comes from a
//!   Cholesky factorization of the dense condensed matrix `K̂_uu`.
//! * [`Algorithm::RedLin`] reduces, then linearizes: the states are
//!   eliminated by solving the power flow equations at every trial point,
//!   so each iterate is power flow feasible.

mod filter;
mod report;
mod scaling;
mod solver;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use filter::{Acceptance, Filter, FilterParams};
pub use report::{
    AbortReason, Dimensions, IterationRecord, KernelCounts, RegularizationEvent, Solution, SolveReport, Status, Timings,
};
pub use scaling::{compute_scaling, Scaling, GRADIENT_TARGET};
pub use solver::{convergence_error, solve, ConvergenceError};
pub use state::{
    barrier_update, fraction_to_boundary, push_inside, Bounds, IpmState, KAPPA_SIGMA, MULTIPLIER_RANGE, PUSH_OFF,
};

use crate::kkt::Regularization;
use crate::powerflow::NewtonOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    FullSpace,
    LinRed,
    RedLin,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::FullSpace, Algorithm::LinRed, Algorithm::RedLin];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::FullSpace => "full",
            Algorithm::LinRed => "linred",
            Algorithm::RedLin => "redlin",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown algorithm `{0}` (expected full, linred or redlin)")]
pub struct UnknownAlgorithm(pub String);

impl FromStr for Algorithm {
    type Err = UnknownAlgorithm;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" | "fullspace" | "full-space" => Ok(Algorithm::FullSpace),
            "linred" => Ok(Algorithm::LinRed),
            "redlin" => Ok(Algorithm::RedLin),
            _ => Err(UnknownAlgorithm(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Tolerance on the scaled optimality error.
    pub tol: f64,
    pub max_iter: usize,
    /// Columns per batched Hessian product in the reduction.
    pub batch_size: usize,
    pub mu_init: f64,
    pub second_order_correction: bool,
    /// Store `(u, x)` at every iterate in the trace.
    pub record_iterates: bool,
    /// Power flow settings of the feasible-path solver.
    pub newton: NewtonOptions,
    /// Largest augmented system factorized densely.
    pub dense_limit: usize,
    pub regularization: Regularization,
    pub filter: FilterParams,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            batch_size: 256,
            mu_init: 0.1,
            second_order_correction: true,
            record_iterates: false,
            newton: NewtonOptions::default(),
            dense_limit: 5000,
            regularization: Regularization::default(),
            filter: FilterParams::default(),
        }
    }
}
