use std::fmt;

use serde::{Deserialize, Serialize};

use crate::sparse::KernelStats;

/// Why a solve stopped before reaching the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    SingularJacobian,
    MaxRegularization,
    PowerFlowDiverged,
    /// The filter rejected every trial down to the minimum step length; a
    /// restoration phase would be needed.
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    MaxIterations,
    Aborted(AbortReason),
}

impl Status {
    pub fn is_optimal(&self) -> bool {
        matches!(self, Status::Optimal)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Optimal => write!(f, "Optimal"),
            Status::MaxIterations => write!(f, "MaxIterations"),
            Status::Aborted(r) => write!(f, "Aborted({r:?})"),
        }
    }
}

/// Wall-clock seconds spent in each phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub derivatives: f64,
    pub reduction: f64,
    pub factorization: f64,
    pub power_flow: f64,
    pub line_search: f64,
    pub total: f64,
}

/// Problem dimensions, with `ratio = n_u / (n_x + n_u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub n_buses: usize,
    pub n_lines: usize,
    pub n_generators: usize,
    pub n_states: usize,
    pub n_controls: usize,
    pub n_constraints: usize,
    pub ratio: f64,
}

/// One regularization of the Newton matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationEvent {
    pub iteration: usize,
    pub delta: f64,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Unscaled objective.
    pub objective: f64,
    pub primal_inf: f64,
    pub dual_inf: f64,
    pub complementarity: f64,
    pub mu: f64,
    /// Step length of the step that produced this iterate.
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    /// Regularization used for the step leaving this iterate.
    pub delta: f64,
    /// Unscaled `‖g(x, u)‖∞`.
    pub state_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
}

/// Primal solution in per-unit, radians and generator order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub iterations: usize,
    /// Objective in $/h.
    pub objective: f64,
    pub primal_inf: f64,
    pub dual_inf: f64,
    pub complementarity: f64,
    pub timings: Timings,
    pub dims: Dimensions,
    pub regularizations: Vec<RegularizationEvent>,
    pub kernels: KernelCounts,
    /// Set when the solve stopped where a restoration phase would start.
    pub restoration_needed: bool,
    pub trace: Vec<IterationRecord>,
    pub solution: Solution,
}

/// Serializable copy of [`KernelStats`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelCounts {
    pub spmm: usize,
    pub spsm: usize,
}

impl From<KernelStats> for KernelCounts {
    fn from(s: KernelStats) -> Self {
        Self { spmm: s.spmm, spsm: s.spsm }
    }
}
