//! Inner solvers for the two blocks of the alternating scheme.

mod bcnls;
mod l1nnls;

pub use bcnls::{
    projected_gradient_norm, projected_newton_direction, solve_bcnls, BcnlsProblem,
};
pub use l1nnls::{solve_l1nnls, solve_l1nnls_warm, L1nnlsProblem};

use serde::{Deserialize, Serialize};

/// What an inner solve did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// KKT residual for the L1-NNLS solver, projected-gradient norm for BCNLS.
    pub kkt_residual: f64,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

impl SolveDiagnostics {
    pub(crate) fn new(
        iterations: usize,
        kkt_residual: f64,
        objective_trace: Vec<f64>,
        converged: bool,
    ) -> Self {
        Self { iterations, kkt_residual, objective_trace, converged }
    }

    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace starts with the initial objective")
    }
}
