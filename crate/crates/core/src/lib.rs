//! Automatic L1-regularized, model-free analysis of FFC-NMR dispersion
//! profiles with quadrupolar peaks.
//!
//! A profile `R1(ω)` is decomposed into an offset `R0`, a sparse nonnegative
//! distribution of correlation times `f(τ)` acting through the ¹H–¹H kernel,
//! and three Lorentzian pairs describing the ¹H–¹⁴N quadrupolar peaks. The
//! linear block `(f, R0)` and the six quadrupolar parameters are estimated by
//! alternating minimization of an L1-penalized least-squares objective, while
//! the penalty weight itself is updated by the balancing principle until it
//! reaches a fixed point.
//!
//! ```no_run
//! use aurora_core::{aurora_solve, synthesize_profile, ReferenceScenario, SolverConfig};
//!
//! let scenario = ReferenceScenario::default_scenario();
//! let profile = synthesize_profile(&scenario).unwrap();
//! let bounds = scenario.bounds(100.0, 100.0).unwrap();
//! let fit = aurora_solve(&profile, &scenario.grid, &bounds, &SolverConfig::default()).unwrap();
//! println!("nu- = {} MHz, nu+ = {} MHz", fit.report.nu_minus, fit.report.nu_plus);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aurora;
pub mod commands;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod solvers;
pub mod synth;

pub use aurora::{
    aurora_solve, aurora_solve_from, bp_update, gs_solve, init_quad_params, FitResult, GsState,
    GsTrace, OuterRecord, PhysicalReport, SolverConfig, WarmStart,
};
pub use error::{Error, Result};
pub use metrics::{mse, pre};
pub use model::{
    build_kernel, eval_quad, evaluate_model, objective, quad_jacobian, CorrelationGrid, Kernel,
    LinearBlock, NmrdProfile, PhysicalConstants, QuadBounds, QuadParams,
};
pub use synth::{
    add_noise, run_monte_carlo, synthesize_profile, McReport, NoiseSpec, ReferenceScenario,
};
pub use commands::{run_fit, run_kernel_dump, run_mc, run_synth, Outcome, Status, EXIT_INPUT_ERROR};
pub use io::{read_profile, write_profile, Overrides, ResultDocument, RunConfig};
