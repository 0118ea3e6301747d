//! Two-block Gauss–Seidel minimization for a fixed regularization parameter,
//! and the outer loop that updates λ by the balancing principle until it
//! settles.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::mse;
use crate::model::{
    build_kernel, eval_quad, objective, CorrelationGrid, Kernel, LinearBlock, NmrdProfile,
    QuadBounds, QuadParams, INITIAL_C_HN,
};
use crate::solvers::{
    projected_gradient_norm, solve_bcnls, solve_l1nnls_warm, BcnlsProblem, L1nnlsProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// L2 damping on the linear block.
    pub eta: f64,
    pub lambda0: f64,
    pub tol_lambda: f64,
    pub tol_gs: f64,
    /// Balancing factor. Only 1 is supported.
    pub gamma: f64,
    pub max_outer: usize,
    pub max_gs: usize,
    pub max_inner_l1: usize,
    pub max_inner_nl: usize,
    pub inner_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eta: 1e-10,
            lambda0: 1e-6,
            tol_lambda: 1e-2,
            tol_gs: 1e-6,
            gamma: 1.0,
            max_outer: 30,
            max_gs: 20_000,
            max_inner_l1: 500,
            max_inner_nl: 200,
            inner_tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda0", self.lambda0),
            ("tol_lambda", self.tol_lambda),
            ("tol_gs", self.tol_gs),
            ("inner_tol", self.inner_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be nonnegative, got {}", self.eta)));
        }
        if self.gamma != 1.0 {
            return Err(Error::Config("only gamma = 1 is supported".into()));
        }
        if self.max_outer == 0 || self.max_gs == 0 || self.max_inner_l1 == 0 || self.max_inner_nl == 0
        {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Starting point for the quadrupolar block.
///
/// Angles start at the middle of their range, `τ_Q` at 1 μs, and the peak
/// positions a quarter of the window in from each edge. Amplitude and `τ_Q`
/// are clipped into the box when it is tighter than those defaults.
pub fn init_quad_params(bounds: &QuadBounds) -> QuadParams {
    let (lo, hi) = (bounds.omega_lo(), bounds.omega_hi());
    let quarter = 0.25 * (hi - lo).abs();
    QuadParams {
        c_hn: INITIAL_C_HN.min(bounds.c_bar()),
        sin2_theta: 0.5,
        sin2_phi: 0.5,
        tau_q: 1.0f64.min(bounds.tau_bar()),
        omega_minus: lo + quarter,
        omega_plus: hi - quarter,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsState {
    pub x1: LinearBlock,
    pub psi: QuadParams,
    pub g_value: f64,
    pub iteration: usize,
}

/// Per-run record of the alternating loop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GsTrace {
    /// Objective at the start and after every half-step.
    pub half_steps: Vec<f64>,
    pub converged: bool,
    /// Inner solves that stopped on their iteration cap.
    pub l1_unconverged: usize,
    pub nl_unconverged: usize,
    /// KKT residual of the last linear solve.
    pub last_kkt: f64,
    /// Projected-gradient norm of the last quadrupolar solve.
    pub last_pg: f64,
}

impl GsTrace {
    /// Objective after each full iteration (the start value first).
    pub fn objective_per_iteration(&self) -> Vec<f64> {
        self.half_steps.iter().step_by(2).copied().collect()
    }
}

/// Alternates exact-as-possible minimization over the linear block and the
/// quadrupolar block until the relative objective change drops below `tol_gs`.
pub fn gs_solve(
    y: &DVector<f64>,
    kernel: &Kernel,
    bounds: &QuadBounds,
    x1_init: &LinearBlock,
    psi_init: &QuadParams,
    lambda: f64,
    config: &SolverConfig,
) -> Result<(GsState, GsTrace)> {
    if y.len() != kernel.rows() {
        return Err(Error::invalid("data length does not match kernel rows"));
    }
    if x1_init.f.len() != kernel.n_tau() {
        return Err(Error::invalid("linear block does not match kernel columns"));
    }
    if !x1_init.is_feasible() {
        return Err(Error::invalid("initial linear block has negative entries"));
    }
    if !bounds.contains(psi_init) {
        return Err(Error::invalid("initial quadrupolar parameters lie outside the box"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    let eta = config.eta;
    let omega = kernel.omega();
    let k_ext = kernel.k_ext();

    let mut x1 = x1_init.to_x1();
    let mut psi = *psi_init;
    let mut g = objective(x1_init, &psi, y, kernel, lambda, eta)?;
    let mut trace = GsTrace { half_steps: vec![g], ..Default::default() };
    let mut iteration = 0;

    while iteration < config.max_gs {
        iteration += 1;
        let g_prev = g;

        // linear block
        let w = y - eval_quad(&psi, omega);
        let problem = L1nnlsProblem::new(k_ext.clone(), w, lambda, eta)?;
        let (z, diag) = solve_l1nnls_warm(&problem, &x1, config.inner_tol, config.max_inner_l1)?;
        if !diag.converged {
            trace.l1_unconverged += 1;
        }
        trace.last_kkt = diag.kkt_residual;
        let g_lin = objective(&LinearBlock::from_x1(&z), &psi, y, kernel, lambda, eta)?;
        if g_lin <= g {
            x1 = z;
            g = g_lin;
        }
        trace.half_steps.push(g);

        // quadrupolar block
        let w = y - k_ext * &x1;
        let problem = BcnlsProblem::new(omega.clone(), w, *bounds, psi)?;
        let (p, diag) = solve_bcnls(&problem, config.inner_tol, config.max_inner_nl)?;
        if !diag.converged {
            trace.nl_unconverged += 1;
        }
        trace.last_pg = diag.kkt_residual;
        let x1_block = LinearBlock::from_x1(&x1);
        let g_quad = objective(&x1_block, &p, y, kernel, lambda, eta)?;
        if g_quad <= g {
            psi = p;
            g = g_quad;
        }
        trace.half_steps.push(g);

        let change = (g - g_prev).abs();
        let done = if g == 0.0 { change <= config.tol_gs } else { change <= config.tol_gs * g.abs() };
        if done {
            trace.converged = true;
            break;
        }
    }
    let state = GsState { x1: LinearBlock::from_x1(&x1), psi, g_value: g, iteration };
    Ok((state, trace))
}

/// Balancing-principle update `λ = (‖y − K_e x1 − F2(ψ)‖² + η‖x1‖²) / ‖x1‖₁`.
pub fn bp_update(
    y: &DVector<f64>,
    kernel: &Kernel,
    x1: &LinearBlock,
    psi: &QuadParams,
    eta: f64,
) -> Result<f64> {
    let l1 = x1.l1_norm();
    if !(l1 > 0.0) {
        return Err(Error::Degenerate(
            "the linear block is identically zero, so the balancing rule is undefined".into(),
        ));
    }
    let fit = crate::model::evaluate_model(x1, psi, kernel)?;
    let res2 = (y - fit).norm_squared();
    Ok((res2 + eta * x1.to_x1().norm_squared()) / l1)
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    /// λ used for this Gauss–Seidel solve.
    pub lambda: f64,
    /// λ produced by the balancing update afterwards.
    pub next_lambda: f64,
    pub objective: f64,
    pub mse: f64,
    pub gs_iterations: usize,
    pub gs_converged: bool,
    /// Objective after every half-step of this solve.
    pub half_steps: Vec<f64>,
}

/// Parameters in physical units: angles in radians, peak positions in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalReport {
    pub r0: f64,
    pub c_hn: f64,
    pub theta: f64,
    pub phi: f64,
    pub tau_q: f64,
    pub nu_minus: f64,
    pub nu_plus: f64,
}

impl PhysicalReport {
    pub fn new(x1: &LinearBlock, psi: &QuadParams) -> Self {
        Self {
            r0: x1.r0,
            c_hn: psi.c_hn,
            theta: psi.theta(),
            phi: psi.phi(),
            tau_q: psi.tau_q,
            nu_minus: psi.nu_minus(),
            nu_plus: psi.nu_plus(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub x1: LinearBlock,
    pub psi: QuadParams,
    pub lambda_star: f64,
    pub history: Vec<OuterRecord>,
    pub report: PhysicalReport,
    /// Fitted rates at the profile frequencies.
    pub fitted: Vec<f64>,
    pub mse: f64,
    pub converged: bool,
    /// Why the loop stopped when it did not converge.
    pub failure: Option<String>,
    pub final_kkt: f64,
    pub final_pg: f64,
}

impl FitResult {
    pub fn outer_iterations(&self) -> usize {
        self.history.len()
    }

    /// λ⁽⁰⁾, λ⁽¹⁾, … including the final balancing update.
    pub fn lambda_trace(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.history.iter().map(|r| r.lambda).collect();
        if let Some(last) = self.history.last() {
            out.push(last.next_lambda);
        }
        out
    }

    pub fn objective_trace(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.objective).collect()
    }
}

/// Starting blocks and regularization parameter for [`aurora_solve_from`].
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x1: LinearBlock,
    pub psi: QuadParams,
    pub lambda: f64,
}

/// Fits a profile from the default starting point: zero linear block and
/// [`init_quad_params`].
pub fn aurora_solve(
    profile: &NmrdProfile,
    grid: &CorrelationGrid,
    bounds: &QuadBounds,
    config: &SolverConfig,
) -> Result<FitResult> {
    let start = WarmStart {
        x1: LinearBlock::zeros(grid.len()),
        psi: init_quad_params(bounds),
        lambda: config.lambda0,
    };
    aurora_solve_from(profile, grid, bounds, config, &start)
}

pub fn aurora_solve_from(
    profile: &NmrdProfile,
    grid: &CorrelationGrid,
    bounds: &QuadBounds,
    config: &SolverConfig,
    start: &WarmStart,
) -> Result<FitResult> {
    config.validate()?;
    let kernel = build_kernel(grid, profile.omega())?;
    let y = profile.rates();

    let mut x1 = start.x1.clone();
    let mut psi = start.psi;
    let mut lambda = start.lambda;
    let mut history = Vec::new();
    let mut converged = false;
    let mut failure = None;
    let mut lambda_star = lambda;
    let (mut final_kkt, mut final_pg) = (f64::NAN, f64::NAN);

    for _ in 0..config.max_outer {
        let (state, trace) = gs_solve(y, &kernel, bounds, &x1, &psi, lambda, config)?;
        x1 = state.x1;
        psi = state.psi;
        lambda_star = lambda;
        final_kkt = trace.last_kkt;
        final_pg = trace.last_pg;
        let fit = crate::model::evaluate_model(&x1, &psi, &kernel)?;
        let record = |next_lambda| OuterRecord {
            lambda,
            next_lambda,
            objective: state.g_value,
            mse: mse(y.as_slice(), fit.as_slice()).unwrap_or(f64::NAN),
            gs_iterations: state.iteration,
            gs_converged: trace.converged,
            half_steps: trace.half_steps.clone(),
        };
        let next = match bp_update(y, &kernel, &x1, &psi, config.eta) {
            Ok(v) => v,
            Err(e @ Error::Degenerate(_)) => {
                history.push(record(f64::NAN));
                failure = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        history.push(record(next));
        if (next - lambda).abs() <= config.tol_lambda * lambda.abs() {
            converged = true;
            break;
        }
        lambda = next;
    }
    if !converged && failure.is_none() {
        failure = Some(format!(
            "regularization parameter did not settle within {} outer iterations",
            config.max_outer
        ));
    }

    let psi = psi.canonical();
    let fitted = crate::model::evaluate_model(&x1, &psi, &kernel)?;
    let report = PhysicalReport::new(&x1, &psi);
    Ok(FitResult {
        mse: mse(y.as_slice(), fitted.as_slice())?,
        fitted: fitted.iter().copied().collect(),
        x1,
        psi,
        lambda_star,
        history,
        report,
        converged,
        failure,
        final_kkt,
        final_pg,
    })
}

/// Projected-gradient norm of the quadrupolar subproblem at a given point.
pub fn quad_stationarity(
    y: &DVector<f64>,
    kernel: &Kernel,
    bounds: &QuadBounds,
    x1: &LinearBlock,
    psi: &QuadParams,
) -> Result<f64> {
    let w = y - kernel.k_ext() * x1.to_x1();
    let problem = BcnlsProblem::new(kernel.omega().clone(), w, *bounds, *psi)?;
    let p = psi.to_array();
    Ok(projected_gradient_norm(&p, &problem.gradient(&p)?, bounds))
}
