//! Box-constrained nonlinear least squares for the quadrupolar block:
//!
//! ```text
//! min_ψ ‖F2(ψ) − w‖²   s.t. ψ ∈ B_ψ
//! ```
//!
//! Projected Newton iteration where the Hessian of the free variables is the
//! Levenberg–Marquardt matrix `JᵀJ + μI`. Variables sitting on a bound with
//! the gradient pushing outward are held fixed for the step; steps are
//! projected back onto the box and accepted with an Armijo test.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};

use super::SolveDiagnostics;
use crate::error::{Error, Result};
use crate::model::{eval_quad, quad_jacobian, QuadBounds, QuadParams};

const ARMIJO: f64 = 1e-4;
const MAX_DAMPING: f64 = 1e30;

#[derive(Debug, Clone)]
pub struct BcnlsProblem {
    omega: DVector<f64>,
    w: DVector<f64>,
    bounds: QuadBounds,
    psi0: QuadParams,
}

impl BcnlsProblem {
    pub fn new(
        omega: DVector<f64>,
        w: DVector<f64>,
        bounds: QuadBounds,
        psi0: QuadParams,
    ) -> Result<Self> {
        if omega.is_empty() || omega.len() != w.len() {
            return Err(Error::invalid(format!(
                "{} frequencies for a target of length {}",
                omega.len(),
                w.len()
            )));
        }
        if !bounds.contains(&psi0) {
            return Err(Error::invalid("starting quadrupolar parameters lie outside the box"));
        }
        Ok(Self { omega, w, bounds, psi0 })
    }

    pub fn bounds(&self) -> &QuadBounds {
        &self.bounds
    }

    pub fn psi0(&self) -> &QuadParams {
        &self.psi0
    }

    pub fn residual(&self, p: &[f64; 6]) -> DVector<f64> {
        eval_quad(&QuadParams::from_array(*p), &self.omega) - &self.w
    }

    pub fn objective(&self, p: &[f64; 6]) -> f64 {
        self.residual(p).norm_squared()
    }

    pub fn jacobian(&self, p: &[f64; 6]) -> Result<DMatrix<f64>> {
        let jac = quad_jacobian(&QuadParams::from_array(*p), &self.omega);
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("quadrupolar Jacobian is not finite"));
        }
        Ok(jac)
    }

    /// `∇h = 2Jᵀr`.
    pub fn gradient(&self, p: &[f64; 6]) -> Result<[f64; 6]> {
        let r = self.residual(p);
        let jac = self.jacobian(p)?;
        let g = jac.tr_mul(&r) * 2.0;
        Ok(std::array::from_fn(|j| g[j]))
    }
}

/// `‖P(ψ − g) − ψ‖`.
pub fn projected_gradient_norm(p: &[f64; 6], grad: &[f64; 6], bounds: &QuadBounds) -> f64 {
    let q = bounds.project(std::array::from_fn(|j| p[j] - grad[j]));
    (0..6).map(|j| (q[j] - p[j]).powi(2)).sum::<f64>().sqrt()
}

fn active_set(p: &[f64; 6], grad: &[f64; 6], bounds: &QuadBounds) -> [bool; 6] {
    let (lo, hi) = (bounds.lower(), bounds.upper());
    std::array::from_fn(|j| {
        let at_lo = p[j] <= lo[j] + 1e-12 * (1.0 + lo[j].abs());
        let at_hi = p[j] >= hi[j] - 1e-12 * (1.0 + hi[j].abs());
        (at_lo && grad[j] > 0.0) || (at_hi && grad[j] < 0.0)
    })
}

/// Unprojected step: LM-damped Newton on the free variables, zero on the active ones.
pub fn projected_newton_direction(
    jac: &DMatrix<f64>,
    residual: &DVector<f64>,
    p: &[f64; 6],
    grad: &[f64; 6],
    bounds: &QuadBounds,
    damping: f64,
) -> [f64; 6] {
    let active = active_set(p, grad, bounds);
    let jtj = jac.tr_mul(jac);
    let jtr = jac.tr_mul(residual);
    let mut h = SMatrix::<f64, 6, 6>::zeros();
    let mut rhs = SVector::<f64, 6>::zeros();
    for a in 0..6 {
        if active[a] {
            // decouple the active variable and give it a zero step
            h[(a, a)] = 1.0;
            continue;
        }
        rhs[a] = -jtr[a];
        for b in 0..6 {
            if !active[b] {
                h[(a, b)] = jtj[(a, b)];
            }
        }
        h[(a, a)] += damping;
    }
    let d = match h.cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => h.lu().solve(&rhs).unwrap_or_else(SVector::zeros),
    };
    std::array::from_fn(|j| if active[j] || !d[j].is_finite() { 0.0 } else { d[j] })
}

pub fn solve_bcnls(
    problem: &BcnlsProblem,
    tol: f64,
    max_iter: usize,
) -> Result<(QuadParams, SolveDiagnostics)> {
    let bounds = problem.bounds;
    let mut p = problem.psi0.to_array();
    let mut h = problem.objective(&p);
    let mut trace = vec![h];
    let mut r = problem.residual(&p);
    let mut jac = problem.jacobian(&p)?;
    let mut damping = {
        let tr: f64 = jac.iter().map(|v| v * v).sum();
        if tr > 0.0 {
            1e-3 * tr / 6.0
        } else {
            1e-3
        }
    };
    let mut iterations = 0;
    loop {
        let g_vec = jac.tr_mul(&r) * 2.0;
        let grad: [f64; 6] = std::array::from_fn(|j| g_vec[j]);
        let pg = projected_gradient_norm(&p, &grad, &bounds);
        let done = |converged| {
            (QuadParams::from_array(p), SolveDiagnostics::new(iterations, pg, trace.clone(), converged))
        };
        if pg <= tol || h == 0.0 {
            return Ok(done(true));
        }
        if iterations >= max_iter {
            return Ok(done(false));
        }

        let accepted = loop {
            let d = projected_newton_direction(&jac, &r, &p, &grad, &bounds, damping);
            let q = bounds.project(std::array::from_fn(|j| p[j] + d[j]));
            let slope: f64 = (0..6).map(|j| grad[j] * (q[j] - p[j])).sum();
            if q != p && slope < 0.0 {
                let hq = problem.objective(&q);
                if hq <= h + ARMIJO * slope {
                    damping = (damping * 0.1).max(f64::MIN_POSITIVE);
                    break Some((q, hq));
                }
            }
            damping *= 10.0;
            if damping > MAX_DAMPING {
                break None;
            }
        };
        let Some((q, hq)) = accepted else {
            // no descent step is representable at this point
            return Ok(done(false));
        };
        iterations += 1;
        let stalled = h - hq <= 1e-15 * h
            && (0..6).all(|j| (q[j] - p[j]).abs() <= 1e-15 * (1.0 + p[j].abs()));
        p = q;
        h = hq;
        trace.push(h);
        r = problem.residual(&p);
        jac = problem.jacobian(&p)?;
        if stalled {
            let g_vec = jac.tr_mul(&r) * 2.0;
            let grad: [f64; 6] = std::array::from_fn(|j| g_vec[j]);
            let pg = projected_gradient_norm(&p, &grad, &bounds);
            return Ok((
                QuadParams::from_array(p),
                SolveDiagnostics::new(iterations, pg, trace, pg <= tol),
            ));
        }
    }
}
