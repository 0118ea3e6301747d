//! Nonnegative least squares with an L1 and a small L2 penalty:
//!
//! ```text
//! min_z ‖w − A z‖² + λ Σ z_i + η ‖z‖²   s.t. z ≥ 0
//! ```
//!
//! Solved with a warm-startable primal active-set method in the style of
//! Lawson–Hanson. Each subspace problem is solved through a QR factorization
//! of the stacked matrix `[A_P; √η I]`, which keeps the conditioning at that of
//! `A_P` instead of its normal equations.

use nalgebra::{DMatrix, DVector};

use super::SolveDiagnostics;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct L1nnlsProblem {
    pub a: DMatrix<f64>,
    pub w: DVector<f64>,
    pub lambda: f64,
    pub eta: f64,
}

impl L1nnlsProblem {
    pub fn new(a: DMatrix<f64>, w: DVector<f64>, lambda: f64, eta: f64) -> Result<Self> {
        if a.nrows() != w.len() {
            return Err(Error::invalid(format!(
                "matrix has {} rows but right-hand side has {}",
                a.nrows(),
                w.len()
            )));
        }
        if a.ncols() == 0 {
            return Err(Error::invalid("matrix has no columns"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) || !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::invalid("lambda and eta must be finite and nonnegative"));
        }
        Ok(Self { a, w, lambda, eta })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        let r = &self.w - &self.a * z;
        r.norm_squared() + self.lambda * z.sum() + self.eta * z.norm_squared()
    }

    /// `2Aᵀ(Az − w) + λ1 + 2ηz`.
    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let r = &self.a * z - &self.w;
        let mut g = self.a.tr_mul(&r) * 2.0;
        g.iter_mut()
            .zip(z.iter())
            .for_each(|(gi, zi)| *gi += self.lambda + 2.0 * self.eta * zi);
        g
    }

    /// Largest violation of the nonnegativity KKT conditions.
    pub fn kkt_residual(&self, z: &DVector<f64>) -> f64 {
        kkt_residual_from(z, &self.gradient(z))
    }

    /// Minimizer over `{z : z_i = 0 for i ∉ passive}`, ignoring the sign of the
    /// free entries. Returns `None` when the subspace system is singular.
    fn subspace_min(&self, passive: &[usize]) -> Option<DVector<f64>> {
        let m = self.a.nrows();
        let k = passive.len();
        let root_eta = self.eta.sqrt();
        let mut b = DMatrix::zeros(m + k, k);
        for (c, &j) in passive.iter().enumerate() {
            b.view_mut((0, c), (m, 1)).copy_from(&self.a.column(j));
            b[(m + c, c)] = root_eta;
        }
        // BᵀB z = Aᵀw − λ/2, with BᵀB = RᵀR
        let rhs = DVector::from_iterator(
            k,
            passive
                .iter()
                .map(|&j| self.a.column(j).dot(&self.w) - 0.5 * self.lambda),
        );
        let r = b.qr().r();
        let scale = r.diagonal().amax();
        if r.diagonal().iter().any(|d| d.abs() <= scale * 1e-15 || !d.is_finite()) {
            return None;
        }
        let u = r.tr_solve_upper_triangular(&rhs)?;
        let z = r.solve_upper_triangular(&u)?;
        let mut full = DVector::zeros(self.dim());
        for (c, &j) in passive.iter().enumerate() {
            full[j] = z[c];
        }
        Some(full)
    }
}

pub(crate) fn kkt_residual_from(z: &DVector<f64>, grad: &DVector<f64>) -> f64 {
    z.iter()
        .zip(grad.iter())
        .map(|(&zi, &gi)| (-gi).max(0.0).max((zi * gi).abs() / (1.0 + zi.abs())))
        .fold(0.0, f64::max)
}

/// Solves from the origin.
pub fn solve_l1nnls(
    problem: &L1nnlsProblem,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, SolveDiagnostics)> {
    solve_l1nnls_warm(problem, &DVector::zeros(problem.dim()), tol, max_iter)
}

/// Solves starting from `z0` (negative entries are clipped to zero).
///
/// The iterate never leaves the feasible set and the objective never
/// increases. Hitting `max_iter` returns the best iterate with
/// `converged = false`.
pub fn solve_l1nnls_warm(
    problem: &L1nnlsProblem,
    z0: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, SolveDiagnostics)> {
    let p = problem.dim();
    if z0.len() != p {
        return Err(Error::invalid(format!("warm start has {} entries, expected {p}", z0.len())));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let mut z = z0.map(|v| if v > 0.0 { v } else { 0.0 });
    let mut obj = problem.objective(&z);
    let mut trace = vec![obj];
    let mut iterations = 0;
    // Columns whose addition failed to produce a positive entry; cleared on progress.
    let mut blocked = vec![false; p];
    let mut resolve_face = z.iter().any(|&v| v > 0.0);

    loop {
        let grad = problem.gradient(&z);
        let kkt = kkt_residual_from(&z, &grad);
        if kkt <= tol {
            return Ok((z, SolveDiagnostics::new(iterations, kkt, trace, true)));
        }
        if iterations >= max_iter {
            return Ok((z, SolveDiagnostics::new(iterations, kkt, trace, false)));
        }
        iterations += 1;

        let mut passive: Vec<bool> = z.iter().map(|&v| v > 0.0).collect();
        let mut added = None;
        let mut polishing = false;
        if !resolve_face {
            let cand = (0..p)
                .filter(|&j| !passive[j] && !blocked[j] && grad[j] < -tol)
                .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));
            match cand {
                Some(j) => {
                    passive[j] = true;
                    added = Some(j);
                }
                None if passive.iter().any(|&b| b) && !blocked.iter().any(|&b| b) => {
                    // only complementarity is violated: polish the current face
                    polishing = true;
                }
                None => return Ok((z, SolveDiagnostics::new(iterations, kkt, trace, false))),
            }
        }
        resolve_face = false;

        let mut cand = z.clone();
        for _ in 0..=p {
            let idx: Vec<usize> = (0..p).filter(|&j| passive[j]).collect();
            if idx.is_empty() {
                cand.fill(0.0);
                break;
            }
            let s = problem.subspace_min(&idx);
            if let Some(j) = added.take() {
                if s.as_ref().is_none_or(|s| s[j] <= 0.0) {
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
            }
            let Some(s) = s else { break };
            if idx.iter().all(|&j| s[j] > 0.0) {
                cand = s;
                break;
            }
            // step toward s until the first passive entry reaches zero
            let (mut alpha, mut hit) = (1.0f64, idx[0]);
            for &j in &idx {
                if s[j] <= 0.0 {
                    let t = cand[j] / (cand[j] - s[j]);
                    if t < alpha {
                        alpha = t;
                        hit = j;
                    }
                }
            }
            for &j in &idx {
                cand[j] += alpha * (s[j] - cand[j]);
                if j == hit || cand[j] <= 1e-14 * (1.0 + z[j]) {
                    cand[j] = 0.0;
                    passive[j] = false;
                }
            }
        }

        let c_obj = problem.objective(&cand);
        if c_obj <= obj && cand != z {
            z = cand;
            obj = c_obj;
            trace.push(obj);
            blocked.iter_mut().for_each(|b| *b = false);
        } else if let Some(j) = (0..p).find(|&j| passive[j] && z[j] == 0.0) {
            // rounding made the enlarged face worse; do not retry this column
            blocked[j] = true;
        } else if polishing {
            return Ok((z, SolveDiagnostics::new(iterations, kkt, trace, false)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol
        }
    }

    #[test]
    fn scalar_closed_form() {
        let p = L1nnlsProblem::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
            1.0,
            0.0,
        )
        .unwrap();
        let (z, d) = solve_l1nnls(&p, 1e-12, 100).unwrap();
        assert!(d.converged);
        assert!(close(z[0], 0.5, 1e-14));
    }

    #[test]
    fn large_lambda_gives_origin() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 1.0, 0.3, 0.7]);
        let w = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let lam = 2.0 * a.tr_mul(&w).max();
        let p = L1nnlsProblem::new(a, w, lam, 0.0).unwrap();
        let (z, d) = solve_l1nnls(&p, 1e-10, 100).unwrap();
        assert!(d.converged);
        assert_eq!(z, DVector::zeros(2));
        assert_eq!(d.iterations, 0);
    }

    #[test]
    fn negative_target_stays_at_zero() {
        let p = L1nnlsProblem::new(
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![-1.0, -2.0, -3.0]),
            0.0,
            0.0,
        )
        .unwrap();
        let (z, d) = solve_l1nnls(&p, 1e-12, 10).unwrap();
        assert!(d.converged);
        assert_eq!(z.sum(), 0.0);
    }

    #[test]
    fn warm_start_at_optimum_is_a_fixed_point() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let w = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let p = L1nnlsProblem::new(a, w, 0.0, 0.0).unwrap();
        let z0 = DVector::from_vec(vec![1.0, 2.0]);
        let (z, d) = solve_l1nnls_warm(&p, &z0, 1e-12, 10).unwrap();
        assert_eq!(z, z0);
        assert_eq!(d.iterations, 0);
    }

    #[test]
    fn rejects_bad_dimensions() {
        let err = L1nnlsProblem::new(DMatrix::zeros(2, 2), DVector::zeros(3), 0.0, 0.0);
        assert!(err.is_err());
        let err = L1nnlsProblem::new(DMatrix::zeros(2, 2), DVector::zeros(2), -1.0, 0.0);
        assert!(err.is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let a = DMatrix::from_fn(6, 5, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        let w = DVector::from_fn(6, |i, _| 1.0 + i as f64);
        let p = L1nnlsProblem::new(a, w, 1e-3, 0.0).unwrap();
        let (z, d) = solve_l1nnls(&p, 1e-14, 1).unwrap();
        assert!(!d.converged);
        assert!(z.iter().all(|&v| v >= 0.0));
    }
}
