//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use aurora_core::model::{eval_quad, QuadBounds, QuadParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn default_bounds() -> QuadBounds {
    QuadBounds::from_mhz_window(100.0, 100.0, 1.5, 3.5).unwrap()
}

/// Uniform draw from the box.
pub fn random_psi(rng: &mut ChaCha8Rng, bounds: &QuadBounds) -> QuadParams {
    let (lo, hi) = (bounds.lower(), bounds.upper());
    QuadParams::from_array(std::array::from_fn(|j| rng.random_range(lo[j]..=hi[j])))
}

/// Step used by the finite-difference oracle.
pub fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

/// Central differences with step `scale · fd_step(ψ_j)`.
pub fn fd_jacobian_scaled(psi: &QuadParams, omega: &DVector<f64>, scale: f64) -> DMatrix<f64> {
    let p = psi.to_array();
    let mut jac = DMatrix::zeros(omega.len(), 6);
    for j in 0..6 {
        let h = scale * fd_step(p[j]);
        let (mut up, mut dn) = (p, p);
        up[j] += h;
        dn[j] -= h;
        let col = (eval_quad(&QuadParams::from_array(up), omega)
            - eval_quad(&QuadParams::from_array(dn), omega))
            / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

pub fn fd_jacobian(psi: &QuadParams, omega: &DVector<f64>) -> DMatrix<f64> {
    fd_jacobian_scaled(psi, omega, 1.0)
}

/// One Richardson level on top of [`fd_jacobian`] (steps h and h/2).
pub fn fd_jacobian_richardson(psi: &QuadParams, omega: &DVector<f64>) -> DMatrix<f64> {
    let coarse = fd_jacobian_scaled(psi, omega, 1.0);
    let fine = fd_jacobian_scaled(psi, omega, 0.5);
    (fine * 4.0 - coarse) / 3.0
}

/// Worst column-wise relative error of `analytic` against `fd`.
///
/// Columns whose norm is below the difference quotient's rounding floor
/// `4ε‖F‖/h` (divided by the tolerance) are measured against that floor.
pub fn jacobian_rel_error(
    analytic: &DMatrix<f64>,
    fd: &DMatrix<f64>,
    psi: &QuadParams,
    omega: &DVector<f64>,
    tol: f64,
) -> f64 {
    let f_norm = eval_quad(psi, omega).norm();
    let p = psi.to_array();
    (0..6)
        .map(|j| {
            let floor = 4.0 * f64::EPSILON * f_norm / fd_step(p[j]);
            let scale = fd.column(j).norm().max(floor / tol);
            let err = (analytic.column(j) - fd.column(j)).norm();
            if scale > 0.0 { err / scale } else { err }
        })
        .fold(0.0, f64::max)
}

pub fn l1nnls_objective(a: &DMatrix<f64>, w: &DVector<f64>, lambda: f64, eta: f64, z: &DVector<f64>) -> f64 {
    (w - a * z).norm_squared() + lambda * z.sum() + eta * z.norm_squared()
}

/// Exhaustive enumeration of supports: for each subset, solve the normal
/// equations on that subset and keep the best nonnegative candidate.
pub fn brute_force_l1nnls(a: &DMatrix<f64>, w: &DVector<f64>, lambda: f64, eta: f64) -> (DVector<f64>, f64) {
    let p = a.ncols();
    let mut best = DVector::zeros(p);
    let mut best_obj = l1nnls_objective(a, w, lambda, eta, &best);
    for mask in 1u32..(1 << p) {
        let idx: Vec<usize> = (0..p).filter(|j| mask & (1 << j) != 0).collect();
        let k = idx.len();
        let sub = DMatrix::from_fn(a.nrows(), k, |i, c| a[(i, idx[c])]);
        let lhs = sub.tr_mul(&sub) + DMatrix::identity(k, k) * eta;
        let rhs = sub.tr_mul(w) - DVector::from_element(k, 0.5 * lambda);
        let Some(zs) = lhs.lu().solve(&rhs) else { continue };
        if zs.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut z = DVector::zeros(p);
        for (c, &j) in idx.iter().enumerate() {
            z[j] = zs[c];
        }
        let obj = l1nnls_objective(a, w, lambda, eta, &z);
        if obj < best_obj {
            best_obj = obj;
            best = z;
        }
    }
    (best, best_obj)
}

/// Linear frequency grid through the peak region, Mrad/s.
pub fn peak_omega(m: usize) -> DVector<f64> {
    DVector::from_fn(m, |i, _| aurora_core::model::mhz_to_omega(0.2 + 6.0 * i as f64 / (m - 1) as f64))
}

/// A randomized synthetic fitting problem.
pub struct RandomInstance {
    pub profile: aurora_core::model::NmrdProfile,
    pub grid: aurora_core::model::CorrelationGrid,
    pub bounds: QuadBounds,
    pub lambda: f64,
}

/// Random distribution (one to three log-normal bumps), random peaks inside
/// the default window, random offset, multiplicative noise up to 5%.
pub fn random_instance(seed: u64) -> RandomInstance {
    use aurora_core::model::{build_kernel, evaluate_model, CorrelationGrid, LinearBlock, NmrdProfile};
    let mut rng = rng(seed);
    let grid = CorrelationGrid::log_spaced(1e-3, 1e3, 80).unwrap();
    let omega = aurora_core::synth::ReferenceScenario::default_omega();
    let mut f = vec![0.0; grid.len()];
    for _ in 0..rng.random_range(1..=3) {
        let center = rng.random_range(-2.0..2.0f64);
        let width = rng.random_range(0.1..0.5);
        let amp = rng.random_range(0.5..20.0);
        for (fj, t) in f.iter_mut().zip(grid.tau().iter()) {
            *fj += amp * (-0.5 * ((t.log10() - center) / width).powi(2)).exp();
        }
    }
    let kernel = build_kernel(&grid, &omega).unwrap();
    let kf = kernel.k() * DVector::from_column_slice(&f);
    let scale = rng.random_range(5.0..40.0) / kf.max();
    f.iter_mut().for_each(|v| *v *= scale);
    let bounds = default_bounds();
    let psi = QuadParams::from_physical(
        rng.random_range(1.0..40.0),
        rng.random_range(0.2..1.4),
        rng.random_range(0.2..1.4),
        rng.random_range(0.3..3.0),
        rng.random_range(1.6..2.5),
        rng.random_range(2.5..3.4),
    );
    let x1 = LinearBlock { f, r0: rng.random_range(0.5..10.0) };
    let clean = evaluate_model(&x1, &psi, &kernel).unwrap();
    let delta = rng.random_range(0.0..0.05);
    let rates = clean.map(|y| y * (1.0 + delta * rng.random_range(-1.0..=1.0)));
    let profile = NmrdProfile::new(omega, rates, None).unwrap();
    let lambda = 10f64.powf(rng.random_range(-10.0..-2.0));
    RandomInstance { profile, grid, bounds, lambda }
}
