//! Domain types and the discrete forward model.
//!
//! Units are fixed across the crate: angular frequencies in Mrad/s, correlation
//! times in μs (so `ω·τ` is dimensionless) and relaxation rates in 1/s.
//! User-facing I/O works in MHz and converts with `ω = 2πν`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Starting amplitude for the quadrupolar coupling, in μs/s².
pub const INITIAL_C_HN: f64 = 0.18;

pub fn mhz_to_omega(nu: f64) -> f64 {
    2.0 * PI * nu
}

pub fn omega_to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// A measured or synthetic dispersion curve.
#[derive(Debug, Clone, PartialEq)]
pub struct NmrdProfile {
    omega: DVector<f64>,
    rates: DVector<f64>,
    conf_halfwidth: Option<DVector<f64>>,
}

impl NmrdProfile {
    pub fn new(
        omega: DVector<f64>,
        rates: DVector<f64>,
        conf_halfwidth: Option<DVector<f64>>,
    ) -> Result<Self> {
        let m = omega.len();
        if m < 2 {
            return Err(Error::invalid(format!("profile needs at least 2 points, got {m}")));
        }
        if rates.len() != m {
            return Err(Error::invalid(format!(
                "{} rates for {m} frequencies",
                rates.len()
            )));
        }
        if omega.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("frequencies must be finite and positive"));
        }
        if omega.as_slice().windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("frequencies must be strictly increasing"));
        }
        if rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("rates must be finite"));
        }
        if let Some(c) = &conf_halfwidth {
            if c.len() != m {
                return Err(Error::invalid(format!(
                    "{} confidence half-widths for {m} frequencies",
                    c.len()
                )));
            }
            if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("confidence half-widths must be nonnegative"));
            }
        }
        Ok(Self { omega, rates, conf_halfwidth })
    }

    /// Builds a profile from Larmor frequencies in MHz.
    pub fn from_mhz(nu: &[f64], rates: &[f64]) -> Result<Self> {
        let omega = DVector::from_iterator(nu.len(), nu.iter().map(|&v| mhz_to_omega(v)));
        Self::new(omega, DVector::from_column_slice(rates), None)
    }

    pub fn omega(&self) -> &DVector<f64> {
        &self.omega
    }

    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }

    pub fn conf_halfwidth(&self) -> Option<&DVector<f64>> {
        self.conf_halfwidth.as_ref()
    }

    pub fn nu_mhz(&self) -> Vec<f64> {
        self.omega.iter().map(|&w| omega_to_mhz(w)).collect()
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    /// Same frequencies and half-widths, new rates.
    pub fn with_rates(&self, rates: DVector<f64>) -> Result<Self> {
        Self::new(self.omega.clone(), rates, self.conf_halfwidth.clone())
    }
}

/// Log-equispaced correlation times in μs.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGrid {
    tau: DVector<f64>,
}

impl CorrelationGrid {
    pub fn log_spaced(tau_min: f64, tau_max: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("correlation grid must have at least one point"));
        }
        if !(tau_min > 0.0 && tau_max.is_finite()) {
            return Err(Error::invalid("tau range must be positive and finite"));
        }
        if n == 1 {
            if tau_min != tau_max {
                return Err(Error::invalid("a one-point grid needs tau_min == tau_max"));
            }
            return Ok(Self { tau: DVector::from_element(1, tau_min) });
        }
        if tau_max <= tau_min {
            return Err(Error::invalid("tau_max must exceed tau_min"));
        }
        let (lo, hi) = (tau_min.log10(), tau_max.log10());
        let step = (hi - lo) / (n - 1) as f64;
        let mut tau = DVector::from_fn(n, |j, _| 10f64.powf(lo + step * j as f64));
        // pin the endpoints exactly
        tau[0] = tau_min;
        tau[n - 1] = tau_max;
        Ok(Self { tau })
    }

    /// Wraps explicit values, checking positivity, ordering and log spacing.
    pub fn from_values(tau: Vec<f64>) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::invalid("correlation grid must have at least one point"));
        }
        if tau.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::invalid("correlation times must be finite and positive"));
        }
        if tau.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("correlation times must be strictly increasing"));
        }
        if tau.len() > 2 {
            let ratio = tau[1] / tau[0];
            if tau
                .windows(2)
                .any(|p| ((p[1] / p[0]) / ratio - 1.0).abs() > 1e-12 * 10.0)
            {
                return Err(Error::invalid("correlation times are not log-equispaced"));
            }
        }
        Ok(Self { tau: DVector::from_vec(tau) })
    }

    pub fn tau(&self) -> &DVector<f64> {
        &self.tau
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn tau_min(&self) -> f64 {
        self.tau[0]
    }

    pub fn tau_max(&self) -> f64 {
        self.tau[self.tau.len() - 1]
    }
}

/// Discretized ¹H–¹H relaxation operator and its offset-extended form `[K 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    omega: DVector<f64>,
    k: DMatrix<f64>,
    k_ext: DMatrix<f64>,
}

impl Kernel {
    /// The angular frequencies the rows were evaluated at.
    pub fn omega(&self) -> &DVector<f64> {
        &self.omega
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn k_ext(&self) -> &DMatrix<f64> {
        &self.k_ext
    }

    pub fn rows(&self) -> usize {
        self.k.nrows()
    }

    /// Number of correlation times (columns of `k`).
    pub fn n_tau(&self) -> usize {
        self.k.ncols()
    }
}

pub fn kernel_entry(omega: f64, tau: f64) -> f64 {
    let wt = omega * tau;
    tau / (1.0 + wt * wt) + 4.0 * tau / (1.0 + 4.0 * wt * wt)
}

/// Builds the m×n kernel for the given angular frequencies.
///
/// `ω = 0` is accepted here (the entry is `5τ`); profiles reject it upstream.
pub fn build_kernel(grid: &CorrelationGrid, omega: &DVector<f64>) -> Result<Kernel> {
    if grid.is_empty() || omega.is_empty() {
        return Err(Error::invalid("kernel needs a nonempty grid and frequency vector"));
    }
    if omega.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("kernel frequencies must be finite and nonnegative"));
    }
    let (m, n) = (omega.len(), grid.len());
    if n <= m {
        log::warn!("correlation grid has n = {n} points for m = {m} frequencies; expected n > m");
    }
    let tau = grid.tau();
    let k = DMatrix::from_fn(m, n, |i, j| kernel_entry(omega[i], tau[j]));
    let k_ext = DMatrix::from_fn(m, n + 1, |i, j| if j < n { k[(i, j)] } else { 1.0 });
    Ok(Kernel { omega: omega.clone(), k, k_ext })
}

/// Offset and correlation-time distribution, the linear unknowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBlock {
    pub f: Vec<f64>,
    pub r0: f64,
}

impl LinearBlock {
    pub fn zeros(n: usize) -> Self {
        Self { f: vec![0.0; n], r0: 0.0 }
    }

    /// Splits a stacked `(f, r0)` vector.
    pub fn from_x1(x1: &DVector<f64>) -> Self {
        let n = x1.len() - 1;
        Self { f: x1.rows(0, n).iter().copied().collect(), r0: x1[n] }
    }

    pub fn to_x1(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.f.len() + 1,
            self.f.iter().copied().chain(std::iter::once(self.r0)),
        )
    }

    pub fn is_feasible(&self) -> bool {
        self.r0 >= 0.0 && self.f.iter().all(|&v| v >= 0.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.f.iter().map(|v| v.abs()).sum::<f64>() + self.r0.abs()
    }
}

/// The six quadrupolar parameters.
///
/// `sin2_theta` and `sin2_phi` store `sin²Θ` and `sin²Φ`; the angles themselves
/// are recovered with `asin(√·)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadParams {
    pub c_hn: f64,
    pub sin2_theta: f64,
    pub sin2_phi: f64,
    pub tau_q: f64,
    pub omega_minus: f64,
    pub omega_plus: f64,
}

impl QuadParams {
    pub fn from_array(p: [f64; 6]) -> Self {
        Self {
            c_hn: p[0],
            sin2_theta: p[1],
            sin2_phi: p[2],
            tau_q: p[3],
            omega_minus: p[4],
            omega_plus: p[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.c_hn,
            self.sin2_theta,
            self.sin2_phi,
            self.tau_q,
            self.omega_minus,
            self.omega_plus,
        ]
    }

    /// From physical quantities: angles in radians, peak positions in MHz.
    pub fn from_physical(
        c_hn: f64,
        theta: f64,
        phi: f64,
        tau_q: f64,
        nu_minus: f64,
        nu_plus: f64,
    ) -> Self {
        Self {
            c_hn,
            sin2_theta: theta.sin().powi(2),
            sin2_phi: phi.sin().powi(2),
            tau_q,
            omega_minus: mhz_to_omega(nu_minus),
            omega_plus: mhz_to_omega(nu_plus),
        }
    }

    pub fn theta(&self) -> f64 {
        self.sin2_theta.clamp(0.0, 1.0).sqrt().asin()
    }

    pub fn phi(&self) -> f64 {
        self.sin2_phi.clamp(0.0, 1.0).sqrt().asin()
    }

    pub fn nu_minus(&self) -> f64 {
        omega_to_mhz(self.omega_minus)
    }

    pub fn nu_plus(&self) -> f64 {
        omega_to_mhz(self.omega_plus)
    }

    /// Weights of the three Lorentzian pairs. They always sum to 2.
    pub fn weights(&self) -> [f64; 3] {
        peak_weights(self.sin2_theta, self.sin2_phi)
    }

    /// The model is unchanged by swapping the two peak positions together
    /// with `ψ3 → 1 − ψ3`. Returns the representative with `ψ5 ≤ ψ6`.
    pub fn canonical(&self) -> Self {
        if self.omega_minus <= self.omega_plus {
            return *self;
        }
        Self {
            sin2_phi: 1.0 - self.sin2_phi,
            omega_minus: self.omega_plus,
            omega_plus: self.omega_minus,
            ..*self
        }
    }
}

pub fn peak_weights(s2t: f64, s2p: f64) -> [f64; 3] {
    const THIRD: f64 = 1.0 / 3.0;
    [THIRD + s2t * (1.0 - s2p), THIRD + s2t * s2p, THIRD + (1.0 - s2t)]
}

/// Box constraints on [`QuadParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadBounds {
    c_bar: f64,
    tau_bar: f64,
    omega_lo: f64,
    omega_hi: f64,
}

impl QuadBounds {
    pub fn new(c_bar: f64, tau_bar: f64, omega_lo: f64, omega_hi: f64) -> Result<Self> {
        if !(c_bar > 0.0 && c_bar.is_finite()) {
            return Err(Error::invalid(format!("c_bar must be positive, got {c_bar}")));
        }
        if !(tau_bar > 0.0 && tau_bar.is_finite()) {
            return Err(Error::invalid(format!("tau_bar must be positive, got {tau_bar}")));
        }
        if !(omega_lo > 0.0 && omega_hi > omega_lo && omega_hi.is_finite()) {
            return Err(Error::invalid(format!(
                "peak window must satisfy 0 < lo < hi, got [{omega_lo}, {omega_hi}]"
            )));
        }
        Ok(Self { c_bar, tau_bar, omega_lo, omega_hi })
    }

    /// Window given as Larmor frequencies in MHz.
    pub fn from_mhz_window(c_bar: f64, tau_bar: f64, nu_lo: f64, nu_hi: f64) -> Result<Self> {
        Self::new(c_bar, tau_bar, mhz_to_omega(nu_lo), mhz_to_omega(nu_hi))
    }

    pub fn c_bar(&self) -> f64 {
        self.c_bar
    }

    pub fn tau_bar(&self) -> f64 {
        self.tau_bar
    }

    pub fn omega_lo(&self) -> f64 {
        self.omega_lo
    }

    pub fn omega_hi(&self) -> f64 {
        self.omega_hi
    }

    pub fn lower(&self) -> [f64; 6] {
        [0.0, 0.0, 0.0, 0.0, self.omega_lo, self.omega_lo]
    }

    pub fn upper(&self) -> [f64; 6] {
        [self.c_bar, 1.0, 1.0, self.tau_bar, self.omega_hi, self.omega_hi]
    }

    pub fn contains(&self, psi: &QuadParams) -> bool {
        let (lo, hi) = (self.lower(), self.upper());
        psi.to_array()
            .iter()
            .enumerate()
            .all(|(j, &v)| v >= lo[j] && v <= hi[j])
    }

    pub fn project(&self, p: [f64; 6]) -> [f64; 6] {
        let (lo, hi) = (self.lower(), self.upper());
        std::array::from_fn(|j| p[j].clamp(lo[j], hi[j]))
    }
}

/// Physical constants entering the dipolar coupling estimate for C^HN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Vacuum permeability as tabulated, T² J⁻¹ m³.
    pub mu0: f64,
    /// ¹H gyromagnetic factor, T⁻¹ s⁻¹.
    pub gamma_h: f64,
    /// ¹⁴N gyromagnetic factor, T⁻¹ s⁻¹.
    pub gamma_n: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// ¹H–¹⁴N inter-spin distance, m.
    pub r_hn: f64,
}

impl PhysicalConstants {
    pub const TABULATED: PhysicalConstants = PhysicalConstants {
        mu0: 1e-7,
        gamma_h: 2.577e6,
        gamma_n: 3.078e6,
        hbar: 1.05472e-34,
        r_hn: 1.4e-10,
    };

    /// `(2/3)·(μ0/4π · γH γN ħ / r³)²` evaluated literally in SI units.
    ///
    /// This does not reproduce [`INITIAL_C_HN`] with the tabulated values; the
    /// solver starts from 0.18 instead.
    pub fn dipolar_coupling(&self) -> f64 {
        let d = self.mu0 / (4.0 * PI) * self.gamma_h * self.gamma_n * self.hbar
            / self.r_hn.powi(3);
        2.0 / 3.0 * d * d
    }
}

#[inline]
fn lorentz(u: f64, tau: f64) -> f64 {
    tau / (1.0 + u * u * tau * tau)
}

/// Symmetric Lorentzian pair `L(ω; τ, c)` and its partials in `τ` and `c`.
#[inline]
fn pair_with_partials(omega: f64, tau: f64, c: f64) -> (f64, f64, f64) {
    let (a, b) = (omega - c, omega + c);
    let da = 1.0 + a * a * tau * tau;
    let db = 1.0 + b * b * tau * tau;
    let val = tau / da + tau / db;
    let d_tau = (1.0 - a * a * tau * tau) / (da * da) + (1.0 - b * b * tau * tau) / (db * db);
    let t3 = 2.0 * tau * tau * tau;
    let d_c = t3 * a / (da * da) - t3 * b / (db * db);
    (val, d_tau, d_c)
}

/// Quadrupolar contribution to the rates at each frequency.
pub fn eval_quad(psi: &QuadParams, omega: &DVector<f64>) -> DVector<f64> {
    let w = psi.weights();
    let tq = psi.tau_q;
    let c3 = psi.omega_plus - psi.omega_minus;
    omega.map(|om| {
        let l1 = lorentz(om - psi.omega_minus, tq) + lorentz(om + psi.omega_minus, tq);
        let l2 = lorentz(om - psi.omega_plus, tq) + lorentz(om + psi.omega_plus, tq);
        let l3 = lorentz(om - c3, tq) + lorentz(om + c3, tq);
        psi.c_hn * (w[0] * l1 + w[1] * l2 + w[2] * l3)
    })
}

/// Analytic m×6 Jacobian of [`eval_quad`] with respect to the parameter array.
pub fn quad_jacobian(psi: &QuadParams, omega: &DVector<f64>) -> DMatrix<f64> {
    let m = omega.len();
    let (s2t, s2p) = (psi.sin2_theta, psi.sin2_phi);
    let w = psi.weights();
    let dw_dt = [1.0 - s2p, s2p, -1.0];
    let dw_dp = [-s2t, s2t, 0.0];
    let tq = psi.tau_q;
    let c = psi.c_hn;
    let c3 = psi.omega_plus - psi.omega_minus;
    let mut jac = DMatrix::zeros(m, 6);
    for i in 0..m {
        let om = omega[i];
        let (l1, t1, g1) = pair_with_partials(om, tq, psi.omega_minus);
        let (l2, t2, g2) = pair_with_partials(om, tq, psi.omega_plus);
        let (l3, t3, g3) = pair_with_partials(om, tq, c3);
        let l = [l1, l2, l3];
        jac[(i, 0)] = w[0] * l1 + w[1] * l2 + w[2] * l3;
        jac[(i, 1)] = c * (dw_dt[0] * l[0] + dw_dt[1] * l[1] + dw_dt[2] * l[2]);
        jac[(i, 2)] = c * (dw_dp[0] * l[0] + dw_dp[1] * l[1] + dw_dp[2] * l[2]);
        jac[(i, 3)] = c * (w[0] * t1 + w[1] * t2 + w[2] * t3);
        jac[(i, 4)] = c * (w[0] * g1 - w[2] * g3);
        jac[(i, 5)] = c * (w[1] * g2 + w[2] * g3);
    }
    jac
}

/// `K f + F2(ψ) + r0`.
pub fn evaluate_model(x1: &LinearBlock, psi: &QuadParams, kernel: &Kernel) -> Result<DVector<f64>> {
    if x1.f.len() != kernel.n_tau() {
        return Err(Error::invalid(format!(
            "distribution has {} entries, kernel has {} columns",
            x1.f.len(),
            kernel.n_tau()
        )));
    }
    Ok(kernel.k_ext() * x1.to_x1() + eval_quad(psi, kernel.omega()))
}

/// `‖y − K_e x1 − F2(ψ)‖² + λ‖x1‖₁ + η‖x1‖²`, with the offset inside both penalties.
pub fn objective(
    x1: &LinearBlock,
    psi: &QuadParams,
    y: &DVector<f64>,
    kernel: &Kernel,
    lambda: f64,
    eta: f64,
) -> Result<f64> {
    let fit = evaluate_model(x1, psi, kernel)?;
    if fit.len() != y.len() {
        return Err(Error::invalid("data and kernel row counts differ"));
    }
    let x = x1.to_x1();
    Ok((y - fit).norm_squared() + lambda * x1.l1_norm() + eta * x.norm_squared())
}
