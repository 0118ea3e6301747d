//! Synthetic profiles, the multiplicative noise model and the Monte-Carlo
//! robustness harness.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aurora::{aurora_solve, FitResult, PhysicalReport, SolverConfig};
use crate::error::{Error, Result};
use crate::metrics::{mse, pre, pre_scalar};
use crate::model::{
    build_kernel, evaluate_model, mhz_to_omega, CorrelationGrid, LinearBlock, NmrdProfile,
    QuadBounds, QuadParams,
};

/// Reference values of the default scenario.
pub mod reference {
    pub const R0: f64 = 3.69;
    pub const C_HN: f64 = 18.84;
    pub const TAU_Q: f64 = 0.96;
    pub const THETA: f64 = 1.09;
    pub const PHI: f64 = 0.57;
    pub const NU_MINUS: f64 = 2.15;
    pub const NU_PLUS: f64 = 2.87;
    /// Peak window used to bound the peak positions, MHz.
    pub const WINDOW_MHZ: (f64, f64) = (1.5, 3.5);
    /// Profile frequency range and point count, MHz.
    pub const NU_RANGE_MHZ: (f64, f64) = (0.01, 40.0);
    pub const M: usize = 48;
    /// Centres of the two log-normal bumps of the distribution, μs.
    pub const BUMP_CENTERS_US: [f64; 2] = [0.1, 10.0];
    /// Width of each bump in decades.
    pub const BUMP_SIGMA_DECADES: f64 = 0.15;
    /// Largest value of `K f` over the profile frequencies, 1/s.
    pub const MAX_KF: f64 = 20.0;
}

/// Ground truth for a synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceScenario {
    pub name: String,
    pub x1_ref: LinearBlock,
    pub psi_ref: QuadParams,
    pub grid: CorrelationGrid,
    pub omega: DVector<f64>,
    /// Peak window in MHz.
    pub window_mhz: (f64, f64),
}

impl ReferenceScenario {
    pub const NAMES: [&'static str; 2] = ["default", "offset-only"];

    pub fn by_name(name: &str, grid: CorrelationGrid) -> Result<Self> {
        match name {
            "default" => Self::default_with_grid(grid),
            "offset-only" => Self::offset_only(grid),
            other => Err(Error::Config(format!(
                "unknown scenario {other:?}; expected one of {:?}",
                Self::NAMES
            ))),
        }
    }

    /// Log-spaced frequencies over the standard range.
    pub fn default_omega() -> DVector<f64> {
        let (lo, hi) = reference::NU_RANGE_MHZ;
        let m = reference::M;
        let (a, b) = (lo.log10(), hi.log10());
        DVector::from_fn(m, |i, _| {
            let nu = if i == 0 {
                lo
            } else if i == m - 1 {
                hi
            } else {
                10f64.powf(a + (b - a) * i as f64 / (m - 1) as f64)
            };
            mhz_to_omega(nu)
        })
    }

    pub fn default_psi() -> QuadParams {
        use reference::*;
        QuadParams::from_physical(C_HN, THETA, PHI, TAU_Q, NU_MINUS, NU_PLUS)
    }

    /// The default scenario on the standard 1e-3…1e3 μs, 200-point grid.
    pub fn default_scenario() -> Self {
        let grid = CorrelationGrid::log_spaced(1e-3, 1e3, 200).expect("static grid is valid");
        Self::default_with_grid(grid).expect("static scenario is valid")
    }

    /// Two log-normal bumps contributing equally at zero frequency, scaled so
    /// that `max K f` over the profile frequencies equals [`reference::MAX_KF`].
    pub fn default_with_grid(grid: CorrelationGrid) -> Result<Self> {
        let omega = Self::default_omega();
        let tau = grid.tau();
        let bump = |center: f64| -> Vec<f64> {
            let s = reference::BUMP_SIGMA_DECADES;
            let raw: Vec<f64> = tau
                .iter()
                .map(|&t| (-0.5 * ((t.log10() - center.log10()) / s).powi(2)).exp())
                .collect();
            // normalize Σ τ_j f_j so each bump gives the same ω → 0 rate
            let weight: f64 = raw.iter().zip(tau.iter()).map(|(f, t)| f * t).sum();
            if weight > 0.0 {
                raw.iter().map(|f| f / weight).collect()
            } else {
                raw
            }
        };
        let [c1, c2] = reference::BUMP_CENTERS_US;
        let (b1, b2) = (bump(c1), bump(c2));
        let mut f: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
        let kernel = build_kernel(&grid, &omega)?;
        let kf = kernel.k() * DVector::from_column_slice(&f);
        let peak = kf.max();
        if !(peak > 0.0) {
            return Err(Error::invalid("grid does not cover the reference distribution"));
        }
        let scale = reference::MAX_KF / peak;
        f.iter_mut().for_each(|v| *v *= scale);
        Ok(Self {
            name: "default".into(),
            x1_ref: LinearBlock { f, r0: reference::R0 },
            psi_ref: Self::default_psi(),
            grid,
            omega,
            window_mhz: reference::WINDOW_MHZ,
        })
    }

    /// Flat profile at the reference offset: no distribution, no peaks.
    pub fn offset_only(grid: CorrelationGrid) -> Result<Self> {
        let mut psi = Self::default_psi();
        psi.c_hn = 0.0;
        Ok(Self {
            name: "offset-only".into(),
            x1_ref: LinearBlock { f: vec![0.0; grid.len()], r0: reference::R0 },
            psi_ref: psi,
            grid,
            omega: Self::default_omega(),
            window_mhz: reference::WINDOW_MHZ,
        })
    }

    pub fn bounds(&self, c_bar: f64, tau_bar: f64) -> Result<QuadBounds> {
        QuadBounds::from_mhz_window(c_bar, tau_bar, self.window_mhz.0, self.window_mhz.1)
    }

    pub fn reference_report(&self) -> PhysicalReport {
        PhysicalReport::new(&self.x1_ref, &self.psi_ref)
    }
}

/// Noise-free rates of the scenario.
pub fn synthesize_profile(scenario: &ReferenceScenario) -> Result<NmrdProfile> {
    let kernel = build_kernel(&scenario.grid, &scenario.omega)?;
    let rates = evaluate_model(&scenario.x1_ref, &scenario.psi_ref, &kernel)?;
    NmrdProfile::new(scenario.omega.clone(), rates, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub delta: f64,
    pub seed: u64,
    pub replicates: usize,
}

impl NoiseSpec {
    pub fn new(delta: f64, seed: u64, replicates: usize) -> Result<Self> {
        let spec = Self { delta, seed, replicates };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("noise level must be >= 0, got {}", self.delta)));
        }
        if self.replicates == 0 {
            return Err(Error::Config("at least one replicate is required".into()));
        }
        Ok(())
    }
}

/// Uniform draws on [−1, 1]; the stream is selected by the replicate index.
pub fn noise_vector(seed: u64, replicate_index: u64, m: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate_index);
    (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// `y_i (1 + δ v_i)` for a given draw `v`.
pub fn apply_multiplicative_noise(
    profile: &NmrdProfile,
    delta: f64,
    v: &[f64],
) -> Result<NmrdProfile> {
    if v.len() != profile.len() {
        return Err(Error::invalid("noise vector length does not match profile"));
    }
    let rates = DVector::from_iterator(
        profile.len(),
        profile.rates().iter().zip(v).map(|(y, vi)| y * (1.0 + delta * vi)),
    );
    profile.with_rates(rates)
}

pub fn add_noise(
    profile: &NmrdProfile,
    spec: &NoiseSpec,
    replicate_index: u64,
) -> Result<NmrdProfile> {
    spec.validate()?;
    if spec.delta == 0.0 {
        return Ok(profile.clone());
    }
    let v = noise_vector(spec.seed, replicate_index, profile.len());
    apply_multiplicative_noise(profile, spec.delta, &v)
}

/// Per-parameter values or errors in the order of the bar-plot output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub f: f64,
    pub r0: f64,
    pub c_hn: f64,
    pub theta: f64,
    pub phi: f64,
    pub tau_q: f64,
    pub nu_minus: f64,
    pub nu_plus: f64,
    pub c_hn_tau_q: f64,
}

impl ParamSet {
    pub const LABELS: [&'static str; 9] =
        ["f", "R0", "C_HN", "Theta", "Phi", "tau_Q", "nu_minus", "nu_plus", "C_HN*tau_Q"];

    pub fn to_array(&self) -> [f64; 9] {
        [
            self.f,
            self.r0,
            self.c_hn,
            self.theta,
            self.phi,
            self.tau_q,
            self.nu_minus,
            self.nu_plus,
            self.c_hn_tau_q,
        ]
    }

    fn from_array(a: [f64; 9]) -> Self {
        Self {
            f: a[0],
            r0: a[1],
            c_hn: a[2],
            theta: a[3],
            phi: a[4],
            tau_q: a[5],
            nu_minus: a[6],
            nu_plus: a[7],
            c_hn_tau_q: a[8],
        }
    }

    /// Values of a fit; the `f` slot holds `‖f‖₁`.
    pub fn values(x1: &LinearBlock, report: &PhysicalReport) -> Self {
        Self {
            f: x1.f.iter().sum(),
            r0: report.r0,
            c_hn: report.c_hn,
            theta: report.theta,
            phi: report.phi,
            tau_q: report.tau_q,
            nu_minus: report.nu_minus,
            nu_plus: report.nu_plus,
            c_hn_tau_q: report.c_hn * report.tau_q,
        }
    }

    /// PRE of each parameter against the scenario reference. Parameters whose
    /// reference is zero get NaN.
    pub fn errors(scenario: &ReferenceScenario, x1: &LinearBlock, report: &PhysicalReport) -> Self {
        let r = scenario.reference_report();
        let s = |e: f64, c: f64| pre_scalar(e, c).unwrap_or(f64::NAN);
        Self {
            f: pre(&scenario.x1_ref.f, &x1.f).unwrap_or(f64::NAN),
            r0: s(r.r0, report.r0),
            c_hn: s(r.c_hn, report.c_hn),
            theta: s(r.theta, report.theta),
            phi: s(r.phi, report.phi),
            tau_q: s(r.tau_q, report.tau_q),
            nu_minus: s(r.nu_minus, report.nu_minus),
            nu_plus: s(r.nu_plus, report.nu_plus),
            c_hn_tau_q: s(r.c_hn * r.tau_q, report.c_hn * report.tau_q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub converged: bool,
    pub failure: Option<String>,
    pub lambda_star: f64,
    pub outer_iterations: usize,
    pub values: ParamSet,
    pub pre: ParamSet,
    /// MSE of the fit against the clean profile.
    pub mse: f64,
    pub fitted: Vec<f64>,
}

impl ReplicateRecord {
    pub fn from_fit(
        index: usize,
        scenario: &ReferenceScenario,
        clean: &NmrdProfile,
        fit: &FitResult,
    ) -> Result<Self> {
        Ok(Self {
            index,
            converged: fit.converged,
            failure: fit.failure.clone(),
            lambda_star: fit.lambda_star,
            outer_iterations: fit.outer_iterations(),
            values: ParamSet::values(&fit.x1, &fit.report),
            pre: ParamSet::errors(scenario, &fit.x1, &fit.report),
            mse: mse(clean.rates().as_slice(), &fit.fitted)?,
            fitted: fit.fitted.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub delta: f64,
    pub seed: u64,
    pub replicates: usize,
    pub non_converged: usize,
    pub reference: ParamSet,
    pub mean_values: ParamSet,
    pub mean_pre: ParamSet,
    pub mean_mse: f64,
    pub clean_curve: Vec<f64>,
    pub mean_curve: Vec<f64>,
    pub records: Vec<ReplicateRecord>,
}

/// Averages converged replicates. Records are summed in index order, so the
/// result does not depend on the order they arrive in.
pub fn aggregate(
    scenario: &ReferenceScenario,
    spec: &NoiseSpec,
    clean: &NmrdProfile,
    mut records: Vec<ReplicateRecord>,
) -> McReport {
    records.sort_by_key(|r| r.index);
    let m = clean.len();
    let good: Vec<&ReplicateRecord> = records.iter().filter(|r| r.converged).collect();
    let n = good.len() as f64;
    let mean9 = |pick: &dyn Fn(&ReplicateRecord) -> [f64; 9]| {
        let mut acc = [0.0; 9];
        for r in &good {
            for (a, v) in acc.iter_mut().zip(pick(r)) {
                *a += v;
            }
        }
        ParamSet::from_array(acc.map(|a| a / n))
    };
    let mean_values = mean9(&|r| r.values.to_array());
    let mean_pre = mean9(&|r| r.pre.to_array());
    let mean_mse = good.iter().map(|r| r.mse).sum::<f64>() / n;
    let mut mean_curve = vec![0.0; m];
    for r in &good {
        for (a, v) in mean_curve.iter_mut().zip(&r.fitted) {
            *a += v;
        }
    }
    mean_curve.iter_mut().for_each(|a| *a /= n);
    McReport {
        delta: spec.delta,
        seed: spec.seed,
        replicates: records.len(),
        non_converged: records.len() - good.len(),
        reference: ParamSet::values(&scenario.x1_ref, &scenario.reference_report()),
        mean_values,
        mean_pre,
        mean_mse,
        clean_curve: clean.rates().iter().copied().collect(),
        mean_curve,
        records,
    }
}

/// Fits `spec.replicates` noisy copies of the scenario profile.
///
/// Replicates run in parallel; each one is deterministic given its index.
pub fn run_monte_carlo(
    scenario: &ReferenceScenario,
    spec: &NoiseSpec,
    bounds: &QuadBounds,
    config: &SolverConfig,
) -> Result<McReport> {
    spec.validate()?;
    config.validate()?;
    let clean = synthesize_profile(scenario)?;
    let records = (0..spec.replicates)
        .into_par_iter()
        .map(|i| {
            let noisy = add_noise(&clean, spec, i as u64)?;
            let fit = aurora_solve(&noisy, &scenario.grid, bounds, config)?;
            ReplicateRecord::from_fit(i, scenario, &clean, &fit)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(scenario, spec, &clean, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_identity() {
        let clean = synthesize_profile(&ReferenceScenario::default_scenario()).unwrap();
        let spec = NoiseSpec::new(0.0, 7, 1).unwrap();
        assert_eq!(add_noise(&clean, &spec, 3).unwrap(), clean);
    }

    #[test]
    fn forced_unit_draw_scales_rates() {
        let clean = synthesize_profile(&ReferenceScenario::default_scenario()).unwrap();
        let ones = vec![1.0; clean.len()];
        let noisy = apply_multiplicative_noise(&clean, 0.05, &ones).unwrap();
        for (a, b) in noisy.rates().iter().zip(clean.rates().iter()) {
            assert_eq!(*a, b * 1.05);
        }
    }

    #[test]
    fn noise_ratio_is_bounded() {
        let clean = synthesize_profile(&ReferenceScenario::default_scenario()).unwrap();
        let spec = NoiseSpec::new(0.1, 11, 1).unwrap();
        for i in 0..20 {
            let noisy = add_noise(&clean, &spec, i).unwrap();
            for (a, b) in noisy.rates().iter().zip(clean.rates().iter()) {
                let ratio = a / b;
                assert!((0.9 - 1e-15..=1.1 + 1e-15).contains(&ratio));
            }
        }
    }

    #[test]
    fn seeds_are_reproducible_and_streams_differ() {
        for i in 0..100u64 {
            assert_eq!(noise_vector(42, i, 48), noise_vector(42, i, 48));
            assert_ne!(noise_vector(42, i, 48), noise_vector(42, i + 1, 48));
        }
    }

    #[test]
    fn negative_delta_rejected() {
        assert!(NoiseSpec::new(-0.01, 0, 1).is_err());
        assert!(NoiseSpec::new(0.01, 0, 0).is_err());
    }

    #[test]
    fn unknown_scenario_rejected() {
        let grid = CorrelationGrid::log_spaced(1e-3, 1e3, 50).unwrap();
        assert!(ReferenceScenario::by_name("nope", grid).is_err());
    }

    #[test]
    fn offset_only_profile_is_flat() {
        let grid = CorrelationGrid::log_spaced(1e-3, 1e3, 50).unwrap();
        let s = ReferenceScenario::offset_only(grid).unwrap();
        let p = synthesize_profile(&s).unwrap();
        assert!(p.rates().iter().all(|&r| r == reference::R0));
    }

    #[test]
    fn default_scenario_scaling() {
        let s = ReferenceScenario::default_scenario();
        let kernel = build_kernel(&s.grid, &s.omega).unwrap();
        let kf = kernel.k() * DVector::from_column_slice(&s.x1_ref.f);
        assert!((kf.max() - reference::MAX_KF).abs() < 1e-12);
        assert!(s.x1_ref.is_feasible());
    }
}
