//! File formats: profile CSV, run configuration (TOML), result document (JSON)
//! and the flat CSV series written for plotting.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::aurora::{FitResult, SolverConfig};
use crate::error::{Error, Result};
use crate::model::{mhz_to_omega, CorrelationGrid, Kernel, NmrdProfile, QuadBounds};
use crate::synth::NoiseSpec;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "AURORA_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "aurora-out";

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row of a profile file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileFileRecord {
    pub nu_mhz: f64,
    pub r1: f64,
    /// Confidence half-width in percent of `r1`.
    pub conf_percent: Option<f64>,
}

fn is_header(fields: &[&str]) -> bool {
    matches!(
        fields.first().map(|f| f.trim().to_ascii_lowercase()).as_deref(),
        Some("nu_mhz") | Some("nu")
    )
}

/// Parses `nu_mhz,r1[,conf_percent]` rows. Blank lines and `#` comments are
/// skipped, and a single leading header line is allowed.
pub fn parse_profile_records(text: &str) -> Result<Vec<ProfileFileRecord>> {
    let mut rows = Vec::new();
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !seen_data && rows.is_empty() && is_header(&fields) {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(format!("expected 2 or 3 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("{what} {s:?} is not a finite number")))
        };
        let nu_mhz = num(fields[0], "frequency")?;
        let r1 = num(fields[1], "rate")?;
        let conf_percent = match fields.get(2) {
            Some(s) if !s.is_empty() => Some(num(s, "confidence")?),
            _ => None,
        };
        if nu_mhz <= 0.0 {
            return Err(parse_err(format!("frequency must be positive, got {nu_mhz}")));
        }
        if conf_percent.is_some_and(|c| c < 0.0) {
            return Err(parse_err("confidence must be nonnegative".into()));
        }
        rows.push(ProfileFileRecord { nu_mhz, r1, conf_percent });
    }
    Ok(rows)
}

/// Builds a profile from file records: sorted by frequency, duplicates rejected.
pub fn profile_from_records(mut rows: Vec<ProfileFileRecord>) -> Result<NmrdProfile> {
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "a profile needs at least 2 rows, found {}",
            rows.len()
        )));
    }
    rows.sort_by(|a, b| a.nu_mhz.total_cmp(&b.nu_mhz));
    if let Some(w) = rows.windows(2).find(|w| w[0].nu_mhz == w[1].nu_mhz) {
        return Err(Error::invalid(format!("duplicate frequency {} MHz", w[0].nu_mhz)));
    }
    let m = rows.len();
    let omega = DVector::from_iterator(m, rows.iter().map(|r| mhz_to_omega(r.nu_mhz)));
    let rates = DVector::from_iterator(m, rows.iter().map(|r| r.r1));
    let conf = if rows.iter().any(|r| r.conf_percent.is_some()) {
        Some(DVector::from_iterator(
            m,
            rows.iter().map(|r| r.conf_percent.unwrap_or(0.0) / 100.0 * r.r1.abs()),
        ))
    } else {
        None
    };
    NmrdProfile::new(omega, rates, conf)
}

pub fn read_profile(path: &Path) -> Result<NmrdProfile> {
    let text = fs::read_to_string(path)?;
    profile_from_records(parse_profile_records(&text)?)
}

pub fn profile_to_csv(profile: &NmrdProfile) -> String {
    let mut out = String::new();
    let conf = profile.conf_halfwidth();
    out.push_str(if conf.is_some() { "nu_mhz,r1,conf_percent\n" } else { "nu_mhz,r1\n" });
    for (i, nu) in profile.nu_mhz().into_iter().enumerate() {
        let r1 = profile.rates()[i];
        match conf {
            Some(c) => {
                let pct = if r1 != 0.0 { 100.0 * c[i] / r1.abs() } else { 0.0 };
                let _ = writeln!(out, "{},{},{}", fmt_f64(nu), fmt_f64(r1), fmt_f64(pct));
            }
            None => {
                let _ = writeln!(out, "{},{}", fmt_f64(nu), fmt_f64(r1));
            }
        }
    }
    out
}

pub fn write_profile(path: &Path, profile: &NmrdProfile) -> Result<()> {
    fs::write(path, profile_to_csv(profile))?;
    Ok(())
}

/// Kernel as CSV: the header row holds τ (μs), each row starts with ν (MHz).
pub fn kernel_to_csv(kernel: &Kernel, grid: &CorrelationGrid) -> String {
    let mut out = String::from("nu_mhz");
    for t in grid.tau().iter() {
        out.push(',');
        out.push_str(&fmt_f64(*t));
    }
    out.push('\n');
    for (i, w) in kernel.omega().iter().enumerate() {
        out.push_str(&fmt_f64(crate::model::omega_to_mhz(*w)));
        for j in 0..kernel.n_tau() {
            out.push(',');
            out.push_str(&fmt_f64(kernel.k()[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Parsed kernel CSV: (ν in MHz, τ in μs, row-major entries).
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub nu_mhz: Vec<f64>,
    pub tau_us: Vec<f64>,
    pub entries: Vec<Vec<f64>>,
}

pub fn parse_kernel_csv(text: &str) -> Result<KernelTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::invalid("empty kernel file"))?;
    let num = |s: &str, line: usize| {
        s.trim().parse::<f64>().map_err(|e| Error::Parse { line, msg: e.to_string() })
    };
    let tau_us = header
        .split(',')
        .skip(1)
        .map(|s| num(s, 1))
        .collect::<Result<Vec<_>>>()?;
    let mut nu_mhz = Vec::new();
    let mut entries = Vec::new();
    for (i, line) in lines {
        let vals = line.split(',').map(|s| num(s, i + 1)).collect::<Result<Vec<_>>>()?;
        if vals.len() != tau_us.len() + 1 {
            return Err(Error::Parse { line: i + 1, msg: "wrong number of columns".into() });
        }
        nu_mhz.push(vals[0]);
        entries.push(vals[1..].to_vec());
    }
    Ok(KernelTable { nu_mhz, tau_us, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub tau_min: f64,
    pub tau_max: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { tau_min: 1e-3, tau_max: 1e3, n: 200 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<CorrelationGrid> {
        CorrelationGrid::log_spaced(self.tau_min, self.tau_max, self.n)
            .map_err(|e| Error::Config(format!("grid: {e}")))
    }
}

/// Peak window in MHz. There is no default for measured data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub nu_lo: Option<f64>,
    pub nu_hi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub c_bar: f64,
    pub tau_bar: f64,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { c_bar: 100.0, tau_bar: 100.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub delta: f64,
    pub seed: u64,
    pub replicates: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { delta: 0.0, seed: 0, replicates: 100 }
    }
}

impl NoiseConfig {
    pub fn spec(&self) -> Result<NoiseSpec> {
        NoiseSpec::new(self.delta, self.seed, self.replicates)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Frequencies for `kernel-dump`, MHz.
    pub nu_mhz: Option<Vec<f64>>,
}

/// Everything a command needs, loaded from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub output_dir: Option<PathBuf>,
    pub grid: GridConfig,
    pub window: WindowConfig,
    pub bounds: BoundsConfig,
    pub solver: SolverConfig,
    pub noise: NoiseConfig,
    pub kernel: KernelConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            output_dir: None,
            grid: GridConfig::default(),
            window: WindowConfig::default(),
            bounds: BoundsConfig::default(),
            solver: SolverConfig::default(),
            noise: NoiseConfig::default(),
            kernel: KernelConfig::default(),
        }
    }
}

/// Command-line overrides; each field mirrors a config key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub nu_lo: Option<f64>,
    pub nu_hi: Option<f64>,
    pub delta: Option<f64>,
    pub seed: Option<u64>,
    pub replicates: Option<usize>,
    pub lambda0: Option<f64>,
    pub tol_lambda: Option<f64>,
    pub tol_gs: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_gs: Option<usize>,
    pub n_tau: Option<usize>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub c_bar: Option<f64>,
    pub tau_bar: Option<f64>,
    pub scenario: Option<String>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        if o.nu_lo.is_some() {
            self.window.nu_lo = o.nu_lo;
        }
        if o.nu_hi.is_some() {
            self.window.nu_hi = o.nu_hi;
        }
        set(&mut self.noise.delta, &o.delta);
        set(&mut self.noise.seed, &o.seed);
        set(&mut self.noise.replicates, &o.replicates);
        set(&mut self.solver.lambda0, &o.lambda0);
        set(&mut self.solver.tol_lambda, &o.tol_lambda);
        set(&mut self.solver.tol_gs, &o.tol_gs);
        set(&mut self.solver.max_outer, &o.max_outer);
        set(&mut self.solver.max_gs, &o.max_gs);
        set(&mut self.grid.n, &o.n_tau);
        set(&mut self.grid.tau_min, &o.tau_min);
        set(&mut self.grid.tau_max, &o.tau_max);
        set(&mut self.bounds.c_bar, &o.c_bar);
        set(&mut self.bounds.tau_bar, &o.tau_bar);
        set(&mut self.scenario, &o.scenario);
        if o.output_dir.is_some() {
            self.output_dir = o.output_dir.clone();
        }
    }

    /// Output directory: config/flag, then the environment, then the default.
    pub fn resolve_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    /// Box constraints from an explicit window, checked against the profile range.
    pub fn bounds_for(&self, profile: &NmrdProfile) -> Result<QuadBounds> {
        let (Some(lo), Some(hi)) = (self.window.nu_lo, self.window.nu_hi) else {
            return Err(Error::Config(
                "the quadrupolar peak window is not set; choose it by inspecting the profile \
                 and set window.nu_lo / window.nu_hi (or pass --nu-lo / --nu-hi)"
                    .into(),
            ));
        };
        let nu = profile.nu_mhz();
        let (min, max) = (nu[0], nu[nu.len() - 1]);
        if !(lo < hi) {
            return Err(Error::Config(format!("window needs nu_lo < nu_hi, got [{lo}, {hi}]")));
        }
        if lo < min || hi > max {
            return Err(Error::Config(format!(
                "window [{lo}, {hi}] MHz lies outside the profile range [{min}, {max}] MHz"
            )));
        }
        QuadBounds::from_mhz_window(self.bounds.c_bar, self.bounds.tau_bar, lo, hi)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.grid.build()?;
        if !(self.bounds.c_bar > 0.0 && self.bounds.tau_bar > 0.0) {
            return Err(Error::Config("c_bar and tau_bar must be positive".into()));
        }
        Ok(())
    }
}

/// The fit result as written to `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub r0: f64,
    pub c_hn: f64,
    pub theta: f64,
    pub phi: f64,
    pub tau_q: f64,
    pub nu_minus: f64,
    pub nu_plus: f64,
    pub sin2_theta: f64,
    pub sin2_phi: f64,
    pub lambda_star: f64,
    pub mse: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub failure: Option<String>,
    pub tau: Vec<f64>,
    pub f: Vec<f64>,
    pub nu: Vec<f64>,
    pub r1: Vec<f64>,
    pub r1_fit: Vec<f64>,
    pub lambda_trace: Vec<f64>,
    pub objective_trace: Vec<f64>,
}

impl ResultDocument {
    pub fn new(fit: &FitResult, profile: &NmrdProfile, grid: &CorrelationGrid) -> Self {
        Self {
            r0: fit.report.r0,
            c_hn: fit.report.c_hn,
            theta: fit.report.theta,
            phi: fit.report.phi,
            tau_q: fit.report.tau_q,
            nu_minus: fit.report.nu_minus,
            nu_plus: fit.report.nu_plus,
            sin2_theta: fit.psi.sin2_theta,
            sin2_phi: fit.psi.sin2_phi,
            lambda_star: fit.lambda_star,
            mse: fit.mse,
            converged: fit.converged,
            outer_iterations: fit.outer_iterations(),
            failure: fit.failure.clone(),
            tau: grid.tau().iter().copied().collect(),
            f: fit.x1.f.clone(),
            nu: profile.nu_mhz(),
            r1: profile.rates().iter().copied().collect(),
            r1_fit: fit.fitted.clone(),
            lambda_trace: fit.lambda_trace(),
            objective_trace: fit.objective_trace(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Writes a CSV with the given header and rows of numbers.
pub fn write_series(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_f64).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}
