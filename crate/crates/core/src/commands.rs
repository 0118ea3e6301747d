//! Command drivers behind the CLI. Each writes its artifacts into the
//! configured output directory and reports whether the run converged.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::aurora::aurora_solve;
use crate::error::{Error, Result};
use crate::io::{
    fmt_f64, kernel_to_csv, read_profile, write_profile, write_series, ResultDocument, RunConfig,
};
use crate::model::{build_kernel, mhz_to_omega, QuadBounds};
use crate::synth::{add_noise, run_monte_carlo, synthesize_profile, ParamSet, ReferenceScenario};

/// Process exit code for input and configuration errors.
pub const EXIT_INPUT_ERROR: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    pub fn from_converged(ok: bool) -> Self {
        if ok {
            Self::Converged
        } else {
            Self::NotConverged
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Self::Converged => 0,
            Self::NotConverged => 2,
        }
    }
}

/// Files written by a command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub files: Vec<PathBuf>,
}

fn prepare_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.resolve_output_dir();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn scenario_from(config: &RunConfig) -> Result<(ReferenceScenario, QuadBounds)> {
    let grid = config.grid.build()?;
    let scenario = ReferenceScenario::by_name(&config.scenario, grid)?;
    let (lo, hi) = match (config.window.nu_lo, config.window.nu_hi) {
        (None, None) => scenario.window_mhz,
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(Error::Config("set both window.nu_lo and window.nu_hi".into())),
    };
    let bounds = QuadBounds::from_mhz_window(config.bounds.c_bar, config.bounds.tau_bar, lo, hi)
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok((scenario, bounds))
}

/// Fits a measured profile read from `profile_path`.
///
/// Writes `result.json`, `distribution.csv`, `fit.csv` and `trace.csv`.
pub fn run_fit(profile_path: &Path, config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let profile = read_profile(profile_path)?;
    let bounds = config.bounds_for(&profile)?;
    let grid = config.grid.build()?;
    info!("fitting {} points on {} correlation times", profile.len(), grid.len());
    let fit = aurora_solve(&profile, &grid, &bounds, &config.solver)?;
    if let Some(msg) = &fit.failure {
        log::warn!("{msg}");
    }

    let dir = prepare_dir(config)?;
    let doc = ResultDocument::new(&fit, &profile, &grid);
    let result = dir.join("result.json");
    write_json(&result, &doc)?;

    let distribution = dir.join("distribution.csv");
    write_series(
        &distribution,
        &["tau_us", "f"],
        grid.tau().iter().zip(&fit.x1.f).map(|(t, f)| vec![*t, *f]),
    )?;

    let fit_csv = dir.join("fit.csv");
    let conf = profile.conf_halfwidth();
    write_series(
        &fit_csv,
        &["nu_mhz", "r1", "r1_fit", "conf_halfwidth"],
        profile.nu_mhz().into_iter().enumerate().map(|(i, nu)| {
            vec![nu, profile.rates()[i], fit.fitted[i], conf.map_or(0.0, |c| c[i])]
        }),
    )?;

    let trace = dir.join("trace.csv");
    write_series(
        &trace,
        &["iteration", "lambda", "next_lambda", "objective", "mse", "gs_iterations"],
        fit.history.iter().enumerate().map(|(k, r)| {
            vec![k as f64, r.lambda, r.next_lambda, r.objective, r.mse, r.gs_iterations as f64]
        }),
    )?;

    Ok(Outcome {
        status: Status::from_converged(fit.converged),
        files: vec![result, distribution, fit_csv, trace],
    })
}

#[derive(Serialize)]
struct ScenarioDocument<'a> {
    scenario: &'a str,
    window_mhz: (f64, f64),
    delta: f64,
    seed: u64,
    r0: f64,
    c_hn: f64,
    theta: f64,
    phi: f64,
    tau_q: f64,
    nu_minus: f64,
    nu_plus: f64,
    tau: Vec<f64>,
    f: &'a [f64],
}

/// Writes the clean reference profile, one noisy copy (replicate 0) when
/// `noise.delta > 0`, and the reference parameters.
pub fn run_synth(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let spec = config.noise.spec()?;
    let (scenario, bounds) = scenario_from(config)?;
    let clean = synthesize_profile(&scenario)?;
    let dir = prepare_dir(config)?;

    let mut files = Vec::new();
    let clean_path = dir.join("profile_clean.csv");
    write_profile(&clean_path, &clean)?;
    files.push(clean_path);
    if spec.delta > 0.0 {
        let noisy = add_noise(&clean, &spec, 0)?;
        let noisy_path = dir.join("profile_noisy.csv");
        write_profile(&noisy_path, &noisy)?;
        files.push(noisy_path);
    }

    let r = scenario.reference_report();
    let doc = ScenarioDocument {
        scenario: &scenario.name,
        window_mhz: (
            crate::model::omega_to_mhz(bounds.omega_lo()),
            crate::model::omega_to_mhz(bounds.omega_hi()),
        ),
        delta: spec.delta,
        seed: spec.seed,
        r0: r.r0,
        c_hn: r.c_hn,
        theta: r.theta,
        phi: r.phi,
        tau_q: r.tau_q,
        nu_minus: r.nu_minus,
        nu_plus: r.nu_plus,
        tau: scenario.grid.tau().iter().copied().collect(),
        f: &scenario.x1_ref.f,
    };
    let doc_path = dir.join("scenario.json");
    write_json(&doc_path, &doc)?;
    files.push(doc_path);
    Ok(Outcome { status: Status::Converged, files })
}

/// Monte-Carlo study on the configured scenario.
///
/// Writes `mc_report.json`, `mc_bars.csv` and `mc_mean_curve.csv`. The run
/// counts as converged only when every replicate converged.
pub fn run_mc(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let spec = config.noise.spec()?;
    let (scenario, bounds) = scenario_from(config)?;
    info!("running {} replicates at noise level {}", spec.replicates, spec.delta);
    let report = run_monte_carlo(&scenario, &spec, &bounds, &config.solver)?;
    let dir = prepare_dir(config)?;

    let json = dir.join("mc_report.json");
    write_json(&json, &report)?;

    let bars = dir.join("mc_bars.csv");
    let mut text = String::from("parameter,reference,mean_value,mean_pre\n");
    let (rf, mv, mp) =
        (report.reference.to_array(), report.mean_values.to_array(), report.mean_pre.to_array());
    for (k, label) in ParamSet::LABELS.iter().enumerate() {
        text.push_str(&format!("{label},{},{},{}\n", fmt_f64(rf[k]), fmt_f64(mv[k]), fmt_f64(mp[k])));
    }
    fs::write(&bars, text)?;

    let curve = dir.join("mc_mean_curve.csv");
    let nu: Vec<f64> = scenario.omega.iter().map(|w| crate::model::omega_to_mhz(*w)).collect();
    write_series(
        &curve,
        &["nu_mhz", "r1_clean", "r1_mean_fit"],
        (0..nu.len()).map(|i| vec![nu[i], report.clean_curve[i], report.mean_curve[i]]),
    )?;

    Ok(Outcome {
        status: Status::from_converged(report.non_converged == 0),
        files: vec![json, bars, curve],
    })
}

/// Writes `kernel.csv` for the configured grid. Frequencies come from the
/// profile when one is given, else from `kernel.nu_mhz`, else from the
/// default scenario.
pub fn run_kernel_dump(config: &RunConfig, profile_path: Option<&Path>) -> Result<Outcome> {
    let grid = config.grid.build()?;
    let omega = match (profile_path, &config.kernel.nu_mhz) {
        (Some(path), _) => read_profile(path)?.omega().clone(),
        (None, Some(nu)) => {
            if nu.is_empty() || nu.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config(
                    "kernel.nu_mhz must be a nonempty list of nonnegative frequencies".into(),
                ));
            }
            nalgebra::DVector::from_iterator(nu.len(), nu.iter().map(|v| mhz_to_omega(*v)))
        }
        (None, None) => ReferenceScenario::default_omega(),
    };
    let kernel = build_kernel(&grid, &omega)?;
    let dir = prepare_dir(config)?;
    let path = dir.join("kernel.csv");
    fs::write(&path, kernel_to_csv(&kernel, &grid))?;
    Ok(Outcome { status: Status::Converged, files: vec![path] })
}
