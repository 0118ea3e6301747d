use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use aurora_core::commands::{run_fit, run_kernel_dump, run_mc, run_synth, Status};
use aurora_core::io::{
    parse_kernel_csv, read_profile, write_profile, GridConfig, KernelConfig, ResultDocument,
    RunConfig, WindowConfig,
};
use aurora_core::model::NmrdProfile;
use aurora_core::synth::reference;
use aurora_core::Error;
use nalgebra::DVector;
use proptest::prelude::*;

fn config_in(dir: &Path) -> RunConfig {
    RunConfig { output_dir: Some(dir.to_path_buf()), ..RunConfig::default() }
}

fn with_window(mut cfg: RunConfig) -> RunConfig {
    cfg.window = WindowConfig { nu_lo: Some(1.5), nu_hi: Some(3.5) };
    cfg
}

fn read_result(dir: &Path) -> ResultDocument {
    ResultDocument::from_json(&fs::read_to_string(dir.join("result.json")).unwrap()).unwrap()
}

fn snapshot(files: &[std::path::PathBuf]) -> Vec<(String, Vec<u8>)> {
    files
        .iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
        .collect()
}

/// Clean reference profile written by `synth`, as a fit fixture.
fn fixture(dir: &Path) -> std::path::PathBuf {
    let out = run_synth(&config_in(&dir.join("synth"))).unwrap();
    out.files[0].clone()
}

#[test]
fn fit_recovers_fixture_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = fixture(tmp.path());
    let out_dir = tmp.path().join("fit");
    let out = run_fit(&profile, &with_window(config_in(&out_dir))).unwrap();
    assert_eq!(out.status, Status::Converged);
    assert_eq!(out.status.exit_code(), 0);
    let doc = read_result(&out_dir);
    assert!(doc.converged);
    assert!((doc.nu_minus - reference::NU_MINUS).abs() <= 1e-3 * reference::NU_MINUS);
    assert!((doc.nu_plus - reference::NU_PLUS).abs() <= 1e-3 * reference::NU_PLUS);
    assert!((doc.r0 - reference::R0).abs() <= 1e-2 * reference::R0);
    assert_eq!(doc.tau.len(), doc.f.len());
    assert_eq!(doc.nu.len(), doc.r1_fit.len());
    assert_eq!(doc.lambda_trace.len(), doc.outer_iterations + 1);

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("result.json")).unwrap()).unwrap();
    for key in [
        "r0", "c_hn", "theta", "phi", "tau_q", "nu_minus", "nu_plus", "lambda_star", "mse",
        "converged", "outer_iterations", "tau", "f", "nu", "r1_fit", "lambda_trace", "objective_trace",
    ] {
        assert!(json.get(key).is_some(), "missing key {key}");
    }
}

#[test]
fn fit_without_window_asks_for_one() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = fixture(tmp.path());
    let err = run_fit(&profile, &config_in(&tmp.path().join("fit"))).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let msg = err.to_string();
    assert!(msg.contains("nu_lo") && msg.contains("nu_hi"), "{msg}");
}

#[test]
fn fit_reports_non_convergence() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = fixture(tmp.path());
    let mut cfg = with_window(config_in(&tmp.path().join("fit")));
    cfg.solver.max_outer = 1;
    let out = run_fit(&profile, &cfg).unwrap();
    assert_eq!(out.status, Status::NotConverged);
    assert_eq!(out.status.exit_code(), 2);
    assert!(!read_result(&tmp.path().join("fit")).converged);
}

#[test]
fn fit_rejects_bad_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "nu_mhz,r1\n1.0,2.0\nabc,1.0\n").unwrap();
    let err = run_fit(&bad, &with_window(config_in(tmp.path()))).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    let missing = tmp.path().join("missing.csv");
    assert!(run_fit(&missing, &with_window(config_in(tmp.path()))).is_err());
}

#[test]
fn fit_artifacts_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = fixture(tmp.path());
    let a = run_fit(&profile, &with_window(config_in(&tmp.path().join("a")))).unwrap();
    let b = run_fit(&profile, &with_window(config_in(&tmp.path().join("b")))).unwrap();
    assert_eq!(snapshot(&a.files), snapshot(&b.files));
}

#[test]
fn synth_refit_recovers_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = fixture(tmp.path());
    let p = read_profile(&profile).unwrap();
    assert_eq!(p.len(), reference::M);
    run_fit(&profile, &with_window(config_in(&tmp.path().join("fit")))).unwrap();
    let doc = read_result(&tmp.path().join("fit"));
    assert!((doc.r0 - reference::R0).abs() <= 0.01 * reference::R0);
}

#[test]
fn noisy_synth_is_reproducible_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config_in(&tmp.path().join("a"));
    cfg.noise.delta = 0.05;
    cfg.noise.seed = 17;
    let a = run_synth(&cfg).unwrap();
    cfg.output_dir = Some(tmp.path().join("b"));
    let b = run_synth(&cfg).unwrap();
    assert_eq!(a.files.len(), 3);
    assert_eq!(snapshot(&a.files), snapshot(&b.files));

    cfg.noise.delta = -0.01;
    assert!(run_synth(&cfg).is_err());
    cfg.noise.delta = 0.0;
    cfg.scenario = "nope".into();
    assert!(run_synth(&cfg).is_err());
}

#[test]
fn noiseless_single_replicate_matches_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = fixture(tmp.path());
    run_fit(&profile, &with_window(config_in(&tmp.path().join("fit")))).unwrap();
    let doc = read_result(&tmp.path().join("fit"));

    let mut cfg = config_in(&tmp.path().join("mc"));
    cfg.noise.replicates = 1;
    let out = run_mc(&cfg).unwrap();
    assert_eq!(out.status, Status::Converged);
    let report: aurora_core::McReport =
        serde_json::from_str(&fs::read_to_string(&out.files[0]).unwrap()).unwrap();
    let r = &report.records[0];
    assert_eq!(r.lambda_star, doc.lambda_star);
    assert_eq!(r.mse, doc.mse);
    assert_eq!(r.outer_iterations, doc.outer_iterations);
    assert_eq!(r.values.r0, doc.r0);
    assert_eq!(r.values.nu_minus, doc.nu_minus);
    assert_eq!(r.values.nu_plus, doc.nu_plus);
    assert_eq!(r.values.tau_q, doc.tau_q);
    assert_eq!(r.fitted, doc.r1_fit);

    let bars = fs::read_to_string(&out.files[1]).unwrap();
    assert!(bars.lines().any(|l| l.starts_with("C_HN*tau_Q,")));
    assert_eq!(bars.lines().count(), 10);
}

#[test]
fn kernel_dump_single_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        output_dir: Some(tmp.path().to_path_buf()),
        grid: GridConfig { tau_min: 1.0, tau_max: 1.0, n: 1 },
        kernel: KernelConfig { nu_mhz: Some(vec![1.0 / (2.0 * PI)]) },
        ..RunConfig::default()
    };
    let out = run_kernel_dump(&cfg, None).unwrap();
    let table = parse_kernel_csv(&fs::read_to_string(&out.files[0]).unwrap()).unwrap();
    assert_eq!(table.tau_us, vec![1.0]);
    assert!((table.entries[0][0] - 1.3).abs() < 1e-15);
}

#[test]
fn kernel_dump_headers_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let profile = fixture(tmp.path());
    let mut cfg = config_in(&tmp.path().join("k"));
    cfg.grid.n = 40;
    let out = run_kernel_dump(&cfg, Some(&profile)).unwrap();
    let table = parse_kernel_csv(&fs::read_to_string(&out.files[0]).unwrap()).unwrap();
    let grid = cfg.grid.build().unwrap();
    assert_eq!(table.tau_us, grid.tau().iter().copied().collect::<Vec<_>>());
    let p = read_profile(&profile).unwrap();
    assert_eq!(table.nu_mhz, p.nu_mhz());
    assert!(table.entries.iter().flatten().all(|&v| v > 0.0));
}

#[test]
fn config_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("run.toml");
    fs::write(
        &path,
        "scenario = \"default\"\n[grid]\nn = 50\n[window]\nnu_lo = 1.5\nnu_hi = 3.5\n[solver]\nlambda0 = 1e-4\n",
    )
    .unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.grid.n, 50);
    assert_eq!(cfg.solver.lambda0, 1e-4);
    assert_eq!(cfg.window.nu_hi, Some(3.5));
    fs::write(&path, "[grid]\nn = \"many\"\n").unwrap();
    assert!(matches!(RunConfig::load(&path), Err(Error::Config(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn profile_write_read_round_trip(
        raw in prop::collection::btree_map(1u32..1_000_000, (-1e3f64..1e3, prop::option::of(0.0f64..10.0)), 2..40),
        with_conf in any::<bool>(),
    ) {
        let nu: Vec<f64> = raw.keys().map(|&k| k as f64 * 1e-4).collect();
        let rates: Vec<f64> = raw.values().map(|v| if v.0 == 0.0 { 1.0 } else { v.0 }).collect();
        let omega = DVector::from_iterator(nu.len(), nu.iter().map(|v| 2.0 * PI * v));
        let conf = with_conf.then(|| {
            DVector::from_iterator(nu.len(), raw.values().zip(&rates).map(|(v, r)| v.1.unwrap_or(0.0) / 100.0 * r.abs()))
        });
        let p = NmrdProfile::new(omega, DVector::from_vec(rates), conf).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("p.csv");
        write_profile(&path, &p).unwrap();
        let q = read_profile(&path).unwrap();
        let close = |a: &DVector<f64>, b: &DVector<f64>| {
            a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()))
        };
        prop_assert!(close(p.omega(), q.omega()));
        prop_assert!(close(p.rates(), q.rates()));
        match (p.conf_halfwidth(), q.conf_halfwidth()) {
            (Some(a), Some(b)) => prop_assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1e-300))),
            (None, None) => {}
            _ => prop_assert!(false, "confidence column lost"),
        }
    }
}

#[test]
fn mc_mean_curve_tracks_clean_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config_in(tmp.path());
    cfg.noise.delta = 0.01;
    cfg.noise.seed = 2024;
    cfg.noise.replicates = 100;
    let out = run_mc(&cfg).unwrap();
    assert_eq!(out.status, Status::Converged);
    let text = fs::read_to_string(&out.files[2]).unwrap();
    let mut checked = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        if (1.5..=3.5).contains(&v[0]) {
            assert!((v[2] - v[1]).abs() <= 0.02 * v[1], "{line}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}
