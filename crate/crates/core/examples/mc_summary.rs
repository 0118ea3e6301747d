//! Runs the noise-robustness harness on the default scenario.
//!
//! Usage: `mc_summary [delta] [replicates] [seed]`

use std::time::Instant;

use aurora_core::synth::ParamSet;
use aurora_core::{run_monte_carlo, NoiseSpec, ReferenceScenario, SolverConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let delta: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2024);
    let scenario = ReferenceScenario::default_scenario();
    let bounds = scenario.bounds(100.0, 100.0).expect("valid bounds");
    let spec = NoiseSpec::new(delta, seed, n).expect("valid noise");
    let t = Instant::now();
    let report = run_monte_carlo(&scenario, &spec, &bounds, &SolverConfig::default()).expect("mc");
    println!("elapsed {:.2?}; non-converged {}", t.elapsed(), report.non_converged);
    for ((label, pre), (val, r)) in ParamSet::LABELS
        .iter()
        .zip(report.mean_pre.to_array())
        .zip(report.mean_values.to_array().into_iter().zip(report.reference.to_array()))
    {
        println!("{label:>11}  mean PRE {pre:.4e}  mean {val:.5}  ref {r:.5}");
    }
    println!("mean MSE {:.4e}", report.mean_mse);
    let worst = report
        .clean_curve
        .iter()
        .zip(&report.mean_curve)
        .map(|(c, m)| ((m - c) / c).abs())
        .fold(0.0, f64::max);
    println!("max relative deviation of mean curve {worst:.3e}");
}
