//! Fits the default synthetic scenario and prints the recovered parameters.

use std::time::Instant;

use aurora_core::{aurora_solve, synthesize_profile, ReferenceScenario, SolverConfig};

fn main() {
    let lambda0: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1e-6);
    let scenario = ReferenceScenario::default_scenario();
    let profile = synthesize_profile(&scenario).expect("valid scenario");
    let bounds = scenario.bounds(100.0, 100.0).expect("valid bounds");
    let max_gs = std::env::var("MAX_GS").ok().and_then(|s| s.parse().ok()).unwrap_or(SolverConfig::default().max_gs);
    let config = SolverConfig { lambda0, max_gs, ..SolverConfig::default() };
    let t = Instant::now();
    let fit = aurora_solve(&profile, &scenario.grid, &bounds, &config).expect("fit");
    println!("elapsed {:.2?}", t.elapsed());
    for rec in &fit.history {
        println!(
            "lambda {:.4e} -> {:.4e}  g {:.4e}  mse {:.4e}  gs {} ({})",
            rec.lambda, rec.next_lambda, rec.objective, rec.mse, rec.gs_iterations, rec.gs_converged
        );
    }
    if std::env::var("SHOW_GS").is_ok() {
        for rec in fit.history.iter().take(3) {
            let it: Vec<String> = rec.half_steps.iter().step_by(2).map(|g| format!("{g:.6e}")).collect();
            println!("{}", it.join(" "));
        }
    }
    println!("converged {} ({:?})", fit.converged, fit.failure);
    println!("reference {:?}", scenario.reference_report());
    println!("computed  {:?}", fit.report);
    println!("lambda* {:.4e} mse {:.4e} kkt {:.2e} pg {:.2e}", fit.lambda_star, fit.mse, fit.final_kkt, fit.final_pg);
}
