// Desk-scale generation probe: prints per-iteration objectives and the
// verification summary. Not part of the test suite.

use etforge::{
    generate, verify_etef, CheckpointConfig, OptimizerSettings, ProblemConfig, ToleranceSpec,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let config = ProblemConfig {
        name: "desk".into(),
        checkpoints: CheckpointConfig::Times {
            times: (1..=8).map(|k| 2.5 * k as f64).collect(),
        },
        optimizer: OptimizerSettings { max_iterations: iters, ..Default::default() },
        ..Default::default()
    };
    let problem = config.build().unwrap();
    let t0 = std::time::Instant::now();
    let (record, report) = generate(&problem, 1).unwrap();
    println!(
        "{} iterations in {:.1} s, objective {:.4e} -> {:.4e} (ratio {:.4})",
        report.iterations,
        t0.elapsed().as_secs_f64(),
        report.seed_objective(),
        report.final_objective(),
        report.final_objective() / report.seed_objective()
    );
    println!("termination {:?}, rejected {}", report.termination, report.rejected_steps);
    let verification =
        verify_etef(&record, &problem.target, problem.damping_ratio, ToleranceSpec::default())
            .unwrap();
    println!(
        "misfit at target {:.4}, doubling fraction {:?}",
        verification.misfit_at_target,
        verification.doubling.as_ref().map(|d| d.fraction_in_band)
    );
    for cp in &verification.checkpoints {
        println!(
            "  t = {:5.2}  g = {:.3}  misfit = {:.4}  ratio = {:.3}",
            cp.time, cp.scale, cp.mean_abs_relative_misfit, cp.mean_spectral_ratio
        );
    }
}
