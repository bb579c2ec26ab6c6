//! Command-line front end: generate intensifying excitations, compute
//! running spectra, run endurance time and incremental dynamic analyses,
//! compare the two, and verify records against their targets.
//!
//! Exit codes: 0 on success, 1 on input errors, 2 when the generator stalls
//! (artifacts are still written).

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{
    load_config, AnalyzeConfig, CompareConfig, GenerateConfig, IdaConfig, SpectraConfig,
    VerifyConfig,
};
use etforge::generate::residual_matrix_table;
use etforge::{
    check_performance, compare_et_vs_ida, generate, response_spectra, run_et_analysis, run_ida,
    verify_etef, AccelerationRecord, Result, SpectrumKind, TerminationReason, ToleranceSpec,
};

/// Fixed default so unseeded runs stay reproducible.
const DEFAULT_SEED: u64 = 2020;

#[derive(Parser)]
#[command(name = "etforge", version, about = "Endurance time excitation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the subcommand's JSON config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// RNG seed for generation and synthetic suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (falls back to ETFORGE_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Suppress progress logging.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize an intensifying excitation from a problem config.
    Generate,
    /// Running response spectra of a record.
    Spectra,
    /// Endurance time analysis of a model under an excitation.
    Analyze,
    /// Incremental dynamic analysis over a record suite.
    Ida,
    /// Endurance time curve versus IDA fractiles.
    Compare,
    /// Check a record's spectra against its target model.
    Verify,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.quiet);
    init_workers(cli.workers);
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}

fn init_logging(quiet: bool) {
    let level = if quiet { "off" } else { "info" };
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn init_workers(flag: Option<usize>) {
    let workers = flag.or_else(|| {
        std::env::var("ETFORGE_WORKERS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = workers {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let config_path = cli.config.as_deref().ok_or_else(|| {
        etforge::Error::InvalidProblem("missing --config <path>".into())
    })?;
    std::fs::create_dir_all(&cli.out)?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match cli.command {
        Command::Generate => cmd_generate(config_path, &cli.out, seed),
        Command::Spectra => cmd_spectra(config_path, &cli.out),
        Command::Analyze => cmd_analyze(config_path, &cli.out),
        Command::Ida => cmd_ida(config_path, &cli.out),
        Command::Compare => cmd_compare(config_path, &cli.out),
        Command::Verify => cmd_verify(config_path, &cli.out),
    }
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf()
}

fn write_json<T: serde::Serialize>(out: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(out.join(name), text)?;
    Ok(())
}

#[derive(serde::Serialize)]
struct Timings {
    wall_ms_per_iteration: Vec<f64>,
    total_ms: f64,
}

fn cmd_generate(config_path: &Path, out: &Path, seed: u64) -> Result<ExitCode> {
    let config: GenerateConfig = load_config(config_path)?;
    let problem = config.build()?;
    log::info!(
        "generating {} ({} variables, {} space)",
        problem.name,
        problem.variable_count(),
        problem.space.name()
    );
    let (record, report) = generate(&problem, seed)?;
    record.write_csv(out.join("record.csv"))?;
    write_json(out, "report.json", &report)?;
    write_json(
        out,
        "timings.json",
        &Timings {
            total_ms: report.wall_ms_per_iteration.iter().sum(),
            wall_ms_per_iteration: report.wall_ms_per_iteration.clone(),
        },
    )?;
    residual_matrix_table(
        &report.periods,
        &report.checkpoints,
        &report.residual_acceleration,
        SpectrumKind::Acceleration,
    )
    .write_csv(out.join("residual_acceleration.csv"))?;
    residual_matrix_table(
        &report.periods,
        &report.checkpoints,
        &report.residual_displacement,
        SpectrumKind::Displacement,
    )
    .write_csv(out.join("residual_displacement.csv"))?;
    let verification =
        verify_etef(&record, &problem.target, problem.damping_ratio, ToleranceSpec::default())?;
    write_json(out, "verification.json", &verification)?;
    log::info!(
        "objective {:.4e} -> {:.4e} after {} iterations ({:?})",
        report.seed_objective(),
        report.final_objective(),
        report.iterations,
        report.termination
    );
    Ok(match report.termination {
        TerminationReason::Stalled => ExitCode::from(2),
        _ => ExitCode::SUCCESS,
    })
}

fn cmd_spectra(config_path: &Path, out: &Path) -> Result<ExitCode> {
    let config: SpectraConfig = load_config(config_path)?;
    let record = AccelerationRecord::read_csv(config_dir(config_path).join(&config.record))?;
    let periods = config.periods.build()?;
    let checkpoints = config.checkpoints.build(record.duration())?;
    let (sa, su) = response_spectra(&record, &periods, &checkpoints, config.damping_ratio)?;
    sa.write_csv(out.join("spectra_acceleration.csv"))?;
    su.write_csv(out.join("spectra_displacement.csv"))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(config_path: &Path, out: &Path) -> Result<ExitCode> {
    let config: AnalyzeConfig = load_config(config_path)?;
    let record = AccelerationRecord::read_csv(config_dir(config_path).join(&config.record))?;
    let profile = config.profile.build()?;
    let curve = run_et_analysis(&config.model, &record, config.edp, config.options)?;
    curve.write_csv(out.join("et_curve.csv"), &profile)?;
    if let Some(t) = curve.collapsed_at {
        log::info!("collapsed at {t:.2} s");
    }
    if !config.limits.is_empty() {
        let checks = check_performance(&curve, &profile, &config.limits)?;
        write_json(out, "performance.json", &checks)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ida(config_path: &Path, out: &Path) -> Result<ExitCode> {
    let config: IdaConfig = load_config(config_path)?;
    let records = config.records.load(&config_dir(config_path))?;
    let ida = run_ida(&config.model, &records, &config.lambdas, config.edp, config.options)?;
    ida.write_csv(out.join("ida.csv"))?;
    std::fs::write(out.join("ida_fractiles.csv"), ida.fractiles_to_csv())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(config_path: &Path, out: &Path) -> Result<ExitCode> {
    let config: CompareConfig = load_config(config_path)?;
    let dir = config_dir(config_path);
    let etef = AccelerationRecord::read_csv(dir.join(&config.etef))?;
    let records = config.records.load(&dir)?;
    let profile = config.profile.build()?;
    let curve = run_et_analysis(&config.model, &etef, config.edp, config.options)?;
    let ida = run_ida(&config.model, &records, &config.lambdas, config.edp, config.options)?;
    let comparison = compare_et_vs_ida(&curve, &profile, &ida)?;
    curve.write_csv(out.join("et_curve.csv"), &profile)?;
    ida.write_csv(out.join("ida.csv"))?;
    std::fs::write(out.join("ida_fractiles.csv"), ida.fractiles_to_csv())?;
    write_json(out, "comparison.json", &comparison)?;
    log::info!(
        "correlation {:.4}, mean relative error {:.4}",
        comparison.correlation,
        comparison.mean_relative_error
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(config_path: &Path, out: &Path) -> Result<ExitCode> {
    let config: VerifyConfig = load_config(config_path)?;
    let record = AccelerationRecord::read_csv(config_dir(config_path).join(&config.record))?;
    let target = config.target.build(record.duration())?;
    let report = verify_etef(&record, &target, config.damping_ratio, config.tolerance)?;
    write_json(out, "verification.json", &report)?;
    log::info!(
        "misfit at target time {:.4} ({})",
        report.misfit_at_target,
        if report.passed { "pass" } else { "fail" }
    );
    Ok(ExitCode::SUCCESS)
}
