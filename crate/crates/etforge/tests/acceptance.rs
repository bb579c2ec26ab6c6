//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them).
//!
//! The desk-scale generation fixture (20.48 s, dt = 0.02 s, 1024 variables,
//! 30 log-spaced periods in [0.1, 4] s, 8 checkpoints, linear profile with
//! a 10 s target time) is produced once and shared by the criteria that
//! exercise it.

use std::sync::OnceLock;
use std::time::Instant;

use etforge::{
    compare_et_vs_ida, compute_cav, dwt_forward, dwt_inverse, envelope, generate,
    intensity_to_time, objective, period_grid, response_spectra, run_et_analysis, run_ida,
    seed_record, synthetic_record_suite, time_to_intensity, verify_etef, AccelerationRecord,
    AnalysisOptions, CheckpointConfig, EdpKind, GenerationProblem, GenerationReport,
    IntensifyingProfile, OptimizerSettings, PeriodGridConfig, ProblemConfig, SdofHysteresis,
    SdofModel, Spacing, StructureModel, SuiteAnchor, SuiteSpec, ToleranceSpec, VariableSpace,
    WaveletBasis,
};

use rand::{Rng, SeedableRng};

const DESK_SEED: u64 = 1;

struct DeskFixture {
    problem: GenerationProblem,
    record: AccelerationRecord,
    report: GenerationReport,
    seconds: f64,
}

fn desk_config() -> ProblemConfig {
    ProblemConfig {
        name: "desk".into(),
        t_max: 20.48,
        dt: 0.02,
        periods: PeriodGridConfig { min: 0.1, max: 4.0, count: 30, spacing: Spacing::Log },
        checkpoints: CheckpointConfig::Times { times: (1..=8).map(|k| 2.5 * k as f64).collect() },
        optimizer: OptimizerSettings {
            max_iterations: 40,
            objective_tolerance: 1e-4,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn desk() -> &'static DeskFixture {
    static FIXTURE: OnceLock<DeskFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let problem = desk_config().build().expect("desk problem builds");
        assert_eq!(problem.variable_count(), 1024, "desk scale pins 1024 variables");
        let started = Instant::now();
        let (record, report) = generate(&problem, DESK_SEED).expect("desk generation runs");
        DeskFixture { problem, record, report, seconds: started.elapsed().as_secs_f64() }
    })
}

/// Damped oscillator response to `ü + 2ξω u̇ + ω² u = A sin(Ω t)` from rest;
/// independent closed-form oracle for the integrator checks.
fn analytic_sine_response(omega: f64, xi: f64, amp: f64, forcing: f64, t: f64) -> f64 {
    let denom = (omega * omega - forcing * forcing).powi(2) + (2.0 * xi * omega * forcing).powi(2);
    let cp = amp * (omega * omega - forcing * forcing) / denom;
    let cq = -amp * 2.0 * xi * omega * forcing / denom;
    let wd = omega * (1.0 - xi * xi).sqrt();
    let c1 = -cq;
    let c2 = (xi * omega * c1 - forcing * cp) / wd;
    (-xi * omega * t).exp() * (c1 * (wd * t).cos() + c2 * (wd * t).sin())
        + cp * (forcing * t).sin()
        + cq * (forcing * t).cos()
}

#[test]
fn ac1_integrator_fidelity() {
    let omega = 2.0 * std::f64::consts::PI;
    let mut analytic_peak = 0.0f64;
    let fine = 400_000;
    for i in 0..=fine {
        let t = 20.0 * i as f64 / fine as f64;
        analytic_peak = analytic_peak.max(analytic_sine_response(omega, 0.05, 1.0, omega, t).abs());
    }

    let model = SdofModel::linear(1.0, 0.05);
    let peak_for = |dt: f64| -> f64 {
        let n = (20.0 / dt).round() as usize + 1;
        let samples: Vec<f64> = (0..n).map(|i| -(omega * i as f64 * dt).sin()).collect();
        let record = AccelerationRecord::new("resonance", dt, samples).unwrap();
        let response = etforge::integrate_sdof(&model, &record).unwrap();
        response.displacement.iter().fold(0.0f64, |m, u| m.max(u.abs()))
    };

    let started = Instant::now();
    let peak = peak_for(0.005);
    let elapsed = started.elapsed().as_secs_f64();
    let error = (peak - analytic_peak).abs() / analytic_peak;
    assert!(error <= 0.01, "AC-1 FAIL: peak error {error:.2e} exceeds 1%");

    let error_half = (peak_for(0.0025) - analytic_peak).abs() / analytic_peak;
    let ratio = error / error_half;
    assert!(
        (2.5..6.0).contains(&ratio),
        "AC-1 FAIL: halving dt changed the error by {ratio:.2}x, expected about 4x"
    );
    assert!(elapsed < 1.0, "AC-1 FAIL: integration took {elapsed:.2} s, budget 1 s");
    println!(
        "AC-1 PASS: peak error {error:.2e} (<= 1%), halving ratio {ratio:.2} (~4x), {elapsed:.3} s"
    );
}

#[test]
fn ac2_envelope_and_spectra_properties() {
    let started = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let len = rng.gen_range(2..120);
        let history: Vec<f64> = (0..len).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let curve = envelope(&history, 0.01).unwrap();
        for k in 0..len {
            let brute = history[..=k].iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert_eq!(curve.values[k], brute, "AC-2 FAIL: envelope differs from brute force");
        }
    }

    let samples: Vec<f64> = (0..1001).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let record = AccelerationRecord::new("noise", 0.02, samples).unwrap();
    let periods = period_grid(0.1, 4.0, 30, true).unwrap();
    let checkpoints: Vec<f64> = (1..=16).map(|k| 1.25 * k as f64).collect();
    let (sa, su) = response_spectra(&record, &periods, &checkpoints, 0.05).unwrap();
    for spectrum in [&sa, &su] {
        for row in &spectrum.values {
            assert!(
                row.windows(2).all(|w| w[1] >= w[0]),
                "AC-2 FAIL: spectrum not nondecreasing in time"
            );
        }
    }
    let (sa2, su2) = response_spectra(&record.scaled(2.0), &periods, &checkpoints, 0.05).unwrap();
    for (rows, rows2) in [(&sa.values, &sa2.values), (&su.values, &su2.values)] {
        for (row, row2) in rows.iter().zip(rows2) {
            for (a, b) in row.iter().zip(row2) {
                assert_eq!(*b, a * 2.0, "AC-2 FAIL: scaling is not exactly homogeneous");
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "AC-2 FAIL: took {elapsed:.1} s, budget 30 s");
    println!("AC-2 PASS: 1000 envelope oracles, monotone + exactly homogeneous spectra, {elapsed:.1} s");
}

#[test]
fn ac3_desk_scale_generation() {
    let fixture = desk();
    let ratio = fixture.report.final_objective() / fixture.report.seed_objective();
    assert!(ratio <= 0.1, "AC-3 FAIL: objective ratio {ratio:.3} exceeds 0.1");

    let verification = verify_etef(
        &fixture.record,
        &fixture.problem.target,
        fixture.problem.damping_ratio,
        ToleranceSpec::default(),
    )
    .unwrap();
    let misfit = verification.misfit_at_target;
    assert!(misfit <= 0.15, "AC-3 FAIL: misfit at target time {misfit:.3} exceeds 15%");

    let doubling = verification.doubling.as_ref().expect("2 x t_target fits in the record");
    assert!(
        (doubling.band.0 - 1.6).abs() < 1e-12 && (doubling.band.1 - 2.4).abs() < 1e-12,
        "AC-3 FAIL: linear-profile doubling band must be [1.6, 2.4]"
    );
    let fraction = doubling.fraction_in_band;
    assert!(fraction >= 0.8, "AC-3 FAIL: doubling fraction {fraction:.2} below 80%");

    assert!(
        fixture.seconds <= 900.0,
        "AC-3 FAIL: generation took {:.0} s, budget 15 min",
        fixture.seconds
    );
    println!(
        "AC-3 PASS: objective ratio {ratio:.3} (<= 0.1), misfit {misfit:.3} (<= 0.15), \
         doubling fraction {fraction:.2} (>= 0.8), {:.1} s",
        fixture.seconds
    );
}

#[test]
fn ac4_space_equivalence_and_masked_report() {
    let fixture = desk();
    let f_time = objective(&fixture.record, &fixture.problem).unwrap();

    // Full wavelet representation of the same record evaluates identically.
    let segment = &fixture.record.samples()[1..];
    let decomp = dwt_forward(segment, 5, WaveletBasis::Daubechies4).unwrap();
    let synthesized = dwt_inverse(&decomp).unwrap();
    let mut samples = vec![0.0];
    samples.extend_from_slice(&synthesized);
    let round = AccelerationRecord::new("wavelet-rep", fixture.record.dt(), samples).unwrap();
    let f_wavelet = objective(&round, &fixture.problem).unwrap();
    let rel_diff = (f_time - f_wavelet).abs() / f_time;
    assert!(
        rel_diff <= 1e-9,
        "AC-4 FAIL: time-domain vs wavelet objective differ by {rel_diff:.2e} (> 1e-9 relative)"
    );

    // Masked-wavelet run completes; its final objective is reported beside
    // the time-domain run (directional claim reported, not asserted).
    let masked_problem = GenerationProblem {
        space: VariableSpace::WaveletMasked {
            basis: WaveletBasis::Daubechies4,
            levels: 5,
            frozen_detail_levels: vec![1],
        },
        optimizer: OptimizerSettings {
            max_iterations: 6,
            objective_tolerance: 1e-4,
            ..Default::default()
        },
        ..fixture.problem.clone()
    };
    let (_, masked_report) = generate(&masked_problem, DESK_SEED).unwrap();
    println!(
        "AC-4 PASS: objective equal across spaces ({rel_diff:.2e} relative); final objectives: \
         time-domain {:.4e} ({} iterations) vs wavelet-masked {:.4e} ({} iterations)",
        fixture.report.final_objective(),
        fixture.report.iterations,
        masked_report.final_objective(),
        masked_report.iterations,
    );
}

#[test]
fn ac5_et_vs_ida_consistency() {
    let fixture = desk();
    let started = Instant::now();
    let period = 0.5;
    // Yield near λ = 0.7: strength at 70% of the target spectral level.
    let eta = 0.7 * fixture.problem.target.base.acceleration(period);
    let model = StructureModel::Sdof(SdofModel {
        period,
        damping_ratio: 0.05,
        hysteresis: SdofHysteresis::Bilinear { yield_strength: eta, post_yield_ratio: 0.1 },
    });
    let suite = synthetic_record_suite(
        &SuiteSpec {
            count: 5,
            duration: 20.0,
            dt: 0.02,
            anchor: SuiteAnchor::AtPeriod { period },
            seed: 7,
            ..Default::default()
        },
        &fixture.problem.target.base,
        &fixture.problem.target.periods,
    )
    .unwrap();
    let lambdas: Vec<f64> = (1..=8).map(|i| 0.25 * i as f64).collect();
    let ida = run_ida(
        &model,
        &suite,
        &lambdas,
        EdpKind::RoofDisplacement,
        AnalysisOptions::default(),
    )
    .unwrap();
    let et = run_et_analysis(
        &model,
        &fixture.record,
        EdpKind::RoofDisplacement,
        AnalysisOptions::default(),
    )
    .unwrap();
    let comparison = compare_et_vs_ida(&et, &fixture.problem.target.profile, &ida).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    assert!(
        comparison.correlation >= 0.9,
        "AC-5 FAIL: correlation {:.3} below 0.9",
        comparison.correlation
    );
    assert!(
        comparison.mean_relative_error <= 0.25,
        "AC-5 FAIL: mean relative error {:.3} above 25%",
        comparison.mean_relative_error
    );
    assert!(elapsed <= 120.0, "AC-5 FAIL: took {elapsed:.0} s, budget 2 min");
    println!(
        "AC-5 PASS: correlation {:.3} (>= 0.9), mean relative error {:.3} (<= 0.25), {elapsed:.1} s",
        comparison.correlation, comparison.mean_relative_error
    );
}

#[test]
fn ac6_mapping_round_trip() {
    let linear = IntensifyingProfile::linear(10.0).unwrap();
    let exponential = etforge::calibrate_exponential(10.0, 0.5, 0.07).unwrap();
    let t_max = 20.48;
    for (name, profile) in [("linear", linear), ("exponential", exponential)] {
        for i in 1..=100 {
            let t = t_max * i as f64 / 100.0;
            let scale = time_to_intensity(&profile, t).unwrap();
            let back = intensity_to_time(&profile, scale, t_max).unwrap();
            assert!(
                (back - t).abs() <= 1e-9 * t.max(1.0),
                "AC-6 FAIL: {name} round trip drifted at t = {t}: {back}"
            );
        }
    }
    // Linear inverse is the closed form, bit for bit.
    for scale in [0.17f64, 0.5, 1.0, 1.37, 2.0] {
        let t = intensity_to_time(&linear, scale, t_max).unwrap();
        assert_eq!(t, scale * 10.0, "AC-6 FAIL: linear inverse must equal the closed form");
    }
    println!("AC-6 PASS: 100-point round trips within 1e-9 for both profile kinds, linear closed form exact");
}

#[test]
fn ac7_cav_and_determinism() {
    let fixture = desk();
    let cav = compute_cav(&fixture.record);
    assert!(cav[0] == 0.0, "AC-7 FAIL: CAV must start at zero");
    assert!(
        cav.windows(2).all(|w| w[1] >= w[0]),
        "AC-7 FAIL: CAV of the generated record is not nondecreasing"
    );

    let config = ProblemConfig {
        name: "repeat".into(),
        t_max: 5.12,
        dt: 0.02,
        periods: PeriodGridConfig { min: 0.15, max: 2.0, count: 10, spacing: Spacing::Log },
        checkpoints: CheckpointConfig::Times { times: vec![1.28, 2.56, 3.84, 5.12] },
        profile: etforge::ProfileConfig::Linear { t_target: 2.56 },
        optimizer: OptimizerSettings { max_iterations: 6, ..Default::default() },
        ..Default::default()
    };
    let problem = config.build().unwrap();
    let (a, report_a) = generate(&problem, 99).unwrap();
    let (b, report_b) = generate(&problem, 99).unwrap();
    assert_eq!(a.to_csv(), b.to_csv(), "AC-7 FAIL: same-seed runs are not byte-identical");
    assert_eq!(
        serde_json::to_string(&report_a).unwrap(),
        serde_json::to_string(&report_b).unwrap(),
        "AC-7 FAIL: same-seed reports differ"
    );
    let cav_small = compute_cav(&a);
    assert!(cav_small.windows(2).all(|w| w[1] >= w[0]));
    println!(
        "AC-7 PASS: CAV nondecreasing (final {:.2} m/s), same-seed runs byte-identical",
        cav.last().unwrap()
    );
}

#[test]
fn ac8_dwt_round_trip_and_parseval() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    for basis in [WaveletBasis::Haar, WaveletBasis::Daubechies4] {
        for (len, levels) in [(256usize, 4usize), (1024, 5), (4096, 6)] {
            let signal: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let decomp = dwt_forward(&signal, levels, basis).unwrap();
            let back = dwt_inverse(&decomp).unwrap();
            let scale = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let max_err = signal
                .iter()
                .zip(&back)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(
                max_err / scale <= 1e-10,
                "AC-8 FAIL: {basis:?} round trip error {:.2e} above 1e-10",
                max_err / scale
            );
            let sig_energy: f64 = signal.iter().map(|v| v * v).sum();
            let coef_energy: f64 = decomp.to_flat().iter().map(|v| v * v).sum();
            let drift = (sig_energy - coef_energy).abs() / sig_energy;
            assert!(
                drift <= 1e-9,
                "AC-8 FAIL: {basis:?} Parseval drift {drift:.2e} above 1e-9"
            );
        }
    }
    println!("AC-8 PASS: round trip <= 1e-10 and Parseval <= 1e-9 on random dyadic signals, both bases");
}

#[test]
fn desk_seed_objective_sanity() {
    // The seed itself must break the 15% misfit budget so AC-3 genuinely
    // demonstrates optimization, not a lucky initial guess.
    let fixture = desk();
    let seed = seed_record(&fixture.problem, DESK_SEED).unwrap();
    let seed_verification = verify_etef(
        &seed,
        &fixture.problem.target,
        fixture.problem.damping_ratio,
        ToleranceSpec::default(),
    )
    .unwrap();
    assert!(
        seed_verification.misfit_at_target > 0.15,
        "seed already satisfies the misfit budget; the criterion would be vacuous"
    );
    println!(
        "fixture sanity: seed misfit {:.3} -> optimized misfit budget 0.15",
        seed_verification.misfit_at_target
    );
}
