//! Endurance time excitation toolkit.
//!
//! The endurance time method replaces suites of scaled ground motions with a
//! single intensifying excitation whose running response spectra track a
//! scaled target spectrum; analysis time then doubles as an intensity axis.
//! This crate covers the full workflow:
//!
//! - [`signal`]: acceleration records, cumulative absolute velocity, peak
//!   motion metrics, record CSV I/O.
//! - [`wavelet`]: orthogonal discrete wavelet transform used as an
//!   alternative optimization space for the generator.
//! - [`sdof`]: Newmark time integration of linear and hysteretic oscillators
//!   and running response spectra.
//! - [`target`]: base target spectra, intensifying profiles, and the
//!   time-varying target surfaces they induce.
//! - [`generate`]: the least-squares synthesis of intensifying excitations
//!   over time-domain or wavelet variable spaces.
//! - [`analysis`]: endurance time curves, shear-building models, incremental
//!   dynamic analysis, and comparisons between the two.

pub mod analysis;
pub mod error;
pub mod generate;
pub mod sdof;
pub mod signal;
pub mod target;
pub mod wavelet;

pub use error::{Error, Result};
pub use signal::{compute_cav, peak_metrics, AccelerationRecord, PeakMetrics};
pub use wavelet::{dwt_forward, dwt_inverse, WaveletBasis, WaveletDecomposition};

pub use sdof::{
    hysteretic_energy, integrate_sdof, period_grid, response_spectra, RunningSpectrum,
    SdofHysteresis, SdofModel, SdofResponse, SpectrumKind, DEFAULT_DAMPING_RATIO,
};

pub use target::{
    calibrate_exponential, checkpoint_grid, BaseTargetSpectrum, IntensifyingProfile, TargetModel,
};

pub use generate::{
    generate, generate_with_start, objective, residual_vector, seed_record, verify_etef, CheckpointConfig,
    GenerationProblem, GenerationReport, OptimizerSettings, PeriodGridConfig, ProblemConfig,
    ProfileConfig, ResidualKind, Spacing, TerminationReason, ToleranceSpec, VariableSpace,
    VerificationReport,
};

pub use analysis::{
    check_performance, compare_et_vs_ida, envelope, intensity_to_time, run_et_analysis, run_ida,
    synthetic_record_suite, time_to_intensity, AnalysisOptions, ComparisonReport, EdpKind,
    EtCurve, IdaCurve, PerformanceCheck, PerformanceLimit, ShearBuildingModel, Story,
    StoryHysteresis, StructureModel, SuiteAnchor, SuiteSpec,
};
