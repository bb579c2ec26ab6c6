//! Subcommand configuration files (JSON).
//!
//! Tabulated spectra may be given inline as `points` or through a `path` to a
//! `period,value` CSV; paths are resolved relative to the config file before
//! typed deserialization.

use std::path::{Path, PathBuf};

use etforge::analysis::{AnalysisOptions, EdpKind, PerformanceLimit, StructureModel, SuiteAnchor, SuiteSpec};
use etforge::generate::{CheckpointConfig, PeriodGridConfig, ProblemConfig, ProfileConfig};
use etforge::target::BaseTargetSpectrum;
use etforge::{Error, Result, ToleranceSpec};

/// Reads a config file, resolving `{"kind": "tabulated", "path": ...}`
/// spectrum references against the config's directory.
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let content = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidProblem(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut value: serde_json::Value = serde_json::from_str(&content)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    resolve_spectrum_paths(&mut value, dir)?;
    Ok(serde_json::from_value(value)?)
}

fn resolve_spectrum_paths(value: &mut serde_json::Value, dir: &Path) -> Result<()> {
    match value {
        serde_json::Value::Object(map) => {
            let tabulated_path = map.get("kind").and_then(|k| k.as_str()) == Some("tabulated")
                && map.contains_key("path");
            if tabulated_path {
                let raw = map
                    .get("path")
                    .and_then(|p| p.as_str())
                    .ok_or_else(|| Error::InvalidProblem("spectrum path must be a string".into()))?
                    .to_string();
                let spectrum = BaseTargetSpectrum::tabulated_from_csv_path(dir.join(&raw))?;
                let BaseTargetSpectrum::Tabulated { points } = spectrum else { unreachable!() };
                map.remove("path");
                map.insert("points".into(), serde_json::to_value(points)?);
            } else {
                for child in map.values_mut() {
                    resolve_spectrum_paths(child, dir)?;
                }
            }
        }
        serde_json::Value::Array(items) => {
            for child in items {
                resolve_spectrum_paths(child, dir)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// `generate` takes the generation problem config directly.
pub type GenerateConfig = ProblemConfig;

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraConfig {
    pub record: PathBuf,
    #[serde(default)]
    pub periods: PeriodGridConfig,
    #[serde(default)]
    pub checkpoints: CheckpointConfig,
    #[serde(default = "default_damping")]
    pub damping_ratio: f64,
}

pub fn default_damping() -> f64 {
    etforge::DEFAULT_DAMPING_RATIO
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub record: PathBuf,
    pub model: StructureModel,
    pub edp: EdpKind,
    pub profile: ProfileConfig,
    #[serde(default)]
    pub options: AnalysisOptions,
    /// Optional hazard-level demand caps to check against the curve.
    #[serde(default)]
    pub limits: Vec<PerformanceLimit>,
}

/// Either paths to record CSVs or a synthetic suite description.
#[derive(Debug, serde::Deserialize)]
#[serde(untagged)]
pub enum RecordsConfig {
    Paths(Vec<PathBuf>),
    Synthetic { synthetic: SyntheticConfig },
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub count: usize,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_damping")]
    pub damping_ratio: f64,
    #[serde(default = "default_anchor")]
    pub anchor: SuiteAnchor,
    #[serde(default)]
    pub seed: u64,
    pub spectrum: BaseTargetSpectrum,
    #[serde(default)]
    pub periods: PeriodGridConfig,
}

fn default_duration() -> f64 {
    20.0
}

fn default_dt() -> f64 {
    0.02
}

fn default_anchor() -> SuiteAnchor {
    SuiteAnchor::MeanOverGrid
}

impl RecordsConfig {
    pub fn load(&self, config_dir: &Path) -> Result<Vec<etforge::AccelerationRecord>> {
        match self {
            RecordsConfig::Paths(paths) => {
                if paths.is_empty() {
                    return Err(Error::InvalidGrid("no records".into()));
                }
                paths
                    .iter()
                    .map(|p| etforge::AccelerationRecord::read_csv(config_dir.join(p)))
                    .collect()
            }
            RecordsConfig::Synthetic { synthetic } => {
                let spec = SuiteSpec {
                    count: synthetic.count,
                    duration: synthetic.duration,
                    dt: synthetic.dt,
                    damping_ratio: synthetic.damping_ratio,
                    anchor: synthetic.anchor,
                    seed: synthetic.seed,
                };
                etforge::synthetic_record_suite(
                    &spec,
                    &synthetic.spectrum,
                    &synthetic.periods.build()?,
                )
            }
        }
    }
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdaConfig {
    pub records: RecordsConfig,
    pub model: StructureModel,
    pub lambdas: Vec<f64>,
    pub edp: EdpKind,
    #[serde(default)]
    pub options: AnalysisOptions,
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// The intensifying excitation driving the endurance time analysis.
    pub etef: PathBuf,
    pub profile: ProfileConfig,
    pub model: StructureModel,
    pub records: RecordsConfig,
    pub lambdas: Vec<f64>,
    pub edp: EdpKind,
    #[serde(default)]
    pub options: AnalysisOptions,
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetModelConfig {
    pub spectrum: BaseTargetSpectrum,
    pub profile: ProfileConfig,
    #[serde(default)]
    pub periods: PeriodGridConfig,
    pub checkpoints: CheckpointConfig,
    /// End of the uniform checkpoint grid when `checkpoints` is a count.
    #[serde(default)]
    pub t_max: Option<f64>,
}

impl TargetModelConfig {
    pub fn build(&self, record_duration: f64) -> Result<etforge::TargetModel> {
        let end = self.t_max.unwrap_or(record_duration);
        etforge::TargetModel::new(
            self.spectrum.clone(),
            self.profile.build()?,
            self.periods.build()?,
            self.checkpoints.build(end)?,
        )
    }
}

#[derive(Debug, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub record: PathBuf,
    pub target: TargetModelConfig,
    #[serde(default = "default_damping")]
    pub damping_ratio: f64,
    #[serde(default)]
    pub tolerance: ToleranceSpec,
}
