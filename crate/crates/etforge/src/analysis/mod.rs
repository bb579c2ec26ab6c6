//! Endurance time response analysis and its incremental-dynamic-analysis
//! oracle.
//!
//! An endurance time curve is the running envelope of a monitored response
//! quantity under an intensifying excitation; because the excitation's
//! spectra scale like `g(t)`, the curve's time axis doubles as an intensity
//! axis through `λ = g(t)`. The comparison operation resamples such a curve
//! onto an incremental-dynamic-analysis grid and reports correlation and
//! relative-error statistics against the IDA fractiles.

mod building;
mod ida;

use std::fmt::Write as _;
use std::path::Path;

pub use building::{
    run_et_analysis, AnalysisOptions, ShearBuildingModel, Story, StoryHysteresis, StructureModel,
};
pub use ida::{run_ida, synthetic_record_suite, IdaCurve, SuiteAnchor, SuiteSpec};

use crate::error::{Error, Result};
use crate::target::IntensifyingProfile;

/// Monitored engineering demand parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdpKind {
    /// Maximum inter-story drift ratio over all stories (dimensionless).
    DriftRatio,
    /// Roof (top-mass) displacement, m.
    RoofDisplacement,
    /// First-story spring force over total mass, m/s².
    BaseShearPerUnitMass,
    /// Peak story drift over yield drift, nonlinear stories only.
    StoryDuctility,
}

impl EdpKind {
    pub fn label(&self) -> &'static str {
        match self {
            EdpKind::DriftRatio => "drift-ratio",
            EdpKind::RoofDisplacement => "roof-displacement",
            EdpKind::BaseShearPerUnitMass => "base-shear-per-unit-mass",
            EdpKind::StoryDuctility => "story-ductility",
        }
    }
}

/// Running envelope of a response quantity: `values[k]` is the maximum
/// absolute response over `[0, times[k]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
    /// Set when the analysis diverged; the curve is truncated there.
    pub collapsed_at: Option<f64>,
}

impl EtCurve {
    /// Envelope value at time `t`, linearly interpolated (clamped at the
    /// ends).
    pub fn value_at(&self, t: f64) -> f64 {
        let times = &self.times;
        if t <= times[0] {
            return self.values[0];
        }
        if t >= times[times.len() - 1] {
            return self.values[times.len() - 1];
        }
        let i = times.partition_point(|&x| x <= t);
        let (t0, t1) = (times[i - 1], times[i]);
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn final_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `t,lambda,edp` rows; a trailing comment records a collapse time.
    pub fn to_csv(&self, profile: &IntensifyingProfile) -> String {
        let mut out = String::from("t,lambda,edp\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            let _ = writeln!(out, "{t:.9e},{:.9e},{v:.9e}", profile.eval(*t));
        }
        if let Some(tc) = self.collapsed_at {
            let _ = writeln!(out, "# collapsed_at={tc}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, profile: &IntensifyingProfile) -> Result<()> {
        std::fs::write(path, self.to_csv(profile))?;
        Ok(())
    }

    pub fn from_csv(content: &str, origin: &str) -> Result<Self> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut collapsed_at = None;
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.trim_end_matches('\r').trim();
            if line.is_empty() || line == "t,lambda,edp" {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((_, v)) = rest.trim().split_once('=') {
                    collapsed_at = v.trim().parse::<f64>().ok();
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: lineno + 1,
                    message: format!("expected t,lambda,edp, got {line:?}"),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: origin.into(),
                    line: lineno + 1,
                    message: e.to_string(),
                })
            };
            times.push(parse(fields[0])?);
            values.push(parse(fields[2])?);
        }
        Ok(Self { times, values, label: "edp".into(), collapsed_at })
    }
}

/// Running maximum of the absolute response history.
pub fn envelope(history: &[f64], dt: f64) -> Result<EtCurve> {
    if history.is_empty() {
        return Err(Error::InvalidGrid("empty response history".into()));
    }
    if let Some(i) = history.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteSample { index: i });
    }
    let mut values = Vec::with_capacity(history.len());
    let mut peak = 0.0f64;
    for &v in history {
        peak = peak.max(v.abs());
        values.push(peak);
    }
    let times = (0..history.len()).map(|i| i as f64 * dt).collect();
    Ok(EtCurve { times, values, label: "response".into(), collapsed_at: None })
}

/// Scale factor equivalent of an analysis time: `λ = g(t)`.
pub fn time_to_intensity(profile: &IntensifyingProfile, t: f64) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidProfile(format!("time must be positive, got {t}")));
    }
    Ok(profile.eval(t))
}

/// Analysis time at which the profile reaches `scale`; closed form for the
/// linear shape, bracketed bisection otherwise. Round trips with
/// [`time_to_intensity`] to better than 1e-9.
pub fn intensity_to_time(profile: &IntensifyingProfile, scale: f64, t_max: f64) -> Result<f64> {
    let max_scale = profile.eval(t_max);
    if !(scale > 0.0 && scale <= max_scale * (1.0 + 1e-9)) {
        return Err(Error::IntensityOutOfRange { value: scale, min: 0.0, max: max_scale });
    }
    if let Some(t) = profile.invert_linear(scale) {
        return Ok(t.min(t_max));
    }
    let mut lo = 0.0f64;
    let mut hi = t_max;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if profile.eval(mid) < scale {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * t_max {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One hazard-level demand check.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PerformanceLimit {
    /// Hazard level as a profile scale factor.
    pub hazard_scale: f64,
    /// Acceptable demand at that hazard level.
    pub edp_cap: f64,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PerformanceCheck {
    pub label: String,
    pub hazard_scale: f64,
    pub time: f64,
    /// The cap (target performance).
    pub edp_cap: f64,
    /// The envelope demand at the mapped time (existing performance).
    pub demand: f64,
    pub passed: bool,
}

/// Evaluates the envelope at each hazard level's equivalent time and checks
/// it against the cap, producing target-vs-existing point pairs.
pub fn check_performance(
    et: &EtCurve,
    profile: &IntensifyingProfile,
    limits: &[PerformanceLimit],
) -> Result<Vec<PerformanceCheck>> {
    let t_max = *et.times.last().ok_or_else(|| Error::InvalidGrid("empty curve".into()))?;
    limits
        .iter()
        .map(|limit| {
            let time = intensity_to_time(profile, limit.hazard_scale, t_max)?;
            let demand = et.value_at(time);
            Ok(PerformanceCheck {
                label: limit.label.clone(),
                hazard_scale: limit.hazard_scale,
                time,
                edp_cap: limit.edp_cap,
                demand,
                passed: demand <= limit.edp_cap,
            })
        })
        .collect()
}

/// Endurance-time-vs-IDA comparison statistics.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ComparisonReport {
    /// Scale factors shared by both curves.
    pub lambdas: Vec<f64>,
    pub et_values: Vec<f64>,
    pub ida_median: Vec<f64>,
    pub ida_fractile_16: Vec<f64>,
    pub ida_fractile_84: Vec<f64>,
    /// Pearson correlation between the ET curve and the IDA median.
    pub correlation: f64,
    /// Mean of |et - median| / median over nonzero medians.
    pub mean_relative_error: f64,
    pub mean_relative_deviation_16: f64,
    pub mean_relative_deviation_84: f64,
}

/// Resamples the ET curve onto the IDA scale grid through `λ = g(t)` and
/// compares against the IDA fractiles.
pub fn compare_et_vs_ida(
    et: &EtCurve,
    profile: &IntensifyingProfile,
    ida: &IdaCurve,
) -> Result<ComparisonReport> {
    let t_end = *et.times.last().ok_or_else(|| Error::InvalidGrid("empty curve".into()))?;
    let lambda_max = profile.eval(t_end);
    let mut lambdas = Vec::new();
    let mut et_values = Vec::new();
    let mut median = Vec::new();
    let mut p16 = Vec::new();
    let mut p84 = Vec::new();
    for (i, &lambda) in ida.lambdas.iter().enumerate() {
        if lambda > lambda_max * (1.0 + 1e-9) {
            continue;
        }
        let value = if lambda == 0.0 {
            0.0
        } else {
            et.value_at(intensity_to_time(profile, lambda, t_end)?)
        };
        lambdas.push(lambda);
        et_values.push(value);
        median.push(ida.median[i]);
        p16.push(ida.fractile_16[i]);
        p84.push(ida.fractile_84[i]);
    }
    if lambdas.len() < 2 {
        return Err(Error::NonOverlapping(format!(
            "ET curve covers scales up to {lambda_max}, IDA grid starts at {:?}",
            ida.lambdas.first()
        )));
    }

    let correlation = pearson(&et_values, &median);
    let rel = |a: &[f64], b: &[f64]| -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (x, y) in a.iter().zip(b) {
            if y.abs() > 1e-30 {
                sum += (x - y).abs() / y.abs();
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    };
    Ok(ComparisonReport {
        correlation,
        mean_relative_error: rel(&et_values, &median),
        mean_relative_deviation_16: rel(&et_values, &p16),
        mean_relative_deviation_84: rel(&et_values, &p84),
        lambdas,
        et_values,
        ida_median: median,
        ida_fractile_16: p16,
        ida_fractile_84: p84,
    })
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
