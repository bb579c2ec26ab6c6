//! Target spectra and intensifying profiles.
//!
//! The time-varying targets an intensifying excitation must track are
//! separable: a fixed base spectrum scaled by an increasing profile `g(t)`
//! normalized so `g(t_target) = 1`. Supported profiles are the linear ramp
//! `t / t_target` and the saturating-exponential form
//! `amplitude · tanh(saturation_rate · t) · exp(growth_rate · t)`; the latter
//! has its amplitude solved at construction so the normalization holds.
//!
//! Displacement targets derive from the acceleration spectrum through the
//! pseudo-spectral relation `S_u(T) = S_a(T) · (T / 2π)²`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sdof::{RunningSpectrum, SpectrumKind};

/// Base (time-invariant) target acceleration spectrum, m/s².
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BaseTargetSpectrum {
    /// Code-style shape: linear ramp from `0.4 · plateau` at T = 0 up to the
    /// plateau at `corner_low`, constant to `corner_high`, then a
    /// `(corner_high / T)^decay_exponent` tail.
    ParametricPlateau {
        /// Plateau acceleration, m/s².
        plateau: f64,
        /// First corner period T_b, s.
        corner_low: f64,
        /// Second corner period T_c, s.
        corner_high: f64,
        #[serde(default = "default_decay")]
        decay_exponent: f64,
    },
    /// Piecewise-linear (period, acceleration) table; evaluation clamps
    /// outside the tabulated range.
    Tabulated { points: Vec<(f64, f64)> },
}

fn default_decay() -> f64 {
    1.0
}

impl BaseTargetSpectrum {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::ParametricPlateau { plateau, corner_low, corner_high, decay_exponent } => {
                if !(plateau.is_finite() && *plateau > 0.0) {
                    return Err(Error::InvalidGrid("plateau acceleration must be positive".into()));
                }
                if !(corner_low.is_finite() && *corner_low > 0.0 && corner_high >= corner_low) {
                    return Err(Error::InvalidGrid(format!(
                        "corner periods must satisfy 0 < {corner_low} <= {corner_high}"
                    )));
                }
                if !(decay_exponent.is_finite() && *decay_exponent > 0.0) {
                    return Err(Error::InvalidGrid("decay exponent must be positive".into()));
                }
            }
            Self::Tabulated { points } => {
                if points.len() < 2 {
                    return Err(Error::InvalidGrid("tabulated spectrum needs at least 2 points".into()));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::InvalidGrid(format!(
                            "tabulated periods must be strictly increasing ({} then {})",
                            w[0].0, w[1].0
                        )));
                    }
                }
                if points.iter().any(|(t, v)| !(t.is_finite() && *t > 0.0 && v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidGrid(
                        "tabulated spectrum needs positive periods and values".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Target spectral acceleration at period `period`, m/s².
    pub fn acceleration(&self, period: f64) -> f64 {
        match self {
            Self::ParametricPlateau { plateau, corner_low, corner_high, decay_exponent } => {
                if period <= *corner_low {
                    plateau * (0.4 + 0.6 * period / corner_low)
                } else if period <= *corner_high {
                    *plateau
                } else {
                    plateau * (corner_high / period).powf(*decay_exponent)
                }
            }
            Self::Tabulated { points } => {
                if period <= points[0].0 {
                    return points[0].1;
                }
                if period >= points[points.len() - 1].0 {
                    return points[points.len() - 1].1;
                }
                let i = points.partition_point(|(t, _)| *t <= period);
                let (t0, v0) = points[i - 1];
                let (t1, v1) = points[i];
                if t0 == period {
                    return v0;
                }
                v0 + (v1 - v0) * (period - t0) / (t1 - t0)
            }
        }
    }

    /// Target spectral displacement via the pseudo-spectral relation, m.
    pub fn displacement(&self, period: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI / period;
        self.acceleration(period) / (w * w)
    }

    /// Writes `period,value` rows.
    pub fn tabulated_to_csv(points: &[(f64, f64)]) -> String {
        let mut out = String::new();
        for (t, v) in points {
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }

    /// Reads a `period,value` table (LF or CRLF, `#` comments allowed).
    pub fn tabulated_from_csv(content: &str, origin: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.trim_end_matches('\r').trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',');
            let mut next = |what: &str| -> Result<f64> {
                fields
                    .next()
                    .ok_or_else(|| Error::Parse {
                        path: origin.into(),
                        line: lineno + 1,
                        message: format!("missing {what}"),
                    })?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse {
                        path: origin.into(),
                        line: lineno + 1,
                        message: format!("bad {what}: {e}"),
                    })
            };
            let period = next("period")?;
            let value = next("value")?;
            points.push((period, value));
        }
        let spectrum = Self::Tabulated { points };
        spectrum.validate()?;
        Ok(spectrum)
    }

    pub fn tabulated_from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::tabulated_from_csv(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}

/// Increasing scale profile `g(t)` with `g(0) = 0` and `g(t_target) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct IntensifyingProfile {
    shape: ProfileShape,
    t_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ProfileShape {
    Linear,
    Exponential { amplitude: f64, saturation_rate: f64, growth_rate: f64 },
}

impl IntensifyingProfile {
    /// Linear ramp `g(t) = t / t_target`.
    pub fn linear(t_target: f64) -> Result<Self> {
        check_t_target(t_target)?;
        Ok(Self { shape: ProfileShape::Linear, t_target })
    }

    /// Saturating-exponential profile with a pre-solved amplitude. The
    /// normalization `g(t_target) = 1` is re-checked to 1e-9.
    pub fn exponential(
        t_target: f64,
        amplitude: f64,
        saturation_rate: f64,
        growth_rate: f64,
    ) -> Result<Self> {
        check_t_target(t_target)?;
        check_shape_rates(saturation_rate, growth_rate)?;
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::InvalidProfile("amplitude must be positive".into()));
        }
        let profile = Self {
            shape: ProfileShape::Exponential { amplitude, saturation_rate, growth_rate },
            t_target,
        };
        let at_target = profile.eval(t_target);
        if (at_target - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidProfile(format!(
                "profile is not normalized: g(t_target) = {at_target}"
            )));
        }
        Ok(profile)
    }

    pub fn t_target(&self) -> f64 {
        self.t_target
    }

    pub fn is_linear(&self) -> bool {
        matches!(self.shape, ProfileShape::Linear)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.shape {
            ProfileShape::Linear => "linear",
            ProfileShape::Exponential { .. } => "exponential",
        }
    }

    /// Profile value at `t ≥ 0`.
    pub fn value(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidProfile(format!("time must be nonnegative, got {t}")));
        }
        Ok(self.eval(t))
    }

    #[inline]
    pub(crate) fn eval(&self, t: f64) -> f64 {
        match self.shape {
            ProfileShape::Linear => t / self.t_target,
            ProfileShape::Exponential { amplitude, saturation_rate, growth_rate } => {
                amplitude * (saturation_rate * t).tanh() * (growth_rate * t).exp()
            }
        }
    }

    /// Closed-form inverse for the linear shape; `None` otherwise.
    pub(crate) fn invert_linear(&self, scale: f64) -> Option<f64> {
        match self.shape {
            ProfileShape::Linear => Some(scale * self.t_target),
            ProfileShape::Exponential { .. } => None,
        }
    }
}

fn check_t_target(t_target: f64) -> Result<()> {
    if !(t_target.is_finite() && t_target > 0.0) {
        return Err(Error::InvalidProfile(format!("t_target must be positive, got {t_target}")));
    }
    Ok(())
}

fn check_shape_rates(saturation_rate: f64, growth_rate: f64) -> Result<()> {
    if !(saturation_rate.is_finite() && saturation_rate > 0.0) {
        return Err(Error::InvalidProfile("saturation rate must be positive".into()));
    }
    if !(growth_rate.is_finite() && growth_rate > 0.0) {
        return Err(Error::InvalidProfile("growth rate must be positive".into()));
    }
    Ok(())
}

/// Solves the exponential amplitude so that `g(t_target) = 1`.
pub fn calibrate_exponential(
    t_target: f64,
    saturation_rate: f64,
    growth_rate: f64,
) -> Result<IntensifyingProfile> {
    check_t_target(t_target)?;
    check_shape_rates(saturation_rate, growth_rate)?;
    let denom = (saturation_rate * t_target).tanh() * (growth_rate * t_target).exp();
    if !(denom.is_finite() && denom > 1e-12) {
        return Err(Error::InvalidProfile(format!(
            "degenerate profile: tanh({saturation_rate}·{t_target})·exp({growth_rate}·{t_target}) = {denom}"
        )));
    }
    IntensifyingProfile::exponential(t_target, 1.0 / denom, saturation_rate, growth_rate)
}

/// A base spectrum, a profile, and the grids on which their product is
/// evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetModel {
    pub base: BaseTargetSpectrum,
    pub profile: IntensifyingProfile,
    pub periods: Vec<f64>,
    pub checkpoints: Vec<f64>,
}

impl TargetModel {
    pub fn new(
        base: BaseTargetSpectrum,
        profile: IntensifyingProfile,
        periods: Vec<f64>,
        checkpoints: Vec<f64>,
    ) -> Result<Self> {
        base.validate()?;
        if periods.is_empty() {
            return Err(Error::InvalidGrid("empty period grid".into()));
        }
        if !periods.windows(2).all(|w| w[1] > w[0]) || periods[0] <= 0.0 {
            return Err(Error::InvalidGrid("periods must be positive and strictly increasing".into()));
        }
        if checkpoints.is_empty() {
            return Err(Error::InvalidGrid("empty checkpoint grid".into()));
        }
        if !checkpoints.windows(2).all(|w| w[1] > w[0]) || checkpoints[0] <= 0.0 {
            return Err(Error::InvalidGrid(
                "checkpoints must be positive and strictly increasing".into(),
            ));
        }
        Ok(Self { base, profile, periods, checkpoints })
    }

    /// Base acceleration spectrum sampled on the period grid.
    pub fn base_acceleration(&self) -> Vec<f64> {
        self.periods.iter().map(|&t| self.base.acceleration(t)).collect()
    }

    /// Base displacement spectrum sampled on the period grid.
    pub fn base_displacement(&self) -> Vec<f64> {
        self.periods.iter().map(|&t| self.base.displacement(t)).collect()
    }

    /// Time-varying target surfaces: `g(t_k) · S(T_j)` for both kinds.
    pub fn target_surface(&self) -> (RunningSpectrum, RunningSpectrum) {
        let scales: Vec<f64> = self.checkpoints.iter().map(|&t| self.profile.eval(t)).collect();
        let build = |kind: SpectrumKind, base_row: Vec<f64>| RunningSpectrum {
            kind,
            periods: self.periods.clone(),
            times: self.checkpoints.clone(),
            values: base_row
                .iter()
                .map(|&b| scales.iter().map(|&g| g * b).collect())
                .collect(),
        };
        (
            build(SpectrumKind::Acceleration, self.base_acceleration()),
            build(SpectrumKind::Displacement, self.base_displacement()),
        )
    }
}

/// Uniform checkpoint grid over `(0, end]`: `end·k/count` for `k = 1..=count`.
pub fn checkpoint_grid(count: usize, end: f64) -> Result<Vec<f64>> {
    if count == 0 || !(end.is_finite() && end > 0.0) {
        return Err(Error::InvalidGrid(format!("bad checkpoint grid: count {count}, end {end}")));
    }
    Ok((1..=count).map(|k| end * k as f64 / count as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdof::period_grid;
    use approx::assert_relative_eq;

    fn plateau() -> BaseTargetSpectrum {
        BaseTargetSpectrum::ParametricPlateau {
            plateau: 1.0,
            corner_low: 0.15,
            corner_high: 0.6,
            decay_exponent: 1.0,
        }
    }

    #[test]
    fn linear_profile_hits_published_ratios() {
        let p = IntensifyingProfile::linear(10.0).unwrap();
        assert_eq!(p.value(10.0).unwrap(), 1.0);
        assert_eq!(p.value(20.0).unwrap(), 2.0);
        assert_eq!(p.value(5.0).unwrap(), 0.5);
        assert!(p.value(-1.0).is_err());
    }

    #[test]
    fn exponential_calibration_solves_amplitude() {
        let p = calibrate_exponential(20.0, 1.0, 0.05).unwrap();
        let expected_amplitude = 1.0 / ((20.0f64).tanh() * (1.0f64).exp());
        match p.shape {
            ProfileShape::Exponential { amplitude, .. } => {
                assert_relative_eq!(amplitude, expected_amplitude, max_relative = 1e-14);
            }
            _ => panic!("expected exponential shape"),
        }
        assert!((p.value(20.0).unwrap() - 1.0).abs() <= 1e-12);
        assert_eq!(p.value(0.0).unwrap(), 0.0);
    }

    #[test]
    fn calibrated_profile_is_strictly_increasing() {
        let p = calibrate_exponential(20.0, 0.35, 0.08).unwrap();
        let t_max = 40.0;
        let mut prev = 0.0;
        for i in 1..=1000 {
            let t = t_max * i as f64 / 1000.0;
            let g = p.value(t).unwrap();
            assert!(g > prev, "g({t}) = {g} not above {prev}");
            prev = g;
        }
    }

    #[test]
    fn exponential_doubling_matches_closed_form_ratio() {
        let (gamma, alpha, tt) = (0.6, 0.07, 10.0);
        let p = calibrate_exponential(tt, gamma, alpha).unwrap();
        let ratio = p.value(2.0 * tt).unwrap() / p.value(tt).unwrap();
        let expected = ((2.0 * gamma * tt).tanh() / (gamma * tt).tanh()) * (alpha * tt).exp();
        assert_relative_eq!(ratio, expected, max_relative = 1e-12);
    }

    #[test]
    fn degenerate_calibration_is_rejected() {
        assert!(calibrate_exponential(1e-30, 1.0, 0.05).is_err());
        assert!(calibrate_exponential(20.0, 0.0, 0.05).is_err());
        assert!(calibrate_exponential(20.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn unnormalized_amplitude_is_rejected() {
        let err = IntensifyingProfile::exponential(20.0, 1.0, 1.0, 0.05).unwrap_err();
        assert!(err.to_string().contains("not normalized"));
    }

    #[test]
    fn plateau_shape_and_corner_continuity() {
        let s = plateau();
        assert_relative_eq!(s.acceleration(0.0), 0.4);
        assert_relative_eq!(s.acceleration(0.3), 1.0);
        assert_relative_eq!(s.acceleration(1.2), 0.5);
        for corner in [0.15, 0.6] {
            let before = s.acceleration(corner * (1.0 - 1e-12));
            let after = s.acceleration(corner * (1.0 + 1e-12));
            assert!((before - after).abs() <= 1e-9 * before.max(after));
        }
    }

    #[test]
    fn displacement_uses_pseudo_spectral_relation() {
        let s = plateau();
        let t = 2.0;
        let w = 2.0 * std::f64::consts::PI / t;
        assert_relative_eq!(s.displacement(t), s.acceleration(t) / (w * w), max_relative = 1e-15);
    }

    #[test]
    fn tabulated_interpolates_and_clamps() {
        let s = BaseTargetSpectrum::Tabulated {
            points: vec![(0.1, 0.5), (0.5, 1.0), (1.0, 0.8)],
        };
        s.validate().unwrap();
        assert_relative_eq!(s.acceleration(0.3), 0.75);
        assert_relative_eq!(s.acceleration(0.5), 1.0);
        assert_relative_eq!(s.acceleration(0.05), 0.5);
        assert_relative_eq!(s.acceleration(3.0), 0.8);
    }

    #[test]
    fn tabulated_csv_round_trip_and_validation() {
        let points = vec![(0.1, 0.5), (0.5, 1.0), (2.0, 0.25)];
        let csv = BaseTargetSpectrum::tabulated_to_csv(&points);
        let s = BaseTargetSpectrum::tabulated_from_csv(&csv, "mem").unwrap();
        assert_eq!(s, BaseTargetSpectrum::Tabulated { points });
        assert!(BaseTargetSpectrum::tabulated_from_csv("0.5,1.0\n0.2,0.9\n", "mem").is_err());
    }

    #[test]
    fn surface_is_exact_product() {
        let periods = period_grid(0.1, 4.0, 12, true).unwrap();
        let checkpoints = checkpoint_grid(8, 20.0).unwrap();
        let profile = IntensifyingProfile::linear(10.0).unwrap();
        let model = TargetModel::new(plateau(), profile, periods, checkpoints).unwrap();
        let (sa, su) = model.target_surface();
        for (j, &period) in model.periods.iter().enumerate() {
            for (k, &t) in model.checkpoints.iter().enumerate() {
                let g = model.profile.value(t).unwrap();
                assert_eq!(sa.value(j, k), g * model.base.acceleration(period));
                assert_eq!(su.value(j, k), g * model.base.displacement(period));
            }
        }
        // Row at t_target equals the base spectrum exactly for linear profiles.
        let k_target = model.checkpoints.iter().position(|&t| t == 10.0).unwrap();
        for (j, &period) in model.periods.iter().enumerate() {
            assert_eq!(sa.value(j, k_target), model.base.acceleration(period));
        }
        // Linear profile: surface at 2t doubles the surface at t.
        let k5 = model.checkpoints.iter().position(|&t| t == 5.0).unwrap();
        for j in 0..model.periods.len() {
            assert_relative_eq!(sa.value(j, k_target), 2.0 * sa.value(j, k5), max_relative = 1e-15);
        }
        // Surfaces are nondecreasing along the time axis.
        for row in sa.values.iter().chain(su.values.iter()) {
            assert!(row.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn exponential_surface_is_zero_at_time_zero() {
        let profile = calibrate_exponential(10.0, 0.5, 0.05).unwrap();
        assert_eq!(profile.value(0.0).unwrap(), 0.0);
    }

    #[test]
    fn checkpoint_grid_covers_interval() {
        let g = checkpoint_grid(8, 20.0).unwrap();
        assert_eq!(g.len(), 8);
        assert_relative_eq!(g[0], 2.5);
        assert_relative_eq!(g[7], 20.0);
        assert!(checkpoint_grid(0, 20.0).is_err());
    }
}
