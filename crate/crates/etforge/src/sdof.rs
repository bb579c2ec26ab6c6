//! Single-degree-of-freedom time integration and running response spectra.
//!
//! All equations are written per unit mass, so the governing relation for a
//! relative displacement `u` under base acceleration `a_g` is
//!
//! ```text
//! ü + 2ξω u̇ + f_s(u) = -a_g,     f_s(u) = ω² u  (linear)
//! ```
//!
//! with yield strengths expressed as pseudo-accelerations (m/s²). Integration
//! uses the Newmark average-acceleration scheme (γ = 1/2, β = 1/4);
//! rate-independent plasticity is handled with a radial return onto the yield
//! surface inside a per-step Newton loop. Steps are internally subdivided so
//! the effective step never exceeds `T/20`.
//!
//! Running spectra report, for every period of an elastic oscillator, the
//! maximum absolute response over `[0, t]` for each checkpoint time `t`:
//! absolute acceleration `max |ü(τ) + a_g(τ)|` and displacement `max |u(τ)|`,
//! with maxima tracked over every internal integration point.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::signal::AccelerationRecord;

/// Restoring-force law of an oscillator, strengths in pseudo-acceleration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SdofHysteresis {
    Linear,
    ElasticPerfectlyPlastic {
        /// Yield pseudo-acceleration η, m/s².
        yield_strength: f64,
    },
    Bilinear {
        yield_strength: f64,
        /// Post-yield to elastic stiffness ratio, in [0, 1).
        post_yield_ratio: f64,
    },
}

/// A single-degree-of-freedom oscillator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SdofModel {
    /// Natural period, s.
    pub period: f64,
    /// Viscous damping ratio ξ.
    #[serde(default = "default_damping")]
    pub damping_ratio: f64,
    #[serde(default = "default_hysteresis")]
    pub hysteresis: SdofHysteresis,
}

pub(crate) fn default_damping() -> f64 {
    DEFAULT_DAMPING_RATIO
}

fn default_hysteresis() -> SdofHysteresis {
    SdofHysteresis::Linear
}

/// Damping ratio used whenever one is not supplied explicitly.
pub const DEFAULT_DAMPING_RATIO: f64 = 0.05;

impl SdofModel {
    pub fn linear(period: f64, damping_ratio: f64) -> Self {
        Self { period, damping_ratio, hysteresis: SdofHysteresis::Linear }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::InvalidModel(format!("period must be positive, got {}", self.period)));
        }
        if !(self.damping_ratio >= 0.0 && self.damping_ratio < 1.0) {
            return Err(Error::InvalidModel(format!(
                "damping ratio must be in [0, 1), got {}",
                self.damping_ratio
            )));
        }
        match self.hysteresis {
            SdofHysteresis::Linear => {}
            SdofHysteresis::ElasticPerfectlyPlastic { yield_strength } => {
                if !(yield_strength.is_finite() && yield_strength > 0.0) {
                    return Err(Error::InvalidModel("yield strength must be positive".into()));
                }
            }
            SdofHysteresis::Bilinear { yield_strength, post_yield_ratio } => {
                if !(yield_strength.is_finite() && yield_strength > 0.0) {
                    return Err(Error::InvalidModel("yield strength must be positive".into()));
                }
                if !(0.0..1.0).contains(&post_yield_ratio) {
                    return Err(Error::InvalidModel(format!(
                        "post-yield ratio must be in [0, 1), got {post_yield_ratio}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn natural_frequency(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period
    }
}

/// Response histories sampled at the driving record's times.
#[derive(Debug, Clone, PartialEq)]
pub struct SdofResponse {
    pub dt: f64,
    /// Relative displacement, m.
    pub displacement: Vec<f64>,
    /// Relative velocity, m/s.
    pub velocity: Vec<f64>,
    /// Relative acceleration ü, m/s².
    pub relative_acceleration: Vec<f64>,
    /// Absolute acceleration ü + a_g, m/s².
    pub absolute_acceleration: Vec<f64>,
    /// Restoring pseudo-acceleration f_s, m/s².
    pub restoring_force: Vec<f64>,
    /// Cumulative plastic dissipation per unit mass, m²/s² (zero when linear).
    pub hysteretic_energy: Vec<f64>,
}

/// Final cumulative plastic work per unit mass of a response.
pub fn hysteretic_energy(response: &SdofResponse) -> f64 {
    response.hysteretic_energy.last().copied().unwrap_or(0.0)
}

// Newmark average-acceleration constants for one substep of size `h`:
//   u1 = p_eff / k_eff
//   v1 = (2/h)(u1 - u0) - v0
//   a1 = (4/h²)(u1 - u0) - (4/h) v0 - a0
#[derive(Debug, Clone, Copy)]
pub(crate) struct NewmarkPlan {
    pub substeps: usize,
    pub omega2: f64,
    pub damping: f64, // 2ξω
    inv_h2_4: f64,    // 4/h²
    inv_h_4: f64,     // 4/h
    inv_h_2: f64,     // 2/h
    k_eff: f64,       // ω² + (2/h)c + 4/h²  (linear path)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct OscState {
    pub u: f64,
    pub v: f64,
    pub a: f64,
}

/// Maximum absolute displacement / absolute acceleration seen while stepping.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct StepPeaks {
    pub disp: f64,
    pub acc: f64,
}

impl NewmarkPlan {
    pub fn new(period: f64, damping_ratio: f64, dt: f64) -> Self {
        let substeps = (dt / (period / 20.0)).ceil().max(1.0) as usize;
        let h = dt / substeps as f64;
        let omega = 2.0 * std::f64::consts::PI / period;
        let omega2 = omega * omega;
        let damping = 2.0 * damping_ratio * omega;
        let inv_h2_4 = 4.0 / (h * h);
        let inv_h_4 = 4.0 / h;
        let inv_h_2 = 2.0 / h;
        let k_eff = omega2 + damping * inv_h_2 + inv_h2_4;
        Self { substeps, omega2, damping, inv_h2_4, inv_h_4, inv_h_2, k_eff }
    }

    /// Advances one linear substep under ground acceleration `ag1` at the
    /// substep end.
    #[inline]
    fn substep_linear(&self, st: OscState, ag1: f64) -> OscState {
        let p_eff = -ag1
            + (self.inv_h2_4 * st.u + self.inv_h_4 * st.v + st.a)
            + self.damping * (self.inv_h_2 * st.u + st.v);
        let u1 = p_eff / self.k_eff;
        let v1 = self.inv_h_2 * (u1 - st.u) - st.v;
        let a1 = self.inv_h2_4 * (u1 - st.u) - self.inv_h_4 * st.v - st.a;
        OscState { u: u1, v: v1, a: a1 }
    }

    /// Advances one full record step (all substeps), interpolating the ground
    /// acceleration linearly between `ag0` and `ag1`. Returns the end state
    /// and the peaks observed at substep points inside this step.
    #[inline]
    pub fn step_linear(&self, mut st: OscState, ag0: f64, ag1: f64) -> (OscState, StepPeaks) {
        let mut peaks = StepPeaks::default();
        for s in 1..=self.substeps {
            let frac = s as f64 / self.substeps as f64;
            let ag = ag0 + (ag1 - ag0) * frac;
            st = self.substep_linear(st, ag);
            peaks.disp = peaks.disp.max(st.u.abs());
            peaks.acc = peaks.acc.max((st.a + ag).abs());
        }
        (st, peaks)
    }
}

// Rate-independent plasticity with linear kinematic hardening. `hard` is the
// hardening modulus H chosen so the post-yield tangent equals r·k.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PlasticLaw {
    pub(crate) k: f64,
    pub(crate) fy: f64,
    pub(crate) hard: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PlasticState {
    plastic_disp: f64,
    back_force: f64,
    pub energy: f64,
}

impl PlasticLaw {
    fn from_hysteresis(omega2: f64, hysteresis: SdofHysteresis) -> Option<Self> {
        match hysteresis {
            SdofHysteresis::Linear => None,
            SdofHysteresis::ElasticPerfectlyPlastic { yield_strength } => {
                Some(Self { k: omega2, fy: yield_strength, hard: 0.0 })
            }
            SdofHysteresis::Bilinear { yield_strength, post_yield_ratio } => Some(Self {
                k: omega2,
                fy: yield_strength,
                hard: omega2 * post_yield_ratio / (1.0 - post_yield_ratio),
            }),
        }
    }

    /// Restoring force and tangent stiffness at displacement `u`, evaluated
    /// against a committed state (no state change).
    #[inline]
    pub(crate) fn probe(&self, u: f64, st: &PlasticState) -> (f64, f64) {
        let trial = self.k * (u - st.plastic_disp);
        let rel = trial - st.back_force;
        if rel.abs() <= self.fy {
            (trial, self.k)
        } else {
            let sign = rel.signum();
            let dgamma = (rel.abs() - self.fy) / (self.k + self.hard);
            // On-surface value: back force after hardening plus ±fy.
            let f = st.back_force + self.hard * dgamma * sign + self.fy * sign;
            (f, self.k * self.hard / (self.k + self.hard))
        }
    }

    /// Commits the return mapping at converged displacement `u`.
    #[inline]
    pub(crate) fn commit(&self, u: f64, st: &mut PlasticState) -> f64 {
        let trial = self.k * (u - st.plastic_disp);
        let rel = trial - st.back_force;
        if rel.abs() <= self.fy {
            trial
        } else {
            let sign = rel.signum();
            let dgamma = (rel.abs() - self.fy) / (self.k + self.hard);
            st.plastic_disp += dgamma * sign;
            st.back_force += self.hard * dgamma * sign;
            st.energy += self.fy * dgamma;
            st.back_force + self.fy * sign
        }
    }
}

/// Integrates an oscillator under a base-acceleration record from rest.
///
/// Histories are reported at the record's sample times; integration happens
/// on internal substeps not exceeding `period / 20`.
pub fn integrate_sdof(model: &SdofModel, record: &AccelerationRecord) -> Result<SdofResponse> {
    model.validate()?;
    if let Some(index) = record.samples().iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteSample { index });
    }
    let ag = record.samples();
    let n = ag.len();
    let plan = NewmarkPlan::new(model.period, model.damping_ratio, record.dt());
    let law = PlasticLaw::from_hysteresis(plan.omega2, model.hysteresis);

    let mut displacement = Vec::with_capacity(n);
    let mut velocity = Vec::with_capacity(n);
    let mut relative_acceleration = Vec::with_capacity(n);
    let mut absolute_acceleration = Vec::with_capacity(n);
    let mut restoring_force = Vec::with_capacity(n);
    let mut energy_hist = Vec::with_capacity(n);

    let mut st = OscState { u: 0.0, v: 0.0, a: -ag[0] };
    let mut plastic = PlasticState::default();
    let mut force = 0.0;

    displacement.push(st.u);
    velocity.push(st.v);
    relative_acceleration.push(st.a);
    absolute_acceleration.push(st.a + ag[0]);
    restoring_force.push(force);
    energy_hist.push(0.0);

    for i in 1..n {
        match law {
            None => {
                let (next, _) = plan.step_linear(st, ag[i - 1], ag[i]);
                st = next;
                force = plan.omega2 * st.u;
            }
            Some(law) => {
                for s in 1..=plan.substeps {
                    let frac = s as f64 / plan.substeps as f64;
                    let ag1 = ag[i - 1] + (ag[i] - ag[i - 1]) * frac;
                    let (next, f) = nonlinear_substep(&plan, &law, st, &mut plastic, ag1);
                    st = next;
                    force = f;
                }
            }
        }
        displacement.push(st.u);
        velocity.push(st.v);
        relative_acceleration.push(st.a);
        absolute_acceleration.push(st.a + ag[i]);
        restoring_force.push(force);
        energy_hist.push(plastic.energy);
    }

    Ok(SdofResponse {
        dt: record.dt(),
        displacement,
        velocity,
        relative_acceleration,
        absolute_acceleration,
        restoring_force,
        hysteretic_energy: energy_hist,
    })
}

#[inline]
fn nonlinear_substep(
    plan: &NewmarkPlan,
    law: &PlasticLaw,
    st: OscState,
    plastic: &mut PlasticState,
    ag1: f64,
) -> (OscState, f64) {
    // Newton iteration on the end displacement; the residual is piecewise
    // affine, so convergence is exact once the active segment is found.
    let mut u1 = st.u;
    for _ in 0..60 {
        let (f, kt) = law.probe(u1, plastic);
        let a1 = plan.inv_h2_4 * (u1 - st.u) - plan.inv_h_4 * st.v - st.a;
        let v1 = plan.inv_h_2 * (u1 - st.u) - st.v;
        let residual = -ag1 - a1 - plan.damping * v1 - f;
        let scale = ag1.abs() + law.k * (u1.abs() + st.u.abs()) + st.a.abs() + 1e-9;
        if residual.abs() <= 1e-12 * scale {
            break;
        }
        let denom = plan.inv_h2_4 + plan.damping * plan.inv_h_2 + kt.max(0.0);
        u1 += residual / denom;
    }
    let f = law.commit(u1, plastic);
    let v1 = plan.inv_h_2 * (u1 - st.u) - st.v;
    let a1 = -ag1 - plan.damping * v1 - f;
    (OscState { u: u1, v: v1, a: a1 }, f)
}

/// Which response quantity a spectrum reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumKind {
    Acceleration,
    Displacement,
}

/// Running-maximum response surface on a (period × checkpoint-time) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningSpectrum {
    pub kind: SpectrumKind,
    pub periods: Vec<f64>,
    pub times: Vec<f64>,
    /// `values[j][k]` is the running maximum at period `periods[j]` over
    /// `[0, times[k]]`.
    pub values: Vec<Vec<f64>>,
}

impl RunningSpectrum {
    pub fn value(&self, period_index: usize, time_index: usize) -> f64 {
        self.values[period_index][time_index]
    }

    /// Tab-separated table: header `period\t<t1>\t...`, then one row per
    /// period, all values with nine significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("period");
        for t in &self.times {
            let _ = write!(out, "\t{t:.9e}");
        }
        out.push('\n');
        for (j, period) in self.periods.iter().enumerate() {
            let _ = write!(out, "{period:.9e}");
            for v in &self.values[j] {
                let _ = write!(out, "\t{v:.9e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(content: &str, kind: SpectrumKind, origin: &str) -> Result<Self> {
        let mut lines = content.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: origin.into(),
            line: 1,
            message: "empty spectrum file".into(),
        })?;
        let parse = |s: &str, line: usize| -> Result<f64> {
            s.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: origin.into(),
                line,
                message: format!("bad number {s:?}: {e}"),
            })
        };
        let times: Vec<f64> = header
            .trim_end_matches('\r')
            .split('\t')
            .skip(1)
            .map(|s| parse(s, 1))
            .collect::<Result<_>>()?;
        let mut periods = Vec::new();
        let mut values = Vec::new();
        for (lineno, raw) in lines {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            periods.push(parse(fields.next().unwrap_or(""), lineno + 1)?);
            let row: Vec<f64> = fields.map(|s| parse(s, lineno + 1)).collect::<Result<_>>()?;
            if row.len() != times.len() {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: lineno + 1,
                    message: format!("expected {} values, got {}", times.len(), row.len()),
                });
            }
            values.push(row);
        }
        Ok(Self { kind, periods, times, values })
    }
}

/// Computes running acceleration and displacement spectra of a record for an
/// elastic oscillator family.
///
/// One oscillator per period is integrated independently (in parallel) and the
/// running maxima are sampled at each checkpoint time.
pub fn response_spectra(
    record: &AccelerationRecord,
    periods: &[f64],
    checkpoints: &[f64],
    damping_ratio: f64,
) -> Result<(RunningSpectrum, RunningSpectrum)> {
    if periods.is_empty() {
        return Err(Error::InvalidGrid("empty period grid".into()));
    }
    if checkpoints.is_empty() {
        return Err(Error::InvalidGrid("empty checkpoint grid".into()));
    }
    if let Some(p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::InvalidGrid(format!("non-positive period {p}")));
    }
    let duration = record.duration();
    for &t in checkpoints {
        if !(t > 0.0 && t <= duration * (1.0 + 1e-9)) {
            return Err(Error::InvalidGrid(format!(
                "checkpoint {t} outside (0, {duration}]"
            )));
        }
    }
    let indices = checkpoint_indices(checkpoints, record.dt(), record.len());

    let rows: Vec<(Vec<f64>, Vec<f64>)> = periods
        .par_iter()
        .map(|&period| spectrum_row(record, period, damping_ratio, &indices))
        .collect();

    let mut acc = Vec::with_capacity(periods.len());
    let mut disp = Vec::with_capacity(periods.len());
    for (a, d) in rows {
        acc.push(a);
        disp.push(d);
    }
    Ok((
        RunningSpectrum {
            kind: SpectrumKind::Acceleration,
            periods: periods.to_vec(),
            times: checkpoints.to_vec(),
            values: acc,
        },
        RunningSpectrum {
            kind: SpectrumKind::Displacement,
            periods: periods.to_vec(),
            times: checkpoints.to_vec(),
            values: disp,
        },
    ))
}

/// Maps checkpoint times to the last sample index not after them.
pub(crate) fn checkpoint_indices(checkpoints: &[f64], dt: f64, len: usize) -> Vec<usize> {
    checkpoints
        .iter()
        .map(|&t| (((t / dt) + 1e-9).floor() as usize).min(len - 1))
        .collect()
}

fn spectrum_row(
    record: &AccelerationRecord,
    period: f64,
    damping_ratio: f64,
    indices: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let plan = NewmarkPlan::new(period, damping_ratio, record.dt());
    let ag = record.samples();
    let mut st = OscState { u: 0.0, v: 0.0, a: -ag[0] };
    let mut max_disp = 0.0f64;
    let mut max_acc = (st.a + ag[0]).abs();
    let mut acc_row = vec![0.0; indices.len()];
    let mut disp_row = vec![0.0; indices.len()];
    let mut cursor = 0;
    // Sample 0 counts toward any checkpoint at t = 0 (not representable since
    // checkpoints are positive, but keep the ordering robust).
    while cursor < indices.len() && indices[cursor] == 0 {
        acc_row[cursor] = max_acc;
        disp_row[cursor] = max_disp;
        cursor += 1;
    }
    for i in 1..ag.len() {
        let (next, peaks) = plan.step_linear(st, ag[i - 1], ag[i]);
        st = next;
        max_disp = max_disp.max(peaks.disp);
        max_acc = max_acc.max(peaks.acc);
        while cursor < indices.len() && indices[cursor] == i {
            acc_row[cursor] = max_acc;
            disp_row[cursor] = max_disp;
            cursor += 1;
        }
    }
    // Checkpoints clamped to the final sample.
    while cursor < indices.len() {
        acc_row[cursor] = max_acc;
        disp_row[cursor] = max_disp;
        cursor += 1;
    }
    (acc_row, disp_row)
}

/// Builds a period grid with the requested spacing.
pub fn period_grid(min: f64, max: f64, count: usize, log_spacing: bool) -> Result<Vec<f64>> {
    if !(min.is_finite() && max.is_finite() && min > 0.0 && max >= min) {
        return Err(Error::InvalidGrid(format!("bad period bounds [{min}, {max}]")));
    }
    if count == 0 {
        return Err(Error::InvalidGrid("empty period grid".into()));
    }
    if count == 1 {
        return Ok(vec![min]);
    }
    let grid = (0..count)
        .map(|i| {
            let f = i as f64 / (count - 1) as f64;
            if log_spacing {
                (min.ln() + f * (max.ln() - min.ln())).exp()
            } else {
                min + f * (max - min)
            }
        })
        .collect();
    Ok(grid)
}
