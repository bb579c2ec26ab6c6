//! Synthesis of intensifying excitations by damped Gauss-Newton least squares.
//!
//! The objective discretizes a double integral of squared spectral misfits
//! over a (period × checkpoint-time) grid,
//!
//! ```text
//! F(a_g) = ΣΣ w_jk { [S_a(T_j, t_k) - g(t_k) S_aT(T_j)]²
//!                  + α [S_u(T_j, t_k) - g(t_k) S_uT(T_j)]² }
//! ```
//!
//! with trapezoid quadrature weights on both axes (the time axis includes an
//! implicit node at t = 0 where every running spectrum is identically zero).
//! The optimizer is a damped Gauss-Newton iteration on the stacked weighted
//! residual vector with a forward-difference Jacobian. Two structural facts
//! keep the Jacobian affordable: a sample only influences residuals at
//! checkpoints at or after its own time, so each column restarts the
//! oscillator integrations from the stored state just before the perturbed
//! sample; and wavelet variables only influence samples inside the support of
//! their synthesized basis function.
//!
//! Variable spaces: raw acceleration samples, the full set of wavelet
//! coefficients of those samples, or a masked set in which chosen detail
//! bands are frozen at zero. Sample 0 of the record is pinned to zero in all
//! spaces (the motion starts from rest), so a record with `t_max / dt = N`
//! intervals has exactly `N` free variables and `N` can stay dyadic.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::sdof::{
    checkpoint_indices, response_spectra, NewmarkPlan, OscState, RunningSpectrum, SpectrumKind,
};
use crate::signal::AccelerationRecord;
use crate::target::{calibrate_exponential, BaseTargetSpectrum, IntensifyingProfile, TargetModel};
use crate::wavelet::{dwt_forward, dwt_inverse, WaveletBasis, WaveletDecomposition};

/// Optimization variable space.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VariableSpace {
    TimeDomain,
    Wavelet {
        #[serde(default = "default_basis")]
        basis: WaveletBasis,
        #[serde(default = "default_levels")]
        levels: usize,
    },
    WaveletMasked {
        #[serde(default = "default_basis")]
        basis: WaveletBasis,
        #[serde(default = "default_levels")]
        levels: usize,
        /// Detail levels (1 = finest) whose coefficients are frozen at zero.
        #[serde(default = "default_frozen")]
        frozen_detail_levels: Vec<usize>,
    },
}

fn default_basis() -> WaveletBasis {
    WaveletBasis::Daubechies4
}

fn default_levels() -> usize {
    5
}

fn default_frozen() -> Vec<usize> {
    vec![1]
}

impl VariableSpace {
    pub fn name(&self) -> &'static str {
        match self {
            VariableSpace::TimeDomain => "time-domain",
            VariableSpace::Wavelet { .. } => "wavelet",
            VariableSpace::WaveletMasked { .. } => "wavelet-masked",
        }
    }
}

/// How spectral misfits enter the residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualKind {
    Absolute,
    /// Residuals divided by the target value, floored at 1e-3 of the largest
    /// base-spectrum value to avoid blow-ups where the target vanishes.
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the objective by less than this
    /// relative amount.
    pub objective_tolerance: f64,
    /// Stop once the accepted step max-norm falls below this.
    pub step_tolerance: f64,
    pub initial_damping: f64,
    /// Trial damping increases allowed within one iteration before declaring
    /// a stall.
    pub max_rejects: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            objective_tolerance: 1e-6,
            step_tolerance: 1e-12,
            initial_damping: 1e-2,
            max_rejects: 25,
        }
    }
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminationReason {
    Converged,
    MaxIterations,
    /// No trial damping value produced a strictly smaller objective.
    Stalled,
}

/// A fully specified generation problem.
#[derive(Debug, Clone)]
pub struct GenerationProblem {
    pub name: String,
    pub target: TargetModel,
    pub t_max: f64,
    pub dt: f64,
    pub space: VariableSpace,
    /// Weight of the displacement term (α). `None` auto-balances so the
    /// displacement and acceleration terms match for the seed record at the
    /// target time.
    pub displacement_weight: Option<f64>,
    pub residual_kind: ResidualKind,
    pub damping_ratio: f64,
    pub optimizer: OptimizerSettings,
}

impl GenerationProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max.is_finite() && self.t_max > 0.0 && self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "need positive duration and step, got t_max {} dt {}",
                self.t_max, self.dt
            )));
        }
        let intervals = self.t_max / self.dt;
        if (intervals - intervals.round()).abs() > 1e-6 || intervals.round() < 2.0 {
            return Err(Error::InvalidProblem(format!(
                "t_max must be an integer multiple of dt, got {intervals} intervals"
            )));
        }
        let n = intervals.round() as usize;
        match &self.space {
            VariableSpace::TimeDomain => {}
            VariableSpace::Wavelet { levels, .. }
            | VariableSpace::WaveletMasked { levels, .. } => {
                if !n.is_power_of_two() {
                    return Err(Error::InvalidProblem(format!(
                        "wavelet spaces need a dyadic variable count, got {n}"
                    )));
                }
                if *levels == 0 || n >> *levels == 0 {
                    return Err(Error::InvalidProblem(format!(
                        "{levels} levels do not fit {n} variables"
                    )));
                }
                if let VariableSpace::WaveletMasked { frozen_detail_levels, .. } = &self.space {
                    if let Some(bad) =
                        frozen_detail_levels.iter().find(|&&l| l == 0 || l > *levels)
                    {
                        return Err(Error::InvalidProblem(format!(
                            "frozen detail level {bad} outside 1..={levels}"
                        )));
                    }
                }
            }
        }
        if let Some(alpha) = self.displacement_weight {
            if !(alpha.is_finite() && alpha >= 0.0) {
                return Err(Error::InvalidProblem(format!("negative weight {alpha}")));
            }
        }
        if !(self.damping_ratio >= 0.0 && self.damping_ratio < 1.0) {
            return Err(Error::InvalidProblem(format!("bad damping ratio {}", self.damping_ratio)));
        }
        let duration = self.dt * n as f64;
        if let Some(&t) = self
            .target
            .checkpoints
            .iter()
            .find(|&&t| t <= 0.0 || t > duration * (1.0 + 1e-9))
        {
            return Err(Error::InvalidProblem(format!(
                "checkpoint {t} outside (0, {duration}]"
            )));
        }
        if self.target.profile.t_target() > duration * (1.0 + 1e-9) {
            return Err(Error::InvalidProblem(format!(
                "target time {} past record end {duration}",
                self.target.profile.t_target()
            )));
        }
        Ok(())
    }

    /// Number of record intervals (= time-domain variable count).
    pub fn interval_count(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn sample_count(&self) -> usize {
        self.interval_count() + 1
    }

    pub fn variable_count(&self) -> usize {
        space_map(&self.space, self.interval_count()).map(|m| m.len()).unwrap_or(0)
    }
}

// ---------------------------------------------------------------------------
// Variable-space mapping

enum SpaceMap {
    Time { n: usize },
    Wavelet { basis: WaveletBasis, levels: usize, n: usize, free: Vec<usize> },
}

fn space_map(space: &VariableSpace, n: usize) -> Result<SpaceMap> {
    Ok(match space {
        VariableSpace::TimeDomain => SpaceMap::Time { n },
        VariableSpace::Wavelet { basis, levels } => SpaceMap::Wavelet {
            basis: *basis,
            levels: *levels,
            n,
            free: (0..n).collect(),
        },
        VariableSpace::WaveletMasked { basis, levels, frozen_detail_levels } => {
            // Flat layout is approximation first, then details from coarsest
            // to finest; compute the flat index ranges of the frozen bands.
            let mut frozen = vec![false; n];
            for &level in frozen_detail_levels {
                let len = n >> level;
                let mut offset = n >> levels; // approximation band
                for l in (level + 1..=*levels).rev() {
                    offset += n >> l;
                }
                frozen[offset..offset + len].iter_mut().for_each(|f| *f = true);
            }
            SpaceMap::Wavelet {
                basis: *basis,
                levels: *levels,
                n,
                free: (0..n).filter(|&i| !frozen[i]).collect(),
            }
        }
    })
}

impl SpaceMap {
    fn len(&self) -> usize {
        match self {
            SpaceMap::Time { n } => *n,
            SpaceMap::Wavelet { free, .. } => free.len(),
        }
    }

    /// Full sample vector (sample 0 pinned at zero) from variables.
    fn to_samples(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpaceMap::Time { n } => {
                debug_assert_eq!(x.len(), *n);
                let mut samples = Vec::with_capacity(n + 1);
                samples.push(0.0);
                samples.extend_from_slice(x);
                Ok(samples)
            }
            SpaceMap::Wavelet { basis, levels, n, free } => {
                let mut flat = vec![0.0; *n];
                for (value, &slot) in x.iter().zip(free) {
                    flat[slot] = *value;
                }
                let decomp = WaveletDecomposition::from_flat(*basis, *levels, *n, &flat)?;
                let segment = dwt_inverse(&decomp)?;
                let mut samples = Vec::with_capacity(n + 1);
                samples.push(0.0);
                samples.extend_from_slice(&segment);
                Ok(samples)
            }
        }
    }

    /// Projects record samples onto the variable space (frozen bands are
    /// discarded).
    fn project(&self, samples: &[f64]) -> Result<Vec<f64>> {
        match self {
            SpaceMap::Time { n } => Ok(samples[1..=*n].to_vec()),
            SpaceMap::Wavelet { basis, levels, n, free } => {
                let decomp = dwt_forward(&samples[1..=*n], *levels, *basis)?;
                let flat = decomp.to_flat();
                Ok(free.iter().map(|&i| flat[i]).collect())
            }
        }
    }

    /// Per-variable record perturbation shapes (unit variable step).
    fn perturbations(&self) -> Result<Vec<Perturbation>> {
        match self {
            SpaceMap::Time { n } => Ok((0..*n)
                .map(|i| Perturbation { start: i + 1, shape: vec![1.0] })
                .collect()),
            SpaceMap::Wavelet { basis, levels, n, free } => {
                let mut out = Vec::with_capacity(free.len());
                for &slot in free {
                    let mut flat = vec![0.0; *n];
                    flat[slot] = 1.0;
                    let decomp = WaveletDecomposition::from_flat(*basis, *levels, *n, &flat)?;
                    let segment = dwt_inverse(&decomp)?;
                    let first = segment.iter().position(|&v| v != 0.0).unwrap_or(0);
                    let last = segment.iter().rposition(|&v| v != 0.0).unwrap_or(*n - 1);
                    out.push(Perturbation {
                        start: first + 1,
                        shape: segment[first..=last].to_vec(),
                    });
                }
                Ok(out)
            }
        }
    }
}

/// A record-space perturbation with support `[start, start + shape.len())`
/// in sample indices.
struct Perturbation {
    start: usize,
    shape: Vec<f64>,
}

impl Perturbation {
    #[inline]
    fn sample(&self, samples: &[f64], scale: f64, i: usize) -> f64 {
        let base = samples[i];
        if i >= self.start && i < self.start + self.shape.len() {
            base + scale * self.shape[i - self.start]
        } else {
            base
        }
    }
}

// ---------------------------------------------------------------------------
// Quadrature and residual evaluation

fn period_weights(periods: &[f64]) -> Vec<f64> {
    let n = periods.len();
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|j| {
            if j == 0 {
                (periods[1] - periods[0]) / 2.0
            } else if j == n - 1 {
                (periods[n - 1] - periods[n - 2]) / 2.0
            } else {
                (periods[j + 1] - periods[j - 1]) / 2.0
            }
        })
        .collect()
}

// Trapezoid weights over {0} ∪ checkpoints; the t = 0 node carries no
// residual (running spectra start at zero), so only checkpoint weights are
// returned.
fn time_weights(checkpoints: &[f64]) -> Vec<f64> {
    let n = checkpoints.len();
    (0..n)
        .map(|k| {
            let left = if k == 0 { 0.0 } else { checkpoints[k - 1] };
            if k == n - 1 {
                (checkpoints[k] - left) / 2.0
            } else {
                (checkpoints[k + 1] - left) / 2.0
            }
        })
        .collect()
}

struct EvalContext {
    periods: Vec<f64>,
    checkpoints: Vec<f64>,
    cp_idx: Vec<usize>,
    plans: Vec<NewmarkPlan>,
    target_acc: Vec<Vec<f64>>,
    target_disp: Vec<Vec<f64>>,
    weight_acc: Vec<Vec<f64>>,
    weight_disp: Vec<Vec<f64>>,
    floor_acc: f64,
    floor_disp: f64,
    residual_kind: ResidualKind,
}

impl EvalContext {
    fn new(problem: &GenerationProblem, alpha: f64) -> Self {
        let target = &problem.target;
        let periods = target.periods.clone();
        let checkpoints = target.checkpoints.clone();
        let cp_idx = checkpoint_indices(&checkpoints, problem.dt, problem.sample_count());
        let plans = periods
            .iter()
            .map(|&p| NewmarkPlan::new(p, problem.damping_ratio, problem.dt))
            .collect();
        let base_acc = target.base_acceleration();
        let base_disp = target.base_displacement();
        let scales: Vec<f64> = checkpoints.iter().map(|&t| target.profile.eval(t)).collect();
        let surface = |base: &[f64]| -> Vec<Vec<f64>> {
            base.iter().map(|&b| scales.iter().map(|&g| g * b).collect()).collect()
        };
        let wt = time_weights(&checkpoints);
        let wp = period_weights(&periods);
        let weights = |factor: f64| -> Vec<Vec<f64>> {
            wp.iter().map(|&a| wt.iter().map(|&b| factor * a * b).collect()).collect()
        };
        let max = |xs: &[f64]| xs.iter().fold(0.0f64, |m, &v| m.max(v));
        Self {
            cp_idx,
            plans,
            target_acc: surface(&base_acc),
            target_disp: surface(&base_disp),
            weight_acc: weights(1.0),
            weight_disp: weights(alpha),
            floor_acc: 1e-3 * max(&base_acc),
            floor_disp: 1e-3 * max(&base_disp),
            residual_kind: problem.residual_kind,
            periods,
            checkpoints,
        }
    }

    fn cell_count(&self) -> usize {
        self.periods.len() * self.checkpoints.len()
    }

    #[inline]
    fn raw_residual(&self, value: f64, target: f64, floor: f64, floor_hits: &mut usize) -> f64 {
        match self.residual_kind {
            ResidualKind::Absolute => value - target,
            ResidualKind::Relative => {
                let denom = if target < floor {
                    *floor_hits += 1;
                    floor
                } else {
                    target
                };
                (value - target) / denom
            }
        }
    }

    /// Weighted residual for one cell of one block.
    #[inline]
    fn weighted_residual(
        &self,
        acc_block: bool,
        j: usize,
        k: usize,
        value: f64,
        floor_hits: &mut usize,
    ) -> f64 {
        if acc_block {
            let raw = self.raw_residual(value, self.target_acc[j][k], self.floor_acc, floor_hits);
            self.weight_acc[j][k].sqrt() * raw
        } else {
            let raw = self.raw_residual(value, self.target_disp[j][k], self.floor_disp, floor_hits);
            self.weight_disp[j][k].sqrt() * raw
        }
    }

    /// Full evaluation: spectra at checkpoints, stacked weighted residuals,
    /// and the objective.
    fn evaluate(&self, samples: &[f64]) -> Evaluation {
        let rows: Vec<(Vec<f64>, Vec<f64>)> = self
            .plans
            .par_iter()
            .map(|plan| integrate_checkpoints(plan, samples, &self.cp_idx))
            .collect();
        let ncells = self.cell_count();
        let mut residuals = vec![0.0; 2 * ncells];
        let mut spec_acc = Vec::with_capacity(self.periods.len());
        let mut spec_disp = Vec::with_capacity(self.periods.len());
        let mut floor_hits = 0usize;
        let nk = self.checkpoints.len();
        for (j, (acc_row, disp_row)) in rows.into_iter().enumerate() {
            for k in 0..nk {
                residuals[j * nk + k] =
                    self.weighted_residual(true, j, k, acc_row[k], &mut floor_hits);
                residuals[ncells + j * nk + k] =
                    self.weighted_residual(false, j, k, disp_row[k], &mut floor_hits);
            }
            spec_acc.push(acc_row);
            spec_disp.push(disp_row);
        }
        let objective = residuals.iter().map(|r| r * r).sum();
        Evaluation { spec_acc, spec_disp, residuals, objective, floor_hits }
    }
}

struct Evaluation {
    spec_acc: Vec<Vec<f64>>,
    spec_disp: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    objective: f64,
    floor_hits: usize,
}

/// Integrates one oscillator over the whole record, returning the running
/// maxima at the checkpoint indices.
fn integrate_checkpoints(
    plan: &NewmarkPlan,
    samples: &[f64],
    cp_idx: &[usize],
) -> (Vec<f64>, Vec<f64>) {
    let mut st = OscState { u: 0.0, v: 0.0, a: -samples[0] };
    let mut max_disp = 0.0f64;
    let mut max_acc = (st.a + samples[0]).abs();
    let mut acc_row = vec![0.0; cp_idx.len()];
    let mut disp_row = vec![0.0; cp_idx.len()];
    let mut cursor = 0;
    while cursor < cp_idx.len() && cp_idx[cursor] == 0 {
        acc_row[cursor] = max_acc;
        disp_row[cursor] = max_disp;
        cursor += 1;
    }
    for i in 1..samples.len() {
        let (next, peaks) = plan.step_linear(st, samples[i - 1], samples[i]);
        st = next;
        max_disp = max_disp.max(peaks.disp);
        max_acc = max_acc.max(peaks.acc);
        while cursor < cp_idx.len() && cp_idx[cursor] == i {
            acc_row[cursor] = max_acc;
            disp_row[cursor] = max_disp;
            cursor += 1;
        }
    }
    while cursor < cp_idx.len() {
        acc_row[cursor] = max_acc;
        disp_row[cursor] = max_disp;
        cursor += 1;
    }
    (acc_row, disp_row)
}

/// Stored trajectories of the unperturbed record, used to restart
/// integrations mid-record for Jacobian columns.
struct BaseRun {
    states: Vec<Vec<OscState>>,
    prefix_acc: Vec<Vec<f64>>,
    prefix_disp: Vec<Vec<f64>>,
}

fn base_run(ctx: &EvalContext, samples: &[f64]) -> BaseRun {
    let per_period: Vec<(Vec<OscState>, Vec<f64>, Vec<f64>)> = ctx
        .plans
        .par_iter()
        .map(|plan| {
            let n = samples.len();
            let mut states = Vec::with_capacity(n);
            let mut pre_acc = Vec::with_capacity(n);
            let mut pre_disp = Vec::with_capacity(n);
            let mut st = OscState { u: 0.0, v: 0.0, a: -samples[0] };
            let mut max_disp = 0.0f64;
            let mut max_acc = (st.a + samples[0]).abs();
            states.push(st);
            pre_acc.push(max_acc);
            pre_disp.push(max_disp);
            for i in 1..n {
                let (next, peaks) = plan.step_linear(st, samples[i - 1], samples[i]);
                st = next;
                max_disp = max_disp.max(peaks.disp);
                max_acc = max_acc.max(peaks.acc);
                states.push(st);
                pre_acc.push(max_acc);
                pre_disp.push(max_disp);
            }
            (states, pre_acc, pre_disp)
        })
        .collect();
    let mut states = Vec::with_capacity(per_period.len());
    let mut prefix_acc = Vec::with_capacity(per_period.len());
    let mut prefix_disp = Vec::with_capacity(per_period.len());
    for (s, a, d) in per_period {
        states.push(s);
        prefix_acc.push(a);
        prefix_disp.push(d);
    }
    BaseRun { states, prefix_acc, prefix_disp }
}

/// Writes one forward-difference Jacobian column. Only residual cells whose
/// checkpoint lies at or after the first perturbed sample are touched; the
/// rest stay exactly zero by causality.
fn jacobian_column(
    ctx: &EvalContext,
    base: &BaseRun,
    base_residuals: &[f64],
    samples: &[f64],
    pert: &Perturbation,
    h: f64,
    column: &mut [f64],
) {
    let restart = pert.start - 1;
    let ncells = ctx.cell_count();
    let nk = ctx.checkpoints.len();
    let first_cp = ctx.cp_idx.partition_point(|&idx| idx < pert.start);
    if first_cp == nk {
        return;
    }
    for (j, plan) in ctx.plans.iter().enumerate() {
        let mut st = base.states[j][restart];
        let mut max_acc = base.prefix_acc[j][restart];
        let mut max_disp = base.prefix_disp[j][restart];
        let mut cursor = first_cp;
        let mut ag_prev = pert.sample(samples, h, restart);
        let mut floor_hits = 0usize;
        for i in restart + 1..samples.len() {
            let ag = pert.sample(samples, h, i);
            let (next, peaks) = plan.step_linear(st, ag_prev, ag);
            st = next;
            ag_prev = ag;
            max_disp = max_disp.max(peaks.disp);
            max_acc = max_acc.max(peaks.acc);
            while cursor < nk && ctx.cp_idx[cursor] == i {
                let ra = ctx.weighted_residual(true, j, cursor, max_acc, &mut floor_hits);
                let rd = ctx.weighted_residual(false, j, cursor, max_disp, &mut floor_hits);
                column[j * nk + cursor] = (ra - base_residuals[j * nk + cursor]) / h;
                column[ncells + j * nk + cursor] =
                    (rd - base_residuals[ncells + j * nk + cursor]) / h;
                cursor += 1;
            }
            if cursor == nk {
                break;
            }
        }
        while cursor < nk {
            let ra = ctx.weighted_residual(true, j, cursor, max_acc, &mut floor_hits);
            let rd = ctx.weighted_residual(false, j, cursor, max_disp, &mut floor_hits);
            column[j * nk + cursor] = (ra - base_residuals[j * nk + cursor]) / h;
            column[ncells + j * nk + cursor] =
                (rd - base_residuals[ncells + j * nk + cursor]) / h;
            cursor += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Public evaluation entry points

fn check_record_against(problem: &GenerationProblem, record: &AccelerationRecord) -> Result<()> {
    if (record.dt() - problem.dt).abs() > 1e-12 * problem.dt {
        return Err(Error::InvalidProblem(format!(
            "record dt {} differs from problem dt {}",
            record.dt(),
            problem.dt
        )));
    }
    if record.len() != problem.sample_count() {
        return Err(Error::InvalidProblem(format!(
            "record has {} samples, problem expects {}",
            record.len(),
            problem.sample_count()
        )));
    }
    Ok(())
}

fn resolved_alpha(problem: &GenerationProblem, record: &AccelerationRecord) -> Result<f64> {
    match problem.displacement_weight {
        Some(alpha) => Ok(alpha),
        None => auto_balance_alpha(problem, record),
    }
}

/// α such that the displacement misfit term equals the acceleration misfit
/// term for `record` at the target time.
fn auto_balance_alpha(problem: &GenerationProblem, record: &AccelerationRecord) -> Result<f64> {
    let t_target = problem.target.profile.t_target().min(record.duration());
    let (sa, su) = response_spectra(
        record,
        &problem.target.periods,
        &[t_target],
        problem.damping_ratio,
    )?;
    let base_acc = problem.target.base_acceleration();
    let base_disp = problem.target.base_displacement();
    let floor_acc = 1e-3 * base_acc.iter().fold(0.0f64, |m, &v| m.max(v));
    let floor_disp = 1e-3 * base_disp.iter().fold(0.0f64, |m, &v| m.max(v));
    let g = problem.target.profile.eval(t_target);
    let wp = period_weights(&problem.target.periods);
    let mut acc_term = 0.0;
    let mut disp_term = 0.0;
    for j in 0..problem.target.periods.len() {
        let (ra, rd) = match problem.residual_kind {
            ResidualKind::Absolute => {
                (sa.value(j, 0) - g * base_acc[j], su.value(j, 0) - g * base_disp[j])
            }
            ResidualKind::Relative => (
                (sa.value(j, 0) - g * base_acc[j]) / (g * base_acc[j]).max(floor_acc),
                (su.value(j, 0) - g * base_disp[j]) / (g * base_disp[j]).max(floor_disp),
            ),
        };
        acc_term += wp[j] * ra * ra;
        disp_term += wp[j] * rd * rd;
    }
    if disp_term <= 0.0 {
        return Ok(1.0);
    }
    Ok(acc_term / disp_term)
}

/// Discretized spectral-misfit objective of a record under a problem.
pub fn objective(record: &AccelerationRecord, problem: &GenerationProblem) -> Result<f64> {
    Ok(residual_vector(record, problem)?.iter().map(|r| r * r).sum())
}

/// Stacked weighted residuals: acceleration cells first (period-major), then
/// displacement cells. The squared norm equals [`objective`].
pub fn residual_vector(
    record: &AccelerationRecord,
    problem: &GenerationProblem,
) -> Result<Vec<f64>> {
    problem.validate()?;
    check_record_against(problem, record)?;
    let alpha = resolved_alpha(problem, record)?;
    let ctx = EvalContext::new(problem, alpha);
    let eval = ctx.evaluate(record.samples());
    if eval.floor_hits > 0 {
        log::debug!("{} relative-residual cells used the guard floor", eval.floor_hits);
    }
    Ok(eval.residuals)
}

// ---------------------------------------------------------------------------
// Seed records

/// Deterministic seed: band-limited Gaussian noise shaped by the profile and
/// scaled so its mean spectral level at the target time matches the base
/// target spectrum.
pub fn seed_record(problem: &GenerationProblem, rng_seed: u64) -> Result<AccelerationRecord> {
    problem.validate()?;
    let n = problem.interval_count();
    let dt = problem.dt;
    let noise = band_limited_noise(
        n,
        dt,
        1.0 / problem.target.periods.last().copied().unwrap_or(4.0),
        1.0 / problem.target.periods.first().copied().unwrap_or(0.1),
        rng_seed,
    );
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(0.0);
    for (i, value) in noise.iter().enumerate() {
        let t = dt * (i + 1) as f64;
        samples.push(value * problem.target.profile.eval(t));
    }
    let record = AccelerationRecord::new(format!("{}-seed", problem.name), dt, samples)?;

    let t_target = problem.target.profile.t_target().min(record.duration());
    let (sa, _) =
        response_spectra(&record, &problem.target.periods, &[t_target], problem.damping_ratio)?;
    let mean_seed: f64 =
        sa.values.iter().map(|row| row[0]).sum::<f64>() / sa.values.len() as f64;
    let base = problem.target.base_acceleration();
    let mean_target: f64 = base.iter().sum::<f64>() / base.len() as f64;
    if !(mean_seed > 0.0) {
        return Err(Error::InvalidProblem("degenerate seed with zero spectral level".into()));
    }
    Ok(record.scaled(mean_target / mean_seed))
}

pub(crate) fn band_limited_noise(n: usize, dt: f64, f_lo: f64, f_hi: f64, rng_seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::Distribution;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = rand_distr::StandardNormal;
    let mut buffer: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(Distribution::<f64>::sample(&normal, &mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buffer);
    for (k, value) in buffer.iter_mut().enumerate() {
        let freq = k.min(n - k) as f64 / (n as f64 * dt);
        if !(f_lo..=f_hi).contains(&freq) {
            *value = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buffer);
    buffer.iter().map(|c| c.re / n as f64).collect()
}

// ---------------------------------------------------------------------------
// The optimizer

/// Per-run summary returned alongside the generated record.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GenerationReport {
    pub name: String,
    pub space: String,
    pub rng_seed: u64,
    /// Resolved displacement weight α.
    pub displacement_weight: f64,
    /// Objective of the seed followed by every accepted iteration
    /// (non-increasing).
    pub objective_history: Vec<f64>,
    pub termination: TerminationReason,
    pub iterations: usize,
    pub rejected_steps: usize,
    pub floor_hits: usize,
    pub periods: Vec<f64>,
    pub checkpoints: Vec<f64>,
    /// Unweighted spectral misfit `S - target` per (period, checkpoint).
    pub residual_acceleration: Vec<Vec<f64>>,
    pub residual_displacement: Vec<Vec<f64>>,
    /// Wall-clock per accepted iteration; excluded from serialized artifacts
    /// so same-seed runs stay byte-identical.
    #[serde(skip_serializing, default)]
    pub wall_ms_per_iteration: Vec<f64>,
}

impl GenerationReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn seed_objective(&self) -> f64 {
        self.objective_history.first().copied().unwrap_or(f64::NAN)
    }
}

/// Runs the damped Gauss-Newton iteration from the deterministic seed and
/// returns the best record found together with its report.
pub fn generate(
    problem: &GenerationProblem,
    rng_seed: u64,
) -> Result<(AccelerationRecord, GenerationReport)> {
    let seed = seed_record(problem, rng_seed)?;
    generate_with_start(problem, rng_seed, &seed)
}

/// Like [`generate`] but warm-started from an existing record (projected
/// onto the problem's variable space first).
pub fn generate_with_start(
    problem: &GenerationProblem,
    rng_seed: u64,
    start: &AccelerationRecord,
) -> Result<(AccelerationRecord, GenerationReport)> {
    problem.validate()?;
    check_record_against(problem, start)?;
    let map = space_map(&problem.space, problem.interval_count())?;
    let mut x = map.project(start.samples())?;
    let mut samples = map.to_samples(&x)?;
    let projected = AccelerationRecord::new("seed-projection", problem.dt, samples.clone())?;
    let alpha = resolved_alpha(problem, &projected)?;
    let ctx = EvalContext::new(problem, alpha);
    let perturbations = map.perturbations()?;
    let settings = problem.optimizer;

    let mut eval = ctx.evaluate(&samples);
    let mut history = vec![eval.objective];
    let mut wall = Vec::new();
    let mut damping = settings.initial_damping;
    let mut rejected_steps = 0usize;
    let mut floor_hits = eval.floor_hits;
    let mut termination = TerminationReason::MaxIterations;
    let mut iterations = 0usize;
    let m = 2 * ctx.cell_count();

    if eval.objective == 0.0 {
        termination = TerminationReason::Converged;
    } else {
        'outer: for _ in 0..settings.max_iterations {
            let started = Instant::now();
            let base = base_run(&ctx, &samples);
            let x_norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let h = (1e-4 * x_norm).max(1e-6);

            let mut jac = DMatrix::<f64>::zeros(m, x.len());
            {
                let residuals = &eval.residuals;
                let samples_ref = &samples;
                let base_ref = &base;
                let ctx_ref = &ctx;
                jac.as_mut_slice()
                    .par_chunks_mut(m)
                    .zip(perturbations.par_iter())
                    .for_each(|(column, pert)| {
                        jacobian_column(ctx_ref, base_ref, residuals, samples_ref, pert, h, column);
                    });
            }
            if let Some(flat) = jac.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteJacobian { variable: flat / m });
            }

            let residual_vec = DVector::from_column_slice(&eval.residuals);
            let jjt = &jac * jac.transpose();
            let mut accepted = false;
            let mut rejects = 0usize;
            loop {
                let mut damped = jjt.clone();
                for d in 0..m {
                    damped[(d, d)] += damping;
                }
                let step = match Cholesky::new(damped) {
                    Some(chol) => {
                        let y = chol.solve(&residual_vec);
                        -jac.tr_mul(&y)
                    }
                    None => {
                        if rejects >= settings.max_rejects {
                            break;
                        }
                        damping *= 10.0;
                        rejects += 1;
                        rejected_steps += 1;
                        continue;
                    }
                };
                let x_trial: Vec<f64> =
                    x.iter().zip(step.iter()).map(|(xi, si)| xi + si).collect();
                let samples_trial = map.to_samples(&x_trial)?;
                let eval_trial = ctx.evaluate(&samples_trial);
                if eval_trial.objective < eval.objective {
                    let drop = (eval.objective - eval_trial.objective)
                        / eval.objective.max(f64::MIN_POSITIVE);
                    let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    x = x_trial;
                    samples = samples_trial;
                    eval = eval_trial;
                    floor_hits += eval.floor_hits;
                    history.push(eval.objective);
                    iterations += 1;
                    damping = (damping / 3.0).max(1e-14);
                    accepted = true;
                    wall.push(started.elapsed().as_secs_f64() * 1e3);
                    log::info!(
                        "iteration {iterations}: objective {:.6e} (step {step_norm:.3e})",
                        eval.objective
                    );
                    if eval.objective == 0.0
                        || drop < settings.objective_tolerance
                        || step_norm < settings.step_tolerance
                    {
                        termination = TerminationReason::Converged;
                        break 'outer;
                    }
                    break;
                }
                if rejects >= settings.max_rejects {
                    break;
                }
                damping *= 10.0;
                rejects += 1;
                rejected_steps += 1;
            }
            if !accepted {
                termination = TerminationReason::Stalled;
                break;
            }
        }
    }

    let mut meta = BTreeMap::new();
    meta.insert("space".to_string(), problem.space.name().to_string());
    meta.insert("profile".to_string(), problem.target.profile.kind_name().to_string());
    meta.insert("t_target".to_string(), problem.target.profile.t_target().to_string());
    meta.insert("rng_seed".to_string(), rng_seed.to_string());
    meta.insert("spectrum".to_string(), spectrum_id(&problem.target.base));
    let record =
        AccelerationRecord::new(problem.name.clone(), problem.dt, samples)?.with_meta(meta);

    let nk = ctx.checkpoints.len();
    let residual_matrix = |spec: &[Vec<f64>], target: &[Vec<f64>]| -> Vec<Vec<f64>> {
        spec.iter()
            .zip(target)
            .map(|(srow, trow)| (0..nk).map(|k| srow[k] - trow[k]).collect())
            .collect()
    };
    let report = GenerationReport {
        name: problem.name.clone(),
        space: problem.space.name().to_string(),
        rng_seed,
        displacement_weight: alpha,
        residual_acceleration: residual_matrix(&eval.spec_acc, &ctx.target_acc),
        residual_displacement: residual_matrix(&eval.spec_disp, &ctx.target_disp),
        objective_history: history,
        termination,
        iterations,
        rejected_steps,
        floor_hits,
        periods: ctx.periods.clone(),
        checkpoints: ctx.checkpoints.clone(),
        wall_ms_per_iteration: wall,
    };
    Ok((record, report))
}

fn spectrum_id(base: &BaseTargetSpectrum) -> String {
    match base {
        BaseTargetSpectrum::ParametricPlateau { plateau, corner_low, corner_high, .. } => {
            format!("plateau-{plateau}-{corner_low}-{corner_high}")
        }
        BaseTargetSpectrum::Tabulated { points } => format!("tabulated-{}pts", points.len()),
    }
}

// ---------------------------------------------------------------------------
// Verification

/// Thresholds for [`verify_etef`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ToleranceSpec {
    /// Cap on the mean absolute relative spectral misfit at the target time.
    pub max_target_misfit: f64,
    /// Half-width of the accepted relative band around the profile ratio at
    /// twice the target time (0.2 means the band `g·[0.8, 1.2]`).
    pub ratio_tolerance: f64,
    /// Minimum fraction of grid periods whose doubling ratio falls in band.
    pub min_band_fraction: f64,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        Self { max_target_misfit: 0.15, ratio_tolerance: 0.2, min_band_fraction: 0.8 }
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMisfit {
    pub time: f64,
    /// Profile scale g(t) at this time.
    pub scale: f64,
    /// Mean over periods of |S_a - target| / target (guarded denominator).
    pub mean_abs_relative_misfit: f64,
    /// Mean over periods of S_a(T, t) / S_a(T, t_target).
    pub mean_spectral_ratio: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DoublingCheck {
    pub time: f64,
    pub expected_ratio: f64,
    pub band: (f64, f64),
    pub fraction_in_band: f64,
    pub ratios: Vec<f64>,
}

/// Outcome of checking a record against its target model.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct VerificationReport {
    pub record: String,
    pub t_target: f64,
    pub damping_ratio: f64,
    pub misfit_at_target: f64,
    pub checkpoints: Vec<CheckpointMisfit>,
    /// Present when twice the target time fits inside the record.
    pub doubling: Option<DoublingCheck>,
    pub tolerance: ToleranceSpec,
    pub passed: bool,
}

/// Measures how well a record's running spectra track the time-varying
/// target: per-checkpoint relative misfits, the spectral-ratio table against
/// the profile, and the ratio band check at twice the target time.
pub fn verify_etef(
    record: &AccelerationRecord,
    target: &TargetModel,
    damping_ratio: f64,
    tolerance: ToleranceSpec,
) -> Result<VerificationReport> {
    let duration = record.duration();
    let t_target = target.profile.t_target();
    if t_target > duration * (1.0 + 1e-9) {
        return Err(Error::InvalidProblem(format!(
            "target time {t_target} past record end {duration}"
        )));
    }
    let mut times: Vec<f64> = target
        .checkpoints
        .iter()
        .copied()
        .filter(|&t| t <= duration * (1.0 + 1e-9))
        .collect();
    times.push(t_target.min(duration));
    let double_time = 2.0 * t_target;
    let has_double = double_time <= duration * (1.0 + 1e-9);
    if has_double {
        times.push(double_time);
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let (sa, _) = response_spectra(record, &target.periods, &times, damping_ratio)?;
    let base = target.base_acceleration();
    let floor = 1e-3 * base.iter().fold(0.0f64, |m, &v| m.max(v));
    let k_target = times
        .iter()
        .position(|&t| (t - t_target.min(duration)).abs() < 1e-9)
        .expect("target time was inserted");

    let nperiods = target.periods.len() as f64;
    let mut checkpoints = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let g = target.profile.eval(t);
        let mut misfit = 0.0;
        let mut ratio = 0.0;
        for j in 0..target.periods.len() {
            let tgt = g * base[j];
            misfit += (sa.value(j, k) - tgt).abs() / tgt.max(floor);
            let at_target = sa.value(j, k_target);
            ratio += if at_target > 0.0 { sa.value(j, k) / at_target } else { 0.0 };
        }
        checkpoints.push(CheckpointMisfit {
            time: t,
            scale: g,
            mean_abs_relative_misfit: misfit / nperiods,
            mean_spectral_ratio: ratio / nperiods,
        });
    }
    let misfit_at_target = checkpoints[k_target].mean_abs_relative_misfit;

    let doubling = if has_double {
        let k_double = times.iter().position(|&t| (t - double_time).abs() < 1e-9).unwrap();
        let expected = target.profile.eval(double_time) / target.profile.eval(t_target);
        let band = (
            expected * (1.0 - tolerance.ratio_tolerance),
            expected * (1.0 + tolerance.ratio_tolerance),
        );
        let ratios: Vec<f64> = (0..target.periods.len())
            .map(|j| {
                let denom = sa.value(j, k_target);
                if denom > 0.0 {
                    sa.value(j, k_double) / denom
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let in_band = ratios.iter().filter(|r| (band.0..=band.1).contains(r)).count();
        Some(DoublingCheck {
            time: double_time,
            expected_ratio: expected,
            band,
            fraction_in_band: in_band as f64 / ratios.len() as f64,
            ratios,
        })
    } else {
        None
    };

    let passed = misfit_at_target <= tolerance.max_target_misfit
        && doubling
            .as_ref()
            .map(|d| d.fraction_in_band >= tolerance.min_band_fraction)
            .unwrap_or(true);

    Ok(VerificationReport {
        record: record.name().to_string(),
        t_target,
        damping_ratio,
        misfit_at_target,
        checkpoints,
        doubling,
        tolerance,
        passed,
    })
}

/// Residual matrix wrapped as a spectrum-style table for CSV emission.
pub fn residual_matrix_table(
    periods: &[f64],
    checkpoints: &[f64],
    matrix: &[Vec<f64>],
    kind: SpectrumKind,
) -> RunningSpectrum {
    RunningSpectrum {
        kind,
        periods: periods.to_vec(),
        times: checkpoints.to_vec(),
        values: matrix.to_vec(),
    }
}

// ---------------------------------------------------------------------------
// Problem JSON configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodGridConfig {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_spacing() -> Spacing {
    Spacing::Log
}

impl Default for PeriodGridConfig {
    fn default() -> Self {
        Self { min: 0.1, max: 4.0, count: 30, spacing: Spacing::Log }
    }
}

impl PeriodGridConfig {
    pub fn build(&self) -> Result<Vec<f64>> {
        crate::sdof::period_grid(self.min, self.max, self.count, self.spacing == Spacing::Log)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum CheckpointConfig {
    Times { times: Vec<f64> },
    Count { count: usize },
}

impl Default for CheckpointConfig {
    fn default() -> Self {
        CheckpointConfig::Count { count: 8 }
    }
}

impl CheckpointConfig {
    pub fn build(&self, t_max: f64) -> Result<Vec<f64>> {
        match self {
            CheckpointConfig::Times { times } => Ok(times.clone()),
            CheckpointConfig::Count { count } => crate::target::checkpoint_grid(*count, t_max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileConfig {
    Linear {
        t_target: f64,
    },
    Exponential {
        t_target: f64,
        saturation_rate: f64,
        growth_rate: f64,
        /// Solved from the normalization when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitude: Option<f64>,
    },
}

impl ProfileConfig {
    pub fn build(&self) -> Result<IntensifyingProfile> {
        match *self {
            ProfileConfig::Linear { t_target } => IntensifyingProfile::linear(t_target),
            ProfileConfig::Exponential { t_target, saturation_rate, growth_rate, amplitude } => {
                match amplitude {
                    Some(amplitude) => IntensifyingProfile::exponential(
                        t_target,
                        amplitude,
                        saturation_rate,
                        growth_rate,
                    ),
                    None => calibrate_exponential(t_target, saturation_rate, growth_rate),
                }
            }
        }
    }
}

/// Serializable form of a [`GenerationProblem`]; every field has a default.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub t_max: f64,
    pub dt: f64,
    pub space: VariableSpace,
    pub displacement_weight: Option<f64>,
    pub residual: ResidualKind,
    pub damping_ratio: f64,
    pub spectrum: BaseTargetSpectrum,
    pub profile: ProfileConfig,
    pub periods: PeriodGridConfig,
    pub checkpoints: CheckpointConfig,
    pub optimizer: OptimizerSettings,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            name: "etef".to_string(),
            t_max: 20.48,
            dt: 0.02,
            space: VariableSpace::TimeDomain,
            displacement_weight: None,
            residual: ResidualKind::Absolute,
            damping_ratio: crate::sdof::DEFAULT_DAMPING_RATIO,
            spectrum: BaseTargetSpectrum::ParametricPlateau {
                plateau: 1.0,
                corner_low: 0.15,
                corner_high: 0.6,
                decay_exponent: 1.0,
            },
            profile: ProfileConfig::Linear { t_target: 10.0 },
            periods: PeriodGridConfig::default(),
            checkpoints: CheckpointConfig::default(),
            optimizer: OptimizerSettings::default(),
        }
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<GenerationProblem> {
        let periods = self.periods.build()?;
        let checkpoints = self.checkpoints.build(self.t_max)?;
        let profile = self.profile.build()?;
        let target = TargetModel::new(self.spectrum.clone(), profile, periods, checkpoints)?;
        let problem = GenerationProblem {
            name: self.name.clone(),
            target,
            t_max: self.t_max,
            dt: self.dt,
            space: self.space.clone(),
            displacement_weight: self.displacement_weight,
            residual_kind: self.residual,
            damping_ratio: self.damping_ratio,
            optimizer: self.optimizer,
        };
        problem.validate()?;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_problem() -> GenerationProblem {
        let config = ProblemConfig {
            name: "mini".into(),
            t_max: 5.12,
            dt: 0.04,
            periods: PeriodGridConfig { min: 0.2, max: 2.0, count: 8, spacing: Spacing::Log },
            checkpoints: CheckpointConfig::Times { times: vec![1.28, 2.56, 3.84, 5.12] },
            profile: ProfileConfig::Linear { t_target: 2.56 },
            displacement_weight: Some(0.0),
            optimizer: OptimizerSettings { max_iterations: 12, ..Default::default() },
            ..Default::default()
        };
        config.build().unwrap()
    }

    #[test]
    fn default_config_builds_desk_scale_problem() {
        let problem = ProblemConfig::default().build().unwrap();
        assert_eq!(problem.interval_count(), 1024);
        assert_eq!(problem.variable_count(), 1024);
        assert_eq!(problem.sample_count(), 1025);
        assert_relative_eq!(problem.target.checkpoints[7], 20.48);
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let err = serde_json::from_str::<ProblemConfig>("{\"nam\": \"x\"}").unwrap_err();
        assert!(err.to_string().contains("nam"));
    }

    #[test]
    fn wavelet_space_requires_dyadic_count() {
        let config = ProblemConfig {
            t_max: 5.0,
            dt: 0.02,
            space: VariableSpace::Wavelet { basis: WaveletBasis::Haar, levels: 4 },
            ..Default::default()
        };
        // 250 intervals is not a power of two.
        assert!(config.build().is_err());
    }

    #[test]
    fn quadrature_weights_cover_the_domain() {
        let periods = crate::sdof::period_grid(0.1, 4.0, 30, true).unwrap();
        let wp = period_weights(&periods);
        assert_relative_eq!(wp.iter().sum::<f64>(), 3.9, max_relative = 1e-12);
        let checkpoints = crate::target::checkpoint_grid(8, 20.48).unwrap();
        let wt = time_weights(&checkpoints);
        // Trapezoid over {0} ∪ checkpoints spans [0, t_max] minus half the
        // first interval (the t = 0 node carries zero residual).
        assert_relative_eq!(wt.iter().sum::<f64>(), 20.48 - 1.28, max_relative = 1e-12);
    }

    #[test]
    fn residual_norm_squared_equals_objective() {
        let problem = small_problem();
        let record = seed_record(&problem, 3).unwrap();
        let r = residual_vector(&record, &problem).unwrap();
        let f = objective(&record, &problem).unwrap();
        let norm2: f64 = r.iter().map(|v| v * v).sum();
        assert_relative_eq!(norm2, f, max_relative = 1e-12);
    }

    #[test]
    fn objective_matches_independent_summation() {
        // Independent oracle: recompute the double trapezoid sum from public
        // spectra and target surfaces with locally written weights.
        let problem = GenerationProblem { displacement_weight: Some(0.7), ..small_problem() };
        let record = seed_record(&problem, 11).unwrap();
        let f = objective(&record, &problem).unwrap();

        let (sa, su) = response_spectra(
            &record,
            &problem.target.periods,
            &problem.target.checkpoints,
            problem.damping_ratio,
        )
        .unwrap();
        let (ta, tu) = problem.target.target_surface();
        let periods = &problem.target.periods;
        let times = &problem.target.checkpoints;
        let mut expected = 0.0;
        for j in 0..periods.len() {
            let wj = if j == 0 {
                (periods[1] - periods[0]) / 2.0
            } else if j == periods.len() - 1 {
                (periods[j] - periods[j - 1]) / 2.0
            } else {
                (periods[j + 1] - periods[j - 1]) / 2.0
            };
            for k in 0..times.len() {
                let left = if k == 0 { 0.0 } else { times[k - 1] };
                let wk = if k == times.len() - 1 {
                    (times[k] - left) / 2.0
                } else {
                    (times[k + 1] - left) / 2.0
                };
                let ra = sa.value(j, k) - ta.value(j, k);
                let ru = su.value(j, k) - tu.value(j, k);
                expected += wj * wk * (ra * ra + 0.7 * ru * ru);
            }
        }
        assert_relative_eq!(f, expected, max_relative = 1e-9);
    }

    #[test]
    fn zero_record_with_relative_residuals_gives_domain_area() {
        // All spectra vanish, so every relative residual is exactly -1 and
        // the objective integrates 1 over the grid domain.
        let mut problem = small_problem();
        problem.residual_kind = ResidualKind::Relative;
        let record =
            AccelerationRecord::new("zero", problem.dt, vec![0.0; problem.sample_count()])
                .unwrap();
        let f = objective(&record, &problem).unwrap();
        let t_span = 5.12 - 1.28 / 2.0; // implicit zero node halves the first cell
        let p_span = 2.0 - 0.2;
        assert_relative_eq!(f, p_span * t_span, max_relative = 1e-12);
        // And the stated analytic value up to first-cell discretization.
        assert_relative_eq!(f, p_span * 5.12, max_relative = 0.15);
    }

    #[test]
    fn perfect_record_has_zero_objective() {
        // Build the target from the record's own spectra at the target time
        // with a single checkpoint: residuals vanish identically.
        let problem = small_problem();
        let record = seed_record(&problem, 5).unwrap();
        let (sa, _) = response_spectra(
            &record,
            &problem.target.periods,
            &[problem.target.profile.t_target()],
            problem.damping_ratio,
        )
        .unwrap();
        let points: Vec<(f64, f64)> = problem
            .target
            .periods
            .iter()
            .zip(&sa.values)
            .map(|(&t, row)| (t, row[0]))
            .collect();
        let target = TargetModel::new(
            BaseTargetSpectrum::Tabulated { points },
            problem.target.profile,
            problem.target.periods.clone(),
            vec![problem.target.profile.t_target()],
        )
        .unwrap();
        let matched = GenerationProblem { target, displacement_weight: Some(0.0), ..problem };
        let f = objective(&record, &matched).unwrap();
        assert!(f <= 1e-20, "objective {f}");
        assert!(residual_vector(&record, &matched).unwrap().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn late_perturbations_leave_early_residuals_unchanged() {
        let problem = small_problem();
        let record = seed_record(&problem, 7).unwrap();
        let base = residual_vector(&record, &problem).unwrap();
        // Perturb a sample after the third checkpoint (t = 3.84 → index 96).
        let mut samples = record.samples().to_vec();
        samples[100] += 0.37;
        let perturbed = AccelerationRecord::new("p", problem.dt, samples).unwrap();
        let after = residual_vector(&perturbed, &problem).unwrap();
        let nk = problem.target.checkpoints.len();
        let ncells = problem.target.periods.len() * nk;
        let mut any_late_change = false;
        #[allow(clippy::needless_range_loop)]
        for j in 0..problem.target.periods.len() {
            for k in 0..nk {
                let (b_a, a_a) = (base[j * nk + k], after[j * nk + k]);
                let (b_u, a_u) = (base[ncells + j * nk + k], after[ncells + j * nk + k]);
                if k < 3 {
                    assert_eq!(b_a, a_a, "acceleration residual changed at early checkpoint");
                    assert_eq!(b_u, a_u, "displacement residual changed at early checkpoint");
                } else if b_a != a_a || b_u != a_u {
                    any_late_change = true;
                }
            }
        }
        assert!(any_late_change, "perturbation did nothing at all");
    }

    #[test]
    fn seed_is_deterministic_and_intensifying() {
        let problem = small_problem();
        let a = seed_record(&problem, 42).unwrap();
        let b = seed_record(&problem, 42).unwrap();
        assert_eq!(a, b);
        let c = seed_record(&problem, 43).unwrap();
        assert_ne!(a, c);

        let t_target = problem.target.profile.t_target();
        let half = (t_target / 2.0 / problem.dt) as usize;
        let full = (t_target / problem.dt) as usize;
        let rms = |s: &[f64]| (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt();
        let early = rms(&a.samples()[..half]);
        let late = rms(&a.samples()[half..full]);
        assert!(late > early, "profile shaping: early {early}, late {late}");

        // Mean spectral level at the target time matches the base target.
        let (sa, _) =
            response_spectra(&a, &problem.target.periods, &[t_target], problem.damping_ratio)
                .unwrap();
        let mean_seed: f64 =
            sa.values.iter().map(|r| r[0]).sum::<f64>() / sa.values.len() as f64;
        let base = problem.target.base_acceleration();
        let mean_target = base.iter().sum::<f64>() / base.len() as f64;
        let ratio = mean_seed / mean_target;
        assert!((0.5..2.0).contains(&ratio), "mean spectral ratio {ratio}");
    }

    #[test]
    fn generation_reduces_objective_on_small_problem() {
        let problem = small_problem();
        let (record, report) = generate(&problem, 17).unwrap();
        assert_eq!(record.len(), problem.sample_count());
        assert_eq!(record.samples()[0], 0.0);
        assert!(report.final_objective() < report.seed_objective());
        assert!(
            report.objective_history.windows(2).all(|w| w[1] <= w[0]),
            "history must be non-increasing: {:?}",
            report.objective_history
        );
        assert_eq!(report.iterations + 1, report.objective_history.len());
        assert_eq!(record.meta()["space"], "time-domain");
        assert_eq!(record.meta()["profile"], "linear");
    }

    #[test]
    fn generation_is_deterministic() {
        let mut problem = small_problem();
        problem.optimizer.max_iterations = 4;
        let (a, ra) = generate(&problem, 23).unwrap();
        let (b, rb) = generate(&problem, 23).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.objective_history, rb.objective_history);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn matched_start_converges_without_iterations() {
        // A target tabulated from the record's own spectrum at a single
        // checkpoint makes the seed's projection an exact optimum; the run
        // must exit as converged after zero iterations, returning the seed.
        let problem = GenerationProblem {
            optimizer: OptimizerSettings { max_iterations: 8, ..Default::default() },
            ..small_problem()
        };
        let record = seed_record(&problem, 5).unwrap();
        let (sa, _) = response_spectra(
            &record,
            &problem.target.periods,
            &[problem.target.profile.t_target()],
            problem.damping_ratio,
        )
        .unwrap();
        let points: Vec<(f64, f64)> = problem
            .target
            .periods
            .iter()
            .zip(&sa.values)
            .map(|(&t, row)| (t, row[0]))
            .collect();
        let target = TargetModel::new(
            BaseTargetSpectrum::Tabulated { points },
            problem.target.profile,
            problem.target.periods.clone(),
            vec![problem.target.profile.t_target()],
        )
        .unwrap();
        let matched = GenerationProblem { target, displacement_weight: Some(0.0), ..problem };
        let f = objective(&record, &matched).unwrap();
        assert_eq!(f, 0.0);
        let (out, report) = generate_with_start(&matched, 5, &record).unwrap();
        assert_eq!(report.iterations, 0);
        assert_eq!(report.termination, TerminationReason::Converged);
        assert_eq!(report.objective_history, vec![0.0]);
        assert_eq!(out.samples(), record.samples());
    }

    #[test]
    fn rigged_damping_stalls_gracefully() {
        let mut problem = small_problem();
        problem.optimizer = OptimizerSettings {
            max_iterations: 5,
            initial_damping: 1e30,
            max_rejects: 0,
            objective_tolerance: 0.0,
            ..Default::default()
        };
        let (record, report) = generate(&problem, 9).unwrap();
        assert_eq!(report.termination, TerminationReason::Stalled);
        assert_eq!(report.iterations, 0);
        assert_eq!(record.len(), problem.sample_count());
    }

    #[test]
    fn wavelet_projection_round_trips_objective() {
        let problem = small_problem();
        let record = seed_record(&problem, 13).unwrap();
        let f_time = objective(&record, &problem).unwrap();

        let n = problem.interval_count();
        let map = space_map(
            &VariableSpace::Wavelet { basis: WaveletBasis::Daubechies4, levels: 5 },
            n,
        )
        .unwrap();
        let x = map.project(record.samples()).unwrap();
        let samples = map.to_samples(&x).unwrap();
        let round = AccelerationRecord::new("round", problem.dt, samples).unwrap();
        let f_wavelet = objective(&round, &problem).unwrap();
        assert_relative_eq!(f_time, f_wavelet, max_relative = 1e-9);
    }

    #[test]
    fn masked_space_freezes_fine_details() {
        let n = 128;
        let map = space_map(
            &VariableSpace::WaveletMasked {
                basis: WaveletBasis::Daubechies4,
                levels: 4,
                frozen_detail_levels: vec![1],
            },
            n,
        )
        .unwrap();
        assert_eq!(map.len(), n / 2);
        let x = vec![1.0; map.len()];
        let samples = map.to_samples(&x).unwrap();
        let decomp = dwt_forward(&samples[1..], 4, WaveletBasis::Daubechies4).unwrap();
        assert!(decomp.detail(1).iter().all(|&c| c.abs() < 1e-12));
        assert!(decomp.detail(2).iter().any(|&c| c.abs() > 0.5));
    }

    #[test]
    fn jacobian_column_matches_direct_difference() {
        // The restart-based column must equal a full-record finite
        // difference.
        let problem = small_problem();
        let record = seed_record(&problem, 31).unwrap();
        let alpha = resolved_alpha(&problem, &record).unwrap();
        let ctx = EvalContext::new(&problem, alpha);
        let samples = record.samples().to_vec();
        let eval = ctx.evaluate(&samples);
        let base = base_run(&ctx, &samples);
        let h = 1e-4;
        let m = 2 * ctx.cell_count();
        for &var in &[0usize, 17, 63, 101, 127] {
            let pert = Perturbation { start: var + 1, shape: vec![1.0] };
            let mut column = vec![0.0; m];
            jacobian_column(&ctx, &base, &eval.residuals, &samples, &pert, h, &mut column);

            let mut s2 = samples.clone();
            s2[var + 1] += h;
            let eval2 = ctx.evaluate(&s2);
            #[allow(clippy::needless_range_loop)]
            for idx in 0..m {
                let direct = (eval2.residuals[idx] - eval.residuals[idx]) / h;
                assert!(
                    (column[idx] - direct).abs() <= 1e-9 * (1.0 + direct.abs()),
                    "var {var}, residual {idx}: column {} vs direct {direct}",
                    column[idx]
                );
            }
        }
    }

    #[test]
    fn verify_reports_zero_misfit_for_self_targets() {
        // Exact spectral inversion at a single period: target tabulated from
        // the record's own spectrum value at the target time.
        let problem = small_problem();
        let record = seed_record(&problem, 19).unwrap();
        let t_target = problem.target.profile.t_target();
        let period = 0.7;
        let (sa, _) = response_spectra(&record, &[period], &[t_target], 0.05).unwrap();
        let value = sa.value(0, 0);
        let target = TargetModel::new(
            BaseTargetSpectrum::Tabulated { points: vec![(0.5, value), (1.0, value)] },
            problem.target.profile,
            vec![period],
            vec![t_target],
        )
        .unwrap();
        let report = verify_etef(&record, &target, 0.05, ToleranceSpec::default()).unwrap();
        assert!(report.misfit_at_target <= 1e-12, "misfit {}", report.misfit_at_target);
    }

    #[test]
    fn alpha_auto_balance_equalizes_terms() {
        let problem = GenerationProblem { displacement_weight: None, ..small_problem() };
        let record = seed_record(&problem, 3).unwrap();
        let alpha = resolved_alpha(&problem, &record).unwrap();
        assert!(alpha.is_finite() && alpha > 0.0);
        // With the resolved α, the weighted acceleration and displacement
        // contributions at the target time match by construction.
        let (sa, su) = response_spectra(
            &record,
            &problem.target.periods,
            &[problem.target.profile.t_target()],
            problem.damping_ratio,
        )
        .unwrap();
        let base_a = problem.target.base_acceleration();
        let base_u = problem.target.base_displacement();
        let wp = period_weights(&problem.target.periods);
        let mut acc = 0.0;
        let mut disp = 0.0;
        for j in 0..problem.target.periods.len() {
            acc += wp[j] * (sa.value(j, 0) - base_a[j]).powi(2);
            disp += wp[j] * (su.value(j, 0) - base_u[j]).powi(2);
        }
        assert_relative_eq!(acc, alpha * disp, max_relative = 1e-9);
    }
}
