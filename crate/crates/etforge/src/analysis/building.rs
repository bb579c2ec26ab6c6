//! Shear-building models and their time integration.
//!
//! A shear building is a chain of lumped masses connected by story springs;
//! the equations of motion under base acceleration are
//!
//! ```text
//! M ü + C u̇ + F_s(u) = -M ι a_g
//! ```
//!
//! with Rayleigh damping `C = a₀ M + a₁ K₀` anchored at the first modal
//! period and a third of it. Integration reuses the Newmark
//! average-acceleration scheme with a per-substep Newton iteration; story
//! forces follow the same return-mapping laws as the single oscillator. A
//! run is truncated and flagged as collapsed once any story drift ratio
//! exceeds the configured cap.

use nalgebra::{DMatrix, DVector};

use super::{envelope, EdpKind, EtCurve};
use crate::error::{Error, Result};
use crate::sdof::{integrate_sdof, PlasticLaw, PlasticState, SdofHysteresis, SdofModel};
use crate::signal::AccelerationRecord;

/// Story spring law; strengths are given through the drift at first yield.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StoryHysteresis {
    Linear,
    ElasticPerfectlyPlastic { yield_drift: f64 },
    Bilinear { yield_drift: f64, post_yield_ratio: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Story {
    /// Lumped mass (normalized to about 1).
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Story stiffness per unit mass scale, 1/s².
    pub stiffness: f64,
    /// Story height, m; drift ratios divide by it.
    #[serde(default = "default_height")]
    pub height: f64,
    #[serde(default = "default_story_hysteresis")]
    pub hysteresis: StoryHysteresis,
}

fn default_mass() -> f64 {
    1.0
}

fn default_height() -> f64 {
    3.0
}

fn default_story_hysteresis() -> StoryHysteresis {
    StoryHysteresis::Linear
}

impl Story {
    fn law(&self) -> Option<PlasticLaw> {
        match self.hysteresis {
            StoryHysteresis::Linear => None,
            StoryHysteresis::ElasticPerfectlyPlastic { yield_drift } => Some(PlasticLaw {
                k: self.stiffness,
                fy: self.stiffness * yield_drift,
                hard: 0.0,
            }),
            StoryHysteresis::Bilinear { yield_drift, post_yield_ratio } => Some(PlasticLaw {
                k: self.stiffness,
                fy: self.stiffness * yield_drift,
                hard: self.stiffness * post_yield_ratio / (1.0 - post_yield_ratio),
            }),
        }
    }

    fn yield_drift(&self) -> Option<f64> {
        match self.hysteresis {
            StoryHysteresis::Linear => None,
            StoryHysteresis::ElasticPerfectlyPlastic { yield_drift }
            | StoryHysteresis::Bilinear { yield_drift, .. } => Some(yield_drift),
        }
    }
}

/// Multi-story shear building with Rayleigh damping.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShearBuildingModel {
    pub stories: Vec<Story>,
    /// Damping ratios applied at the first modal period and at a third of it.
    #[serde(default = "default_damping_ratios")]
    pub damping_ratios: (f64, f64),
}

fn default_damping_ratios() -> (f64, f64) {
    (0.05, 0.05)
}

impl ShearBuildingModel {
    pub fn uniform_linear(stories: usize, stiffness: f64, damping_ratio: f64) -> Self {
        Self {
            stories: vec![
                Story {
                    mass: 1.0,
                    stiffness,
                    height: 3.0,
                    hysteresis: StoryHysteresis::Linear,
                };
                stories
            ],
            damping_ratios: (damping_ratio, damping_ratio),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stories.is_empty() {
            return Err(Error::InvalidModel("building needs at least one story".into()));
        }
        for (i, story) in self.stories.iter().enumerate() {
            if !(story.mass.is_finite() && story.mass > 0.0) {
                return Err(Error::InvalidModel(format!("story {i}: mass must be positive")));
            }
            if !(story.stiffness.is_finite() && story.stiffness > 0.0) {
                return Err(Error::InvalidModel(format!("story {i}: stiffness must be positive")));
            }
            if !(story.height.is_finite() && story.height > 0.0) {
                return Err(Error::InvalidModel(format!("story {i}: height must be positive")));
            }
            match story.hysteresis {
                StoryHysteresis::Linear => {}
                StoryHysteresis::ElasticPerfectlyPlastic { yield_drift } => {
                    if !(yield_drift.is_finite() && yield_drift > 0.0) {
                        return Err(Error::InvalidModel(format!(
                            "story {i}: yield drift must be positive"
                        )));
                    }
                }
                StoryHysteresis::Bilinear { yield_drift, post_yield_ratio } => {
                    if !(yield_drift.is_finite() && yield_drift > 0.0) {
                        return Err(Error::InvalidModel(format!(
                            "story {i}: yield drift must be positive"
                        )));
                    }
                    if !(0.0..1.0).contains(&post_yield_ratio) {
                        return Err(Error::InvalidModel(format!(
                            "story {i}: post-yield ratio must be in [0, 1)"
                        )));
                    }
                }
            }
        }
        let (xa, xb) = self.damping_ratios;
        if !((0.0..1.0).contains(&xa) && (0.0..1.0).contains(&xb)) {
            return Err(Error::InvalidModel("damping ratios must be in [0, 1)".into()));
        }
        Ok(())
    }

    fn elastic_stiffness_matrix(&self) -> DMatrix<f64> {
        let tangents: Vec<f64> = self.stories.iter().map(|s| s.stiffness).collect();
        assemble_stiffness(&tangents)
    }

    /// Modal periods, longest first.
    pub fn modal_periods(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.stories.len();
        let k = self.elastic_stiffness_matrix();
        // Symmetrized generalized problem: M^(-1/2) K M^(-1/2).
        let half_inv: Vec<f64> = self.stories.iter().map(|s| 1.0 / s.mass.sqrt()).collect();
        let mut sym = k;
        for i in 0..n {
            for j in 0..n {
                sym[(i, j)] *= half_inv[i] * half_inv[j];
            }
        }
        let eigen = nalgebra::SymmetricEigen::new(sym);
        let mut omegas: Vec<f64> = eigen.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        omegas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(omegas.iter().map(|w| 2.0 * std::f64::consts::PI / w).collect())
    }
}

fn assemble_stiffness(tangents: &[f64]) -> DMatrix<f64> {
    let n = tangents.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] += tangents[i];
        if i + 1 < n {
            k[(i, i)] += tangents[i + 1];
            k[(i, i + 1)] -= tangents[i + 1];
            k[(i + 1, i)] -= tangents[i + 1];
        }
    }
    k
}

/// Per-sample trajectories of a shear-building run.
pub(crate) struct BuildingResponse {
    /// Story drifts per sample, truncated at collapse.
    pub drifts: Vec<Vec<f64>>,
    pub roof: Vec<f64>,
    /// First-story spring force divided by the total mass, m/s².
    pub base_shear_per_mass: Vec<f64>,
    pub collapsed_at: Option<f64>,
}

pub(crate) fn integrate_shear_building(
    model: &ShearBuildingModel,
    record: &AccelerationRecord,
    collapse_drift_ratio: f64,
    substeps_override: Option<usize>,
) -> Result<BuildingResponse> {
    model.validate()?;
    if let Some(index) = record.samples().iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFiniteSample { index });
    }
    let n = model.stories.len();
    let ag = record.samples();
    let dt = record.dt();

    let periods = model.modal_periods()?;
    let shortest = periods.last().copied().unwrap_or(1.0);
    let substeps = substeps_override
        .unwrap_or_else(|| (dt / (shortest / 20.0)).ceil().max(1.0) as usize);
    let h = dt / substeps as f64;

    // Rayleigh anchors: first modal frequency and three times it (T1 / 3).
    let omega_a = 2.0 * std::f64::consts::PI / periods[0];
    let omega_b = 3.0 * omega_a;
    let (xi_a, xi_b) = model.damping_ratios;
    let denom = omega_b * omega_b - omega_a * omega_a;
    let a0 = 2.0 * omega_a * omega_b * (xi_a * omega_b - xi_b * omega_a) / denom;
    let a1 = 2.0 * (xi_b * omega_b - xi_a * omega_a) / denom;
    let masses = DVector::from_iterator(n, model.stories.iter().map(|s| s.mass));
    let k0 = model.elastic_stiffness_matrix();
    let mut damping = k0.clone() * a1;
    for i in 0..n {
        damping[(i, i)] += a0 * masses[i];
    }

    let laws: Vec<Option<PlasticLaw>> = model.stories.iter().map(|s| s.law()).collect();
    let mut plastic: Vec<PlasticState> = vec![PlasticState::default(); n];
    let total_mass: f64 = masses.iter().sum();

    let inv_h2_4 = 4.0 / (h * h);
    let inv_h_2 = 2.0 / h;

    let mut u = DVector::<f64>::zeros(n);
    let mut v = DVector::<f64>::zeros(n);
    let mut acc = DVector::from_element(n, -ag[0]);

    let mut drifts = Vec::with_capacity(ag.len());
    let mut roof = Vec::with_capacity(ag.len());
    let mut base_shear = Vec::with_capacity(ag.len());
    let mut collapsed_at = None;

    let story_drifts = |u: &DVector<f64>| -> Vec<f64> {
        (0..n).map(|i| if i == 0 { u[0] } else { u[i] - u[i - 1] }).collect()
    };
    let record_sample =
        |u: &DVector<f64>,
         plastic: &[PlasticState],
         drifts: &mut Vec<Vec<f64>>,
         roof: &mut Vec<f64>,
         base_shear: &mut Vec<f64>| {
            let d = story_drifts(u);
            let f0 = match &laws[0] {
                None => model.stories[0].stiffness * d[0],
                Some(law) => law.probe(d[0], &plastic[0]).0,
            };
            drifts.push(d);
            roof.push(u[n - 1]);
            base_shear.push(f0 / total_mass);
        };

    record_sample(&u, &plastic, &mut drifts, &mut roof, &mut base_shear);

    'record: for i in 1..ag.len() {
        for s in 1..=substeps {
            let frac = s as f64 / substeps as f64;
            let ag1 = ag[i - 1] + (ag[i] - ag[i - 1]) * frac;

            // Newton iteration on the end displacement vector; the residual
            // is piecewise affine, so it lands exactly once the active
            // segments settle. Convergence is judged against the magnitude
            // of the terms being balanced, not the initial residual.
            let mut u1 = u.clone();
            let mut converged = false;
            for _ in 0..60 {
                let d = story_drifts(&u1);
                let mut forces = vec![0.0; n];
                let mut tangents = vec![0.0; n];
                for j in 0..n {
                    match &laws[j] {
                        None => {
                            forces[j] = model.stories[j].stiffness * d[j];
                            tangents[j] = model.stories[j].stiffness;
                        }
                        Some(law) => {
                            let (f, kt) = law.probe(d[j], &plastic[j]);
                            forces[j] = f;
                            tangents[j] = kt.max(0.0);
                        }
                    }
                }
                let mut residual = DVector::<f64>::zeros(n);
                let mut term_scale = 0.0f64;
                for j in 0..n {
                    let spring = forces[j] - if j + 1 < n { forces[j + 1] } else { 0.0 };
                    let inertia = masses[j] * (inv_h2_4 * (u1[j] - u[j]) - (4.0 / h) * v[j] - acc[j]);
                    residual[j] = -masses[j] * ag1 - inertia - spring;
                    term_scale = term_scale
                        .max((masses[j] * ag1).abs())
                        .max(inertia.abs())
                        .max(spring.abs());
                }
                let v1 = (&u1 - &u) * inv_h_2 - &v;
                let damping_force = &damping * &v1;
                term_scale = term_scale.max(damping_force.amax());
                residual -= damping_force;

                if residual.amax() <= 1e-10 * term_scale + 1e-300 {
                    converged = true;
                    break;
                }
                let mut k_eff = assemble_stiffness(&tangents) + &damping * inv_h_2;
                for j in 0..n {
                    k_eff[(j, j)] += masses[j] * inv_h2_4;
                }
                let delta = k_eff
                    .lu()
                    .solve(&residual)
                    .ok_or_else(|| Error::InvalidModel("singular effective stiffness".into()))?;
                u1 += delta;
            }
            if !converged {
                return Err(Error::InvalidModel("story force iteration diverged".into()));
            }

            let d = story_drifts(&u1);
            for j in 0..n {
                if let Some(law) = &laws[j] {
                    law.commit(d[j], &mut plastic[j]);
                }
            }
            let v1 = (&u1 - &u) * inv_h_2 - &v;
            let a1v = (&u1 - &u) * inv_h2_4 - &v * (4.0 / h) - &acc;
            u = u1;
            v = v1;
            acc = a1v;
        }

        record_sample(&u, &plastic, &mut drifts, &mut roof, &mut base_shear);
        let last = drifts.last().unwrap();
        let diverged = last
            .iter()
            .zip(&model.stories)
            .any(|(d, s)| !d.is_finite() || d.abs() / s.height > collapse_drift_ratio);
        if diverged {
            collapsed_at = Some(record.time_at(i));
            break 'record;
        }
    }

    Ok(BuildingResponse { drifts, roof, base_shear_per_mass: base_shear, collapsed_at })
}

/// Model accepted by the endurance time and IDA runners.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StructureModel {
    Sdof(SdofModel),
    ShearBuilding(ShearBuildingModel),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AnalysisOptions {
    /// Story drift ratio beyond which a building run is flagged collapsed.
    pub collapse_drift_ratio: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { collapse_drift_ratio: 0.1 }
    }
}

/// Integrates the model under an intensifying excitation and returns the
/// envelope of the selected demand parameter. Building runs that exceed the
/// collapse cap return a curve truncated at the divergence time.
pub fn run_et_analysis(
    model: &StructureModel,
    record: &AccelerationRecord,
    edp: EdpKind,
    options: AnalysisOptions,
) -> Result<EtCurve> {
    match model {
        StructureModel::Sdof(sdof) => {
            let response = integrate_sdof(sdof, record)?;
            let history: Vec<f64> = match edp {
                EdpKind::RoofDisplacement => response.displacement,
                EdpKind::BaseShearPerUnitMass => response.restoring_force,
                EdpKind::StoryDuctility => {
                    let yield_strength = match sdof.hysteresis {
                        SdofHysteresis::Linear => {
                            return Err(Error::InvalidModel(
                                "ductility needs a yield strength".into(),
                            ))
                        }
                        SdofHysteresis::ElasticPerfectlyPlastic { yield_strength }
                        | SdofHysteresis::Bilinear { yield_strength, .. } => yield_strength,
                    };
                    let omega = sdof.natural_frequency();
                    let u_yield = yield_strength / (omega * omega);
                    response.displacement.iter().map(|u| u / u_yield).collect()
                }
                EdpKind::DriftRatio => {
                    return Err(Error::InvalidModel(
                        "drift ratio needs story heights; use a shear building".into(),
                    ))
                }
            };
            let mut curve = envelope(&history, record.dt())?;
            curve.label = edp.label().to_string();
            Ok(curve)
        }
        StructureModel::ShearBuilding(building) => {
            let response =
                integrate_shear_building(building, record, options.collapse_drift_ratio, None)?;
            let history: Vec<f64> = match edp {
                EdpKind::DriftRatio => response
                    .drifts
                    .iter()
                    .map(|d| {
                        d.iter()
                            .zip(&building.stories)
                            .map(|(drift, story)| (drift / story.height).abs())
                            .fold(0.0f64, f64::max)
                    })
                    .collect(),
                EdpKind::RoofDisplacement => response.roof,
                EdpKind::BaseShearPerUnitMass => response.base_shear_per_mass,
                EdpKind::StoryDuctility => {
                    if building.stories.iter().all(|s| s.yield_drift().is_none()) {
                        return Err(Error::InvalidModel(
                            "ductility needs at least one nonlinear story".into(),
                        ));
                    }
                    response
                        .drifts
                        .iter()
                        .map(|d| {
                            d.iter()
                                .zip(&building.stories)
                                .filter_map(|(drift, story)| {
                                    story.yield_drift().map(|dy| (drift / dy).abs())
                                })
                                .fold(0.0f64, f64::max)
                        })
                        .collect()
                }
            };
            let mut curve = envelope(&history, record.dt())?;
            curve.label = edp.label().to_string();
            curve.collapsed_at = response.collapsed_at;
            Ok(curve)
        }
    }
}
