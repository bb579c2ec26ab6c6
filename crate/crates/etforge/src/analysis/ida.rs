//! Incremental dynamic analysis: full-factorial (record × scale) runs with
//! fractile summaries, plus a self-contained synthetic record suite for
//! validation work.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::building::{run_et_analysis, AnalysisOptions, StructureModel};
use super::EdpKind;
use crate::error::{Error, Result};
use crate::generate::band_limited_noise;
use crate::sdof::response_spectra;
use crate::signal::AccelerationRecord;
use crate::target::BaseTargetSpectrum;

/// Peak demand per record per scale factor, with 16/50/84% fractiles.
#[derive(Debug, Clone, PartialEq)]
pub struct IdaCurve {
    pub lambdas: Vec<f64>,
    pub record_ids: Vec<String>,
    /// `edp[r][l]` is the peak demand of record `r` scaled by `lambdas[l]`.
    pub edp: Vec<Vec<f64>>,
    pub collapsed: Vec<Vec<bool>>,
    pub fractile_16: Vec<f64>,
    pub median: Vec<f64>,
    pub fractile_84: Vec<f64>,
}

impl IdaCurve {
    fn from_cells(
        lambdas: Vec<f64>,
        record_ids: Vec<String>,
        edp: Vec<Vec<f64>>,
        collapsed: Vec<Vec<bool>>,
    ) -> Self {
        let mut fractile_16 = Vec::with_capacity(lambdas.len());
        let mut median = Vec::with_capacity(lambdas.len());
        let mut fractile_84 = Vec::with_capacity(lambdas.len());
        for l in 0..lambdas.len() {
            let mut column: Vec<f64> = edp.iter().map(|row| row[l]).collect();
            column.sort_by(|a, b| a.partial_cmp(b).unwrap());
            fractile_16.push(percentile(&column, 16.0));
            median.push(percentile(&column, 50.0));
            fractile_84.push(percentile(&column, 84.0));
        }
        Self { lambdas, record_ids, edp, collapsed, fractile_16, median, fractile_84 }
    }

    /// `lambda,record_id,edp,collapsed` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,record_id,edp,collapsed\n");
        for (r, id) in self.record_ids.iter().enumerate() {
            for (l, lambda) in self.lambdas.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{lambda:.9e},{id},{:.9e},{}",
                    self.edp[r][l], self.collapsed[r][l]
                );
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(content: &str, origin: &str) -> Result<Self> {
        let mut lambdas: Vec<f64> = Vec::new();
        let mut record_ids: Vec<String> = Vec::new();
        let mut cells: Vec<(usize, usize, f64, bool)> = Vec::new();
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.trim_end_matches('\r').trim();
            if line.is_empty() || line.starts_with('#') || line == "lambda,record_id,edp,collapsed"
            {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: lineno + 1,
                    message: format!("expected 4 fields, got {}", fields.len()),
                });
            }
            let bad = |message: String| Error::Parse {
                path: origin.into(),
                line: lineno + 1,
                message,
            };
            let lambda: f64 =
                fields[0].trim().parse().map_err(|e| bad(format!("bad lambda: {e}")))?;
            let value: f64 = fields[2].trim().parse().map_err(|e| bad(format!("bad edp: {e}")))?;
            let collapsed: bool =
                fields[3].trim().parse().map_err(|e| bad(format!("bad flag: {e}")))?;
            let r = match record_ids.iter().position(|id| id == fields[1]) {
                Some(r) => r,
                None => {
                    record_ids.push(fields[1].to_string());
                    record_ids.len() - 1
                }
            };
            let l = match lambdas.iter().position(|&x| (x - lambda).abs() <= 1e-12 * lambda.max(1e-30)) {
                Some(l) => l,
                None => {
                    lambdas.push(lambda);
                    lambdas.len() - 1
                }
            };
            cells.push((r, l, value, collapsed));
        }
        if record_ids.is_empty() {
            return Err(Error::Parse {
                path: origin.into(),
                line: 1,
                message: "no data rows".into(),
            });
        }
        let mut edp = vec![vec![f64::NAN; lambdas.len()]; record_ids.len()];
        let mut collapsed = vec![vec![false; lambdas.len()]; record_ids.len()];
        for (r, l, value, flag) in cells {
            edp[r][l] = value;
            collapsed[r][l] = flag;
        }
        if edp.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::Parse {
                path: origin.into(),
                line: 1,
                message: "incomplete (record, lambda) grid".into(),
            });
        }
        Ok(Self::from_cells(lambdas, record_ids, edp, collapsed))
    }

    /// `lambda,p16,p50,p84` rows.
    pub fn fractiles_to_csv(&self) -> String {
        let mut out = String::from("lambda,p16,p50,p84\n");
        for (l, lambda) in self.lambdas.iter().enumerate() {
            let _ = writeln!(
                out,
                "{lambda:.9e},{:.9e},{:.9e},{:.9e}",
                self.fractile_16[l], self.median[l], self.fractile_84[l]
            );
        }
        out
    }
}

/// Linear-interpolated percentile of an ascending-sorted sample.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = (p / 100.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

/// Runs the full (record × scale) factorial and summarizes fractiles across
/// records. Collapsed cells keep the peak reached before divergence and are
/// flagged rather than failing the batch.
pub fn run_ida(
    model: &StructureModel,
    records: &[AccelerationRecord],
    lambdas: &[f64],
    edp: EdpKind,
    options: AnalysisOptions,
) -> Result<IdaCurve> {
    if records.is_empty() {
        return Err(Error::InvalidGrid("no records".into()));
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidGrid("empty scale grid".into()));
    }
    if !lambdas.windows(2).all(|w| w[1] > w[0]) || lambdas[0] < 0.0 {
        return Err(Error::InvalidGrid("scale factors must be nonnegative and increasing".into()));
    }
    let cells: Vec<Result<(f64, bool)>> = records
        .par_iter()
        .flat_map(|record| {
            lambdas.par_iter().map(move |&lambda| {
                let curve = run_et_analysis(model, &record.scaled(lambda), edp, options)?;
                Ok((curve.final_value(), curve.collapsed_at.is_some()))
            })
        })
        .collect();

    let mut edp_matrix = Vec::with_capacity(records.len());
    let mut collapsed = Vec::with_capacity(records.len());
    let mut iter = cells.into_iter();
    for _ in 0..records.len() {
        let mut row = Vec::with_capacity(lambdas.len());
        let mut flags = Vec::with_capacity(lambdas.len());
        for _ in 0..lambdas.len() {
            let (value, flag) = iter.next().expect("cell count")?;
            row.push(value);
            flags.push(flag);
        }
        edp_matrix.push(row);
        collapsed.push(flags);
    }
    Ok(IdaCurve::from_cells(
        lambdas.to_vec(),
        records.iter().map(|r| r.name().to_string()).collect(),
        edp_matrix,
        collapsed,
    ))
}

/// How synthetic suite records are scaled toward the target at unit scale.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SuiteAnchor {
    /// Match the mean spectral acceleration over the period grid.
    MeanOverGrid,
    /// Match the spectral acceleration at one period exactly.
    AtPeriod { period: f64 },
}

/// Parameters of the synthetic validation suite.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub count: usize,
    pub duration: f64,
    pub dt: f64,
    pub damping_ratio: f64,
    pub anchor: SuiteAnchor,
    pub seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            count: 5,
            duration: 20.0,
            dt: 0.02,
            damping_ratio: crate::sdof::DEFAULT_DAMPING_RATIO,
            anchor: SuiteAnchor::MeanOverGrid,
            seed: 0,
        }
    }
}

/// Stationary band-limited noise records with tapered ends, spectrally
/// scaled toward the base target at unit scale factor.
pub fn synthetic_record_suite(
    spec: &SuiteSpec,
    base: &BaseTargetSpectrum,
    periods: &[f64],
) -> Result<Vec<AccelerationRecord>> {
    if spec.count == 0 {
        return Err(Error::InvalidGrid("suite needs at least one record".into()));
    }
    if periods.is_empty() {
        return Err(Error::InvalidGrid("empty period grid".into()));
    }
    base.validate()?;
    let n = (spec.duration / spec.dt).round() as usize;
    let f_lo = 1.0 / periods.last().copied().unwrap();
    let f_hi = 1.0 / periods.first().copied().unwrap();
    let mut records = Vec::with_capacity(spec.count);
    for index in 0..spec.count {
        let noise =
            band_limited_noise(n, spec.dt, f_lo, f_hi, spec.seed.wrapping_add(index as u64));
        let taper_len = (n / 10).max(1);
        let mut samples = Vec::with_capacity(n + 1);
        samples.push(0.0);
        for (i, value) in noise.iter().enumerate() {
            let ramp_in = ((i + 1) as f64 / taper_len as f64).min(1.0);
            let ramp_out = ((n - i) as f64 / taper_len as f64).min(1.0);
            samples.push(value * ramp_in * ramp_out);
        }
        let record =
            AccelerationRecord::new(format!("synth-{index:02}"), spec.dt, samples)?;
        let duration = record.duration();
        let (sa, _) = response_spectra(&record, periods, &[duration], spec.damping_ratio)?;
        let scale = match spec.anchor {
            SuiteAnchor::MeanOverGrid => {
                let mean_rec: f64 =
                    sa.values.iter().map(|row| row[0]).sum::<f64>() / periods.len() as f64;
                let mean_target: f64 =
                    periods.iter().map(|&t| base.acceleration(t)).sum::<f64>()
                        / periods.len() as f64;
                mean_target / mean_rec
            }
            SuiteAnchor::AtPeriod { period } => {
                let (sa_one, _) =
                    response_spectra(&record, &[period], &[duration], spec.damping_ratio)?;
                base.acceleration(period) / sa_one.value(0, 0)
            }
        };
        if !scale.is_finite() {
            return Err(Error::InvalidGrid("degenerate synthetic record".into()));
        }
        records.push(record.scaled(scale));
    }
    Ok(records)
}
