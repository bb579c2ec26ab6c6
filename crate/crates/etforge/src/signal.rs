//! Uniformly sampled ground-acceleration records and scalar motion metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A uniformly sampled ground-acceleration time history in m/s².
///
/// Sample `i` sits at time `i * dt`, so the record duration is
/// `dt * (len - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AccelerationRecord {
    name: String,
    dt: f64,
    samples: Vec<f64>,
    meta: BTreeMap<String, String>,
}

impl AccelerationRecord {
    pub fn new(name: impl Into<String>, dt: f64, samples: Vec<f64>) -> Result<Self> {
        let name = sanitize_name(name.into());
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidRecord(format!("dt must be positive, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(Error::InvalidRecord(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidRecord(format!("non-finite sample at index {i}")));
        }
        Ok(Self { name, dt, samples, meta: BTreeMap::new() })
    }

    pub fn with_meta(mut self, meta: BTreeMap<String, String>) -> Self {
        self.meta = meta;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn meta(&self) -> &BTreeMap<String, String> {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.dt * (self.samples.len() - 1) as f64
    }

    /// Time of sample `i`.
    pub fn time_at(&self, i: usize) -> f64 {
        self.dt * i as f64
    }

    /// Record scaled by `factor`, with the same dt and a derived name.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            name: self.name.clone(),
            dt: self.dt,
            samples: self.samples.iter().map(|s| s * factor).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Serializes to the record CSV format:
    /// a `# name=<id> dt=<s> units=m/s2` header, optional `# key=value`
    /// meta lines, then one acceleration value per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# name={} dt={} units=m/s2", self.name, self.dt);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        for s in &self.samples {
            let _ = writeln!(out, "{s}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Parses the record CSV format. Accepts both LF and CRLF line endings;
    /// `# key=value` lines after the header are collected as metadata.
    pub fn from_csv(content: &str, origin: &str) -> Result<Self> {
        let mut name = String::from("record");
        let mut dt = None;
        let mut meta = BTreeMap::new();
        let mut samples = Vec::new();
        let mut saw_header = false;
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.trim_end_matches('\r').trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                for token in rest.split_whitespace() {
                    let Some((key, value)) = token.split_once('=') else { continue };
                    match key {
                        "name" => name = value.to_string(),
                        "dt" => {
                            dt = Some(value.parse::<f64>().map_err(|e| Error::Parse {
                                path: origin.to_string(),
                                line: lineno + 1,
                                message: format!("bad dt value {value:?}: {e}"),
                            })?)
                        }
                        "units" => {}
                        _ if saw_header => {
                            meta.insert(key.to_string(), value.to_string());
                        }
                        _ => {}
                    }
                }
                saw_header = true;
                continue;
            }
            let v = line.parse::<f64>().map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: lineno + 1,
                message: format!("bad sample {line:?}: {e}"),
            })?;
            samples.push(v);
        }
        let dt = dt.ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: 1,
            message: "missing `# name=<id> dt=<s>` header".into(),
        })?;
        Ok(Self::new(name, dt, samples)?.with_meta(meta))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path)?;
        Self::from_csv(&content, &path.display().to_string())
    }
}

fn sanitize_name(name: String) -> String {
    let cleaned: String = name
        .trim()
        .chars()
        .map(|c| if c.is_whitespace() { '-' } else { c })
        .collect();
    if cleaned.is_empty() {
        "record".to_string()
    } else {
        cleaned
    }
}

/// Running cumulative absolute velocity, trapezoidal on |a|.
///
/// `cav[k]` integrates |a| over `[0, k*dt]`; the result is zero-initialized
/// and nondecreasing.
pub fn compute_cav(record: &AccelerationRecord) -> Vec<f64> {
    let a = record.samples();
    let dt = record.dt();
    let mut cav = Vec::with_capacity(a.len());
    cav.push(0.0);
    let mut acc = 0.0;
    for i in 1..a.len() {
        acc += 0.5 * dt * (a[i - 1].abs() + a[i].abs());
        cav.push(acc);
    }
    cav
}

/// Peak ground motion values derived from a record.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PeakMetrics {
    /// Peak ground acceleration, m/s².
    pub pga: f64,
    /// Peak ground velocity, m/s.
    pub pgv: f64,
    /// Peak ground displacement, m.
    pub pgd: f64,
}

/// Peak |a|, |v|, |d| with velocity and displacement obtained by trapezoidal
/// integration from zero initial conditions.
pub fn peak_metrics(record: &AccelerationRecord) -> PeakMetrics {
    let a = record.samples();
    let dt = record.dt();
    let mut v = 0.0f64;
    let mut d = 0.0f64;
    let mut pga = 0.0f64;
    let mut pgv = 0.0f64;
    let mut pgd = 0.0f64;
    pga = pga.max(a[0].abs());
    for i in 1..a.len() {
        let v_next = v + 0.5 * dt * (a[i - 1] + a[i]);
        d += 0.5 * dt * (v + v_next);
        v = v_next;
        pga = pga.max(a[i].abs());
        pgv = pgv.max(v.abs());
        pgd = pgd.max(d.abs());
    }
    PeakMetrics { pga, pgv, pgd }
}
