//! Discrete wavelet transform on periodized orthogonal filter banks.
//!
//! The forward transform correlates the signal with the analysis filters and
//! downsamples by two at every level; the inverse is the adjoint (the filter
//! bank is orthonormal, so transpose equals inverse). Signals whose length is
//! not divisible by `2^levels` are zero-extended to the next power of two and
//! the padded length is recorded on the decomposition.

use crate::error::{Error, Result};

/// Supported orthogonal wavelet bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveletBasis {
    Haar,
    /// Four-tap Daubechies filter (two vanishing moments).
    Daubechies4,
}

impl WaveletBasis {
    /// Analysis low-pass filter taps.
    pub fn lowpass(self) -> &'static [f64] {
        match self {
            WaveletBasis::Haar => &HAAR_LO,
            WaveletBasis::Daubechies4 => &DB4_LO,
        }
    }

    /// Analysis high-pass taps via the quadrature mirror relation
    /// `g[k] = (-1)^k h[L-1-k]`.
    pub fn highpass(self) -> Vec<f64> {
        let lo = self.lowpass();
        let n = lo.len();
        (0..n).map(|k| if k % 2 == 0 { lo[n - 1 - k] } else { -lo[n - 1 - k] }).collect()
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
static HAAR_LO: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
// (1±√3)/(4√2) and (3±√3)/(4√2)
static DB4_LO: [f64; 4] = [
    0.48296291314469025,
    0.8365163037378079,
    0.22414386804185735,
    -0.12940952255092145,
];

/// Multi-level decomposition: one approximation band plus one detail band per
/// level. `details[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    basis: WaveletBasis,
    levels: usize,
    original_len: usize,
    padded_len: usize,
    approx: Vec<f64>,
    details: Vec<Vec<f64>>,
}

impl WaveletDecomposition {
    pub fn basis(&self) -> WaveletBasis {
        self.basis
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn original_len(&self) -> usize {
        self.original_len
    }

    /// Length actually transformed; differs from `original_len` only when the
    /// signal was zero-extended.
    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    pub fn approx(&self) -> &[f64] {
        &self.approx
    }

    /// Detail band of `level` (1 = finest).
    pub fn detail(&self, level: usize) -> &[f64] {
        &self.details[level - 1]
    }

    pub fn coefficient_count(&self) -> usize {
        self.approx.len() + self.details.iter().map(Vec::len).sum::<usize>()
    }

    /// Coefficients flattened as approximation, then details from coarsest to
    /// finest. The inverse of [`WaveletDecomposition::from_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.coefficient_count());
        flat.extend_from_slice(&self.approx);
        for d in self.details.iter().rev() {
            flat.extend_from_slice(d);
        }
        flat
    }

    pub fn from_flat(
        basis: WaveletBasis,
        levels: usize,
        original_len: usize,
        flat: &[f64],
    ) -> Result<Self> {
        let padded_len = padded_length(original_len, levels)?;
        if flat.len() != padded_len {
            return Err(Error::MalformedDecomposition(format!(
                "expected {padded_len} coefficients, got {}",
                flat.len()
            )));
        }
        let mut offset = padded_len >> levels;
        let approx = flat[..offset].to_vec();
        let mut details = vec![Vec::new(); levels];
        for level in (1..=levels).rev() {
            let len = padded_len >> level;
            details[level - 1] = flat[offset..offset + len].to_vec();
            offset += len;
        }
        Ok(Self { basis, levels, original_len, padded_len, approx, details })
    }

    /// Zeroes the detail bands named in `levels` (1 = finest).
    pub fn freeze_details(&mut self, levels: &[usize]) {
        for &level in levels {
            if level >= 1 && level <= self.levels {
                self.details[level - 1].iter_mut().for_each(|c| *c = 0.0);
            }
        }
    }

    fn check_bands(&self) -> Result<()> {
        if self.levels == 0 || self.details.len() != self.levels {
            return Err(Error::MalformedDecomposition(format!(
                "{} detail bands for {} levels",
                self.details.len(),
                self.levels
            )));
        }
        if self.padded_len >> self.levels << self.levels != self.padded_len {
            return Err(Error::MalformedDecomposition(format!(
                "padded length {} not divisible by 2^{}",
                self.padded_len, self.levels
            )));
        }
        if self.approx.len() != self.padded_len >> self.levels {
            return Err(Error::MalformedDecomposition(format!(
                "approximation band has {} coefficients, expected {}",
                self.approx.len(),
                self.padded_len >> self.levels
            )));
        }
        for (i, d) in self.details.iter().enumerate() {
            let expected = self.padded_len >> (i + 1);
            if d.len() != expected {
                return Err(Error::MalformedDecomposition(format!(
                    "detail level {} has {} coefficients, expected {expected}",
                    i + 1,
                    d.len()
                )));
            }
        }
        Ok(())
    }
}

fn padded_length(len: usize, levels: usize) -> Result<usize> {
    if levels == 0 || levels >= usize::BITS as usize {
        return Err(Error::MalformedDecomposition(format!("bad level count {levels}")));
    }
    let min = 1usize << levels;
    if len < min {
        return Err(Error::SignalTooShort { len, levels, min });
    }
    if len.is_multiple_of(min) {
        Ok(len)
    } else {
        Ok(len.next_power_of_two())
    }
}

/// One analysis step: periodic correlation with both filters, downsample by 2.
fn analyze_one(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for (k, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            let v = x[(2 * i + k) % n];
            sa += l * v;
            sd += h * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

/// One synthesis step: the adjoint of [`analyze_one`].
fn synthesize_one(a: &[f64], d: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for i in 0..a.len() {
        for (k, (&l, &h)) in lo.iter().zip(hi).enumerate() {
            x[(2 * i + k) % n] += l * a[i] + h * d[i];
        }
    }
    x
}

/// Multi-level forward transform.
pub fn dwt_forward(signal: &[f64], levels: usize, basis: WaveletBasis) -> Result<WaveletDecomposition> {
    let original_len = signal.len();
    let padded_len = padded_length(original_len, levels)?;
    let lo = basis.lowpass();
    let hi = basis.highpass();
    let mut current = signal.to_vec();
    current.resize(padded_len, 0.0);
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analyze_one(&current, lo, &hi);
        details.push(d);
        current = a;
    }
    Ok(WaveletDecomposition { basis, levels, original_len, padded_len, approx: current, details })
}

/// Multi-level inverse transform; returns a sequence of the recorded original
/// length.
pub fn dwt_inverse(decomp: &WaveletDecomposition) -> Result<Vec<f64>> {
    decomp.check_bands()?;
    let lo = decomp.basis.lowpass();
    let hi = decomp.basis.highpass();
    let mut current = decomp.approx.clone();
    for d in decomp.details.iter().rev() {
        current = synthesize_one(&current, d, lo, &hi);
    }
    current.truncate(decomp.original_len);
    Ok(current)
}
