//! Orthonormal Daubechies-5 discrete wavelet transform with periodic
//! boundaries, and extraction of the detail band used as detector input.
//!
//! Analysis convention: `approx[i] = Σ_k h[k]·x[(2i + k) mod n]` and the same
//! with `g` for `detail`, where `g[k] = (-1)^k·h[9 - k]`. Shifting the input
//! left by `2^L` samples shifts the level-`L` bands left by one coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DB5_TAPS: usize = 10;

/// db5 scaling (lowpass) filter, Daubechies' minimum-phase ordering.
///
/// Obtained by spectral factorization of the degree-4 Daubechies half-band
/// polynomial (roots inside the unit circle) in 50-digit arithmetic and
/// rounded to f64; agrees with the published db5 tables to the last digit.
#[allow(clippy::excessive_precision)]
const DB5_LOWPASS: [f64; DB5_TAPS] = [
    0.160_102_397_974_192_914_48,
    0.603_829_269_797_189_670_54,
    0.724_308_528_437_772_927_73,
    0.138_428_145_901_320_731_51,
    -0.242_294_887_066_382_031_86,
    -0.032_244_869_584_638_374_648,
    0.077_571_493_840_045_713_523,
    -0.006_241_490_212_798_274_274_2,
    -0.012_580_751_999_081_999_469,
    0.003_335_725_285_473_771_278,
];

/// Quadrature mirror filter pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveletFilterPair {
    pub lowpass: [f64; DB5_TAPS],
    pub highpass: [f64; DB5_TAPS],
}

pub fn db5_filters() -> WaveletFilterPair {
    let lowpass = DB5_LOWPASS;
    let mut highpass = [0.0; DB5_TAPS];
    for (k, g) in highpass.iter_mut().enumerate() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        *g = sign * lowpass[DB5_TAPS - 1 - k];
    }
    WaveletFilterPair { lowpass, highpass }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionConfig {
    pub levels: usize,
    #[serde(default)]
    pub boundary: Boundary,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            boundary: Boundary::Periodic,
        }
    }
}

impl DecompositionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::config("wavelet.levels", "must be at least 1"));
        }
        if self.levels > 20 {
            return Err(Error::config("wavelet.levels", "must be at most 20"));
        }
        Ok(())
    }

    /// Check that a window of `len` samples can be decomposed.
    pub fn check_len(&self, len: usize) -> Result<()> {
        self.validate()?;
        let block = 1usize << self.levels;
        if len == 0 || !len.is_multiple_of(block) {
            return Err(Error::InvalidInput(format!(
                "window length {len} is not a positive multiple of 2^{} = {block}",
                self.levels
            )));
        }
        if len / block * 2 < DB5_TAPS {
            return Err(Error::InvalidInput(format!(
                "window length {len} too short for {} levels of a {DB5_TAPS}-tap filter",
                self.levels
            )));
        }
        Ok(())
    }

    /// Number of detail coefficients at the final level for a window of `len`.
    pub fn feature_len(&self, len: usize) -> usize {
        len >> self.levels
    }
}

/// Detail coefficients of one window at one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFeatures {
    pub level: usize,
    pub coefficients: Vec<f64>,
    pub source_window_len: usize,
}

impl WaveletFeatures {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }
}

fn check_step_len(n: usize) -> Result<()> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("DWT input length {n} is odd")));
    }
    if n < DB5_TAPS {
        return Err(Error::InvalidInput(format!(
            "DWT input length {n} is shorter than the {DB5_TAPS}-tap filter"
        )));
    }
    Ok(())
}

/// One analysis level: periodic convolution with each filter, then keep even
/// phases. Returns `(approx, detail)`, each of half the input length.
pub fn dwt_step(
    signal: &[f64],
    filters: &WaveletFilterPair,
    boundary: Boundary,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = signal.len();
    check_step_len(n)?;
    let Boundary::Periodic = boundary;
    let half = n / 2;
    let mut approx = Vec::with_capacity(half);
    let mut detail = Vec::with_capacity(half);
    for i in 0..half {
        let base = 2 * i;
        let (mut a, mut d) = (0.0, 0.0);
        if base + DB5_TAPS <= n {
            let seg = &signal[base..base + DB5_TAPS];
            for k in 0..DB5_TAPS {
                a += filters.lowpass[k] * seg[k];
                d += filters.highpass[k] * seg[k];
            }
        } else {
            for k in 0..DB5_TAPS {
                let x = signal[(base + k) % n];
                a += filters.lowpass[k] * x;
                d += filters.highpass[k] * x;
            }
        }
        approx.push(a);
        detail.push(d);
    }
    Ok((approx, detail))
}

/// Inverse of [`dwt_step`] (periodic boundary).
pub fn idwt_step(approx: &[f64], detail: &[f64], filters: &WaveletFilterPair) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::DimensionMismatch {
            expected: approx.len(),
            actual: detail.len(),
        });
    }
    let n = 2 * approx.len();
    check_step_len(n)?;
    let mut out = vec![0.0; n];
    for (i, (a, d)) in approx.iter().zip(detail).enumerate() {
        for k in 0..DB5_TAPS {
            out[(2 * i + k) % n] += filters.lowpass[k] * a + filters.highpass[k] * d;
        }
    }
    Ok(out)
}

/// Full multi-level decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// `details[j]` is the detail band at level `j + 1`.
    pub details: Vec<Vec<f64>>,
    pub approx: Vec<f64>,
}

pub fn decompose(window: &[f64], config: &DecompositionConfig) -> Result<Decomposition> {
    config.check_len(window.len())?;
    let filters = db5_filters();
    let mut approx = window.to_vec();
    let mut details = Vec::with_capacity(config.levels);
    for _ in 0..config.levels {
        let (a, d) = dwt_step(&approx, &filters, config.boundary)?;
        details.push(d);
        approx = a;
    }
    Ok(Decomposition { details, approx })
}

/// Detail coefficients of the last level after cascading `config.levels`
/// analysis steps down the approximation branch.
pub fn extract_features(window: &[f64], config: &DecompositionConfig) -> Result<WaveletFeatures> {
    let mut dec = decompose(window, config)?;
    let coefficients = dec.details.pop().unwrap_or_default();
    Ok(WaveletFeatures {
        level: config.levels,
        coefficients,
        source_window_len: window.len(),
    })
}
