//! Stride-1 time search over a stream and the multi-shift detector bank.
//!
//! A stream of `S_t` samples yields `S_t - S + 1` windows of `S` samples;
//! window `k` covers `samples[k .. k + S)`, so neighbours differ by one
//! sample. Every detector of the bank scores every window.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{CalibratedDetector, Decision};
use crate::error::{Error, Result};
use crate::signalgen::{ShiftConvention, SignalFrame};
use crate::wavelet::{extract_features, DecompositionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSearchConfig {
    pub stream_len: usize,
    pub window_len: usize,
}

impl TimeSearchConfig {
    pub fn new(stream_len: usize, window_len: usize) -> Result<Self> {
        window_count(stream_len, window_len)?;
        Ok(Self {
            stream_len,
            window_len,
        })
    }

    pub fn window_count(&self) -> usize {
        self.stream_len - self.window_len + 1
    }
}

pub fn window_count(stream_len: usize, window_len: usize) -> Result<usize> {
    if window_len == 0 {
        return Err(Error::InvalidInput("window length must be at least 1".into()));
    }
    if stream_len < window_len {
        return Err(Error::InvalidInput(format!(
            "stream of {stream_len} samples is shorter than the {window_len}-sample window"
        )));
    }
    Ok(stream_len - window_len + 1)
}

/// `(window_index, window)` pairs with stride 1.
pub fn iter_windows(
    frame: &SignalFrame,
    window_len: usize,
) -> Result<impl Iterator<Item = (usize, &[f64])>> {
    window_count(frame.len(), window_len)?;
    Ok(frame.samples.windows(window_len).enumerate())
}

/// Detectors at distinct, increasing shifts over one wavelet configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorBank {
    detectors: Vec<CalibratedDetector>,
    wavelet: DecompositionConfig,
    window_len: usize,
    convention: ShiftConvention,
}

impl DetectorBank {
    pub fn new(
        detectors: Vec<CalibratedDetector>,
        wavelet: DecompositionConfig,
        window_len: usize,
        convention: ShiftConvention,
    ) -> Result<Self> {
        if detectors.is_empty() {
            return Err(Error::InvalidInput("detector bank is empty".into()));
        }
        wavelet.check_len(window_len)?;
        let n_features = wavelet.feature_len(window_len);
        for pair in detectors.windows(2) {
            if pair[1].shift() <= pair[0].shift() {
                return Err(Error::InvalidInput(format!(
                    "bank shifts must be strictly increasing ({} then {})",
                    pair[0].shift(),
                    pair[1].shift()
                )));
            }
        }
        for det in &detectors {
            if det.model.n_features() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    actual: det.model.n_features(),
                });
            }
            if det.shift() >= window_len {
                return Err(Error::InvalidInput(format!(
                    "shift {} is not below window length {window_len}",
                    det.shift()
                )));
            }
        }
        Ok(Self {
            detectors,
            wavelet,
            window_len,
            convention,
        })
    }

    pub fn detectors(&self) -> &[CalibratedDetector] {
        &self.detectors
    }

    pub fn shifts(&self) -> Vec<usize> {
        self.detectors.iter().map(CalibratedDetector::shift).collect()
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn wavelet(&self) -> &DecompositionConfig {
        &self.wavelet
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn convention(&self) -> ShiftConvention {
        self.convention
    }

    /// Smooth scores of every detector on one window, in bank order.
    pub fn score_window(&self, window: &[f64]) -> Result<Vec<f64>> {
        let feats = extract_features(window, &self.wavelet)?;
        self.detectors
            .iter()
            .map(|d| d.model.decision_value(&feats.coefficients))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub window_index: usize,
    pub shift: usize,
    pub smooth_score: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedDetection {
    pub hypothesized_onset: usize,
    pub votes: usize,
    /// Smooth score per shift, only for detectors whose window is in range.
    pub per_shift_scores: BTreeMap<usize, f64>,
}

fn window_events(bank: &DetectorBank, index: usize, window: &[f64]) -> Result<Vec<DetectionEvent>> {
    let scores = bank.score_window(window)?;
    Ok(bank
        .detectors
        .iter()
        .zip(scores)
        .map(|(det, s)| DetectionEvent {
            window_index: index,
            shift: det.shift(),
            smooth_score: s,
            decision: det.decide(s),
        })
        .collect())
}

/// One event per (window, detector), ordered by window index then bank order.
pub fn run_bank(frame: &SignalFrame, bank: &DetectorBank) -> Result<Vec<DetectionEvent>> {
    let n = window_count(frame.len(), bank.window_len)?;
    let per_window: Vec<Vec<DetectionEvent>> = (0..n)
        .into_par_iter()
        .map(|k| window_events(bank, k, &frame.samples[k..k + bank.window_len]))
        .collect::<Result<_>>()?;
    Ok(per_window.into_iter().flatten().collect())
}

/// [`run_bank`] on a dedicated pool of `workers` threads.
pub fn run_bank_with_workers(
    frame: &SignalFrame,
    bank: &DetectorBank,
    workers: usize,
) -> Result<Vec<DetectionEvent>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_bank(frame, bank))
}

/// Group events by hypothesized pulse onset.
///
/// Under the leading-noise convention the `k`-shift detector sees the pulse
/// at window `h - k` for onset `h` (`h + k` under trailing noise). Onsets near
/// the stream edges keep only the detectors whose window exists.
pub fn aggregate_events(
    events: &[DetectionEvent],
    bank: &DetectorBank,
) -> Result<Vec<AggregatedDetection>> {
    let shifts = bank.shifts();
    let m = shifts.len();
    if events.is_empty() || !events.len().is_multiple_of(m) {
        return Err(Error::InvalidInput(format!(
            "{} events do not form whole windows for a bank of {m}",
            events.len()
        )));
    }
    for (i, e) in events.iter().enumerate() {
        if e.window_index != i / m || e.shift != shifts[i % m] {
            return Err(Error::InvalidInput(format!(
                "event {i} (window {}, shift {}) does not belong to a single run of this bank",
                e.window_index, e.shift
            )));
        }
    }
    let n_windows = events.len() / m;
    let max_shift = *shifts.last().unwrap_or(&0);
    let min_shift = shifts[0];
    let onsets = match bank.convention {
        ShiftConvention::LeadingNoise => min_shift..n_windows + max_shift,
        ShiftConvention::TrailingNoise => 0..n_windows.saturating_sub(min_shift),
    };
    let mut out = Vec::with_capacity(onsets.len());
    for h in onsets {
        let mut per_shift_scores = BTreeMap::new();
        let mut votes = 0;
        for (slot, &k) in shifts.iter().enumerate() {
            let idx = match bank.convention {
                ShiftConvention::LeadingNoise => h.checked_sub(k),
                ShiftConvention::TrailingNoise => Some(h + k),
            };
            let Some(idx) = idx.filter(|&i| i < n_windows) else {
                continue;
            };
            let e = &events[idx * m + slot];
            per_shift_scores.insert(k, e.smooth_score);
            if e.decision.is_positive() {
                votes += 1;
            }
        }
        if !per_shift_scores.is_empty() {
            out.push(AggregatedDetection {
                hypothesized_onset: h,
                votes,
                per_shift_scores,
            });
        }
    }
    Ok(out)
}
