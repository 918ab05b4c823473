//! Synthetic signals: linear chirp pulses, white Gaussian noise, SNR scaling,
//! shifted training windows and long streams with an embedded pulse.
//!
//! Every random output is a pure function of `(NoiseSpec::seed, stream_id)`.
//! Noise comes from ChaCha8 keyed by the seed, with the 64-bit ChaCha stream
//! selector set to `stream_id`, and Gaussian variates are drawn with the
//! ziggurat sampler of `rand_distr::Normal`. Distinct stream ids therefore give
//! non-overlapping keystreams and the output is bit-reproducible per version.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear-frequency chirp. Frequencies are normalized (cycles per sample).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpSpec {
    pub num_samples: usize,
    pub start_freq: f64,
    pub end_freq: f64,
    pub amplitude: f64,
}

/// The default sweep stays inside the level-4 detail band of db5
/// (roughly 1/32 to 1/16 cycles per sample), so the d4 features see the
/// whole pulse and their energy barely depends on the window phase.
impl Default for ChirpSpec {
    fn default() -> Self {
        Self {
            num_samples: 1024,
            start_freq: 0.04,
            end_freq: 0.055,
            amplitude: 1.0,
        }
    }
}

impl ChirpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 2 {
            return Err(Error::config("chirp.num_samples", "must be at least 2"));
        }
        for (field, f) in [
            ("chirp.start_freq", self.start_freq),
            ("chirp.end_freq", self.end_freq),
        ] {
            if !(f > 0.0 && f < 0.5) {
                return Err(Error::config(field, format!("{f} is outside (0, 0.5)")));
            }
        }
        if self.start_freq == self.end_freq {
            return Err(Error::config(
                "chirp.end_freq",
                "must differ from start_freq (a chirp sweeps)",
            ));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::config("chirp.amplitude", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// White Gaussian noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub std_dev: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std_dev: 1.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn variance(&self) -> f64 {
        self.std_dev * self.std_dev
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.std_dev > 0.0 && self.std_dev.is_finite()) {
            return Err(Error::config("noise.std_dev", "must be finite and > 0"));
        }
        if !self.mean.is_finite() {
            return Err(Error::config("noise.mean", "must be finite"));
        }
        Ok(())
    }
}

/// Ground truth for a pulse placed inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTruth {
    pub onset_index: usize,
    pub pulse_len: usize,
    pub snr_db: f64,
}

/// Real-valued samples with optional pulse placement.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFrame {
    pub samples: Vec<f64>,
    pub truth: Option<PulseTruth>,
}

impl SignalFrame {
    pub fn new(samples: Vec<f64>, truth: Option<PulseTruth>) -> Result<Self> {
        if let Some(t) = truth {
            if t.onset_index + t.pulse_len > samples.len() {
                return Err(Error::InvalidInput(format!(
                    "truth onset {} + length {} exceeds frame length {}",
                    t.onset_index,
                    t.pulse_len,
                    samples.len()
                )));
            }
        }
        Ok(Self { samples, truth })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Where the noise sits in a partially filled window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftConvention {
    /// `n` noise samples, then the first `S - n` pulse samples.
    #[default]
    LeadingNoise,
    /// The last `S - n` pulse samples, then `n` noise samples.
    TrailingNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowClass {
    Positive,
    Negative,
}

/// Fraction of the pulse that must lie inside a window for it to count as a
/// complete-pulse (positive) window.
pub const POSITIVE_OCCUPANCY: f64 = 0.99;

/// Class of a window that holds `shift` noise samples and `S - shift` pulse
/// samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftLabel {
    pub shift: usize,
    pub class: WindowClass,
}

impl ShiftLabel {
    pub fn new(shift: usize, window_len: usize) -> Result<Self> {
        if shift >= window_len {
            return Err(Error::InvalidInput(format!(
                "shift {shift} must be below window length {window_len}"
            )));
        }
        let occupancy = (window_len - shift) as f64 / window_len as f64;
        let class = if occupancy >= POSITIVE_OCCUPANCY {
            WindowClass::Positive
        } else {
            WindowClass::Negative
        };
        Ok(Self { shift, class })
    }
}

/// Purpose tags that partition the 64-bit stream id space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum StreamDomain {
    TrainPositive = 1,
    TrainNegative = 2,
    Calibration = 3,
    EvalNoise = 4,
    EvalPulse = 5,
    Covariance = 6,
    Search = 7,
    CombinerTrain = 8,
    CombinerCalibration = 9,
    CombinerEval = 10,
    Roc = 11,
    Bootstrap = 12,
    RocPulse = 13,
    RocProbe = 14,
    Localization = 15,
}

/// Build a stream id from a domain tag, a shift (or other small discriminator)
/// and a per-trial index. Layout: `domain:8 | tag:16 | index:40`.
pub fn stream_id(domain: StreamDomain, tag: usize, index: u64) -> u64 {
    debug_assert!(tag < (1 << 16));
    debug_assert!(index < (1 << 40));
    ((domain as u64) << 56) | (((tag as u64) & 0xffff) << 40) | (index & ((1 << 40) - 1))
}

/// Deterministic RNG for one `(seed, stream_id)` pair.
pub fn stream_rng(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Samples of a linear chirp with zero initial phase:
/// `A·sin(2π(f0·n + (f1 - f0)·n² / (2(N - 1))))`, so the instantaneous
/// frequency moves from `f0` at `n = 0` to `f1` at `n = N - 1`.
pub fn generate_chirp(spec: &ChirpSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let n_last = (spec.num_samples - 1) as f64;
    let sweep = (spec.end_freq - spec.start_freq) / (2.0 * n_last);
    Ok((0..spec.num_samples)
        .map(|n| {
            let t = n as f64;
            spec.amplitude * (2.0 * PI * (spec.start_freq * t + sweep * t * t)).sin()
        })
        .collect())
}

pub fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64
}

/// Rescale `pulse` so that its mean power over its own samples divided by the
/// noise variance equals `10^(snr_db / 10)`.
pub fn scale_to_snr(pulse: &[f64], snr_db: f64, noise: &NoiseSpec) -> Result<Vec<f64>> {
    if pulse.is_empty() {
        return Err(Error::InvalidInput("pulse is empty".into()));
    }
    noise.validate()?;
    if !snr_db.is_finite() {
        return Err(Error::InvalidInput(format!("snr_db {snr_db} is not finite")));
    }
    let power = mean_power(pulse);
    if power == 0.0 {
        return Err(Error::InvalidInput(
            "all-zero pulse cannot be scaled to a finite SNR".into(),
        ));
    }
    let target = 10f64.powf(snr_db / 10.0) * noise.variance();
    let gain = (target / power).sqrt();
    Ok(pulse.iter().map(|x| x * gain).collect())
}

/// SNR in dB of `pulse` against `noise`; `-inf` for a silent pulse.
pub fn snr_db_of(pulse: &[f64], noise: &NoiseSpec) -> f64 {
    10.0 * (mean_power(pulse) / noise.variance()).log10()
}

/// Fill `out` with i.i.d. Gaussian samples for `(noise.seed, stream_id)`.
pub fn fill_noise(out: &mut [f64], noise: &NoiseSpec, stream_id: u64) -> Result<()> {
    let dist = Normal::new(noise.mean, noise.std_dev)
        .map_err(|e| Error::config("noise.std_dev", e.to_string()))?;
    let mut rng = stream_rng(noise.seed, stream_id);
    for x in out.iter_mut() {
        *x = dist.sample(&mut rng);
    }
    Ok(())
}

pub fn generate_noise(n: usize, noise: &NoiseSpec, stream_id: u64) -> Result<Vec<f64>> {
    if n < 1 {
        return Err(Error::InvalidInput("noise length must be at least 1".into()));
    }
    let mut out = vec![0.0; n];
    fill_noise(&mut out, noise, stream_id)?;
    Ok(out)
}

/// A window of `pulse.len()` samples holding `shift` noise-only samples and
/// the leading `S - shift` pulse samples (leading-noise layout).
pub fn make_training_window(
    shift: usize,
    pulse: &[f64],
    noise: &NoiseSpec,
    stream_id: u64,
) -> Result<SignalFrame> {
    make_shifted_window(shift, pulse, noise, stream_id, ShiftConvention::LeadingNoise)
}

pub fn make_shifted_window(
    shift: usize,
    pulse: &[f64],
    noise: &NoiseSpec,
    stream_id: u64,
    convention: ShiftConvention,
) -> Result<SignalFrame> {
    let len = pulse.len();
    if shift >= len {
        return Err(Error::InvalidInput(format!(
            "shift {shift} must be below window length {len}"
        )));
    }
    let mut samples = generate_noise(len, noise, stream_id)?;
    let snr_db = snr_db_of(pulse, noise);
    let (onset_index, fragment) = match convention {
        ShiftConvention::LeadingNoise => (shift, &pulse[..len - shift]),
        ShiftConvention::TrailingNoise => (0, &pulse[shift..]),
    };
    for (x, p) in samples[onset_index..].iter_mut().zip(fragment) {
        *x += p;
    }
    SignalFrame::new(
        samples,
        Some(PulseTruth {
            onset_index,
            pulse_len: fragment.len(),
            snr_db,
        }),
    )
}

/// `stream_len` noise samples with `pulse` added starting at `onset`.
pub fn embed_pulse(
    stream_len: usize,
    pulse: &[f64],
    onset: usize,
    noise: &NoiseSpec,
    stream_id: u64,
) -> Result<SignalFrame> {
    if pulse.is_empty() {
        return Err(Error::InvalidInput("pulse is empty".into()));
    }
    if onset + pulse.len() > stream_len {
        return Err(Error::InvalidInput(format!(
            "pulse at onset {onset} with length {} overruns stream of {stream_len}",
            pulse.len()
        )));
    }
    let mut samples = generate_noise(stream_len, noise, stream_id)?;
    for (x, p) in samples[onset..].iter_mut().zip(pulse) {
        *x += p;
    }
    SignalFrame::new(
        samples,
        Some(PulseTruth {
            onset_index: onset,
            pulse_len: pulse.len(),
            snr_db: snr_db_of(pulse, noise),
        }),
    )
}
