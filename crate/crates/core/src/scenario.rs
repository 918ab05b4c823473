//! Signal model shared by training, calibration and evaluation: which pulse,
//! which noise, which wavelet features, and where noise sits in a shifted
//! window.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signalgen::{
    fill_noise, generate_chirp, make_shifted_window, scale_to_snr, ChirpSpec, NoiseSpec,
    ShiftConvention,
};
use crate::wavelet::{extract_features, DecompositionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Scenario {
    pub chirp: ChirpSpec,
    pub noise: NoiseSpec,
    pub wavelet: DecompositionConfig,
    pub convention: ShiftConvention,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.chirp.validate()?;
        self.noise.validate()?;
        self.wavelet.check_len(self.chirp.num_samples)
    }

    pub fn window_len(&self) -> usize {
        self.chirp.num_samples
    }

    pub fn n_features(&self) -> usize {
        self.wavelet.feature_len(self.window_len())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self {
            noise: self.noise.with_seed(seed),
            ..self
        }
    }

    /// The chirp scaled to `snr_db` against this scenario's noise.
    pub fn pulse(&self, snr_db: f64) -> Result<Vec<f64>> {
        scale_to_snr(&generate_chirp(&self.chirp)?, snr_db, &self.noise)
    }

    /// Level-`L` detail features of a shifted pulse window.
    pub fn pulse_features(&self, pulse: &[f64], shift: usize, stream_id: u64) -> Result<Vec<f64>> {
        let w = make_shifted_window(shift, pulse, &self.noise, stream_id, self.convention)?;
        Ok(extract_features(&w.samples, &self.wavelet)?.coefficients)
    }

    /// Level-`L` detail features of a noise-only window.
    pub fn noise_features(&self, stream_id: u64) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.window_len()];
        fill_noise(&mut w, &self.noise, stream_id)?;
        Ok(extract_features(&w, &self.wavelet)?.coefficients)
    }

    /// Start index, inside an aligned stream, of the window seen by the
    /// `shift` detector when the pulse starts at `onset`.
    pub fn aligned_window_start(&self, onset: usize, shift: usize) -> Option<usize> {
        match self.convention {
            ShiftConvention::LeadingNoise => onset.checked_sub(shift),
            ShiftConvention::TrailingNoise => Some(onset + shift),
        }
    }
}
