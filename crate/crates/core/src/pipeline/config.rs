use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::{min_calibration_scores, SvmParams};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::signalgen::{ChirpSpec, NoiseSpec, ShiftConvention};
use crate::wavelet::DecompositionConfig;

/// Noise parameters as they appear in the config file; the seed is the
/// experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub mean: f64,
    pub std_dev: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std_dev: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialCounts {
    pub train_pos: usize,
    pub train_neg: usize,
    /// Noise windows used to set each detector's threshold.
    pub calibration: usize,
    pub eval_noise: usize,
    pub eval_pulse: usize,
    pub covariance: usize,
    pub bootstrap: usize,
    pub combiner_pos: usize,
    pub combiner_neg: usize,
    pub combiner_calibration: usize,
    pub combiner_eval: usize,
    pub roc: usize,
    pub roc_points: usize,
}

impl Default for TrialCounts {
    fn default() -> Self {
        Self {
            train_pos: 500,
            train_neg: 500,
            calibration: 200_000,
            eval_noise: 50_000,
            eval_pulse: 5_000,
            covariance: 5_000,
            bootstrap: 1_000,
            combiner_pos: 2_000,
            combiner_neg: 2_000,
            combiner_calibration: 200_000,
            combiner_eval: 5_000,
            roc: 5_000,
            roc_points: 41,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    /// Length of generated search streams.
    pub stream_len: usize,
    /// Pulse onset inside generated search streams.
    pub onset: usize,
    pub localization_snr_db: f64,
    pub localization_trials: usize,
    pub localization_radius: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self {
            stream_len: 2048,
            onset: 512,
            localization_snr_db: 0.0,
            localization_trials: 200,
            localization_radius: 6,
        }
    }
}

/// Everything a run depends on. Serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub snr_db: f64,
    pub target_pfa: f64,
    pub shifts: Vec<usize>,
    pub shift_convention: ShiftConvention,
    pub output_dir: PathBuf,
    pub chirp: ChirpSpec,
    pub noise: NoiseConfig,
    pub wavelet: DecompositionConfig,
    pub svm: SvmParams,
    pub trials: TrialCounts,
    pub search: SearchSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 20_040_101,
            snr_db: -15.0,
            target_pfa: 1e-3,
            shifts: vec![0, 11, 23],
            shift_convention: ShiftConvention::LeadingNoise,
            output_dir: PathBuf::from("out"),
            chirp: ChirpSpec::default(),
            noise: NoiseConfig::default(),
            wavelet: DecompositionConfig::default(),
            svm: SvmParams::default(),
            trials: TrialCounts::default(),
            search: SearchSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            chirp: self.chirp,
            noise: NoiseSpec {
                mean: self.noise.mean,
                std_dev: self.noise.std_dev,
                seed: self.seed,
            },
            wavelet: self.wavelet,
            convention: self.shift_convention,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario().validate()?;
        self.svm.validate()?;
        if !(self.target_pfa > 0.0 && self.target_pfa < 1.0) {
            return Err(Error::config("target_pfa", "must lie in (0, 1)"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db", "must be finite"));
        }
        if self.shifts.is_empty() {
            return Err(Error::config("shifts", "at least one shift is required"));
        }
        if self.shifts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("shifts", "must be sorted ascending and distinct"));
        }
        let s = self.chirp.num_samples;
        if let Some(&bad) = self.shifts.iter().find(|&&k| k >= s) {
            return Err(Error::config(
                "shifts",
                format!("shift {bad} is not below the window length {s}"),
            ));
        }
        let t = &self.trials;
        if t.train_pos == 0 || t.train_neg == 0 {
            return Err(Error::config("trials.train_pos", "training counts must be >= 1"));
        }
        let needed = min_calibration_scores(self.target_pfa);
        for (field, n) in [
            ("trials.calibration", t.calibration),
            ("trials.eval_noise", t.eval_noise),
            ("trials.combiner_calibration", t.combiner_calibration),
        ] {
            if n < needed {
                return Err(Error::config(
                    field,
                    format!("{n} is below the {needed} samples needed to resolve P_fa {}", self.target_pfa),
                ));
            }
        }
        for (field, n) in [
            ("trials.eval_pulse", t.eval_pulse),
            ("trials.combiner_eval", t.combiner_eval),
            ("trials.roc", t.roc),
        ] {
            if n < 100 {
                return Err(Error::config(field, "must be at least 100"));
            }
        }
        if t.covariance < crate::analysis::MIN_COVARIANCE_OBS {
            return Err(Error::config("trials.covariance", "must be at least 30"));
        }
        if t.bootstrap < 2 {
            return Err(Error::config("trials.bootstrap", "must be at least 2"));
        }
        if t.combiner_pos == 0 || t.combiner_neg == 0 {
            return Err(Error::config("trials.combiner_pos", "combiner counts must be >= 1"));
        }
        if t.roc_points < 2 {
            return Err(Error::config("trials.roc_points", "must be at least 2"));
        }
        let sr = &self.search;
        if sr.stream_len < s {
            return Err(Error::config("search.stream_len", "must be at least the window length"));
        }
        if sr.onset + s > sr.stream_len {
            return Err(Error::config("search.onset", "pulse would overrun the stream"));
        }
        if sr.localization_trials == 0 {
            return Err(Error::config("search.localization_trials", "must be at least 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML form, ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }
}
