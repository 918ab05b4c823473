//! Monte Carlo evaluation: false-alarm and detection rates with Wilson
//! intervals, ROC sweeps, covariance of aligned bank scores, and a linear
//! second-stage combiner over the bank's smooth scores.

mod combiner;
pub mod stats;

pub use combiner::{evaluate_fusion, fit_combiner, train_combiner, CombinerModel, FusionReport};
pub use stats::{
    bootstrap_covariance_se, correlation, sample_covariance, symmetric_eigenvalues,
    wilson_interval, CovarianceAccumulator, RateEstimate,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{noise_scores, CalibratedDetector, LinearModel};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::search::{run_bank, DetectorBank};
use crate::signalgen::{embed_pulse, fill_noise, stream_id, StreamDomain};
use crate::wavelet::extract_features;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub n_trials: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub target_pfa: f64,
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials < 100 {
            return Err(Error::config("n_trials", "must be at least 100"));
        }
        required_trials(self.target_pfa, self.n_trials)
    }
}

/// P_fa and (optionally) P_d of one detector, with the settings used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub shift: usize,
    pub threshold: f64,
    pub target_pfa: f64,
    pub pfa: RateEstimate,
    pub pd: Option<RateEstimate>,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

fn required_trials(target_pfa: f64, n_trials: usize) -> Result<()> {
    let needed = crate::detector::min_calibration_scores(target_pfa);
    if n_trials < needed {
        return Err(Error::InvalidInput(format!(
            "{n_trials} trials cannot resolve a rate of {target_pfa}; need at least {needed}"
        )));
    }
    Ok(())
}

fn count_above(scores: &[f64], threshold: f64) -> usize {
    scores.iter().filter(|&&s| s > threshold).count()
}

/// Fraction of fresh noise-only windows declared positive.
pub fn estimate_pfa(
    det: &CalibratedDetector,
    scenario: &Scenario,
    n_trials: usize,
    seed: u64,
) -> Result<RateEstimate> {
    required_trials(det.target_pfa, n_trials)?;
    let scores = noise_scores(&det.model, scenario, StreamDomain::EvalNoise, n_trials, seed)?;
    RateEstimate::new(count_above(&scores, det.threshold), n_trials)
}

/// Smooth scores of `n` shifted-pulse windows built from an explicit pulse;
/// the noise of window `i` does not depend on the shift.
pub fn pulse_scores(
    model: &LinearModel,
    scenario: &Scenario,
    pulse: &[f64],
    shift: usize,
    domain: StreamDomain,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sc = scenario.with_seed(seed);
    (0..n as u64)
        .into_par_iter()
        .map(|i| model.decision_value(&sc.pulse_features(pulse, shift, stream_id(domain, 0, i))?))
        .collect()
}

/// Fraction of fresh `shift`-matched pulse windows declared positive.
pub fn estimate_pd(
    det: &CalibratedDetector,
    scenario: &Scenario,
    shift: usize,
    snr_db: f64,
    n_trials: usize,
    seed: u64,
) -> Result<RateEstimate> {
    let pulse = scenario.pulse(snr_db)?;
    estimate_pd_with_pulse(det, scenario, &pulse, shift, n_trials, seed)
}

pub fn estimate_pd_with_pulse(
    det: &CalibratedDetector,
    scenario: &Scenario,
    pulse: &[f64],
    shift: usize,
    n_trials: usize,
    seed: u64,
) -> Result<RateEstimate> {
    if n_trials == 0 {
        return Err(Error::InvalidInput("n_trials must be at least 1".into()));
    }
    let scores = pulse_scores(&det.model, scenario, pulse, shift, StreamDomain::EvalPulse, n_trials, seed)?;
    RateEstimate::new(count_above(&scores, det.threshold), n_trials)
}

/// P_fa on noise and P_d on the detector's own shift at `snr_db`.
pub fn evaluate_detector(
    det: &CalibratedDetector,
    scenario: &Scenario,
    snr_db: f64,
    n_noise: usize,
    n_pulse: usize,
    seed: u64,
) -> Result<EvalReport> {
    let pfa = estimate_pfa(det, scenario, n_noise, seed)?;
    let pd = estimate_pd(det, scenario, det.shift(), snr_db, n_pulse, seed)?;
    Ok(EvalReport {
        shift: det.shift(),
        threshold: det.threshold,
        target_pfa: det.target_pfa,
        pfa,
        pd: Some(pd),
        snr_db: Some(snr_db),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub pfa: RateEstimate,
    pub pd: RateEstimate,
}

/// `(P_fa, P_d)` per threshold, all from one shared set of noise and pulse
/// scores so both curves are monotone in the threshold.
pub fn roc_sweep(
    model: &LinearModel,
    scenario: &Scenario,
    shift: usize,
    snr_db: f64,
    n_trials: usize,
    thresholds: &[f64],
    seed: u64,
) -> Result<Vec<RocPoint>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("no thresholds to sweep".into()));
    }
    if thresholds.windows(2).any(|w| w[0].partial_cmp(&w[1]).is_none_or(|o| o.is_gt())) {
        return Err(Error::InvalidInput("thresholds must be sorted ascending".into()));
    }
    if n_trials == 0 {
        return Err(Error::InvalidInput("n_trials must be at least 1".into()));
    }
    let noise = noise_scores(model, scenario, StreamDomain::Roc, n_trials, seed)?;
    let pulse = scenario.pulse(snr_db)?;
    let signal = pulse_scores(model, scenario, &pulse, shift, StreamDomain::RocPulse, n_trials, seed)?;
    thresholds
        .iter()
        .map(|&t| {
            Ok(RocPoint {
                threshold: t,
                pfa: RateEstimate::new(count_above(&noise, t), n_trials)?,
                pd: RateEstimate::new(count_above(&signal, t), n_trials)?,
            })
        })
        .collect()
}

/// `n` evenly spaced thresholds from well below to well above the range of
/// a 2000-window noise probe.
pub fn default_thresholds(model: &LinearModel, scenario: &Scenario, n: usize, seed: u64) -> Result<Vec<f64>> {
    let probe = noise_scores(model, scenario, StreamDomain::RocProbe, 2000, seed)?;
    let (lo, hi) = probe
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &s| (a.min(s), b.max(s)));
    let span = (hi - lo).max(1e-12);
    let (lo, hi) = (lo - span, hi + 2.0 * span);
    let n = n.max(2);
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Whether an observation carries a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Pulse,
    Noise,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Pulse => "pulse",
            Condition::Noise => "noise",
        }
    }
}

fn check_bank_scenario(bank: &DetectorBank, scenario: &Scenario) -> Result<()> {
    if bank.window_len() != scenario.window_len()
        || bank.wavelet() != &scenario.wavelet
        || bank.convention() != scenario.convention
    {
        return Err(Error::InvalidInput(
            "detector bank and scenario disagree on window length, wavelet or shift convention".into(),
        ));
    }
    Ok(())
}

/// Smooth scores of every bank detector on its own aligned window of one
/// shared stream.
///
/// The stream holds `S + max_shift` samples; with a pulse present it starts
/// where each `k`-shift detector's window has exactly `k` noise samples
/// before (leading) or after (trailing) the pulse fragment.
pub fn aligned_scores(
    bank: &DetectorBank,
    scenario: &Scenario,
    pulse: Option<&[f64]>,
    stream: u64,
) -> Result<Vec<f64>> {
    let s = bank.window_len();
    let shifts = bank.shifts();
    let max_shift = *shifts.last().unwrap_or(&0);
    let onset = match scenario.convention {
        crate::signalgen::ShiftConvention::LeadingNoise => max_shift,
        crate::signalgen::ShiftConvention::TrailingNoise => 0,
    };
    let mut samples = vec![0.0; s + max_shift];
    fill_noise(&mut samples, &scenario.noise, stream)?;
    if let Some(p) = pulse {
        if p.len() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                actual: p.len(),
            });
        }
        for (x, v) in samples[onset..].iter_mut().zip(p) {
            *x += v;
        }
    }
    bank.detectors()
        .iter()
        .map(|det| {
            let start = scenario
                .aligned_window_start(onset, det.shift())
                .ok_or_else(|| Error::InvalidInput("aligned window before stream start".into()))?;
            let feats = extract_features(&samples[start..start + s], bank.wavelet())?;
            det.model.decision_value(&feats.coefficients)
        })
        .collect()
}

/// `n` aligned score vectors for a condition.
pub fn aligned_score_rows(
    bank: &DetectorBank,
    scenario: &Scenario,
    condition: Condition,
    snr_db: f64,
    n: usize,
    domain: StreamDomain,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_bank_scenario(bank, scenario)?;
    let sc = scenario.with_seed(seed);
    let pulse = match condition {
        Condition::Pulse => Some(sc.pulse(snr_db)?),
        Condition::Noise => None,
    };
    let tag = condition as usize;
    (0..n as u64)
        .into_par_iter()
        .map(|i| aligned_scores(bank, &sc, pulse.as_deref(), stream_id(domain, tag, i)))
        .collect()
}

/// Sample covariance of bank scores under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub matrix: Vec<Vec<f64>>,
    /// Bootstrap standard error of each entry.
    pub std_errors: Vec<Vec<f64>>,
    pub n_obs: usize,
    pub condition: Condition,
    pub shifts: Vec<usize>,
    pub snr_db: Option<f64>,
}

impl CovarianceReport {
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        correlation(&self.matrix, i, j)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.matrix.len();
        (0..d).all(|i| (0..d).all(|j| (self.matrix[i][j] - self.matrix[j][i]).abs() <= tol))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        symmetric_eigenvalues(&self.matrix)[0]
    }
}

pub const MIN_COVARIANCE_OBS: usize = 30;

/// Covariance of aligned smooth scores over `n_obs` independent scenarios.
pub fn score_covariance(
    bank: &DetectorBank,
    scenario: &Scenario,
    condition: Condition,
    snr_db: f64,
    n_obs: usize,
    n_bootstrap: usize,
    seed: u64,
) -> Result<CovarianceReport> {
    if bank.len() < 2 {
        return Err(Error::InvalidInput("covariance needs a bank of at least 2 detectors".into()));
    }
    if n_obs < MIN_COVARIANCE_OBS {
        return Err(Error::InvalidInput(format!(
            "covariance needs at least {MIN_COVARIANCE_OBS} observations, got {n_obs}"
        )));
    }
    let rows = aligned_score_rows(bank, scenario, condition, snr_db, n_obs, StreamDomain::Covariance, seed)?;
    let matrix = sample_covariance(&rows)?;
    let std_errors = bootstrap_covariance_se(&rows, n_bootstrap, seed ^ condition as u64)?;
    Ok(CovarianceReport {
        matrix,
        std_errors,
        n_obs,
        condition,
        shifts: bank.shifts(),
        snr_db: match condition {
            Condition::Pulse => Some(snr_db),
            Condition::Noise => None,
        },
    })
}

/// `|A_ij - B_ij| / sqrt(se_A² + se_B²)` for every entry.
pub fn covariance_z_scores(a: &CovarianceReport, b: &CovarianceReport) -> Result<Vec<Vec<f64>>> {
    if a.shifts != b.shifts {
        return Err(Error::InvalidInput("covariance reports cover different shifts".into()));
    }
    let d = a.matrix.len();
    Ok((0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let se = (a.std_errors[i][j].powi(2) + b.std_errors[i][j].powi(2)).sqrt();
                    let diff = (a.matrix[i][j] - b.matrix[i][j]).abs();
                    if se > 0.0 {
                        diff / se
                    } else if diff == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        })
        .collect())
}

/// Where one detector fires when a single pulse is embedded in a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationTrial {
    pub trial: usize,
    pub n_fired: usize,
    /// Firing windows further than the radius from the true onset.
    pub n_outside: usize,
    pub onset_fired: bool,
    /// Signed offsets (window index minus onset) of the extreme firings.
    pub min_offset: Option<i64>,
    pub max_offset: Option<i64>,
}

impl LocalizationTrial {
    /// Fired at least once and never outside the radius.
    pub fn contained(&self) -> bool {
        self.n_fired > 0 && self.n_outside == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub shift: usize,
    pub snr_db: f64,
    pub stream_len: usize,
    pub onset: usize,
    pub radius: usize,
    pub trials: Vec<LocalizationTrial>,
    pub contained: RateEstimate,
    pub onset_fired: RateEstimate,
    /// Firings outside the radius expected from noise alone at the
    /// detector's calibrated rate.
    pub expected_noise_alarms: f64,
}

/// Time-search `n_trials` streams, each with one pulse at `onset`, using a
/// single detector, and record where it fires.
#[allow(clippy::too_many_arguments)]
pub fn localization_study(
    det: &CalibratedDetector,
    scenario: &Scenario,
    snr_db: f64,
    stream_len: usize,
    onset: usize,
    n_trials: usize,
    radius: usize,
    seed: u64,
) -> Result<LocalizationReport> {
    if n_trials == 0 {
        return Err(Error::InvalidInput("n_trials must be at least 1".into()));
    }
    let sc = scenario.with_seed(seed);
    let bank = DetectorBank::new(vec![det.clone()], sc.wavelet, sc.window_len(), sc.convention)?;
    let pulse = sc.pulse(snr_db)?;
    let shift = det.shift();
    let trials: Vec<LocalizationTrial> = (0..n_trials)
        .map(|t| {
            let frame = embed_pulse(
                stream_len,
                &pulse,
                onset,
                &sc.noise,
                stream_id(StreamDomain::Localization, shift, t as u64),
            )?;
            let offsets: Vec<i64> = run_bank(&frame, &bank)?
                .iter()
                .filter(|e| e.decision.is_positive())
                .map(|e| e.window_index as i64 - onset as i64)
                .collect();
            Ok(LocalizationTrial {
                trial: t,
                n_fired: offsets.len(),
                n_outside: offsets.iter().filter(|m| m.unsigned_abs() as usize > radius).count(),
                onset_fired: offsets.contains(&0),
                min_offset: offsets.iter().min().copied(),
                max_offset: offsets.iter().max().copied(),
            })
        })
        .collect::<Result<_>>()?;
    let n_windows = crate::search::window_count(stream_len, sc.window_len())?;
    let near = (onset.saturating_sub(radius)..=(onset + radius).min(n_windows - 1)).count();
    Ok(LocalizationReport {
        shift,
        snr_db,
        stream_len,
        onset,
        radius,
        contained: RateEstimate::new(trials.iter().filter(|t| t.contained()).count(), n_trials)?,
        onset_fired: RateEstimate::new(trials.iter().filter(|t| t.onset_fired).count(), n_trials)?,
        expected_noise_alarms: (n_windows - near) as f64 * det.target_pfa,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::calibrate_threshold;
    use crate::signalgen::{ChirpSpec, ShiftConvention};
    use crate::wavelet::DecompositionConfig;

    fn small_scenario() -> Scenario {
        Scenario {
            chirp: ChirpSpec {
                num_samples: 128,
                start_freq: 0.06,
                end_freq: 0.2,
                amplitude: 1.0,
            },
            wavelet: DecompositionConfig { levels: 2, ..Default::default() },
            ..Scenario::default()
        }
    }

    fn fixed(shift: usize, weights: Vec<f64>, threshold: f64) -> CalibratedDetector {
        let mut model = LinearModel::new(weights, 0.0);
        model.metadata.shift = shift;
        CalibratedDetector {
            model,
            threshold,
            target_pfa: 0.01,
            calibration_n: 1000,
        }
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7 % 13) as f64 - 6.0) / 6.0).collect()
    }

    #[test]
    fn unreachable_and_trivial_thresholds() {
        let sc = small_scenario();
        let high = fixed(0, ramp(32), 1e9);
        assert_eq!(estimate_pfa(&high, &sc, 1000, 1).unwrap().rate, 0.0);
        let low = fixed(0, ramp(32), -1e9);
        assert_eq!(estimate_pfa(&low, &sc, 1000, 1).unwrap().rate, 1.0);
        assert!(estimate_pfa(&low, &sc, 999, 1).is_err());
    }

    #[test]
    fn strong_pulse_is_always_detected() {
        let sc = small_scenario();
        let pulse = sc.pulse(40.0).unwrap();
        let template = extract_features(&pulse, &sc.wavelet).unwrap().coefficients;
        let norm = template.iter().map(|v| v * v).sum::<f64>().sqrt();
        let w: Vec<f64> = template.iter().map(|v| v / norm).collect();
        let noise = noise_scores(&LinearModel::new(w.clone(), 0.0), &sc, StreamDomain::Calibration, 1000, 3).unwrap();
        let det = calibrate_threshold(&LinearModel::new(w, 0.0), &noise, 0.01).unwrap();
        let pd = estimate_pd(&det, &sc, 0, 40.0, 500, 4).unwrap();
        assert!(pd.rate >= 0.999, "{pd:?}");
    }

    #[test]
    fn silent_pulse_detects_at_false_alarm_rate() {
        let sc = small_scenario();
        let model = LinearModel::new(ramp(32), 0.0);
        let noise = noise_scores(&model, &sc, StreamDomain::Calibration, 20_000, 3).unwrap();
        let det = calibrate_threshold(&model, &noise, 0.01).unwrap();
        let silent = vec![0.0; 128];
        let pd = estimate_pd_with_pulse(&det, &sc, &silent, 0, 20_000, 5).unwrap();
        let pfa = estimate_pfa(&det, &sc, 20_000, 5).unwrap();
        assert!(pd.overlaps(&pfa), "{pd:?} vs {pfa:?}");
    }

    #[test]
    fn roc_is_monotone_with_trivial_ends() {
        let sc = small_scenario();
        let model = LinearModel::new(ramp(32), 0.0);
        let mut ts = vec![f64::NEG_INFINITY];
        ts.extend((-20..=20).map(|i| i as f64 * 0.5));
        ts.push(f64::INFINITY);
        let roc = roc_sweep(&model, &sc, 0, 0.0, 500, &ts, 8).unwrap();
        assert_eq!((roc[0].pfa.rate, roc[0].pd.rate), (1.0, 1.0));
        let last = roc.last().unwrap();
        assert_eq!((last.pfa.rate, last.pd.rate), (0.0, 0.0));
        for w in roc.windows(2) {
            assert!(w[1].pfa.rate <= w[0].pfa.rate);
            assert!(w[1].pd.rate <= w[0].pd.rate);
        }
        assert!(roc_sweep(&model, &sc, 0, 0.0, 500, &[], 8).is_err());
        assert!(roc_sweep(&model, &sc, 0, 0.0, 500, &[1.0, 0.0], 8).is_err());
    }

    fn bank(sc: &Scenario, weights: [Vec<f64>; 3]) -> DetectorBank {
        let [a, b, c] = weights;
        DetectorBank::new(
            vec![fixed(0, a, 0.0), fixed(3, b, 0.0), fixed(7, c, 0.0)],
            sc.wavelet,
            sc.window_len(),
            ShiftConvention::LeadingNoise,
        )
        .unwrap()
    }

    #[test]
    fn zero_weight_bank_has_zero_covariance() {
        let sc = small_scenario();
        let b = bank(&sc, [vec![0.0; 32], vec![0.0; 32], vec![0.0; 32]]);
        let r = score_covariance(&b, &sc, Condition::Noise, 0.0, 50, 20, 1).unwrap();
        assert!(r.matrix.iter().flatten().all(|&v| v == 0.0));
        assert!(score_covariance(&b, &sc, Condition::Noise, 0.0, 29, 20, 1).is_err());
    }

    #[test]
    fn covariance_is_symmetric_psd_and_pulse_invariant() {
        let sc = small_scenario();
        let b = bank(&sc, [ramp(32), ramp(32).into_iter().rev().collect(), vec![0.5; 32]]);
        let noise = score_covariance(&b, &sc, Condition::Noise, 0.0, 2000, 200, 11).unwrap();
        let pulse = score_covariance(&b, &sc, Condition::Pulse, 0.0, 2000, 200, 11).unwrap();
        for r in [&noise, &pulse] {
            assert!(r.is_symmetric(1e-12));
            assert!(r.min_eigenvalue() >= -1e-9);
        }
        let z = covariance_z_scores(&pulse, &noise).unwrap();
        assert!(z.iter().flatten().all(|&v| v < 5.0), "{z:?}");
    }

    #[test]
    fn aligned_windows_see_the_pulse_head() {
        // With vanishing noise, each detector's window must equal the
        // shifted-window construction used for training.
        let mut sc = small_scenario();
        sc.noise.std_dev = 1e-12;
        let pulse = sc.pulse(0.0).unwrap();
        let b = bank(&sc, [ramp(32), ramp(32), ramp(32)]);
        let scores = aligned_scores(&b, &sc, Some(&pulse), 0).unwrap();
        for (det, s) in b.detectors().iter().zip(scores) {
            let expect = det
                .model
                .decision_value(&sc.pulse_features(&pulse, det.shift(), 99).unwrap())
                .unwrap();
            assert!((s - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn localization_counts() {
        let sc = small_scenario();
        // Fires on every window: 73 windows in a 200-sample stream, 5 within ±2 of onset 40.
        let always = fixed(0, ramp(32), -1e9);
        let r = localization_study(&always, &sc, 0.0, 200, 40, 3, 2, 1).unwrap();
        assert!(r.trials.iter().all(|t| t.n_fired == 73 && t.n_outside == 68 && t.onset_fired));
        assert_eq!(r.contained.successes, 0);
        assert_eq!(r.onset_fired.successes, 3);
        assert!((r.expected_noise_alarms - 68.0 * 0.01).abs() < 1e-12);
        // Never fires: nothing outside, but nothing localized either.
        let never = fixed(0, ramp(32), 1e9);
        let r = localization_study(&never, &sc, 0.0, 200, 40, 3, 2, 1).unwrap();
        assert!(r.trials.iter().all(|t| t.n_fired == 0 && t.min_offset.is_none()));
        assert_eq!(r.contained.successes, 0);
        assert!(localization_study(&never, &sc, 0.0, 200, 100, 3, 2, 1).is_err());
    }
}
