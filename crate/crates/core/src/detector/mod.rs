//! Linear detectors: SVM training on wavelet features, smooth scores,
//! false-alarm calibration and hard decisions.
//!
//! The smooth score `w·x + b` is always available; the hard decision is a
//! separate, final step (`score > threshold`).

mod svm;

pub use svm::{
    optimal_bias, primal_objective, train_linear_svm, train_linear_svm_from, DualStart,
    LinearModel, ModelMetadata, SvmParams, TrainingMetadata, TrainingSet, TrainingSummary,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::signalgen::{stream_id, StreamDomain};
use crate::wavelet::WaveletFeatures;

/// Hard output of a detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Positive,
    Negative,
}

impl Decision {
    pub fn value(self) -> i8 {
        match self {
            Decision::Positive => 1,
            Decision::Negative => -1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Decision::Positive
    }
}

pub fn score(model: &LinearModel, features: &WaveletFeatures) -> Result<f64> {
    model.decision_value(&features.coefficients)
}

/// A linear model with a threshold set for a target false-alarm rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedDetector {
    pub model: LinearModel,
    pub threshold: f64,
    pub target_pfa: f64,
    pub calibration_n: usize,
}

impl CalibratedDetector {
    pub fn shift(&self) -> usize {
        self.model.metadata.shift
    }

    /// Strictly-greater-than rule.
    pub fn decide(&self, smooth_score: f64) -> Decision {
        if smooth_score > self.threshold {
            Decision::Positive
        } else {
            Decision::Negative
        }
    }
}

/// Fewest calibration scores accepted for `target_pfa`: `⌈10 / target_pfa⌉`.
pub fn min_calibration_scores(target_pfa: f64) -> usize {
    // The tolerance keeps 10 / 0.001 from rounding up to 10001.
    ((10.0 / target_pfa) - 1e-9).ceil().max(1.0) as usize
}

fn check_pfa(target_pfa: f64) -> Result<()> {
    if !(target_pfa > 0.0 && target_pfa.is_finite()) {
        return Err(Error::config("target_pfa", format!("{target_pfa} must be finite and > 0")));
    }
    Ok(())
}

/// Smallest score `t` such that the fraction of scores strictly above `t`
/// does not exceed `target_pfa`. For `target_pfa >= 1` every score must fire,
/// so the threshold drops below the minimum.
pub fn threshold_for_pfa(scores: &[f64], target_pfa: f64) -> Result<f64> {
    check_pfa(target_pfa)?;
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to calibrate on".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite calibration score".into()));
    }
    let n = scores.len();
    let allowed = (target_pfa * n as f64 + 1e-9).floor() as usize;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    if allowed >= n {
        let min = sorted[0];
        return Ok(min - (1.0 + min.abs()));
    }
    Ok(sorted[n - 1 - allowed])
}

pub fn calibrate_threshold(
    model: &LinearModel,
    noise_scores: &[f64],
    target_pfa: f64,
) -> Result<CalibratedDetector> {
    check_pfa(target_pfa)?;
    let required = min_calibration_scores(target_pfa);
    if noise_scores.len() < required {
        return Err(Error::InvalidInput(format!(
            "calibration needs at least {required} noise scores for target P_fa {target_pfa}, got {}",
            noise_scores.len()
        )));
    }
    Ok(CalibratedDetector {
        model: model.clone(),
        threshold: threshold_for_pfa(noise_scores, target_pfa)?,
        target_pfa,
        calibration_n: noise_scores.len(),
    })
}

pub fn classify(det: &CalibratedDetector, features: &WaveletFeatures) -> Result<Decision> {
    Ok(det.decide(score(&det.model, features)?))
}

/// `n_pos` shifted-pulse windows (label +1) followed by `n_neg` noise-only
/// windows (label -1), all turned into wavelet features.
///
/// Window `i` draws the same noise for every shift (common random numbers),
/// so detectors at different shifts differ only through the pulse layout.
pub fn build_training_set(
    shift: usize,
    n_pos: usize,
    n_neg: usize,
    snr_db: f64,
    scenario: &Scenario,
    seed: u64,
) -> Result<TrainingSet> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidInput("n_pos and n_neg must both be >= 1".into()));
    }
    scenario.validate()?;
    let sc = scenario.with_seed(seed);
    let pulse = sc.pulse(snr_db)?;
    let positives: Vec<Vec<f64>> = (0..n_pos as u64)
        .into_par_iter()
        .map(|i| sc.pulse_features(&pulse, shift, stream_id(StreamDomain::TrainPositive, 0, i)))
        .collect::<Result<_>>()?;
    let negatives: Vec<Vec<f64>> = (0..n_neg as u64)
        .into_par_iter()
        .map(|i| sc.noise_features(stream_id(StreamDomain::TrainNegative, 0, i)))
        .collect::<Result<_>>()?;
    let labels = std::iter::repeat_n(1.0, n_pos)
        .chain(std::iter::repeat_n(-1.0, n_neg))
        .collect();
    let rows = positives.into_iter().chain(negatives).collect();
    TrainingSet::new(
        rows,
        labels,
        TrainingMetadata {
            shift,
            snr_db,
            wavelet_levels: scenario.wavelet.levels,
            seed,
        },
    )
}

/// Smooth scores of `n` fresh noise-only windows; window `i` of a domain is
/// the same for every model.
pub fn noise_scores(
    model: &LinearModel,
    scenario: &Scenario,
    domain: StreamDomain,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sc = scenario.with_seed(seed);
    (0..n as u64)
        .into_par_iter()
        .map(|i| model.decision_value(&sc.noise_features(stream_id(domain, 0, i))?))
        .collect()
}

/// Train, then calibrate on an independent noise sample.
pub fn train_and_calibrate(
    shift: usize,
    scenario: &Scenario,
    snr_db: f64,
    n_pos: usize,
    n_neg: usize,
    params: &SvmParams,
    target_pfa: f64,
    calibration_n: usize,
    seed: u64,
) -> Result<CalibratedDetector> {
    let data = build_training_set(shift, n_pos, n_neg, snr_db, scenario, seed)?;
    let model = train_linear_svm(&data, params)?;
    let scores = noise_scores(&model, scenario, StreamDomain::Calibration, calibration_n, seed)?;
    calibrate_threshold(&model, &scores, target_pfa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signalgen::ChirpSpec;
    use proptest::prelude::*;

    fn feats(v: &[f64]) -> WaveletFeatures {
        WaveletFeatures {
            level: 4,
            coefficients: v.to_vec(),
            source_window_len: v.len() * 16,
        }
    }

    #[test]
    fn score_is_affine() {
        let constant = LinearModel::new(vec![0.0; 3], 0.7);
        assert_eq!(score(&constant, &feats(&[1.0, -4.0, 9.0])).unwrap(), 0.7);

        let m = LinearModel::new(vec![2.0, -1.0], 0.5);
        assert_eq!(score(&m, &feats(&[1.0, 3.0])).unwrap(), -0.5);
        assert!(matches!(
            score(&m, &feats(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));

        let x = [0.3, -1.2];
        let y = [2.2, 0.4];
        let xy = [x[0] + y[0], x[1] + y[1]];
        let lhs = score(&m, &feats(&xy)).unwrap() - m.bias;
        let rhs = score(&m, &feats(&x)).unwrap() - m.bias + score(&m, &feats(&y)).unwrap() - m.bias;
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn calibration_on_ranks() {
        let scores: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(threshold_for_pfa(&scores, 0.001).unwrap(), 999.0);
        let t = threshold_for_pfa(&scores, 1.0).unwrap();
        assert!(scores.iter().all(|&s| s > t));
        let t = threshold_for_pfa(&scores, 2.5).unwrap();
        assert!(t < 1.0);
    }

    #[test]
    fn calibration_requires_enough_scores() {
        let m = LinearModel::new(vec![1.0], 0.0);
        assert_eq!(min_calibration_scores(0.001), 10_000);
        let few = vec![0.0; 9_999];
        let err = calibrate_threshold(&m, &few, 0.001).unwrap_err();
        assert!(err.to_string().contains("10000"), "{err}");
        let enough: Vec<f64> = (0..10_000).map(|i| i as f64).collect();
        let det = calibrate_threshold(&m, &enough, 0.001).unwrap();
        let fired = enough.iter().filter(|&&s| det.decide(s).is_positive()).count();
        assert!(fired as f64 / enough.len() as f64 <= 0.001);
        assert!(calibrate_threshold(&m, &enough, 0.0).is_err());
    }

    #[test]
    fn decision_is_strict() {
        let det = CalibratedDetector {
            model: LinearModel::new(vec![1.0], 0.0),
            threshold: 2.0,
            target_pfa: 0.001,
            calibration_n: 10_000,
        };
        assert_eq!(det.decide(2.0), Decision::Negative);
        assert_eq!(det.decide(2.0 + 1e-12), Decision::Positive);
        assert_eq!(classify(&det, &feats(&[2.0])).unwrap(), Decision::Negative);

        let always = CalibratedDetector {
            threshold: f64::MIN,
            ..det
        };
        assert_eq!(always.decide(-1e300), Decision::Positive);
    }

    #[test]
    fn training_set_shape_and_determinism() {
        let sc = Scenario {
            chirp: ChirpSpec {
                num_samples: 256,
                ..ChirpSpec::default()
            },
            ..Scenario::default()
        };
        let a = build_training_set(11, 20, 30, -5.0, &sc, 9).unwrap();
        assert_eq!(a.len(), 50);
        assert_eq!(a.n_features(), 16);
        assert_eq!(a.labels().iter().filter(|&&y| y > 0.0).count(), 20);
        assert_eq!(a.metadata.shift, 11);
        let b = build_training_set(11, 20, 30, -5.0, &sc, 9).unwrap();
        assert_eq!(a, b);
        let c = build_training_set(11, 20, 30, -5.0, &sc, 10).unwrap();
        assert_ne!(a, c);
        assert!(build_training_set(11, 0, 30, -5.0, &sc, 9).is_err());
        assert!(build_training_set(256, 1, 1, -5.0, &sc, 9).is_err());
    }

    /// Smallest candidate threshold (a score, or something below all of
    /// them) whose strict exceedance count stays within the allowance.
    fn scan_threshold(scores: &[f64], target_pfa: f64) -> f64 {
        let n = scores.len();
        let allowed = (target_pfa * n as f64 + 1e-9).floor() as usize;
        let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let mut candidates: Vec<f64> = scores.to_vec();
        candidates.push(min - (1.0 + min.abs()));
        candidates
            .into_iter()
            .filter(|&t| scores.iter().filter(|&&s| s > t).count() <= allowed)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn calibration_matches_exhaustive_scan() {
        let lists: [&[f64]; 5] = [
            &[3.0, 1.0, 2.0, 5.0, 4.0, 0.0, -1.0, 7.5, 6.0, 2.5],
            &[1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 3.0, 9.0],
            &[0.0; 10],
            &[-5.0, -4.0, -3.5, -3.5, -2.0, -1.0, -0.5, -0.25, 1e-9, 1e9],
            &[4.0, -4.0, 8.0, -8.0, 16.0, -16.0, 32.0, -32.0, 64.0, -64.0, 128.0, 0.0],
        ];
        for scores in lists {
            for pfa in [0.01, 0.1, 0.15, 0.2, 0.25, 0.3, 0.5, 0.75, 0.9, 1.0, 3.0] {
                assert_eq!(
                    threshold_for_pfa(scores, pfa).unwrap(),
                    scan_threshold(scores, pfa),
                    "{scores:?} at {pfa}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn calibration_scan_and_monotonicity(
            scores in prop::collection::vec(-1e3f64..1e3, 1..200),
            p in 0.001f64..1.0,
            q in 0.001f64..1.0,
        ) {
            let t = threshold_for_pfa(&scores, p).unwrap();
            prop_assert_eq!(t, scan_threshold(&scores, p));
            let fired = scores.iter().filter(|&&s| s > t).count();
            prop_assert!(fired as f64 <= p * scores.len() as f64 + 1e-9);
            // A stricter target never lowers the threshold.
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            prop_assert!(threshold_for_pfa(&scores, lo).unwrap() >= threshold_for_pfa(&scores, hi).unwrap());
        }
    }
}
