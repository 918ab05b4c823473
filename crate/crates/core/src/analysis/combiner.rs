//! Second-stage linear fusion of the bank's smooth scores.
//!
//! The combiner is another soft-margin linear SVM, trained on aligned score
//! vectors (pulse scenarios vs noise scenarios) with the same solver as the
//! first stage, and calibrated to the target false-alarm rate on fresh noise.

use serde::{Deserialize, Serialize};

use super::stats::RateEstimate;
use super::{aligned_score_rows, Condition};
use crate::detector::{
    min_calibration_scores, threshold_for_pfa, train_linear_svm_from, DualStart, LinearModel,
    SvmParams, TrainingMetadata, TrainingSet,
};
use crate::error::{Error, Result};
use crate::scenario::Scenario;
use crate::search::DetectorBank;
use crate::signalgen::StreamDomain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinerModel {
    pub shifts: Vec<usize>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub threshold: f64,
    pub target_pfa: f64,
    pub calibration_n: usize,
}

impl CombinerModel {
    pub fn score(&self, scores: &[f64]) -> Result<f64> {
        if scores.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: scores.len(),
            });
        }
        Ok(self.weights.iter().zip(scores).map(|(w, s)| w * s).sum::<f64>() + self.bias)
    }

    pub fn fires(&self, scores: &[f64]) -> Result<bool> {
        Ok(self.score(scores)? > self.threshold)
    }
}

/// Train on explicit score vectors and calibrate on `calibration` noise rows.
pub fn fit_combiner(
    shifts: &[usize],
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    calibration: &[Vec<f64>],
    target_pfa: f64,
    params: &SvmParams,
    start: DualStart,
) -> Result<CombinerModel> {
    let needed = min_calibration_scores(target_pfa);
    if calibration.len() < needed {
        return Err(Error::InvalidInput(format!(
            "combiner calibration needs at least {needed} noise rows, got {}",
            calibration.len()
        )));
    }
    let rows: Vec<Vec<f64>> = positives.iter().chain(negatives).cloned().collect();
    let labels = std::iter::repeat_n(1.0, positives.len())
        .chain(std::iter::repeat_n(-1.0, negatives.len()))
        .collect();
    let data = TrainingSet::new(rows, labels, TrainingMetadata::default())?;
    let LinearModel { weights, bias, .. } = train_linear_svm_from(&data, params, start)?;
    let fused = LinearModel::new(weights, bias);
    let cal_scores: Vec<f64> = calibration
        .iter()
        .map(|r| fused.decision_value(r))
        .collect::<Result<_>>()?;
    Ok(CombinerModel {
        shifts: shifts.to_vec(),
        weights: fused.weights,
        bias: fused.bias,
        threshold: threshold_for_pfa(&cal_scores, target_pfa)?,
        target_pfa,
        calibration_n: calibration.len(),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn train_combiner(
    bank: &DetectorBank,
    scenario: &Scenario,
    n_pos: usize,
    n_neg: usize,
    snr_db: f64,
    target_pfa: f64,
    calibration_n: usize,
    params: &SvmParams,
    seed: u64,
) -> Result<CombinerModel> {
    let pos = aligned_score_rows(bank, scenario, Condition::Pulse, snr_db, n_pos, StreamDomain::CombinerTrain, seed)?;
    let neg = aligned_score_rows(bank, scenario, Condition::Noise, snr_db, n_neg, StreamDomain::CombinerTrain, seed)?;
    let cal = aligned_score_rows(
        bank,
        scenario,
        Condition::Noise,
        snr_db,
        calibration_n,
        StreamDomain::CombinerCalibration,
        seed,
    )?;
    fit_combiner(&bank.shifts(), &pos, &neg, &cal, target_pfa, params, DualStart::Zero)
}

/// Detection rates of each bank detector and of the combiner on one shared
/// set of aligned pulse scenarios, plus the combiner's false-alarm rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub shifts: Vec<usize>,
    pub single_pd: Vec<RateEstimate>,
    pub combined_pd: RateEstimate,
    pub combined_pfa: RateEstimate,
    pub snr_db: f64,
}

impl FusionReport {
    /// Index of the best single detector by P_d.
    pub fn best_single(&self) -> usize {
        let mut best = 0;
        for (i, r) in self.single_pd.iter().enumerate() {
            if r.rate > self.single_pd[best].rate {
                best = i;
            }
        }
        best
    }
}

pub fn evaluate_fusion(
    bank: &DetectorBank,
    combiner: &CombinerModel,
    scenario: &Scenario,
    snr_db: f64,
    n_pulse: usize,
    n_noise: usize,
    seed: u64,
) -> Result<FusionReport> {
    if combiner.shifts != bank.shifts() {
        return Err(Error::InvalidInput("combiner and bank cover different shifts".into()));
    }
    let pos = aligned_score_rows(bank, scenario, Condition::Pulse, snr_db, n_pulse, StreamDomain::CombinerEval, seed)?;
    let neg = aligned_score_rows(bank, scenario, Condition::Noise, snr_db, n_noise, StreamDomain::CombinerEval, seed)?;
    let single_pd = bank
        .detectors()
        .iter()
        .enumerate()
        .map(|(i, det)| {
            let hits = pos.iter().filter(|r| det.decide(r[i]).is_positive()).count();
            RateEstimate::new(hits, n_pulse)
        })
        .collect::<Result<_>>()?;
    let count = |rows: &[Vec<f64>]| -> Result<usize> {
        let mut k = 0;
        for r in rows {
            if combiner.fires(r)? {
                k += 1;
            }
        }
        Ok(k)
    };
    Ok(FusionReport {
        shifts: bank.shifts(),
        single_pd,
        combined_pd: RateEstimate::new(count(&pos)?, n_pulse)?,
        combined_pfa: RateEstimate::new(count(&neg)?, n_noise)?,
        snr_db,
    })
}
