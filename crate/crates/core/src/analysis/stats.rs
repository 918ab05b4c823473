//! Binomial rate estimates with Wilson intervals, streaming sample covariance,
//! and bootstrap standard errors.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalgen::{stream_id, stream_rng, StreamDomain};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A proportion `successes / trials` with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RateEstimate {
    pub fn new(successes: usize, trials: usize) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(Error::InvalidInput(format!(
                "rate needs 0 <= successes <= trials, trials > 0 (got {successes}/{trials})"
            )));
        }
        let (ci_low, ci_high) = wilson_interval(successes, trials, Z95);
        Ok(Self {
            successes,
            trials,
            rate: successes as f64 / trials as f64,
            ci_low,
            ci_high,
        })
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    pub fn overlaps(&self, other: &RateEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    // Clamp so the bounds always bracket p despite rounding at k = 0 or k = n.
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

/// Streaming mean and co-moment accumulator (Welford update).
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    dim: usize,
    n: usize,
    mean: Vec<f64>,
    comoment: Vec<f64>,
}

impl CovarianceAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            n: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / n;
        }
        for i in 0..self.dim {
            let after_i = x[i] - self.mean[i];
            for j in 0..self.dim {
                self.comoment[i * self.dim + j] += delta[j] * after_i;
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased (n - 1) covariance, symmetrized.
    pub fn covariance(&self) -> Result<Vec<Vec<f64>>> {
        if self.n < 2 {
            return Err(Error::InvalidInput("covariance needs at least 2 observations".into()));
        }
        let d = self.dim;
        let scale = 1.0 / (self.n - 1) as f64;
        Ok((0..d)
            .map(|i| {
                (0..d)
                    .map(|j| 0.5 * (self.comoment[i * d + j] + self.comoment[j * d + i]) * scale)
                    .collect()
            })
            .collect())
    }
}

pub fn sample_covariance(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = rows.first().map_or(0, Vec::len);
    let mut acc = CovarianceAccumulator::new(dim);
    for r in rows {
        acc.push(r)?;
    }
    acc.covariance()
}

/// Bootstrap standard error of every covariance entry.
pub fn bootstrap_covariance_se(
    rows: &[Vec<f64>],
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if n_resamples < 2 {
        return Err(Error::InvalidInput("bootstrap needs at least 2 resamples".into()));
    }
    let n = rows.len();
    let dim = rows.first().map_or(0, Vec::len);
    let replicates: Vec<Vec<Vec<f64>>> = (0..n_resamples as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, stream_id(StreamDomain::Bootstrap, 0, r));
            let mut acc = CovarianceAccumulator::new(dim);
            for _ in 0..n {
                acc.push(&rows[rng.random_range(0..n)])?;
            }
            acc.covariance()
        })
        .collect::<Result<_>>()?;
    let b = n_resamples as f64;
    let mut se = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            let mean = replicates.iter().map(|m| m[i][j]).sum::<f64>() / b;
            let var = replicates.iter().map(|m| (m[i][j] - mean).powi(2)).sum::<f64>() / (b - 1.0);
            se[i][j] = var.sqrt();
        }
    }
    Ok(se)
}

pub fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let d = matrix.len();
    let m = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn correlation(matrix: &[Vec<f64>], i: usize, j: usize) -> f64 {
    matrix[i][j] / (matrix[i][i] * matrix[j][j]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_pass(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = rows.len() as f64;
        let d = rows[0].len();
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn streaming_covariance_matches_two_pass() {
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.1).sin() * 3.0 + 100.0, (t * 0.37).cos() - 0.5 * t / 500.0, (t * 0.011).sin() * (t * 0.7).cos()]
            })
            .collect();
        let a = sample_covariance(&rows).unwrap();
        let b = two_pass(&rows);
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() < 1e-10);
                assert_eq!(a[i][j], a[j][i]);
            }
        }
    }

    #[test]
    fn wilson_edges() {
        let zero = RateEstimate::new(0, 1000).unwrap();
        assert_eq!(zero.rate, 0.0);
        assert_eq!(zero.ci_low, 0.0);
        assert!(zero.ci_high > 0.0 && zero.ci_high < 0.005);
        let all = RateEstimate::new(1000, 1000).unwrap();
        assert_eq!(all.ci_high, 1.0);
        assert!(all.ci_low < 1.0);
        let mid = RateEstimate::new(50, 50_000).unwrap();
        assert!(mid.contains(0.001));
        assert!(mid.ci_low < mid.rate && mid.rate < mid.ci_high);
        assert!(RateEstimate::new(3, 2).is_err());
        assert!(RateEstimate::new(0, 0).is_err());
    }

    #[test]
    fn wilson_reference_value() {
        // 10 of 100: center 0.11480, half-width 0.05957 (hand computed).
        let (lo, hi) = wilson_interval(10, 100, Z95);
        assert!((lo - 0.055_229).abs() < 1e-5, "{lo}");
        assert!((hi - 0.174_366).abs() < 1e-5, "{hi}");
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = vec![vec![3.0, 0.0], vec![0.0, -1.0]];
        assert_eq!(symmetric_eigenvalues(&m), vec![-1.0, 3.0]);
    }

    #[test]
    fn bootstrap_se_is_deterministic_and_sane() {
        let rows: Vec<Vec<f64>> = (0..400).map(|i| vec![(i as f64 * 0.77).sin(), (i as f64 * 0.31).cos()]).collect();
        let a = bootstrap_covariance_se(&rows, 200, 5).unwrap();
        let b = bootstrap_covariance_se(&rows, 200, 5).unwrap();
        assert_eq!(a, b);
        // Var(s²) ≈ (μ4 - σ⁴)/n; for these bounded rows the SE is a few percent.
        assert!(a[0][0] > 0.0 && a[0][0] < 0.1);
    }
}
