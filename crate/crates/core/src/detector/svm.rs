//! Soft-margin linear SVM trained in the dual with SMO.
//!
//! Primal: `min ½‖w‖² + C·Σ max(0, 1 - y_i(w·x_i + b))` with an unregularized
//! bias. The dual is solved with second-order working-set selection on a
//! linear kernel, keeping `w` explicit. Given `w`, the optimal bias is found
//! exactly (the hinge sum is piecewise linear in `b`), and the solver stops
//! once the relative duality gap `(P - D) / max(1, |P|)` is below the
//! tolerance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signalgen::stream_rng;

const TAU: f64 = 1e-12;

/// Row-major training matrix with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    features: Vec<f64>,
    labels: Vec<f64>,
    n_features: usize,
    pub metadata: TrainingMetadata,
}

/// Provenance of a training set; carried into the trained model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub shift: usize,
    pub snr_db: f64,
    pub wavelet_levels: usize,
    pub seed: u64,
}

impl TrainingSet {
    /// `rows` are feature vectors; `labels` must be +1 or -1.
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<f64>, metadata: TrainingMetadata) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                actual: labels.len(),
            });
        }
        let n_features = rows.first().map_or(0, Vec::len);
        if n_features == 0 {
            return Err(Error::InvalidInput("training set has no features".into()));
        }
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for row in &rows {
            if row.len() != n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite feature value".into()));
            }
            features.extend_from_slice(row);
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::InvalidInput("labels must be +1 or -1".into()));
        }
        let has_pos = labels.iter().any(|&y| y > 0.0);
        let has_neg = labels.iter().any(|&y| y < 0.0);
        if !(has_pos && has_neg) {
            return Err(Error::InvalidInput(
                "training set must contain both classes".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features)
    }

    /// Raw row-major feature buffer (for digests and exports).
    pub fn raw_features(&self) -> &[f64] {
        &self.features
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// Relative duality-gap tolerance.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-6,
            max_iter: 2_000_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config("svm.c", "must be finite and > 0"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::config("svm.tolerance", "must be finite and > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("svm.max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Where SMO starts in the dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DualStart {
    #[default]
    Zero,
    /// Random feasible multipliers drawn from the given seed.
    Random(u64),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub relative_gap: f64,
    pub n_examples: usize,
    pub n_support: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub shift: usize,
    pub c_param: f64,
    pub summary: TrainingSummary,
}

/// Affine decision function `w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub metadata: ModelMetadata,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Self {
            weights,
            bias,
            metadata: ModelMetadata::default(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Soft-margin primal objective at `(w, b)`.
pub fn primal_objective(data: &TrainingSet, weights: &[f64], bias: f64, c: f64) -> f64 {
    let hinge: f64 = data
        .rows()
        .zip(data.labels())
        .map(|(x, &y)| (1.0 - y * (dot(weights, x) + bias)).max(0.0))
        .sum();
    0.5 * dot(weights, weights) + c * hinge
}

/// Bias minimizing the hinge sum for fixed decision values `f_i = w·x_i`.
///
/// With breakpoints `β_i = y_i - f_i`, the hinge sum has slope
/// `-P + #{β_i < b}` where `P` is the positive count, so every `b` between
/// the `P`-th and `(P+1)`-th smallest breakpoint is optimal; the midpoint is
/// returned together with the minimal hinge sum.
pub fn optimal_bias(decision: &[f64], labels: &[f64]) -> (f64, f64) {
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count();
    let mut breaks: Vec<f64> = decision
        .iter()
        .zip(labels)
        .map(|(f, y)| y - f)
        .collect();
    let n = breaks.len();
    let bias = if n_pos == 0 {
        breaks.iter().copied().fold(f64::INFINITY, f64::min) - 1.0
    } else if n_pos == n {
        breaks.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0
    } else {
        breaks.sort_by(f64::total_cmp);
        0.5 * (breaks[n_pos - 1] + breaks[n_pos])
    };
    let hinge = decision
        .iter()
        .zip(labels)
        .map(|(f, y)| (1.0 - y * (f + bias)).max(0.0))
        .sum();
    (bias, hinge)
}

struct Smo<'a> {
    data: &'a TrainingSet,
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    w: Vec<f64>,
    sq_norms: Vec<f64>,
}

impl<'a> Smo<'a> {
    fn new(data: &'a TrainingSet, c: f64, alpha: Vec<f64>) -> Self {
        let sq_norms = data.rows().map(|x| dot(x, x)).collect();
        let mut smo = Self {
            data,
            c,
            alpha,
            grad: vec![0.0; data.len()],
            w: vec![0.0; data.n_features()],
            sq_norms,
        };
        smo.refresh();
        smo
    }

    /// Recompute `w` and the dual gradient from `alpha`, dropping any drift
    /// accumulated by incremental updates.
    fn refresh(&mut self) {
        self.w.iter_mut().for_each(|v| *v = 0.0);
        for (i, x) in self.data.rows().enumerate() {
            let coef = self.alpha[i] * self.data.labels[i];
            if coef != 0.0 {
                for (wk, xk) in self.w.iter_mut().zip(x) {
                    *wk += coef * xk;
                }
            }
        }
        for (i, x) in self.data.rows().enumerate() {
            self.grad[i] = self.data.labels[i] * dot(&self.w, x) - 1.0;
        }
    }

    fn in_up(&self, t: usize) -> bool {
        if self.data.labels[t] > 0.0 {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    fn in_low(&self, t: usize) -> bool {
        if self.data.labels[t] > 0.0 {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    /// Second-order working set selection. `None` when no violating pair
    /// remains.
    fn select(&self) -> Option<(usize, usize)> {
        let y = &self.data.labels;
        let mut gmax = f64::NEG_INFINITY;
        let mut i_best = None;
        for t in 0..y.len() {
            if self.in_up(t) {
                let v = -y[t] * self.grad[t];
                if v >= gmax {
                    gmax = v;
                    i_best = Some(t);
                }
            }
        }
        let i = i_best?;
        let xi = self.data.row(i);
        let mut gmax2 = f64::NEG_INFINITY;
        let mut obj_min = f64::INFINITY;
        let mut j_best = None;
        for t in 0..y.len() {
            if !self.in_low(t) {
                continue;
            }
            let v = y[t] * self.grad[t];
            if v >= gmax2 {
                gmax2 = v;
            }
            let grad_diff = gmax + v;
            if grad_diff > 0.0 {
                let quad = self.sq_norms[i] + self.sq_norms[t] - 2.0 * dot(xi, self.data.row(t));
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -(grad_diff * grad_diff) / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_best = Some(t);
                }
            }
        }
        if gmax + gmax2 < 1e-12 {
            return None;
        }
        j_best.map(|j| (i, j))
    }

    fn update(&mut self, i: usize, j: usize) {
        let y = &self.data.labels;
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let kij = dot(self.data.row(i), self.data.row(j));
        let quad = self.sq_norms[i] + self.sq_norms[j] - 2.0 * kij;
        let quad = if quad > 0.0 { quad } else { TAU };
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let ci = (ai - old_i) * y[i];
        let cj = (aj - old_j) * y[j];
        if ci == 0.0 && cj == 0.0 {
            return;
        }
        let (xi, xj) = (self.data.row(i), self.data.row(j));
        let dw: Vec<f64> = xi.iter().zip(xj).map(|(a, b)| ci * a + cj * b).collect();
        for (wk, d) in self.w.iter_mut().zip(&dw) {
            *wk += d;
        }
        for (t, x) in self.data.rows().enumerate() {
            self.grad[t] += y[t] * dot(&dw, x);
        }
    }

    /// `(bias, primal, dual, relative gap)` at the current iterate.
    fn gap(&self) -> (f64, f64, f64, f64) {
        let y = &self.data.labels;
        let decision: Vec<f64> = self
            .grad
            .iter()
            .zip(y)
            .map(|(g, yi)| yi * (g + 1.0))
            .collect();
        let (bias, hinge) = optimal_bias(&decision, y);
        let half_norm = 0.5 * dot(&self.w, &self.w);
        let primal = half_norm + self.c * hinge;
        let dual = self.alpha.iter().sum::<f64>() - half_norm;
        let rel = (primal - dual) / primal.abs().max(1.0);
        (bias, primal, dual, rel)
    }
}

fn random_feasible_alpha(labels: &[f64], c: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    let mut alpha: Vec<f64> = labels.iter().map(|_| rng.random::<f64>() * c).collect();
    let sum_pos: f64 = alpha.iter().zip(labels).filter(|(_, &y)| y > 0.0).map(|(a, _)| a).sum();
    let sum_neg: f64 = alpha.iter().zip(labels).filter(|(_, &y)| y < 0.0).map(|(a, _)| a).sum();
    // Shrink the heavier class so that Σ α_i y_i = 0.
    let (heavy, scale) = if sum_pos > sum_neg {
        (1.0, sum_neg / sum_pos)
    } else {
        (-1.0, sum_pos / sum_neg)
    };
    for (a, &y) in alpha.iter_mut().zip(labels) {
        if y == heavy {
            *a *= scale;
        }
    }
    alpha
}

pub fn train_linear_svm(data: &TrainingSet, params: &SvmParams) -> Result<LinearModel> {
    train_linear_svm_from(data, params, DualStart::Zero)
}

pub fn train_linear_svm_from(
    data: &TrainingSet,
    params: &SvmParams,
    start: DualStart,
) -> Result<LinearModel> {
    params.validate()?;
    let alpha = match start {
        DualStart::Zero => vec![0.0; data.len()],
        DualStart::Random(seed) => random_feasible_alpha(data.labels(), params.c, seed),
    };
    let mut smo = Smo::new(data, params.c, alpha);
    let check_every = data.len().max(50);
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let pair = smo.select();
        let at_check = pair.is_none() || iterations % check_every == 0 || iterations >= params.max_iter;
        if at_check {
            smo.refresh();
            let (bias, primal, dual, rel) = smo.gap();
            if !primal.is_finite() {
                return Err(Error::Numeric("primal objective is not finite".into()));
            }
            trace.push(primal);
            if rel <= params.tolerance {
                let n_support = smo.alpha.iter().filter(|&&a| a > 0.0).count();
                return Ok(LinearModel {
                    weights: smo.w.clone(),
                    bias,
                    metadata: ModelMetadata {
                        shift: data.metadata.shift,
                        c_param: params.c,
                        summary: TrainingSummary {
                            iterations,
                            primal_objective: primal,
                            dual_objective: dual,
                            relative_gap: rel,
                            n_examples: data.len(),
                            n_support,
                        },
                    },
                });
            }
            if pair.is_none() || iterations >= params.max_iter {
                return Err(Error::NonConvergence {
                    iterations,
                    last_gap: rel,
                    objective_trace: trace,
                });
            }
        }
        if let Some((i, j)) = pair {
            smo.update(i, j);
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]], labels: &[f64]) -> TrainingSet {
        TrainingSet::new(
            rows.iter().map(|r| r.to_vec()).collect(),
            labels.to_vec(),
            TrainingMetadata::default(),
        )
        .unwrap()
    }

    fn hard(c: f64) -> SvmParams {
        SvmParams {
            c,
            tolerance: 1e-9,
            ..SvmParams::default()
        }
    }

    #[test]
    fn symmetric_pair_gives_unit_margin() {
        let data = set(&[&[1.0], &[-1.0]], &[1.0, -1.0]);
        let m = train_linear_svm(&data, &hard(1e6)).unwrap();
        assert!((m.weights[0] - 1.0).abs() < 1e-6, "{:?}", m.weights);
        assert!(m.bias.abs() < 1e-6);
    }

    #[test]
    fn separable_data_has_unit_margins() {
        let rows: &[&[f64]] = &[
            &[2.0, 1.0],
            &[3.0, 2.5],
            &[2.5, -0.5],
            &[-1.0, -1.0],
            &[-2.0, 0.5],
            &[-0.5, -2.0],
        ];
        let labels = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0];
        let data = set(rows, &labels);
        let m = train_linear_svm(&data, &hard(1e6)).unwrap();
        for (x, y) in rows.iter().zip(labels) {
            let margin = y * m.decision_value(x).unwrap();
            assert!(margin >= 1.0 - 1e-6, "margin {margin}");
        }
    }

    #[test]
    fn rejects_single_class_and_ragged_rows() {
        let r = TrainingSet::new(vec![vec![1.0], vec![2.0]], vec![1.0, 1.0], Default::default());
        assert!(r.is_err());
        let r = TrainingSet::new(vec![vec![1.0], vec![2.0, 3.0]], vec![1.0, -1.0], Default::default());
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        let r = TrainingSet::new(vec![vec![f64::NAN], vec![2.0]], vec![1.0, -1.0], Default::default());
        assert!(r.is_err());
        let r = TrainingSet::new(vec![vec![1.0], vec![2.0]], vec![1.0, 0.0], Default::default());
        assert!(r.is_err());
    }

    #[test]
    fn iteration_cap_reports_trace() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()])
            .collect();
        let labels: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let data = TrainingSet::new(rows, labels, Default::default()).unwrap();
        let params = SvmParams {
            c: 10.0,
            tolerance: 1e-15,
            max_iter: 1,
        };
        match train_linear_svm(&data, &params) {
            Err(Error::NonConvergence { objective_trace, .. }) => assert!(!objective_trace.is_empty()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn optimal_bias_midpoint() {
        // f = w·x with w = 1 for the symmetric pair: both breakpoints at 0.
        let (b, h) = optimal_bias(&[1.0, -1.0], &[1.0, -1.0]);
        assert_eq!(b, 0.0);
        assert_eq!(h, 0.0);
        // Wide gap: any b in [-1, 1] is optimal for f = ±2.
        let (b, h) = optimal_bias(&[2.0, -2.0], &[1.0, -1.0]);
        assert_eq!(b, 0.0);
        assert_eq!(h, 0.0);
    }

    #[test]
    fn random_start_is_feasible() {
        let labels = [1.0, -1.0, -1.0, 1.0, -1.0];
        let a = random_feasible_alpha(&labels, 2.0, 3);
        let s: f64 = a.iter().zip(&labels).map(|(a, y)| a * y).sum();
        assert!(s.abs() < 1e-12);
        assert!(a.iter().all(|&v| (0.0..=2.0).contains(&v)));
    }

    /// Minimum of the primal objective over a grid of `(w, b)`, refined by
    /// repeatedly zooming in on the best cell.
    fn grid_minimum(data: &TrainingSet, c: f64) -> f64 {
        let dim = data.n_features() + 1;
        let mut center = vec![0.0; dim];
        let mut half = 4.0;
        let steps = if dim == 2 { 400 } else { 80 };
        let mut best = f64::INFINITY;
        for _ in 0..6 {
            let h = 2.0 * half / steps as f64;
            let mut idx = vec![0usize; dim];
            let mut arg = center.clone();
            loop {
                let p: Vec<f64> = idx.iter().zip(&center).map(|(&i, c0)| c0 - half + h * i as f64).collect();
                let obj = primal_objective(data, &p[..dim - 1], p[dim - 1], c);
                if obj < best {
                    best = obj;
                    arg = p;
                }
                let mut d = 0;
                while d < dim {
                    idx[d] += 1;
                    if idx[d] <= steps {
                        break;
                    }
                    idx[d] = 0;
                    d += 1;
                }
                if d == dim {
                    break;
                }
            }
            center = arg;
            half = 4.0 * h;
        }
        best
    }

    fn check_against_grid(data: &TrainingSet, c: f64) {
        let m = train_linear_svm(data, &hard(c)).unwrap();
        let p = primal_objective(data, &m.weights, m.bias, c);
        let g = grid_minimum(data, c);
        assert!((p - g).abs() < 1e-3, "solver {p} vs grid {g}");
        assert!(p <= g + 1e-9, "solver {p} worse than grid {g}");
    }

    #[test]
    fn one_dimensional_grid_oracle() {
        // Non-separable: x = +1 carries both labels.
        let data = set(&[&[1.0], &[-1.0], &[1.0]], &[1.0, -1.0, -1.0]);
        check_against_grid(&data, 1.0);
        let data = set(&[&[0.5], &[2.0], &[-1.0], &[0.2], &[-0.3]], &[1.0, 1.0, -1.0, -1.0, 1.0]);
        check_against_grid(&data, 0.7);
    }

    #[test]
    fn two_dimensional_grid_oracle() {
        let rows: &[&[f64]] = &[
            &[1.0, 2.0],
            &[2.0, 0.5],
            &[0.2, 1.5],
            &[-0.5, 0.3],
            &[-1.0, -1.0],
            &[0.5, -1.5],
            &[-2.0, 0.5],
            &[1.2, 1.0],
        ];
        let labels = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        check_against_grid(&set(rows, &labels), 1.0);
        check_against_grid(&set(rows, &labels), 0.3);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn solution_is_locally_optimal(
            pts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 4..24),
            c in 0.1f64..5.0,
            dir in proptest::collection::vec(-1.0f64..1.0, 3),
            step in 1e-3f64..0.5,
        ) {
            let rows: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
            let labels: Vec<f64> = (0..rows.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let data = TrainingSet::new(rows, labels, Default::default()).unwrap();
            let m = train_linear_svm(&data, &hard(c)).unwrap();
            let p = primal_objective(&data, &m.weights, m.bias, c);
            let w: Vec<f64> = m.weights.iter().zip(&dir).map(|(w, d)| w + step * d).collect();
            let q = primal_objective(&data, &w, m.bias + step * dir[2], c);
            proptest::prop_assert!(q >= p - 1e-7 * p.max(1.0), "{q} < {p}");
        }
    }
}
