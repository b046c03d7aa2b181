//! Multinomial logistic regression fitted by full-batch gradient descent on
//! the L2-penalized negative log-likelihood.
//!
//! With two classes and one row of weights pinned at zero, the softmax
//! reduces to the familiar `1 / (1 + exp(-(b0 + b1·x)))`.

use serde::{Deserialize, Serialize};

use super::{log_sum_exp, normalize_importance, softmax, Classifier, ModelKind, Probabilities};
use crate::error::{Error, Result};
use crate::featurize::{FeatureVector, GlycemicClass, N_CLASSES, N_FEATURES};

/// Objective is recorded every this many epochs (and after the last one).
pub const CHECKPOINT_EVERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticHyper {
    pub step: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticHyper {
    fn default() -> Self {
        LogisticHyper {
            step: 0.1,
            epochs: 2000,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LogisticParams {
    /// One row per class.
    pub weights: [[f64; N_FEATURES]; N_CLASSES],
    pub intercepts: [f64; N_CLASSES],
}

pub const N_PARAMS: usize = N_CLASSES * (N_FEATURES + 1);

impl LogisticParams {
    pub fn logits(&self, x: &FeatureVector) -> [f64; N_CLASSES] {
        std::array::from_fn(|k| self.intercepts[k] + dot(&self.weights[k], x))
    }

    pub fn to_flat(&self) -> [f64; N_PARAMS] {
        let mut out = [0.0; N_PARAMS];
        for k in 0..N_CLASSES {
            out[k * N_FEATURES..(k + 1) * N_FEATURES].copy_from_slice(&self.weights[k]);
        }
        out[N_CLASSES * N_FEATURES..].copy_from_slice(&self.intercepts);
        out
    }

    pub fn from_flat(flat: &[f64; N_PARAMS]) -> Self {
        let mut p = LogisticParams::default();
        for k in 0..N_CLASSES {
            p.weights[k].copy_from_slice(&flat[k * N_FEATURES..(k + 1) * N_FEATURES]);
        }
        p.intercepts
            .copy_from_slice(&flat[N_CLASSES * N_FEATURES..]);
        p
    }

    fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|v| v.is_finite())
    }
}

fn dot(a: &FeatureVector, b: &FeatureVector) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Binary logistic function.
pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean negative log-likelihood plus `l2/2 · ‖W‖²` (intercepts unpenalized).
pub fn penalized_nll(p: &LogisticParams, x: &[FeatureVector], y: &[GlycemicClass], l2: f64) -> f64 {
    let nll: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let z = p.logits(xi);
            log_sum_exp(&z) - z[yi.code()]
        })
        .sum::<f64>()
        / x.len() as f64;
    let norm: f64 = p.weights.iter().flatten().map(|w| w * w).sum();
    nll + 0.5 * l2 * norm
}

/// Analytic gradient of [`penalized_nll`].
pub fn gradient(
    p: &LogisticParams,
    x: &[FeatureVector],
    y: &[GlycemicClass],
    l2: f64,
) -> LogisticParams {
    let mut g = LogisticParams::default();
    for (xi, yi) in x.iter().zip(y) {
        let probs = softmax(&p.logits(xi));
        for k in 0..N_CLASSES {
            let r = probs[k] - if yi.code() == k { 1.0 } else { 0.0 };
            g.intercepts[k] += r;
            for (gw, xv) in g.weights[k].iter_mut().zip(xi) {
                *gw += r * xv;
            }
        }
    }
    let n = x.len() as f64;
    for k in 0..N_CLASSES {
        g.intercepts[k] /= n;
        for j in 0..N_FEATURES {
            g.weights[k][j] = g.weights[k][j] / n + l2 * p.weights[k][j];
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub hyper: LogisticHyper,
    #[serde(flatten)]
    pub params: LogisticParams,
    /// Penalized objective at epoch 0 and every [`CHECKPOINT_EVERY`] epochs.
    pub objective_trace: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(hyper: LogisticHyper) -> Self {
        LogisticModel {
            hyper,
            params: LogisticParams::default(),
            objective_trace: Vec::new(),
        }
    }
}

pub fn lr_train(
    x: &[FeatureVector],
    y: &[GlycemicClass],
    hyper: LogisticHyper,
) -> Result<LogisticModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::TrainingData);
    }
    let mut present = [false; N_CLASSES];
    y.iter().for_each(|c| present[c.code()] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::TrainingData);
    }
    if !(hyper.step >= 0.0) || !(hyper.l2 >= 0.0) {
        return Err(Error::Hyper(format!(
            "step {} / l2 {} must be non-negative",
            hyper.step, hyper.l2
        )));
    }

    let mut model = LogisticModel::zeros(hyper);
    model
        .objective_trace
        .push(penalized_nll(&model.params, x, y, hyper.l2));
    for epoch in 1..=hyper.epochs {
        let g = gradient(&model.params, x, y, hyper.l2);
        let mut flat = model.params.to_flat();
        for (p, d) in flat.iter_mut().zip(g.to_flat()) {
            *p -= hyper.step * d;
        }
        model.params = LogisticParams::from_flat(&flat);
        if !model.params.is_finite() {
            return Err(Error::NonFinite {
                stage: "logistic regression",
                step: epoch,
            });
        }
        if epoch % CHECKPOINT_EVERY == 0 || epoch == hyper.epochs {
            model
                .objective_trace
                .push(penalized_nll(&model.params, x, y, hyper.l2));
        }
    }
    Ok(model)
}

impl Classifier for LogisticModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Lr
    }

    fn predict_proba(&self, x: &FeatureVector) -> Probabilities {
        softmax(&self.params.logits(x))
    }

    /// Mean absolute weight per feature across classes.
    fn native_importance(&self) -> Option<FeatureVector> {
        let raw: FeatureVector = std::array::from_fn(|j| {
            self.params
                .weights
                .iter()
                .map(|row| row[j].abs())
                .sum::<f64>()
                / N_CLASSES as f64
        });
        normalize_importance(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn zero_model_is_uniform() {
        let m = LogisticModel::zeros(LogisticHyper::default());
        let p = m.predict_proba(&[3.0, -1.0, 0.0, 9.0, 100.0, 2.0, 1.0]);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(m.predict(&[0.0; N_FEATURES]), GlycemicClass::Good);
        assert!(m.native_importance().is_none());
    }

    #[test]
    fn binary_case_matches_sigmoid() {
        assert_eq!(logistic(0.0), 0.5);
        // two-class softmax with the second logit pinned at zero
        for z in [-3.0f64, -0.2, 0.0, 1.7] {
            let e = z.exp();
            assert!((e / (e + 1.0) - logistic(z)).abs() < 1e-15);
        }
    }

    #[test]
    fn importance_from_single_column() {
        let mut m = LogisticModel::zeros(LogisticHyper::default());
        m.params.weights[0][0] = 2.0;
        m.params.weights[2][0] = -1.0;
        assert_eq!(
            m.native_importance().unwrap(),
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    fn blobs(seed: u64) -> (Vec<FeatureVector>, Vec<GlycemicClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..100 {
            let (cx, label) = if i % 2 == 0 {
                (-5.0, GlycemicClass::Good)
            } else {
                (5.0, GlycemicClass::Poor)
            };
            let mut row = [0.0; N_FEATURES];
            row[0] = cx + rng.sample::<f64, _>(StandardNormal) * 0.5;
            row[1] = rng.sample::<f64, _>(StandardNormal) * 0.5;
            x.push(row);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        let (x, y) = blobs(3);
        // hand-chosen separating hyperplane x0 = 0
        assert!(x
            .iter()
            .zip(&y)
            .all(|(r, c)| (r[0] < 0.0) == (*c == GlycemicClass::Good)));
        let hyper = LogisticHyper {
            epochs: 500,
            ..Default::default()
        };
        let m = lr_train(&x, &y, hyper).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(r, c)| m.predict(r) == **c)
            .count();
        assert_eq!(correct, x.len());
        assert!(m.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_single_class() {
        let (x, _) = blobs(1);
        let y = vec![GlycemicClass::Good; x.len()];
        assert!(matches!(
            lr_train(&x, &y, LogisticHyper::default()),
            Err(Error::TrainingData)
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let (mut x, y) = blobs(2);
        x.iter_mut().for_each(|r| r[0] *= 1e200);
        let hyper = LogisticHyper {
            step: 1e10,
            epochs: 10,
            l2: 0.0,
        };
        assert!(matches!(
            lr_train(&x, &y, hyper),
            Err(Error::NonFinite { .. })
        ));
    }
}
