//! The three comparison classifiers and the contract every model, including
//! the attention network, satisfies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::featurize::{FeatureVector, GlycemicClass, N_CLASSES};

pub mod boost;
pub mod forest;
pub mod logistic;
pub mod tree;

pub use boost::{BoostHyper, BoostedModel};
pub use forest::{ForestHyper, RandomForestModel};
pub use logistic::{LogisticHyper, LogisticModel};
pub use tree::{ClassTree, RegressionTree, Tree};

pub type Probabilities = [f64; N_CLASSES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lr,
    Rf,
    Gbt,
    Crossgp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Lr,
        ModelKind::Rf,
        ModelKind::Gbt,
        ModelKind::Crossgp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Lr => "lr",
            ModelKind::Rf => "rf",
            ModelKind::Gbt => "gbt",
            ModelKind::Crossgp => "crossgp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown model `{s}` (expected one of lr, rf, gbt, crossgp)"))
    }
}

/// Uniform prediction surface over all trained models.
pub trait Classifier: Sync {
    fn kind(&self) -> ModelKind;

    /// Non-negative class probabilities summing to one.
    fn predict_proba(&self, x: &FeatureVector) -> Probabilities;

    fn predict(&self, x: &FeatureVector) -> GlycemicClass {
        let code = argmax(&self.predict_proba(x));
        GlycemicClass::from_code(code).expect("argmax over three classes")
    }

    fn predict_proba_many(&self, x: &[FeatureVector]) -> Vec<Probabilities> {
        x.iter().map(|r| self.predict_proba(r)).collect()
    }

    fn predict_many(&self, x: &[FeatureVector]) -> Vec<GlycemicClass> {
        self.predict_proba_many(x)
            .iter()
            .map(|p| GlycemicClass::from_code(argmax(p)).expect("argmax over three classes"))
            .collect()
    }

    /// Per-feature importances learned by the model itself, if it has any.
    fn native_importance(&self) -> Option<FeatureVector> {
        None
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64; N_CLASSES]) -> Probabilities {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|z| (z - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

/// `ln Σ exp(z)` without overflow.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

/// Mean softmax cross-entropy of `logits` against `labels`.
pub fn cross_entropy(logits: &[[f64; N_CLASSES]], labels: &[GlycemicClass]) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(z, y)| log_sum_exp(z) - z[y.code()])
        .sum();
    total / logits.len() as f64
}

/// Normalizes non-negative importances to sum one. `None` when all are zero.
pub(crate) fn normalize_importance(raw: &FeatureVector) -> Option<FeatureVector> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 && total.is_finite() {
        Some(raw.map(|v| v / total))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.0, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), 0);
    }

    #[test]
    fn cross_entropy_values() {
        let ln3 = 3f64.ln();
        assert!((cross_entropy(&[[0.0; 3]], &[GlycemicClass::Poor]) - ln3).abs() < 1e-15);
        assert!(cross_entropy(&[[30.0, 0.0, 0.0]], &[GlycemicClass::Good]) < 1e-9);
        let expected = (1.0 + 2.0 * (-1f64).exp()).ln();
        assert!(
            (cross_entropy(&[[1.0, 0.0, 0.0]], &[GlycemicClass::Good]) - expected).abs() < 1e-15
        );
        assert!((expected - 0.5514).abs() < 1e-4);
        // extreme logits stay finite
        assert!(cross_entropy(&[[1000.0, -1000.0, 0.0]], &[GlycemicClass::Moderate]).is_finite());
    }

    #[test]
    fn softmax_is_a_distribution() {
        let p = softmax(&[800.0, -3.0, 2.5]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn model_kind_parse() {
        assert_eq!("gbt".parse::<ModelKind>().unwrap(), ModelKind::Gbt);
        assert!("bogus"
            .parse::<ModelKind>()
            .unwrap_err()
            .contains("crossgp"));
    }
}
