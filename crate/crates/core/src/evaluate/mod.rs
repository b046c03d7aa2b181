//! Per-class precision / recall / F1, accuracy, and feature importance.

mod importance;

pub use importance::{
    native_importance, permutation_importance, FeatureScore, ImportanceMethod, ImportanceReport,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{FeatureVector, GlycemicClass, N_CLASSES};
use crate::models::{Classifier, ModelKind};

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[GlycemicClass], predicted: &[GlycemicClass]) -> Self {
        let mut m = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            m.counts[t.code()][p.code()] += 1;
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..N_CLASSES).map(|k| self.counts[k][k]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    /// `None` when the class was never predicted.
    pub fn precision(&self, class: GlycemicClass) -> Option<f64> {
        let k = class.code();
        let predicted: u64 = (0..N_CLASSES).map(|t| self.counts[t][k]).sum();
        (predicted > 0).then(|| self.counts[k][k] as f64 / predicted as f64)
    }

    /// `None` when the class never occurs.
    pub fn recall(&self, class: GlycemicClass) -> Option<f64> {
        let k = class.code();
        let actual: u64 = self.counts[k].iter().sum();
        (actual > 0).then(|| self.counts[k][k] as f64 / actual as f64)
    }
}

/// Harmonic mean of precision and recall. A side that is undefined counts
/// as zero as long as the other side is defined.
pub fn f1_score(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (None, None) => None,
        _ => Some(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub f1: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassTable {
    pub good: ClassMetrics,
    pub moderate: ClassMetrics,
    pub poor: ClassMetrics,
}

impl ClassTable {
    pub fn get(&self, class: GlycemicClass) -> &ClassMetrics {
        match class {
            GlycemicClass::Good => &self.good,
            GlycemicClass::Moderate => &self.moderate,
            GlycemicClass::Poor => &self.poor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    pub accuracy: f64,
    /// Mean of the defined per-class precisions.
    pub macro_precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename = "evaluation")]
pub struct EvaluationReport {
    pub model_kind: ModelKind,
    pub n_examples: usize,
    pub classes: ClassTable,
    pub overall: Overall,
    pub confusion: ConfusionMatrix,
}

impl EvaluationReport {
    pub fn from_confusion(model_kind: ModelKind, confusion: ConfusionMatrix) -> Result<Self> {
        let accuracy = confusion.accuracy().ok_or(Error::EmptyTestSet)?;
        let metrics = |c: GlycemicClass| {
            let precision = confusion.precision(c);
            let recall = confusion.recall(c);
            ClassMetrics {
                precision,
                f1: f1_score(precision, recall),
                recall,
            }
        };
        let defined: Vec<f64> = GlycemicClass::ALL
            .iter()
            .filter_map(|&c| confusion.precision(c))
            .collect();
        let macro_precision =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Ok(EvaluationReport {
            model_kind,
            n_examples: confusion.total() as usize,
            classes: ClassTable {
                good: metrics(GlycemicClass::Good),
                moderate: metrics(GlycemicClass::Moderate),
                poor: metrics(GlycemicClass::Poor),
            },
            overall: Overall {
                accuracy,
                macro_precision,
            },
            confusion,
        })
    }
}

/// Scores `model` on already-prepared feature rows.
pub fn evaluate(
    model: &dyn Classifier,
    x: &[FeatureVector],
    y: &[GlycemicClass],
) -> Result<EvaluationReport> {
    if x.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    let predicted = model.predict_many(x);
    EvaluationReport::from_confusion(
        model.kind(),
        ConfusionMatrix::from_predictions(y, &predicted),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use GlycemicClass::*;

    fn fixed_14() -> ConfusionMatrix {
        ConfusionMatrix {
            counts: [[5, 1, 0], [1, 3, 1], [0, 1, 2]],
        }
    }

    #[test]
    fn hand_computed_matrix() {
        let r = EvaluationReport::from_confusion(ModelKind::Lr, fixed_14()).unwrap();
        assert_eq!(r.n_examples, 14);
        let g = r.classes.good;
        for v in [g.precision, g.recall, g.f1] {
            assert!((v.unwrap() - 5.0 / 6.0).abs() < 1e-12);
        }
        assert!((r.overall.accuracy - 10.0 / 14.0).abs() < 1e-12);
        let m = r.classes.moderate;
        assert!((m.precision.unwrap() - 0.6).abs() < 1e-12);
        assert!((m.recall.unwrap() - 0.6).abs() < 1e-12);
        let p = r.classes.poor;
        assert!((p.precision.unwrap() - 2.0 / 3.0).abs() < 1e-12);
        let macro_p = (5.0 / 6.0 + 0.6 + 2.0 / 3.0) / 3.0;
        assert!((r.overall.macro_precision.unwrap() - macro_p).abs() < 1e-12);
    }

    #[test]
    fn undefined_is_not_zero() {
        let truth = [Good, Good, Moderate];
        let pred = [Good, Good, Good];
        let r = EvaluationReport::from_confusion(
            ModelKind::Rf,
            ConfusionMatrix::from_predictions(&truth, &pred),
        )
        .unwrap();
        assert_eq!(r.classes.poor.precision, None);
        assert_eq!(r.classes.poor.recall, None);
        assert_eq!(r.classes.poor.f1, None);
        // present but never predicted
        assert_eq!(r.classes.moderate.precision, None);
        assert_eq!(r.classes.moderate.recall, Some(0.0));
        assert_eq!(r.classes.moderate.f1, Some(0.0));

        let json = serde_json::to_value(&r).unwrap();
        assert!(json["classes"]["poor"]["f1"].is_null());
        assert_eq!(json["report"], "evaluation");
    }

    #[test]
    fn f1_consistency() {
        assert_eq!(f1_score(Some(0.0), Some(0.0)), Some(0.0));
        assert_eq!(f1_score(Some(1.0), Some(1.0)), Some(1.0));
        assert!((f1_score(Some(0.72), Some(0.95)).unwrap() - 0.8191).abs() < 1e-4);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let r = EvaluationReport::from_confusion(ModelKind::Lr, ConfusionMatrix::default());
        assert!(matches!(r, Err(Error::EmptyTestSet)));
    }

    #[test]
    fn report_round_trips() {
        let r = EvaluationReport::from_confusion(ModelKind::Gbt, fixed_14()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvaluationReport>(&s).unwrap(), r);
    }
}
