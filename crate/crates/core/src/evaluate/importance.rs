use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{FeatureVector, GlycemicClass, FEATURE_NAMES, MIN_EXAMPLES, N_FEATURES};
use crate::models::{Classifier, ModelKind};
use crate::par;
use crate::seed::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMethod {
    Native,
    Permutation,
}

impl std::str::FromStr for ImportanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(ImportanceMethod::Native),
            "permutation" => Ok(ImportanceMethod::Permutation),
            other => Err(Error::Config(format!(
                "unknown importance method '{other}' (expected native or permutation)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "report", rename = "importance")]
pub struct ImportanceReport {
    pub model_kind: ModelKind,
    pub method: ImportanceMethod,
    /// Non-negative, summing to one, in feature order.
    pub scores: Vec<FeatureScore>,
    pub top3: Vec<String>,
    /// Set when every raw score was zero and a uniform split was reported.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub repeats: Option<usize>,
}

impl ImportanceReport {
    fn new(model_kind: ModelKind, method: ImportanceMethod, raw: &FeatureVector) -> Self {
        let total: f64 = raw.iter().sum();
        let degenerate = !(total > 0.0);
        let scores: FeatureVector = if degenerate {
            [1.0 / N_FEATURES as f64; N_FEATURES]
        } else {
            raw.map(|v| v / total)
        };
        let mut order: Vec<usize> = (0..N_FEATURES).collect();
        // stable: equal scores keep feature order
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        ImportanceReport {
            model_kind,
            method,
            scores: FEATURE_NAMES
                .iter()
                .zip(scores)
                .map(|(name, score)| FeatureScore {
                    feature: name.to_string(),
                    score,
                })
                .collect(),
            top3: order[..3]
                .iter()
                .map(|&j| FEATURE_NAMES[j].to_string())
                .collect(),
            degenerate,
            repeats: None,
        }
    }

    pub fn score_vector(&self) -> FeatureVector {
        std::array::from_fn(|j| self.scores[j].score)
    }

    pub fn top3_contains(&self, feature: &str) -> bool {
        self.top3.iter().any(|f| f == feature)
    }
}

pub fn native_importance(model: &dyn Classifier) -> Result<ImportanceReport> {
    if model.kind() == ModelKind::Crossgp {
        return Err(Error::Unsupported("crossgp"));
    }
    let raw = model.native_importance().unwrap_or([0.0; N_FEATURES]);
    Ok(ImportanceReport::new(
        model.kind(),
        ImportanceMethod::Native,
        &raw,
    ))
}

/// Mean accuracy drop per feature when its column is shuffled, floored at
/// zero and sum-normalized. Each (feature, repeat) shuffle has its own seed.
pub fn permutation_importance(
    model: &dyn Classifier,
    x: &[FeatureVector],
    y: &[GlycemicClass],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if x.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if x.len() < MIN_EXAMPLES {
        return Err(Error::Config(format!(
            "permutation importance needs at least {MIN_EXAMPLES} examples, got {}",
            x.len()
        )));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let accuracy = |rows: &[FeatureVector]| {
        let pred = model.predict_many(rows);
        pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64
    };
    let baseline = accuracy(x);

    let drops = par::map_range(N_FEATURES * repeats, |job| {
        let (j, r) = (job / repeats, job % repeats);
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(child_seed(seed, j as u64), r as u64));
        let mut column: Vec<f64> = x.iter().map(|row| row[j]).collect();
        column.shuffle(&mut rng);
        let shuffled: Vec<FeatureVector> = x
            .iter()
            .zip(&column)
            .map(|(row, &v)| {
                let mut row = *row;
                row[j] = v;
                row
            })
            .collect();
        baseline - accuracy(&shuffled)
    });

    let raw: FeatureVector = std::array::from_fn(|j| {
        (drops[j * repeats..(j + 1) * repeats].iter().sum::<f64>() / repeats as f64).max(0.0)
    });
    let mut report = ImportanceReport::new(model.kind(), ImportanceMethod::Permutation, &raw);
    report.repeats = Some(repeats);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Probabilities;
    use GlycemicClass::*;

    struct Constant;

    impl Classifier for Constant {
        fn kind(&self) -> ModelKind {
            ModelKind::Lr
        }
        fn predict_proba(&self, _: &FeatureVector) -> Probabilities {
            [0.2, 0.5, 0.3]
        }
    }

    struct Threshold;

    impl Classifier for Threshold {
        fn kind(&self) -> ModelKind {
            ModelKind::Rf
        }
        fn predict_proba(&self, x: &FeatureVector) -> Probabilities {
            if x[0] > 0.7 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            }
        }
        fn native_importance(&self) -> Option<FeatureVector> {
            Some([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        }
    }

    fn data() -> (Vec<FeatureVector>, Vec<GlycemicClass>) {
        (0..40)
            .map(|i| {
                let tir = i as f64 / 40.0;
                let x = [
                    tir,
                    0.1,
                    0.9 - tir,
                    1.0 + i as f64,
                    2.0,
                    3.0,
                    (i % 7) as f64,
                ];
                (x, if tir > 0.7 { Good } else { Poor })
            })
            .unzip()
    }

    #[test]
    fn constant_model_is_degenerate() {
        let (x, y) = data();
        let r = permutation_importance(&Constant, &x, &y, 3, 1).unwrap();
        assert!(r.degenerate);
        assert!(r.scores.iter().all(|s| (s.score - 1.0 / 7.0).abs() < 1e-15));
        assert_eq!(r.top3, ["tir", "tbr", "tar"]);
        assert!(native_importance(&Constant).unwrap().degenerate);
    }

    #[test]
    fn threshold_model_uses_only_feature_zero() {
        let (x, y) = data();
        let r = permutation_importance(&Threshold, &x, &y, 5, 9).unwrap();
        assert!(!r.degenerate);
        assert_eq!(r.scores[0].score, 1.0);
        assert_eq!(r.top3[0], "tir");
        assert_eq!(r, permutation_importance(&Threshold, &x, &y, 5, 9).unwrap());
        assert_eq!(native_importance(&Threshold).unwrap().scores[0].score, 1.0);
    }

    #[test]
    fn preconditions() {
        let (x, y) = data();
        assert!(matches!(
            permutation_importance(&Threshold, &[], &[], 1, 0),
            Err(Error::EmptyTestSet)
        ));
        assert!(permutation_importance(&Threshold, &x[..5], &y[..5], 1, 0).is_err());
        assert!(permutation_importance(&Threshold, &x, &y, 0, 0).is_err());
    }

    #[test]
    fn top3_ties_follow_feature_order() {
        let r = ImportanceReport::new(
            ModelKind::Gbt,
            ImportanceMethod::Native,
            &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 1.0],
        );
        assert_eq!(r.top3, ["meal_bolus", "tbr", "correction_bolus"]);
        assert!((r.scores.iter().map(|s| s.score).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
