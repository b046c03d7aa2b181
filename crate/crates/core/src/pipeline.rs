//! Model artifacts and the split → augment → train → score flow shared by
//! the command line and the acceptance tests.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentConfig};
use crate::error::{Error, Result};
use crate::evaluate::{self, EvaluationReport, ImportanceMethod, ImportanceReport};
use crate::featurize::{
    split_and_normalize, split_chronological, FeatureVector, GlycemicClass, LabeledExample,
    Normalization, DEFAULT_TEST_FRACTION,
};
use crate::models::boost::gbt_train;
use crate::models::forest::rf_train;
use crate::models::logistic::lr_train;
use crate::models::{
    BoostHyper, BoostedModel, Classifier, ForestHyper, LogisticHyper, LogisticModel, ModelKind,
    Probabilities, RandomForestModel,
};
use crate::net::{self, CrossGpModel, TrainConfig};
use crate::seed::derive_seed;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelHyper {
    Lr(LogisticHyper),
    Rf(ForestHyper),
    Gbt(BoostHyper),
    Crossgp(TrainConfig),
}

impl ModelHyper {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Lr => ModelHyper::Lr(LogisticHyper::default()),
            ModelKind::Rf => ModelHyper::Rf(ForestHyper::default()),
            ModelKind::Gbt => ModelHyper::Gbt(BoostHyper::default()),
            ModelKind::Crossgp => ModelHyper::Crossgp(TrainConfig::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelHyper::Lr(_) => ModelKind::Lr,
            ModelHyper::Rf(_) => ModelKind::Rf,
            ModelHyper::Gbt(_) => ModelKind::Gbt,
            ModelHyper::Crossgp(_) => ModelKind::Crossgp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub hyper: ModelHyper,
    pub seed: u64,
    pub test_fraction: f64,
    pub sigma_scale: f64,
    pub copies_per_example: usize,
}

impl TrainOptions {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        let aug = AugmentConfig::default();
        TrainOptions {
            hyper: ModelHyper::default_for(kind),
            seed,
            test_fraction: DEFAULT_TEST_FRACTION,
            sigma_scale: aug.sigma_scale,
            copies_per_example: aug.copies_per_example,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub seed: u64,
    pub test_fraction: f64,
    pub augment: AugmentConfig,
    pub n_examples: usize,
    pub n_train: usize,
    pub n_train_augmented: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainedModel {
    Lr(LogisticModel),
    Rf(RandomForestModel),
    Gbt(BoostedModel),
    Crossgp(CrossGpModel),
}

impl TrainedModel {
    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            TrainedModel::Lr(m) => m,
            TrainedModel::Rf(m) => m,
            TrainedModel::Gbt(m) => m,
            TrainedModel::Crossgp(m) => m,
        }
    }

    /// Tree ensembles are scale-free and see raw features.
    pub fn uses_normalized_inputs(&self) -> bool {
        matches!(self, TrainedModel::Lr(_) | TrainedModel::Crossgp(_))
    }
}

/// Everything needed to run inference on raw daily features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub training: TrainingRecord,
    pub normalization: Normalization,
    pub model: TrainedModel,
}

fn rows(examples: &[LabeledExample]) -> (Vec<FeatureVector>, Vec<GlycemicClass>) {
    examples
        .iter()
        .map(|e| (e.features.vector(), e.label))
        .unzip()
}

/// Splits chronologically, augments the training portion and fits one model.
/// Sub-seeds are derived from `opts.seed` and a per-purpose label.
pub fn train_model(examples: &[LabeledExample], opts: &TrainOptions) -> Result<ModelArtifact> {
    let split = split_and_normalize(examples, opts.test_fraction)?;
    let aug_cfg = AugmentConfig {
        sigma_scale: opts.sigma_scale,
        copies_per_example: opts.copies_per_example,
        seed: derive_seed(opts.seed, "augment"),
    };
    let train = augment(&split.train, &split.normalization.std, &aug_cfg);
    let (raw_x, y) = rows(&train);
    let norm = &split.normalization;
    let model_seed = derive_seed(opts.seed, opts.hyper.kind().as_str());

    log::info!(
        "training {} on {} rows ({} before augmentation), {} held out",
        opts.hyper.kind(),
        train.len(),
        split.train.len(),
        split.test.len()
    );
    let model = match opts.hyper {
        ModelHyper::Lr(h) => TrainedModel::Lr(lr_train(&norm.apply_all(&raw_x), &y, h)?),
        ModelHyper::Rf(h) => TrainedModel::Rf(rf_train(
            &raw_x,
            &y,
            ForestHyper {
                seed: model_seed,
                ..h
            },
        )?),
        ModelHyper::Gbt(h) => TrainedModel::Gbt(gbt_train(
            &raw_x,
            &y,
            BoostHyper {
                seed: model_seed,
                ..h
            },
        )?),
        ModelHyper::Crossgp(c) => TrainedModel::Crossgp(net::train(
            &norm.apply_all(&raw_x),
            &y,
            &TrainConfig {
                seed: model_seed,
                ..c
            },
        )?),
    };
    Ok(ModelArtifact {
        schema_version: SCHEMA_VERSION,
        kind: opts.hyper.kind(),
        training: TrainingRecord {
            seed: opts.seed,
            test_fraction: opts.test_fraction,
            augment: aug_cfg,
            n_examples: examples.len(),
            n_train: split.train.len(),
            n_train_augmented: train.len(),
            n_test: split.test.len(),
        },
        normalization: split.normalization,
        model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    /// The held-out tail recomputed with the artifact's test fraction.
    Test,
    All,
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Subset::Test),
            "all" => Ok(Subset::All),
            other => Err(Error::Config(format!(
                "unknown subset '{other}' (expected test or all)"
            ))),
        }
    }
}

impl ModelArtifact {
    pub fn load(path: &Path) -> Result<Self> {
        let artifact: ModelArtifact = read_json(path)?;
        if artifact.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion(artifact.schema_version));
        }
        Ok(artifact)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn select(
        &self,
        examples: &[LabeledExample],
        subset: Subset,
    ) -> Result<Vec<LabeledExample>> {
        match subset {
            Subset::All => Ok(examples.to_vec()),
            Subset::Test => Ok(split_chronological(examples, self.training.test_fraction)?.1),
        }
    }

    fn prepare(&self, x: &FeatureVector) -> FeatureVector {
        if self.model.uses_normalized_inputs() {
            self.normalization.apply(x)
        } else {
            *x
        }
    }
}

impl Classifier for ModelArtifact {
    fn kind(&self) -> ModelKind {
        self.kind
    }

    fn predict_proba(&self, x: &FeatureVector) -> Probabilities {
        self.model.classifier().predict_proba(&self.prepare(x))
    }

    fn predict_proba_many(&self, x: &[FeatureVector]) -> Vec<Probabilities> {
        let prepared: Vec<FeatureVector> = x.iter().map(|r| self.prepare(r)).collect();
        self.model.classifier().predict_proba_many(&prepared)
    }

    fn native_importance(&self) -> Option<FeatureVector> {
        self.model.classifier().native_importance()
    }
}

pub fn evaluate_artifact(
    artifact: &ModelArtifact,
    examples: &[LabeledExample],
    subset: Subset,
) -> Result<EvaluationReport> {
    let (x, y) = rows(&artifact.select(examples, subset)?);
    evaluate::evaluate(artifact, &x, &y)
}

pub fn importance_artifact(
    artifact: &ModelArtifact,
    examples: &[LabeledExample],
    subset: Subset,
    method: ImportanceMethod,
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    match method {
        ImportanceMethod::Native => evaluate::native_importance(artifact),
        ImportanceMethod::Permutation => {
            let (x, y) = rows(&artifact.select(examples, subset)?);
            evaluate::permutation_importance(
                artifact,
                &x,
                &y,
                repeats,
                derive_seed(seed, "permutation"),
            )
        }
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}
