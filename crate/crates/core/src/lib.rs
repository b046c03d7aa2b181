//! Cross-day glycemic-control prediction.
//!
//! Raw CGM, bolus and meal events are grouped per subject-day
//! ([`ingest`]), reduced to seven daily features and next-day labels
//! ([`featurize`]), optionally perturbed ([`augment`]), and fed to one of
//! four classifiers: multinomial logistic regression, a random forest,
//! second-order gradient-boosted trees ([`models`]) or the dual-branch
//! attention network ([`net`]). [`evaluate`] produces per-class metrics and
//! feature importances; [`synth`] generates statistically matched raw data.

pub mod augment;
pub mod error;
pub mod evaluate;
pub mod featurize;
pub mod ingest;
pub mod models;
pub mod net;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
