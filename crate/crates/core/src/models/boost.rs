//! Second-order gradient boosting with a softmax cross-entropy loss.
//!
//! Every round fits one regression tree per class to the gradients `g` and
//! Hessian diagonals `h` of the current margins. Splits are exact-greedy on
//! the gain
//!
//! ```text
//! ½ [ G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ) ]
//! ```
//!
//! and are accepted only when the gain exceeds `γ`. Leaves carry
//! `η · (−G/(H+λ))`, so each stored tree is exactly the function added to
//! the margins. The tracked objective is
//!
//! ```text
//! Σᵢ l(yᵢ, ŷᵢ) + Σₖ Ω(fₖ),   Ω(f) = γ·T + ½·λ·‖w‖²
//! ```
//!
//! with `T` the leaf count and `w` the stored leaf values.

use serde::{Deserialize, Serialize};

use super::tree::{midpoint, sorted_by_feature, Node, RegressionTree, Tree};
use super::{log_sum_exp, normalize_importance, softmax, Classifier, ModelKind, Probabilities};
use crate::error::{Error, Result};
use crate::featurize::{FeatureVector, GlycemicClass, N_CLASSES, N_FEATURES};
use crate::par;

const MIN_HESSIAN: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostHyper {
    pub rounds: usize,
    pub eta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub max_depth: usize,
    /// Recorded for provenance; exact greedy growth draws no randomness.
    pub seed: u64,
}

impl Default for BoostHyper {
    fn default() -> Self {
        BoostHyper {
            rounds: 100,
            eta: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            max_depth: 4,
            seed: 0,
        }
    }
}

impl BoostHyper {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Hyper("boosting needs at least one round".into()));
        }
        if !(self.eta >= 0.0 && self.eta <= 1.0) {
            return Err(Error::Hyper(format!("eta {} outside [0, 1]", self.eta)));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Hyper("lambda and gamma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub hyper: BoostHyper,
    /// Log of Laplace-smoothed training class frequencies.
    pub base_score: [f64; N_CLASSES],
    /// One tree per class per round.
    pub rounds: Vec<[RegressionTree; N_CLASSES]>,
    /// Regularized objective before the first round and after each round.
    pub objective_trace: Vec<f64>,
}

impl BoostedModel {
    pub fn margins(&self, x: &FeatureVector) -> [f64; N_CLASSES] {
        let mut m = self.base_score;
        for trees in &self.rounds {
            for (mk, tree) in m.iter_mut().zip(trees) {
                *mk += tree.predict(x);
            }
        }
        m
    }
}

/// `γ·T + ½·λ·‖w‖²` for one tree.
pub fn tree_penalty(tree: &RegressionTree, lambda: f64, gamma: f64) -> f64 {
    let sq: f64 = tree.leaves().map(|w| w * w).sum();
    gamma * tree.n_leaves() as f64 + 0.5 * lambda * sq
}

/// Total softmax cross-entropy of the margins against the labels.
pub fn total_loss(margins: &[[f64; N_CLASSES]], labels: &[usize]) -> f64 {
    margins
        .iter()
        .zip(labels)
        .map(|(m, &y)| log_sum_exp(m) - m[y])
        .sum()
}

pub fn gbt_train(
    x: &[FeatureVector],
    y: &[GlycemicClass],
    hyper: BoostHyper,
) -> Result<BoostedModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::TrainingData);
    }
    hyper.validate()?;
    let labels: Vec<usize> = y.iter().map(|c| c.code()).collect();
    let n = x.len();

    let mut counts = [0usize; N_CLASSES];
    labels.iter().for_each(|&c| counts[c] += 1);
    let base_score = counts.map(|c| ((c as f64 + 1.0) / (n as f64 + N_CLASSES as f64)).ln());

    let mut margins = vec![base_score; n];
    let mut penalty = 0.0;
    let mut model = BoostedModel {
        hyper,
        base_score,
        rounds: Vec::with_capacity(hyper.rounds),
        objective_trace: vec![total_loss(&margins, &labels)],
    };
    let rows: Vec<usize> = (0..n).collect();

    for round in 1..=hyper.rounds {
        let probs: Vec<[f64; N_CLASSES]> = margins.iter().map(softmax).collect();
        let trees = par::map_range(N_CLASSES, |k| {
            let g: Vec<f64> = probs
                .iter()
                .zip(&labels)
                .map(|(p, &yi)| p[k] - if yi == k { 1.0 } else { 0.0 })
                .collect();
            let h: Vec<f64> = probs
                .iter()
                .map(|p| (p[k] * (1.0 - p[k])).max(MIN_HESSIAN))
                .collect();
            grow_regression_tree(x, &g, &h, &rows, &hyper)
        });
        let trees: [RegressionTree; N_CLASSES] = trees.try_into().expect("one tree per class");

        for (m, xi) in margins.iter_mut().zip(x) {
            for (mk, tree) in m.iter_mut().zip(&trees) {
                *mk += tree.predict(xi);
            }
        }
        if margins.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: "gradient boosting",
                step: round,
            });
        }
        penalty += trees
            .iter()
            .map(|t| tree_penalty(t, hyper.lambda, hyper.gamma))
            .sum::<f64>();
        model
            .objective_trace
            .push(total_loss(&margins, &labels) + penalty);
        model.rounds.push(trees);
    }
    Ok(model)
}

fn leaf_weight(g: f64, h: f64, hyper: &BoostHyper) -> f64 {
    hyper.eta * (-g / (h + hyper.lambda))
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

fn grow_regression_tree(
    x: &[FeatureVector],
    g: &[f64],
    h: &[f64],
    rows: &[usize],
    hyper: &BoostHyper,
) -> RegressionTree {
    let mut tree = Tree {
        nodes: Vec::new(),
        max_depth: Some(hyper.max_depth),
    };
    grow_node(x, g, h, rows.to_vec(), 0, hyper, &mut tree.nodes);
    tree
}

fn grow_node(
    x: &[FeatureVector],
    g: &[f64],
    h: &[f64],
    rows: Vec<usize>,
    depth: usize,
    hyper: &BoostHyper,
    nodes: &mut Vec<Node<f64>>,
) -> usize {
    let g_sum: f64 = rows.iter().map(|&r| g[r]).sum();
    let h_sum: f64 = rows.iter().map(|&r| h[r]).sum();
    let index = nodes.len();
    nodes.push(Node::Leaf {
        value: leaf_weight(g_sum, h_sum, hyper),
    });
    if depth >= hyper.max_depth || rows.len() < 2 {
        return index;
    }

    let parent = score(g_sum, h_sum, hyper.lambda);
    let mut best: Option<(usize, f64, Vec<usize>, usize)> = None;
    for feature in 0..N_FEATURES {
        let sorted = sorted_by_feature(x, &rows, feature);
        let (mut gl, mut hl) = (0.0, 0.0);
        let mut best_here: Option<(usize, f64)> = None;
        for pos in 1..sorted.len() {
            gl += g[sorted[pos - 1]];
            hl += h[sorted[pos - 1]];
            if x[sorted[pos - 1]][feature] >= x[sorted[pos]][feature] {
                continue;
            }
            let gain = 0.5
                * (score(gl, hl, hyper.lambda) + score(g_sum - gl, h_sum - hl, hyper.lambda)
                    - parent);
            if gain > hyper.gamma && best_here.is_none_or(|(_, b)| gain > b) {
                best_here = Some((pos, gain));
            }
        }
        if let Some((pos, gain)) = best_here {
            if best.as_ref().is_none_or(|b| gain > b.1) {
                best = Some((feature, gain, sorted, pos));
            }
        }
    }
    let Some((feature, gain, sorted, pos)) = best else {
        return index;
    };

    let threshold = midpoint(x[sorted[pos - 1]][feature], x[sorted[pos]][feature]);
    let right_rows = sorted[pos..].to_vec();
    let mut left_rows = sorted;
    left_rows.truncate(pos);
    let left = grow_node(x, g, h, left_rows, depth + 1, hyper, nodes);
    let right = grow_node(x, g, h, right_rows, depth + 1, hyper, nodes);
    nodes[index] = Node::Split {
        feature,
        threshold,
        left,
        right,
        gain,
    };
    index
}

impl Classifier for BoostedModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Gbt
    }

    fn predict_proba(&self, x: &FeatureVector) -> Probabilities {
        softmax(&self.margins(x))
    }

    /// Split gains summed over all trees, normalized.
    fn native_importance(&self) -> Option<FeatureVector> {
        let mut raw = [0.0; N_FEATURES];
        self.rounds
            .iter()
            .flatten()
            .for_each(|t| t.accumulate_gain(&mut raw));
        normalize_importance(&raw)
    }
}
