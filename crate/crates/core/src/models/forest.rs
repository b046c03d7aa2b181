//! Random forest of Gini-split classification trees with soft voting.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, sorted_by_feature, ClassTree, Node, Tree};
use super::{normalize_importance, Classifier, ModelKind, Probabilities};
use crate::error::{Error, Result};
use crate::featurize::{FeatureVector, GlycemicClass, N_CLASSES, N_FEATURES};
use crate::par;
use crate::seed::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub features_per_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestHyper {
    fn default() -> Self {
        ForestHyper {
            n_trees: 100,
            max_depth: Some(8),
            min_leaf: 2,
            features_per_split: 3,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub hyper: ForestHyper,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<ClassTree>,
}

pub fn rf_train(
    x: &[FeatureVector],
    y: &[GlycemicClass],
    hyper: ForestHyper,
) -> Result<RandomForestModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::TrainingData);
    }
    if hyper.n_trees == 0 || hyper.min_leaf == 0 || hyper.features_per_split == 0 {
        return Err(Error::Hyper(
            "n_trees, min_leaf and features_per_split must be positive".into(),
        ));
    }
    let labels: Vec<usize> = y.iter().map(|c| c.code()).collect();
    let tree_seeds: Vec<u64> = (0..hyper.n_trees as u64)
        .map(|i| child_seed(hyper.seed, i))
        .collect();
    let trees = par::map_slice(&tree_seeds, |&seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<usize> = if hyper.bootstrap {
            (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
        } else {
            (0..x.len()).collect()
        };
        grow_class_tree(x, &labels, rows, &hyper, &mut rng)
    });
    Ok(RandomForestModel {
        hyper,
        tree_seeds,
        trees,
    })
}

/// Mean of the per-tree leaf probability vectors.
pub fn rf_predict(model: &RandomForestModel, x: &FeatureVector) -> Probabilities {
    let mut acc = [0.0; N_CLASSES];
    for tree in &model.trees {
        for (a, p) in acc.iter_mut().zip(tree.predict(x)) {
            *a += p;
        }
    }
    let n = model.trees.len() as f64;
    acc.map(|a| a / n)
}

impl Classifier for RandomForestModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Rf
    }

    fn predict_proba(&self, x: &FeatureVector) -> Probabilities {
        rf_predict(self, x)
    }

    /// Impurity decrease summed over all splits, normalized.
    fn native_importance(&self) -> Option<FeatureVector> {
        let mut raw = [0.0; N_FEATURES];
        self.trees.iter().for_each(|t| t.accumulate_gain(&mut raw));
        normalize_importance(&raw)
    }
}

fn class_counts(labels: &[usize], rows: &[usize]) -> [usize; N_CLASSES] {
    let mut c = [0; N_CLASSES];
    rows.iter().for_each(|&r| c[labels[r]] += 1);
    c
}

/// `n · gini` for a node holding `counts`.
fn weighted_gini(counts: &[usize; N_CLASSES]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c * c) as f64).sum();
    n as f64 - sq / n as f64
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn best_split_on(
    x: &[FeatureVector],
    labels: &[usize],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
    parent: f64,
) -> Option<SplitChoice> {
    let sorted = sorted_by_feature(x, rows, feature);
    let n = sorted.len();
    let mut left = [0usize; N_CLASSES];
    let mut right = class_counts(labels, rows);
    let mut best: Option<(usize, f64)> = None;
    for pos in 1..n {
        let moved = labels[sorted[pos - 1]];
        left[moved] += 1;
        right[moved] -= 1;
        if pos < min_leaf || n - pos < min_leaf {
            continue;
        }
        if x[sorted[pos - 1]][feature] >= x[sorted[pos]][feature] {
            continue;
        }
        let gain = parent - weighted_gini(&left) - weighted_gini(&right);
        if gain > 1e-12 && best.is_none_or(|(_, g)| gain > g) {
            best = Some((pos, gain));
        }
    }
    best.map(|(pos, gain)| SplitChoice {
        feature,
        threshold: midpoint(x[sorted[pos - 1]][feature], x[sorted[pos]][feature]),
        gain,
        left: sorted[..pos].to_vec(),
        right: sorted[pos..].to_vec(),
    })
}

/// Greedy CART growth. A random subset of `features_per_split` features is
/// searched first; the remaining features are tried only if that subset
/// yields no valid split.
pub(crate) fn grow_class_tree(
    x: &[FeatureVector],
    labels: &[usize],
    rows: Vec<usize>,
    hyper: &ForestHyper,
    rng: &mut ChaCha8Rng,
) -> ClassTree {
    let mut tree = Tree {
        nodes: Vec::new(),
        max_depth: hyper.max_depth,
    };
    grow_node(x, labels, rows, 0, hyper, rng, &mut tree.nodes);
    tree
}

fn grow_node(
    x: &[FeatureVector],
    labels: &[usize],
    rows: Vec<usize>,
    depth: usize,
    hyper: &ForestHyper,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node<[f64; N_CLASSES]>>,
) -> usize {
    let counts = class_counts(labels, &rows);
    let n = rows.len();
    let leaf = Node::Leaf {
        value: counts.map(|c| c as f64 / n.max(1) as f64),
    };
    let index = nodes.len();
    nodes.push(leaf);

    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let depth_capped = hyper.max_depth.is_some_and(|d| depth >= d);
    if pure || depth_capped || n < 2 * hyper.min_leaf {
        return index;
    }

    let parent = weighted_gini(&counts);
    let mut order: Vec<usize> = (0..N_FEATURES).collect();
    order.shuffle(rng);
    let k = hyper.features_per_split.min(N_FEATURES);
    let search = |features: &[usize]| {
        let mut best: Option<SplitChoice> = None;
        for &f in features {
            if let Some(c) = best_split_on(x, labels, &rows, f, hyper.min_leaf, parent) {
                if best.as_ref().is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best
    };
    let Some(choice) = search(&order[..k]).or_else(|| search(&order[k..])) else {
        return index;
    };

    let left = grow_node(x, labels, choice.left, depth + 1, hyper, rng, nodes);
    let right = grow_node(x, labels, choice.right, depth + 1, hyper, rng, nodes);
    nodes[index] = Node::Split {
        feature: choice.feature,
        threshold: choice.threshold,
        left,
        right,
        gain: choice.gain,
    };
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<GlycemicClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<FeatureVector> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.random::<f64>()))
            .collect();
        let y = x
            .iter()
            .map(|r| {
                let s = r[0] + 0.5 * r[3] - 0.3 * r[6];
                if s > 0.7 {
                    GlycemicClass::Good
                } else if s > 0.3 {
                    GlycemicClass::Moderate
                } else {
                    GlycemicClass::Poor
                }
            })
            .collect();
        (x, y)
    }

    fn full_tree() -> ForestHyper {
        ForestHyper {
            n_trees: 1,
            max_depth: None,
            min_leaf: 1,
            features_per_split: 3,
            bootstrap: false,
            seed: 5,
        }
    }

    #[test]
    fn unpruned_tree_fits_training_data() {
        let (x, y) = toy(300, 1);
        // continuous features: no duplicate rows with conflicting labels
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                assert!(x[i] != x[j] || y[i] == y[j]);
            }
        }
        let m = rf_train(&x, &y, full_tree()).unwrap();
        assert!(m.trees[0].is_well_formed());
        assert!(x.iter().zip(&y).all(|(r, c)| m.predict(r) == *c));
    }

    #[test]
    fn single_class_data() {
        let (x, _) = toy(50, 2);
        let y = vec![GlycemicClass::Moderate; x.len()];
        let m = rf_train(&x, &y, ForestHyper::default()).unwrap();
        for r in &x {
            assert_eq!(m.predict_proba(r), [0.0, 1.0, 0.0]);
        }
        assert!(m.native_importance().is_none());
    }

    fn stump(feature: usize, left: [f64; 3], right: [f64; 3]) -> ClassTree {
        Tree {
            nodes: vec![
                Node::Split {
                    feature,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                    gain: 1.0,
                },
                Node::Leaf { value: left },
                Node::Leaf { value: right },
            ],
            max_depth: Some(1),
        }
    }

    fn forest(trees: Vec<ClassTree>) -> RandomForestModel {
        RandomForestModel {
            hyper: ForestHyper::default(),
            tree_seeds: vec![0; trees.len()],
            trees,
        }
    }

    #[test]
    fn soft_vote_aggregation() {
        let x = [0.0; N_FEATURES];
        let m = forest(vec![
            Tree::leaf([1.0, 0.0, 0.0], None),
            Tree::leaf([1.0, 0.0, 0.0], None),
            Tree::leaf([0.0, 1.0, 0.0], None),
        ]);
        let p = rf_predict(&m, &x);
        assert!(
            (p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15 && p[2] == 0.0
        );
        assert_eq!(m.predict(&x), GlycemicClass::Good);

        let tie = forest(vec![
            Tree::leaf([1.0, 0.0, 0.0], None),
            Tree::leaf([0.0, 0.0, 1.0], None),
        ]);
        assert_eq!(rf_predict(&tie, &x), [0.5, 0.0, 0.5]);
        assert_eq!(tie.predict(&x), GlycemicClass::Good);

        let one = forest(vec![stump(1, [0.2, 0.3, 0.5], [1.0, 0.0, 0.0])]);
        assert_eq!(rf_predict(&one, &x), [0.2, 0.3, 0.5]);
        let same = forest(vec![stump(1, [0.2, 0.3, 0.5], [1.0, 0.0, 0.0]); 4]);
        assert_eq!(rf_predict(&same, &x), rf_predict(&one, &x));
    }

    #[test]
    fn stump_importance() {
        let m = forest(vec![stump(0, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]); 3]);
        assert_eq!(
            m.native_importance().unwrap(),
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn seeded_and_well_formed() {
        let (x, y) = toy(200, 3);
        let hyper = ForestHyper {
            n_trees: 12,
            seed: 11,
            ..Default::default()
        };
        let a = rf_train(&x, &y, hyper).unwrap();
        let b = rf_train(&x, &y, hyper).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        for t in &a.trees {
            assert!(t.is_well_formed());
            assert!(t
                .leaves()
                .all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-12));
            assert!(t.depth() <= 8);
        }
    }
}
