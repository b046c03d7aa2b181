//! Binary decision trees shared by the forest (class-probability leaves) and
//! the booster (scalar leaf weights).

use serde::{Deserialize, Serialize};

use crate::featurize::{FeatureVector, N_CLASSES, N_FEATURES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node<L> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
    },
    Leaf {
        value: L,
    },
}

/// Flat node arena; node 0 is the root and children always have larger
/// indices than their parent, so the structure is acyclic by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<L> {
    pub nodes: Vec<Node<L>>,
    pub max_depth: Option<usize>,
}

pub type ClassTree = Tree<[f64; N_CLASSES]>;
pub type RegressionTree = Tree<f64>;

impl<L> Tree<L> {
    pub fn leaf(value: L, max_depth: Option<usize>) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value }],
            max_depth,
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> &L {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    /// Length of the longest root-to-leaf path, in splits.
    pub fn depth(&self) -> usize {
        fn walk<L>(nodes: &[Node<L>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &L> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(value),
            Node::Split { .. } => None,
        })
    }

    /// Adds each split's gain to its feature's slot.
    pub fn accumulate_gain(&self, acc: &mut FeatureVector) {
        for node in &self.nodes {
            if let Node::Split { feature, gain, .. } = node {
                acc[*feature] += gain;
            }
        }
    }

    /// Every split points at existing, later nodes and every node but the
    /// root has exactly one parent.
    pub fn is_well_formed(&self) -> bool {
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                left,
                right,
                ..
            } = node
            {
                if *feature >= N_FEATURES
                    || *left <= i
                    || *right <= i
                    || *left >= self.nodes.len()
                    || *right >= self.nodes.len()
                {
                    return false;
                }
                parents[*left] += 1;
                parents[*right] += 1;
            }
        }
        !self.nodes.is_empty() && parents[0] == 0 && parents[1..].iter().all(|p| *p == 1)
    }
}

/// Row indices ordered by one feature, ties by row index.
pub(crate) fn sorted_by_feature(x: &[FeatureVector], rows: &[usize], feature: usize) -> Vec<usize> {
    let mut sorted = rows.to_vec();
    sorted.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]).then(a.cmp(&b)));
    sorted
}

pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}
