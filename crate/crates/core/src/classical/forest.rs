use serde::{Deserialize, Serialize};

use super::tree::{build_tree, Columns, Node, Presorted, Target, Tree, TreeParams};
use super::{shares, Classifier, Labeled};
use crate::error::{Error, Result};
use crate::numerics::{argmax, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: 12 }
    }
}

/// CART classifier; leaves hold class-count histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub max_depth: usize,
    pub n_classes: usize,
    pub tree: Tree,
}

fn class_tree(data: Labeled<'_>, cols: &Columns, rows: Vec<usize>, params: TreeParams, rng: &mut Rng) -> Tree {
    let weights = vec![1.0; rows.len()];
    let target = Target::Classes {
        labels: data.y,
        weights: &weights,
        n_classes: data.n_classes,
    };
    build_tree(cols, Presorted::new(cols, rows), &target, params, rng)
}

impl DecisionTree {
    pub fn fit(data: Labeled<'_>, config: TreeConfig) -> Result<Self> {
        let cols = Columns::new(data.x);
        let tree = class_tree(
            data,
            &cols,
            (0..data.len()).collect(),
            TreeParams::with_depth(config.max_depth),
            &mut Rng::new(0),
        );
        Ok(Self {
            max_depth: config.max_depth,
            n_classes: data.n_classes,
            tree,
        })
    }

    pub fn params(&self) -> TreeConfig {
        TreeConfig {
            max_depth: self.max_depth,
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        check_tree(&self.tree, dim, self.n_classes, self.max_depth)
    }
}

impl Classifier for DecisionTree {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        shares(self.tree.leaf_value(x).to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Candidate features per split; `None` uses `⌊√d⌋`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            max_depth: 12,
            max_features: None,
            bootstrap: true,
            seed: 42,
        }
    }
}

/// Bagged CART trees with per-split feature subsampling; predicts by
/// majority vote of the trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub params: ForestParams,
    pub n_classes: usize,
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub fn fit(data: Labeled<'_>, params: ForestParams) -> Result<Self> {
        if params.n_trees == 0 {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        let d = data.dim();
        let max_features = params
            .max_features
            .unwrap_or(((d as f64).sqrt().floor() as usize).max(1))
            .clamp(1, d);
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_split: 2,
            max_features: Some(max_features),
        };
        let cols = Columns::new(data.x);
        let n = data.len();
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = Rng::for_item(params.seed, t as u64);
                let rows = if params.bootstrap {
                    (0..n).map(|_| rng.below(n)).collect()
                } else {
                    (0..n).collect()
                };
                class_tree(data, &cols, rows, tree_params, &mut rng)
            })
            .collect();
        Ok(Self {
            params,
            n_classes: data.n_classes,
            trees,
        })
    }

    pub fn params(&self) -> ForestParams {
        self.params
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if self.trees.len() != self.params.n_trees {
            return Err(Error::invalid("tree count differs from n_trees"));
        }
        self.trees
            .iter()
            .try_for_each(|t| check_tree(t, dim, self.n_classes, self.params.max_depth))
    }
}

impl Classifier for RandomForest {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for t in &self.trees {
            votes[argmax(t.leaf_value(x))] += 1.0;
        }
        shares(votes)
    }
}

/// Structural check of a deserialized tree: children in range and after
/// their parent, leaf widths, depth bound.
pub(crate) fn check_tree(tree: &Tree, dim: usize, width: usize, max_depth: usize) -> Result<()> {
    let bad = |m: &str| Err(Error::invalid(format!("malformed tree: {m}")));
    if tree.nodes.is_empty() {
        return bad("no nodes");
    }
    for (i, node) in tree.nodes.iter().enumerate() {
        match node {
            Node::Leaf { value } if value.len() != width => return bad("leaf width"),
            Node::Split {
                feature,
                left,
                right,
                ..
            } => {
                if *feature >= dim {
                    return bad("feature index out of range");
                }
                if *left <= i || *right <= i || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                    return bad("child index out of range");
                }
            }
            _ => {}
        }
    }
    if tree.depth() > max_depth {
        return bad("depth exceeds the configured maximum");
    }
    Ok(())
}
