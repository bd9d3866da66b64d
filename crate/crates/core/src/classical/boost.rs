use serde::{Deserialize, Serialize};

use super::forest::check_tree;
use super::tree::{build_tree, Columns, Presorted, Target, Tree, TreeParams};
use super::{shares, Classifier, Labeled};
use crate::error::{Error, Result};
use crate::numerics::{argmax, softmax_unchecked, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub rounds: usize,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        Self { rounds: 50 }
    }
}

/// One boosting round as recorded during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaRound {
    pub error: f64,
    pub alpha: f64,
    /// Sample weights after the update, summing to one.
    pub weights: Vec<f64>,
}

/// SAMME over depth-1 stumps. Stops early on a perfect stump (kept with
/// weight 1) or when the weighted error reaches `1 − 1/K` (discarded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaBoost {
    pub rounds: usize,
    pub n_classes: usize,
    pub stumps: Vec<Tree>,
    pub alphas: Vec<f64>,
    /// Class frequencies, used when no stump was kept.
    pub prior: Vec<f64>,
}

impl AdaBoost {
    pub fn fit(data: Labeled<'_>, params: AdaBoostParams) -> Result<Self> {
        Self::fit_traced(data, params).map(|(m, _)| m)
    }

    pub fn fit_traced(data: Labeled<'_>, params: AdaBoostParams) -> Result<(Self, Vec<AdaRound>)> {
        let n = data.len();
        let k = data.n_classes as f64;
        let cols = Columns::new(data.x);
        let presorted = Presorted::all_rows(&cols);
        let mut w = vec![1.0 / n as f64; n];
        let mut stumps = Vec::new();
        let mut alphas = Vec::new();
        let mut trace = Vec::new();
        let mut rng = Rng::new(0);

        for _ in 0..params.rounds {
            let target = Target::Classes {
                labels: data.y,
                weights: &w,
                n_classes: data.n_classes,
            };
            let stump = build_tree(&cols, presorted.clone(), &target, TreeParams::with_depth(1), &mut rng);
            let miss: Vec<bool> = data
                .x
                .row_iter()
                .zip(data.y)
                .map(|(r, &l)| argmax(stump.leaf_value(r)) != l)
                .collect();
            let total: f64 = w.iter().sum();
            let error = w.iter().zip(&miss).filter(|(_, &m)| m).map(|(w, _)| w).sum::<f64>() / total;
            if error <= 0.0 {
                stumps.push(stump);
                alphas.push(1.0);
                trace.push(AdaRound {
                    error,
                    alpha: 1.0,
                    weights: w.clone(),
                });
                break;
            }
            if error >= 1.0 - 1.0 / k {
                break;
            }
            let alpha = ((1.0 - error) / error).ln() + (k - 1.0).ln();
            for (wi, &m) in w.iter_mut().zip(&miss) {
                if m {
                    *wi *= alpha.exp();
                }
            }
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|wi| *wi /= total);
            stumps.push(stump);
            alphas.push(alpha);
            trace.push(AdaRound {
                error,
                alpha,
                weights: w.clone(),
            });
        }
        let prior = data
            .class_counts()
            .iter()
            .map(|&c| c as f64 / n as f64)
            .collect();
        Ok((
            Self {
                rounds: params.rounds,
                n_classes: data.n_classes,
                stumps,
                alphas,
                prior,
            },
            trace,
        ))
    }

    pub fn params(&self) -> AdaBoostParams {
        AdaBoostParams {
            rounds: self.rounds,
        }
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if self.stumps.len() != self.alphas.len()
            || self.stumps.len() > self.rounds
            || self.prior.len() != self.n_classes
        {
            return Err(Error::invalid("inconsistent AdaBoost payload"));
        }
        self.stumps
            .iter()
            .try_for_each(|t| check_tree(t, dim, self.n_classes, 1))
    }
}

impl Classifier for AdaBoost {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Normalized α-weighted stump votes.
    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        if self.stumps.is_empty() {
            return self.prior.clone();
        }
        let mut votes = vec![0.0; self.n_classes];
        for (s, a) in self.stumps.iter().zip(&self.alphas) {
            votes[argmax(s.leaf_value(x))] += a;
        }
        shares(votes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBoostingParams {
    pub rounds: usize,
    pub max_depth: usize,
    pub shrinkage: f64,
}

impl Default for GradientBoostingParams {
    fn default() -> Self {
        Self {
            rounds: 50,
            max_depth: 3,
            shrinkage: 0.1,
        }
    }
}

/// Softmax cross-entropy gradient boosting: each round fits one regression
/// tree per class to the residual `y_k − p_k`, with Newton leaf values
/// `(K−1)/K · Σr / Σ|r|(1−|r|)`. Scores start at the log class priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub params: GradientBoostingParams,
    /// Log prior per class; `None` for classes absent from training.
    pub init: Vec<Option<f64>>,
    /// `trees[round][class]`.
    pub trees: Vec<Vec<Tree>>,
    /// Mean training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

impl GradientBoosting {
    pub fn fit(data: Labeled<'_>, params: GradientBoostingParams) -> Result<Self> {
        if !(params.shrinkage > 0.0) {
            return Err(Error::invalid("shrinkage must be positive"));
        }
        let n = data.len();
        let kc = data.n_classes;
        let counts = data.class_counts();
        let present: Vec<usize> = (0..kc).filter(|&c| counts[c] > 0).collect();
        let factor = (present.len() as f64 - 1.0) / present.len() as f64;
        let init: Vec<Option<f64>> = counts
            .iter()
            .map(|&c| (c > 0).then(|| (c as f64 / n as f64).ln()))
            .collect();
        let base: Vec<f64> = init.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        let mut scores = vec![base; n];

        let cols = Columns::new(data.x);
        let presorted = Presorted::all_rows(&cols);
        let mut rng = Rng::new(0);
        let mut trees = Vec::with_capacity(params.rounds);
        let mut train_loss = vec![log_loss(&scores, data.y)];

        for _ in 0..params.rounds {
            let probs: Vec<Vec<f64>> = scores.iter().map(|f| softmax_unchecked(f)).collect();
            let mut round = Vec::with_capacity(kc);
            for c in 0..kc {
                if counts[c] == 0 {
                    round.push(Tree {
                        nodes: vec![super::tree::Node::Leaf { value: vec![0.0] }],
                    });
                    continue;
                }
                let residual: Vec<f64> = probs
                    .iter()
                    .zip(data.y)
                    .map(|(p, &l)| f64::from(u8::from(l == c)) - p[c])
                    .collect();
                let leaf = |rows: &[usize]| {
                    let num: f64 = rows.iter().map(|&i| residual[i]).sum();
                    let den: f64 = rows
                        .iter()
                        .map(|&i| residual[i].abs() * (1.0 - residual[i].abs()))
                        .sum();
                    if den.abs() < 1e-150 {
                        0.0
                    } else {
                        factor * num / den
                    }
                };
                let target = Target::Regression {
                    targets: &residual,
                    leaf: &leaf,
                };
                let tree = build_tree(
                    &cols,
                    presorted.clone(),
                    &target,
                    TreeParams::with_depth(params.max_depth),
                    &mut rng,
                );
                for (f, row) in scores.iter_mut().zip(data.x.row_iter()) {
                    f[c] += params.shrinkage * tree.leaf_value(row)[0];
                }
                round.push(tree);
            }
            trees.push(round);
            train_loss.push(log_loss(&scores, data.y));
        }
        Ok(Self {
            params,
            init,
            trees,
            train_loss,
        })
    }

    pub fn params(&self) -> GradientBoostingParams {
        self.params
    }

    pub fn decision_function(&self, x: &[f64]) -> Vec<f64> {
        let mut f: Vec<f64> = self.init.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect();
        for round in &self.trees {
            for (fc, t) in f.iter_mut().zip(round) {
                *fc += self.params.shrinkage * t.leaf_value(x)[0];
            }
        }
        f
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        let k = self.init.len();
        if k == 0
            || self.trees.len() != self.params.rounds
            || self.trees.iter().any(|r| r.len() != k)
            || self.init.iter().all(Option::is_none)
        {
            return Err(Error::invalid("inconsistent gradient boosting payload"));
        }
        self.trees
            .iter()
            .flatten()
            .try_for_each(|t| check_tree(t, dim, 1, self.params.max_depth))
    }
}

fn log_loss(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(f, &l)| -softmax_unchecked(f)[l].max(crate::numerics::PROB_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}

impl Classifier for GradientBoosting {
    fn n_classes(&self) -> usize {
        self.init.len()
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax_unchecked(&self.decision_function(x))
    }
}
