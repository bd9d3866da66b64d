//! The non-neural classifiers and the uniform [`TrainedClassifier`] wrapper
//! that also houses the MLP.

mod boost;
mod forest;
mod knn;
mod lda;
mod model;
mod nb;
mod svm;
pub mod tree;

pub use boost::{AdaBoost, AdaBoostParams, AdaRound, GradientBoosting, GradientBoostingParams};
pub use forest::{DecisionTree, ForestParams, RandomForest, TreeConfig};
pub use knn::{Knn, KnnParams};
pub use lda::{Lda, LdaParams};
pub use model::{ClassifierConfig, ClassifierKind, Model, TrainedClassifier};
pub use nb::{GaussianNb, NbParams};
pub use svm::{rbf_gram, smo, BinarySvm, SmoSolution, Svm, SvmParams};

use crate::error::{Error, Result};
use crate::numerics::{argmax, Matrix};

/// Prediction surface shared by every fitted model.
pub trait Classifier {
    fn n_classes(&self) -> usize;

    /// Class scores summing to one. For KNN, forests and SVM these are vote
    /// shares rather than calibrated probabilities.
    fn predict_proba(&self, x: &[f64]) -> Vec<f64>;

    /// `argmax(predict_proba(x))`, ties to the lowest label.
    fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.predict_proba(x))
    }
}

/// Borrowed training data: one row per example, labels in `0..n_classes`.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a> {
    pub x: &'a Matrix,
    pub y: &'a [usize],
    pub n_classes: usize,
}

impl<'a> Labeled<'a> {
    pub fn new(x: &'a Matrix, y: &'a [usize], n_classes: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if x.rows() == 0 {
            return Err(Error::invalid("empty training set"));
        }
        if n_classes == 0 {
            return Err(Error::invalid("n_classes must be positive"));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(format!("label {bad} out of range")));
        }
        if !x.all_finite() {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Self { x, y, n_classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in self.y {
            counts[l] += 1;
        }
        counts
    }
}

/// Normalizes non-negative votes to shares; all-zero becomes uniform.
pub(crate) fn shares(mut votes: Vec<f64>) -> Vec<f64> {
    let total: f64 = votes.iter().sum();
    if total > 0.0 {
        votes.iter_mut().for_each(|v| *v /= total);
    } else {
        let u = 1.0 / votes.len() as f64;
        votes.iter_mut().for_each(|v| *v = u);
    }
    votes
}

#[cfg(test)]
pub(crate) mod fixtures {
    use crate::numerics::{Matrix, Rng};

    /// Three Gaussian blobs in 2-D: the pinned suite shared by oracle tests.
    pub fn blobs(n: usize, seed: u64) -> (Matrix, Vec<usize>) {
        let centers = [(0.25, 0.3), (0.7, 0.25), (0.5, 0.75)];
        let mut rng = Rng::new(seed);
        let mut data = Vec::with_capacity(2 * n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 3;
            let (g0, g1) = rng.gaussian_pair();
            data.push(centers[c].0 + 0.12 * g0);
            data.push(centers[c].1 + 0.12 * g1);
            labels.push(c);
        }
        (Matrix::from_vec(n, 2, data).unwrap(), labels)
    }
}
