use serde::{Deserialize, Serialize};

use super::{shares, Classifier, Labeled};
use crate::error::{Error, Result};
use crate::numerics::{sq_dist, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { k: 15 }
    }
}

/// Brute-force Euclidean k-nearest neighbours. Equal distances are ordered
/// by training index; vote ties go to the lowest label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub n_classes: usize,
    pub x: Matrix,
    pub y: Vec<usize>,
}

impl Knn {
    pub fn fit(data: Labeled<'_>, params: KnnParams) -> Result<Self> {
        if params.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if params.k > data.len() {
            return Err(Error::invalid(format!(
                "k = {} exceeds the {} training points",
                params.k,
                data.len()
            )));
        }
        Ok(Self {
            k: params.k,
            n_classes: data.n_classes,
            x: data.x.clone(),
            y: data.y.to_vec(),
        })
    }

    pub fn params(&self) -> KnnParams {
        KnnParams { k: self.k }
    }

    /// Indices of the k nearest training rows, nearest first.
    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .row_iter()
            .enumerate()
            .map(|(i, r)| (sq_dist(r, x), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, cmp);
            d.truncate(self.k);
        }
        d.sort_unstable_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.x.as_slice().len() != self.x.rows() * self.x.cols()
            || self.y.len() != self.x.rows()
            || self.k == 0
            || self.k > self.y.len()
            || self.y.iter().any(|&l| l >= self.n_classes)
        {
            return Err(Error::invalid("inconsistent KNN payload"));
        }
        Ok(())
    }
}

impl Classifier for Knn {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        for i in self.neighbors(x) {
            votes[self.y[i]] += 1.0;
        }
        shares(votes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::fixtures::blobs;

    #[test]
    fn xor_memorized_with_k1() {
        let x = Matrix::from_vec(4, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let y = [0, 1, 1, 0];
        let knn = Knn::fit(Labeled::new(&x, &y, 2).unwrap(), KnnParams { k: 1 }).unwrap();
        for i in 0..4 {
            assert_eq!(knn.predict(x.row(i)), y[i]);
        }
    }

    #[test]
    fn default_k_is_fifteen() {
        assert_eq!(KnnParams::default().k, 15);
    }

    #[test]
    fn k_larger_than_training_set_rejected() {
        let x = Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let err = Knn::fit(Labeled::new(&x, &[0, 1], 2).unwrap(), KnnParams { k: 3 }).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn vote_tie_goes_to_lower_label() {
        let x = Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let knn = Knn::fit(Labeled::new(&x, &[1, 0], 2).unwrap(), KnnParams { k: 2 }).unwrap();
        assert_eq!(knn.predict_proba(&[0.1]), vec![0.5, 0.5]);
        assert_eq!(knn.predict(&[0.1]), 0);
    }

    #[test]
    fn matches_sorting_reference() {
        let (x, y) = blobs(100, 11);
        let knn = Knn::fit(Labeled::new(&x, &y, 3).unwrap(), KnnParams { k: 7 }).unwrap();
        let (q, _) = blobs(40, 12);
        for row in q.row_iter() {
            // Reference: full sort by (distance, index), then count.
            let mut all: Vec<(f64, usize)> = (0..x.rows())
                .map(|i| {
                    let d: f64 = x.row(i).iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum();
                    (d, i)
                })
                .collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut votes = [0usize; 3];
            for &(_, i) in &all[..7] {
                votes[y[i]] += 1;
            }
            let best = (0..3).max_by_key(|&c| (votes[c], std::cmp::Reverse(c))).unwrap();
            assert_eq!(knn.predict(row), best);
            let p = knn.predict_proba(row);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
