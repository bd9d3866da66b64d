use serde::{Deserialize, Serialize};

use super::{Classifier, Labeled};
use crate::error::{Error, Result};
use crate::numerics::softmax_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub var_smoothing: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        Self {
            var_smoothing: 1e-9,
        }
    }
}

/// Gaussian naive Bayes with population variances plus
/// `var_smoothing × max feature variance`. Classes absent from training get
/// zero prior and are never predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub var_smoothing: f64,
    pub log_prior: Vec<Option<f64>>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub fn fit(data: Labeled<'_>, params: NbParams) -> Result<Self> {
        let counts = data.class_counts();
        if let Some(c) = counts.iter().position(|&n| n == 1) {
            return Err(Error::invalid(format!(
                "class {c} has a single training point; at least 2 are required"
            )));
        }
        let (n, d, k) = (data.len() as f64, data.dim(), data.n_classes);

        let mut overall_mean = vec![0.0; d];
        for row in data.x.row_iter() {
            overall_mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        overall_mean.iter_mut().for_each(|m| *m /= n);
        let mut overall_var = vec![0.0; d];
        for row in data.x.row_iter() {
            for j in 0..d {
                overall_var[j] += (row[j] - overall_mean[j]).powi(2);
            }
        }
        let epsilon = params.var_smoothing * overall_var.iter().map(|v| v / n).fold(0.0, f64::max);

        let mut means = vec![vec![0.0; d]; k];
        for (row, &l) in data.x.row_iter().zip(data.y) {
            means[l].iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }
        let mut variances = vec![vec![0.0; d]; k];
        for (row, &l) in data.x.row_iter().zip(data.y) {
            for j in 0..d {
                variances[l][j] += (row[j] - means[l][j]).powi(2);
            }
        }
        for (v, &c) in variances.iter_mut().zip(&counts) {
            for x in v.iter_mut() {
                *x = if c > 0 { *x / c as f64 } else { 0.0 } + epsilon;
            }
        }
        if epsilon <= 0.0 && variances.iter().flatten().any(|&v| v <= 0.0) {
            return Err(Error::invalid(
                "all features are constant; Gaussian likelihood undefined",
            ));
        }
        let log_prior = counts
            .iter()
            .map(|&c| (c > 0).then(|| (c as f64 / n).ln()))
            .collect();
        Ok(Self {
            var_smoothing: params.var_smoothing,
            log_prior,
            means,
            variances,
        })
    }

    pub fn params(&self) -> NbParams {
        NbParams {
            var_smoothing: self.var_smoothing,
        }
    }

    /// Joint log-likelihood `ln π_k + Σ_j ln N(x_j; μ_kj, σ²_kj)` per class.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Vec<f64> {
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        self.log_prior
            .iter()
            .enumerate()
            .map(|(c, lp)| match lp {
                None => f64::NEG_INFINITY,
                Some(lp) => {
                    let mut s = *lp;
                    for ((&xj, &m), &v) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                        s -= 0.5 * (ln2pi + v.ln() + (xj - m).powi(2) / v);
                    }
                    s
                }
            })
            .collect()
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        let k = self.log_prior.len();
        if k == 0
            || self.means.len() != k
            || self.variances.len() != k
            || self.means.iter().chain(&self.variances).any(|r| r.len() != dim)
            || self.variances.iter().flatten().any(|&v| v <= 0.0)
            || self.log_prior.iter().all(Option::is_none)
        {
            return Err(Error::invalid("inconsistent naive Bayes payload"));
        }
        Ok(())
    }
}

impl Classifier for GaussianNb {
    fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax_unchecked(&self.joint_log_likelihood(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    #[test]
    fn equal_variance_threshold_at_midpoint() {
        // Means 0.2 and 0.8, identical spreads, equal priors.
        let xs = vec![0.1, 0.2, 0.3, 0.7, 0.8, 0.9];
        let x = Matrix::from_vec(6, 1, xs).unwrap();
        let nb = GaussianNb::fit(Labeled::new(&x, &[0, 0, 0, 1, 1, 1], 2).unwrap(), NbParams::default())
            .unwrap();
        assert_eq!(nb.predict(&[0.49]), 0);
        assert_eq!(nb.predict(&[0.51]), 1);
        let p = nb.predict_proba(&[0.5]);
        assert!((p[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn posterior_matches_hand_computation() {
        // Class 0: (0,0),(2,2) -> mean (1,1), var (1,1)
        // Class 1: (4,0),(4,2),(4,4),(6,2) -> mean (4.5,2), var (0.75, 2)
        let x = Matrix::from_vec(
            6,
            2,
            vec![0.0, 0.0, 2.0, 2.0, 4.0, 0.0, 4.0, 2.0, 4.0, 4.0, 6.0, 2.0],
        )
        .unwrap();
        let nb = GaussianNb::fit(
            Labeled::new(&x, &[0, 0, 1, 1, 1, 1], 2).unwrap(),
            NbParams { var_smoothing: 0.0 },
        )
        .unwrap();
        assert_eq!(nb.means, vec![vec![1.0, 1.0], vec![4.5, 2.0]]);
        assert_eq!(nb.variances, vec![vec![1.0, 1.0], vec![0.75, 2.0]]);

        let q = [3.0, 1.0];
        let normal = |x: f64, m: f64, v: f64| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        let a = (2.0 / 6.0) * normal(3.0, 1.0, 1.0) * normal(1.0, 1.0, 1.0);
        let b = (4.0 / 6.0) * normal(3.0, 4.5, 0.75) * normal(1.0, 2.0, 2.0);
        let p = nb.predict_proba(&q);
        assert!((p[0] - a / (a + b)).abs() < 1e-12, "{p:?}");
        assert!((p[1] - b / (a + b)).abs() < 1e-12);
    }

    #[test]
    fn priors_are_class_frequencies() {
        let x = Matrix::from_vec(5, 1, vec![0.0, 0.1, 0.5, 0.6, 0.7]).unwrap();
        let nb = GaussianNb::fit(Labeled::new(&x, &[0, 0, 2, 2, 2], 3).unwrap(), NbParams::default())
            .unwrap();
        assert_eq!(nb.log_prior[0], Some((0.4f64).ln()));
        assert_eq!(nb.log_prior[1], None);
        assert_eq!(nb.log_prior[2], Some((0.6f64).ln()));
        assert_eq!(nb.predict_proba(&[0.3])[1], 0.0);
    }

    #[test]
    fn singleton_class_rejected() {
        let x = Matrix::from_vec(3, 1, vec![0.0, 0.1, 0.5]).unwrap();
        let err = GaussianNb::fit(Labeled::new(&x, &[0, 0, 1], 2).unwrap(), NbParams::default())
            .unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
