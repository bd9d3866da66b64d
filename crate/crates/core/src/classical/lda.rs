use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Classifier, Labeled};
use crate::error::{Error, Result};
use crate::numerics::{dot, softmax_unchecked};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    /// Singular values below `shrinkage × s_max` are raised to that floor.
    pub shrinkage: f64,
}

impl Default for LdaParams {
    fn default() -> Self {
        Self { shrinkage: 1e-6 }
    }
}

/// Linear discriminant analysis with a pooled within-class covariance
/// (divisor `n − K`). The covariance is never formed: its inverse comes from
/// the SVD of the standardized, class-centred data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    pub shrinkage: f64,
    /// `Σ⁻¹ μ_k` per class; absent classes have `None`.
    pub coef: Vec<Option<Vec<f64>>>,
    pub intercept: Vec<f64>,
}

impl Lda {
    pub fn fit(data: Labeled<'_>, params: LdaParams) -> Result<Self> {
        let (n, d, k) = (data.len(), data.dim(), data.n_classes);
        let counts = data.class_counts();
        let present = counts.iter().filter(|&&c| c > 0).count();

        let mut means = vec![vec![0.0; d]; k];
        for (row, &l) in data.x.row_iter().zip(data.y) {
            means[l].iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            if c > 0 {
                m.iter_mut().for_each(|v| *v /= c as f64);
            }
        }

        let dof = n.saturating_sub(present).max(1) as f64;
        let mut std = vec![0.0; d];
        for (row, &l) in data.x.row_iter().zip(data.y) {
            for j in 0..d {
                std[j] += (row[j] - means[l][j]).powi(2);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / dof).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }

        // Rows padded to at least d so V spans the whole feature space.
        let rows = n.max(d);
        let scale = 1.0 / dof.sqrt();
        let mut centred = DMatrix::<f64>::zeros(rows, d);
        for (i, (row, &l)) in data.x.row_iter().zip(data.y).enumerate() {
            for j in 0..d {
                centred[(i, j)] = (row[j] - means[l][j]) / std[j] * scale;
            }
        }
        let svd = centred.svd(false, true);
        let vt = svd
            .v_t
            .ok_or_else(|| Error::Training("SVD did not produce right singular vectors".into()))?;
        let s = svd.singular_values;
        let s_max = s.max();
        if !(s_max > 0.0 && s_max.is_finite()) {
            return Err(Error::Training(
                "within-class scatter is zero; discriminant undefined".into(),
            ));
        }
        let floor = params.shrinkage * s_max;
        let inv_sq: DVector<f64> = s.map(|v| 1.0 / v.max(floor).powi(2));

        let mut coef = Vec::with_capacity(k);
        let mut intercept = Vec::with_capacity(k);
        for (m, &c) in means.iter().zip(&counts) {
            if c == 0 {
                coef.push(None);
                intercept.push(0.0);
                continue;
            }
            let mt = DVector::from_iterator(d, m.iter().zip(&std).map(|(a, s)| a / s));
            let proj = &vt * mt;
            let w = vt.transpose() * proj.component_mul(&inv_sq);
            let w: Vec<f64> = w.iter().zip(&std).map(|(a, s)| a / s).collect();
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training("discriminant coefficients are not finite".into()));
            }
            intercept.push(-0.5 * dot(m, &w) + (c as f64 / n as f64).ln());
            coef.push(Some(w));
        }
        Ok(Self {
            shrinkage: params.shrinkage,
            coef,
            intercept,
        })
    }

    pub fn params(&self) -> LdaParams {
        LdaParams {
            shrinkage: self.shrinkage,
        }
    }

    /// `x·Σ⁻¹μ_k − ½ μ_kᵀΣ⁻¹μ_k + ln π_k`.
    pub fn decision_scores(&self, x: &[f64]) -> Vec<f64> {
        self.coef
            .iter()
            .zip(&self.intercept)
            .map(|(w, b)| match w {
                Some(w) => dot(w, x) + b,
                None => f64::NEG_INFINITY,
            })
            .collect()
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        if self.coef.is_empty()
            || self.coef.len() != self.intercept.len()
            || self.coef.iter().flatten().any(|w| w.len() != dim)
            || self.coef.iter().all(Option::is_none)
        {
            return Err(Error::invalid("inconsistent LDA payload"));
        }
        Ok(())
    }
}

impl Classifier for Lda {
    fn n_classes(&self) -> usize {
        self.coef.len()
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax_unchecked(&self.decision_scores(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::fixtures::blobs;
    use crate::numerics::{Matrix, Rng};

    /// Explicit pooled covariance and 2×2 inverse.
    fn closed_form(x: &Matrix, y: &[usize], k: usize) -> (Vec<[f64; 2]>, Vec<f64>) {
        let n = y.len();
        let mut means = vec![[0.0; 2]; k];
        let mut counts = vec![0.0; k];
        for i in 0..n {
            means[y[i]][0] += x.get(i, 0);
            means[y[i]][1] += x.get(i, 1);
            counts[y[i]] += 1.0;
        }
        for c in 0..k {
            means[c][0] /= counts[c];
            means[c][1] /= counts[c];
        }
        let mut s = [[0.0; 2]; 2];
        for i in 0..n {
            let dx = [x.get(i, 0) - means[y[i]][0], x.get(i, 1) - means[y[i]][1]];
            for a in 0..2 {
                for b in 0..2 {
                    s[a][b] += dx[a] * dx[b];
                }
            }
        }
        let dof = (n - k) as f64;
        let (a, b, c, d) = (s[0][0] / dof, s[0][1] / dof, s[1][0] / dof, s[1][1] / dof);
        let det = a * d - b * c;
        let inv = [[d / det, -b / det], [-c / det, a / det]];
        let mut coef = Vec::new();
        let mut icpt = Vec::new();
        for cl in 0..k {
            let m = means[cl];
            let w = [
                inv[0][0] * m[0] + inv[0][1] * m[1],
                inv[1][0] * m[0] + inv[1][1] * m[1],
            ];
            icpt.push(-0.5 * (w[0] * m[0] + w[1] * m[1]) + (counts[cl] / n as f64).ln());
            coef.push(w);
        }
        (coef, icpt)
    }

    #[test]
    fn matches_closed_form_scores() {
        let (x, y) = blobs(100, 21);
        let lda = Lda::fit(Labeled::new(&x, &y, 3).unwrap(), LdaParams::default()).unwrap();
        let (coef, icpt) = closed_form(&x, &y, 3);
        let (q, _) = blobs(30, 22);
        for row in q.row_iter() {
            let got = lda.decision_scores(row);
            for c in 0..3 {
                let want = coef[c][0] * row[0] + coef[c][1] * row[1] + icpt[c];
                assert!((got[c] - want).abs() < 1e-6, "class {c}: {} vs {want}", got[c]);
            }
        }
    }

    #[test]
    fn spherical_classes_split_at_midpoint() {
        let mut rng = Rng::new(4);
        let mut data = Vec::new();
        let mut y = Vec::new();
        // Each draw reflected in both axes around both centres: zero
        // cross-covariance, identical spreads.
        for _ in 0..25 {
            let (a, b) = rng.gaussian_pair();
            for (cx, l) in [(0.3, 0usize), (0.7, 1)] {
                for (sa, sb) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
                    data.extend([cx + 0.05 * sa * a, 0.5 + 0.05 * sb * b]);
                    y.push(l);
                }
            }
        }
        let x = Matrix::from_vec(y.len(), 2, data).unwrap();
        let lda = Lda::fit(Labeled::new(&x, &y, 2).unwrap(), LdaParams::default()).unwrap();
        let s = lda.decision_scores(&[0.5, 0.9]);
        assert!((s[0] - s[1]).abs() < 1e-9);
        assert_eq!(lda.predict(&[0.49, 0.1]), 0);
        assert_eq!(lda.predict(&[0.51, 0.9]), 1);
    }

    #[test]
    fn scores_are_affine() {
        let (x, y) = blobs(60, 5);
        let lda = Lda::fit(Labeled::new(&x, &y, 3).unwrap(), LdaParams::default()).unwrap();
        let (a, b, t) = ([0.1, 0.9], [0.8, 0.3], 0.3);
        let mix = [t * a[0] + (1.0 - t) * b[0], t * a[1] + (1.0 - t) * b[1]];
        let (sa, sb, sm) = (lda.decision_scores(&a), lda.decision_scores(&b), lda.decision_scores(&mix));
        for c in 0..3 {
            assert!((sm[c] - (t * sa[c] + (1.0 - t) * sb[c])).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_scatter_is_a_training_error() {
        let x = Matrix::from_vec(4, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let err = Lda::fit(Labeled::new(&x, &[0, 0, 1, 1], 2).unwrap(), LdaParams::default()).unwrap_err();
        assert!(matches!(err, Error::Training(_)));
    }
}
