//! RBF-kernel SVM: one-vs-one binary machines trained by SMO with
//! second-order working-set selection.

use serde::{Deserialize, Serialize};

use super::{shares, Classifier, Labeled};
use crate::error::{Error, Result};
use crate::numerics::{dot, gemm, sq_dist, Matrix, Rng, Transpose};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub c: f64,
    /// Fixed kernel width; `None` selects `1 / (d × mean feature variance)`.
    pub gamma: Option<f64>,
    pub cap_per_class: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            cap_per_class: 2000,
            tolerance: 1e-3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Dual objective `½ αᵀQα − Σα` at the solution (minimized).
    pub objective: f64,
}

/// Solves `min ½ αᵀQα − eᵀα` s.t. `0 ≤ α ≤ c`, `yᵀα = 0` with
/// `Q_ij = y_i y_j K_ij`. Stops when the maximal violating pair gap drops
/// below `tol`.
pub fn smo(kernel: &Matrix, y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<SmoSolution> {
    let n = y.len();
    if kernel.shape() != (n, n) {
        return Err(Error::invalid("kernel matrix shape does not match labels"));
    }
    let k = |i: usize, j: usize| kernel.as_slice()[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_up = |a: f64, yt: f64| if yt > 0.0 { a < c } else { a > 0.0 };
    let is_low = |a: f64, yt: f64| if yt > 0.0 { a > 0.0 } else { a < c };

    for iter in 0..=max_iter {
        let mut gmax = f64::NEG_INFINITY;
        let mut sel_i = None;
        for t in 0..n {
            if is_up(alpha[t], y[t]) {
                let v = -y[t] * grad[t];
                if v >= gmax {
                    gmax = v;
                    sel_i = Some(t);
                }
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut sel_j = None;
        if let Some(i) = sel_i {
            let mut best = f64::INFINITY;
            for t in 0..n {
                if is_low(alpha[t], y[t]) {
                    let v = y[t] * grad[t];
                    gmax2 = gmax2.max(v);
                    let b = gmax + v;
                    if b > 0.0 {
                        let a = k(i, i) + k(t, t) - 2.0 * k(i, t);
                        let obj = -b * b / if a > 0.0 { a } else { TAU };
                        if obj <= best {
                            best = obj;
                            sel_j = Some(t);
                        }
                    }
                }
            }
        }
        let (i, j) = match (sel_i, sel_j) {
            (Some(i), Some(j)) if gmax + gmax2 >= tol => (i, j),
            _ => {
                let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
                let rho = compute_rho(&alpha, &grad, y, c);
                return Ok(SmoSolution {
                    alpha,
                    rho,
                    iterations: iter,
                    objective,
                });
            }
        };
        if iter == max_iter {
            return Err(Error::Training(format!(
                "SMO did not converge within {max_iter} iterations on {n} points (gap {:.3e}, tolerance {tol:.1e})",
                gmax + gmax2
            )));
        }

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let q_ij = y[i] * y[j] * k(i, j);
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let quad = k(i, i) + k(j, j) + 2.0 * q_ij;
            let delta = (-grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = k(i, i) + k(j, j) - 2.0 * q_ij;
            let delta = (grad[i] - grad[j]) / if quad > 0.0 { quad } else { TAU };
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k(i, t) * di + y[j] * k(j, t) * dj);
        }
    }
    unreachable!("loop returns on its final iteration")
}

fn compute_rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut n_free, mut sum_free) = (0usize, 0.0);
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    }
}

/// RBF Gram matrix `exp(−γ‖a_i − b_j‖²)`, distances via one matrix product.
pub fn rbf_gram(a: &Matrix, b: &Matrix, gamma: f64) -> Matrix {
    let mut g = Matrix::zeros(a.rows(), b.rows());
    gemm(1.0, a, Transpose::No, b, Transpose::Yes, 0.0, &mut g).expect("shapes agree");
    let na: Vec<f64> = a.row_iter().map(|r| dot(r, r)).collect();
    let nb: Vec<f64> = b.row_iter().map(|r| dot(r, r)).collect();
    for i in 0..a.rows() {
        for (j, v) in g.row_mut(i).iter_mut().enumerate() {
            let d = (na[i] + nb[j] - 2.0 * *v).max(0.0);
            *v = (-gamma * d).exp();
        }
    }
    g
}

/// One pairwise machine; positive decision votes for `pos`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub pos: usize,
    pub neg: usize,
    /// Rows of [`Svm::support`] used by this machine.
    pub support: Vec<usize>,
    /// `α_i y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    pub params: SvmParams,
    pub gamma: f64,
    pub n_classes: usize,
    /// Union of support vectors across machines.
    pub support: Matrix,
    pub machines: Vec<BinarySvm>,
    /// Set when training saw a single class.
    pub constant: Option<usize>,
}

impl Svm {
    pub fn fit(data: Labeled<'_>, params: SvmParams) -> Result<Self> {
        if !(params.c > 0.0) || !(params.tolerance > 0.0) || params.cap_per_class < 1 {
            return Err(Error::invalid("SVM needs C > 0, tolerance > 0 and a positive cap"));
        }
        let d = data.dim();
        let gamma = match params.gamma {
            Some(g) if g > 0.0 => g,
            Some(_) => return Err(Error::invalid("gamma must be positive")),
            None => {
                let mean_var = feature_variances(data.x).iter().sum::<f64>() / d as f64;
                if mean_var > 0.0 {
                    1.0 / (d as f64 * mean_var)
                } else {
                    1.0
                }
            }
        };

        let mut rng = Rng::new(params.seed);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); data.n_classes];
        for (i, &l) in data.y.iter().enumerate() {
            by_class[l].push(i);
        }
        for members in by_class.iter_mut() {
            if members.len() > params.cap_per_class {
                rng.shuffle(members);
                members.truncate(params.cap_per_class);
                members.sort_unstable();
            }
        }
        let present: Vec<usize> = (0..data.n_classes).filter(|&c| !by_class[c].is_empty()).collect();
        if present.len() == 1 {
            return Ok(Self {
                params,
                gamma,
                n_classes: data.n_classes,
                support: Matrix::zeros(0, d),
                machines: Vec::new(),
                constant: Some(present[0]),
            });
        }

        let mut support_rows: Vec<usize> = Vec::new();
        let mut slot_of = std::collections::HashMap::new();
        let mut machines = Vec::new();
        for (a, &p) in present.iter().enumerate() {
            for &q in &present[a + 1..] {
                let rows: Vec<usize> = by_class[p].iter().chain(&by_class[q]).copied().collect();
                let y: Vec<f64> = rows
                    .iter()
                    .map(|&r| if data.y[r] == p { 1.0 } else { -1.0 })
                    .collect();
                let x = data.x.select_rows(&rows);
                let kernel = rbf_gram(&x, &x, gamma);
                let budget = (100 * rows.len()).max(1_000_000);
                let sol = smo(&kernel, &y, params.c, params.tolerance, budget).map_err(|e| match e {
                    Error::Training(m) => Error::Training(format!("classes {p} vs {q}: {m}")),
                    other => other,
                })?;
                let mut support = Vec::new();
                let mut coef = Vec::new();
                for (t, &a) in sol.alpha.iter().enumerate() {
                    if a > 0.0 {
                        let slot = *slot_of.entry(rows[t]).or_insert_with(|| {
                            support_rows.push(rows[t]);
                            support_rows.len() - 1
                        });
                        support.push(slot);
                        coef.push(a * y[t]);
                    }
                }
                machines.push(BinarySvm {
                    pos: p,
                    neg: q,
                    support,
                    coef,
                    rho: sol.rho,
                });
            }
        }
        Ok(Self {
            params,
            gamma,
            n_classes: data.n_classes,
            support: data.x.select_rows(&support_rows),
            machines,
            constant: None,
        })
    }

    pub fn params(&self) -> SvmParams {
        self.params
    }

    /// Decision value of every pairwise machine.
    pub fn decision_values(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self
            .support
            .row_iter()
            .map(|s| (-self.gamma * sq_dist(s, x)).exp())
            .collect();
        self.machines
            .iter()
            .map(|m| m.support.iter().zip(&m.coef).map(|(&s, c)| c * k[s]).sum::<f64>() - m.rho)
            .collect()
    }

    pub fn n_support(&self) -> usize {
        self.support.rows()
    }

    pub(crate) fn validate(&self, dim: usize) -> Result<()> {
        let ok = self.support.cols() == dim
            && self.support.as_slice().len() == self.support.rows() * dim
            && self.gamma > 0.0
            && self.machines.iter().all(|m| {
                m.pos < self.n_classes
                    && m.neg < self.n_classes
                    && m.support.len() == m.coef.len()
                    && m.support.iter().all(|&s| s < self.support.rows())
            })
            && (self.constant.is_some() || !self.machines.is_empty())
            && self.constant.map_or(true, |c| c < self.n_classes);
        if !ok {
            return Err(Error::invalid("inconsistent SVM payload"));
        }
        Ok(())
    }
}

fn feature_variances(x: &Matrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in x.row_iter() {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; x.cols()];
    for r in x.row_iter() {
        for j in 0..r.len() {
            var[j] += (r[j] - mean[j]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    var
}

impl Classifier for Svm {
    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0.0; self.n_classes];
        if let Some(c) = self.constant {
            votes[c] = 1.0;
            return votes;
        }
        for (m, v) in self.machines.iter().zip(self.decision_values(x)) {
            votes[if v > 0.0 { m.pos } else { m.neg }] += 1.0;
        }
        shares(votes)
    }
}
