//! Dense linear algebra, RNG, activations, losses and optimizers shared by
//! every other module. All arithmetic is `f64`.

mod adam;
mod gradcheck;
mod matrix;
mod rng;

pub use adam::{AdamConfig, OptimizerState};
pub use gradcheck::{finite_diff_gradient, max_relative_error};
pub use matrix::{gemm, Matrix, Transpose};
pub use rng::{derive_seed, Rng};

use crate::error::{Error, Result};

/// Smallest probability fed to the logarithm in [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of empty vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::invalid("softmax input contains non-finite values"));
    }
    Ok(softmax_unchecked(logits))
}

pub(crate) fn softmax_unchecked(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}

/// −ln p[label], with p floored at [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or_else(|| {
        Error::invalid(format!(
            "label {label} out of range for {} classes",
            probs.len()
        ))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

pub fn sign(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Dot product with eight independent accumulators so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Squared Euclidean distance with the same accumulation order as [`dot`].
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            let d = xa[k] - xb[k];
            acc[k] += d * d;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 8..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// y += alpha · x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0; 4]).unwrap();
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn softmax_large_logit_no_overflow() {
        let p = softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12);
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let z = [1.0f64, 2.0, 3.0];
        let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
        let total: f64 = e.iter().sum();
        let p = softmax(&z).unwrap();
        for (pi, ei) in p.iter().zip(&e) {
            assert!((pi - ei / total).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_nan() {
        assert!(matches!(
            softmax(&[0.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
        assert!(softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let one_hot = [0.0, 1.0, 0.0];
        assert_eq!(cross_entropy(&one_hot, 1).unwrap(), 0.0);
        let uniform = [0.125; 8];
        assert!((cross_entropy(&uniform, 3).unwrap() - 8f64.ln()).abs() < 1e-12);
        let floored = cross_entropy(&one_hot, 0).unwrap();
        assert!((floored - 1e12f64.ln()).abs() < 1e-9);
        assert!((floored - 27.631).abs() < 1e-3);
        assert!(cross_entropy(&one_hot, 3).is_err());
    }

    #[test]
    fn sign_cases() {
        assert_eq!(sign(&[-3.2, 0.0, 7.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(sign(&[0.0; 5]), vec![0.0; 5]);
    }

    #[test]
    fn l2_cases() {
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(l2_norm(&[0.0; 10]), 0.0);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5, 0.1]), 1);
        assert_eq!(argmax(&[0.25; 4]), 0);
    }

    /// Neumaier-compensated sum of squares, accumulated in input order.
    fn compensated_sum_sq(v: &[f64]) -> f64 {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for x in v {
            let term = x * x;
            let t = sum + term;
            if sum.abs() >= term.abs() {
                comp += (sum - t) + term;
            } else {
                comp += (term - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }

    proptest! {
        #[test]
        fn softmax_is_distribution(
            logits in prop::collection::vec(-1e3f64..1e3, 1..20),
            scale in prop::sample::select(vec![1e-6, 1e-3, 1.0, 1e3]),
        ) {
            let z: Vec<f64> = logits.iter().map(|v| v * scale / 1e3).collect();
            let p = softmax(&z).unwrap();
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        }

        #[test]
        fn sign_is_idempotent_and_odd(v in prop::collection::vec(-10.0f64..10.0, 0..50)) {
            let s = sign(&v);
            prop_assert_eq!(sign(&s), s.clone());
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            let s_neg: Vec<f64> = s.iter().map(|x| -x).collect();
            prop_assert_eq!(sign(&neg), s_neg);
        }

        #[test]
        fn l2_matches_compensated_sum(v in prop::collection::vec(-1e3f64..1e3, 0..300)) {
            let fast = l2_norm(&v);
            let reference = compensated_sum_sq(&v).sqrt();
            prop_assert!((fast - reference).abs() <= 1e-12 * reference.max(1.0));
        }
    }
}
