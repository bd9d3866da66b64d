use serde::{Deserialize, Serialize};

use super::network::{Network, Workspace};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 128,
            epochs: 50,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// Mean training cross-entropy per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossCurve(pub Vec<f64>);

/// Mini-batch SGD with classical momentum (`v ← μv + g`, `θ ← θ − ηv`) on
/// categorical cross-entropy. Batches are drawn from a fresh shuffle every
/// epoch; the shuffle stream is seeded from `config.seed`.
pub fn train_network(
    net: &mut Network,
    x: &Matrix,
    labels: &[usize],
    config: &TrainConfig,
) -> Result<LossCurve> {
    config.validate()?;
    if x.rows() != labels.len() {
        return Err(Error::invalid("feature rows and labels differ in length"));
    }
    if x.cols() != net.input_dim() {
        return Err(Error::invalid(format!(
            "network expects {} features, data has {}",
            net.input_dim(),
            x.cols()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::invalid("no training examples"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= net.n_classes()) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }

    let mut rng = Rng::new(config.seed);
    let mut velocity: Vec<Vec<f64>> = net
        .layers()
        .iter()
        .flat_map(|l| [vec![0.0; l.weights.as_slice().len()], vec![0.0; l.bias.len()]])
        .collect();
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut workspace = Workspace::new(net, config.batch_size.min(x.rows()));
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let loss = workspace.loss_and_grads(net, &xb, &yb)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_no,
                });
            }
            total += loss * chunk.len() as f64;

            for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                let grad = &workspace.grads[l];
                let params = [layer.weights.as_mut_slice(), layer.bias.as_mut_slice()];
                let grads = [grad.weights.as_slice(), grad.bias.as_slice()];
                for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    let v = &mut velocity[2 * l + k];
                    for i in 0..p.len() {
                        v[i] = config.momentum * v[i] + g[i];
                        p[i] -= config.learning_rate * v[i];
                    }
                }
            }
            if net
                .layers()
                .iter()
                .any(|l| !l.weights.all_finite() || l.bias.iter().any(|b| !b.is_finite()))
            {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_no,
                });
            }
        }
        curve.push(total / x.rows() as f64);
    }
    Ok(LossCurve(curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epochs_is_identity() {
        let mut rng = Rng::new(3);
        let mut net = Network::init(&[4, 5, 2], &mut rng).unwrap();
        let before = net.clone();
        let x = Matrix::from_vec(2, 4, vec![0.1; 8]).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let curve = train_network(&mut net, &x, &[0, 1], &cfg).unwrap();
        assert!(curve.0.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn separable_two_class_toy_reaches_full_accuracy() {
        // Class 0 near (0.2, 0.2), class 1 near (0.8, 0.8).
        let mut rng = Rng::new(8);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let c = i % 2;
            let center = if c == 0 { 0.2 } else { 0.8 };
            rows.push(vec![
                center + 0.1 * (rng.uniform() - 0.5),
                center + 0.1 * (rng.uniform() - 0.5),
            ]);
            labels.push(c);
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let mut net = Network::init(&[2, 8, 8, 8, 8, 2], &mut Rng::new(1)).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let curve = train_network(&mut net, &x, &labels, &cfg).unwrap();
        assert_eq!(curve.0.len(), 200);
        let correct = rows
            .iter()
            .zip(&labels)
            .filter(|(r, &l)| net.predict(r).unwrap() == l)
            .count();
        assert_eq!(correct, rows.len());
        assert!(curve.0.last().unwrap() < &curve.0[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let x = Matrix::from_vec(6, 3, (0..18).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let y = [0, 1, 2, 0, 1, 2];
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut a = Network::init(&[3, 4, 3], &mut Rng::new(2)).unwrap();
        let mut b = a.clone();
        train_network(&mut a, &x, &y, &cfg).unwrap();
        train_network(&mut b, &x, &y, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let x = Matrix::from_vec(4, 2, vec![0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let mut net = Network::init(&[2, 4, 2], &mut Rng::new(1)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            epochs: 5,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let err = train_network(&mut net, &x, &[0, 1, 0, 1], &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
