use serde::{Deserialize, Serialize};

use super::{AttackGoal, AttackResult};
use crate::error::{Error, Result};
use crate::mlp::{Network, Objective};
use crate::numerics::sign;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgsmConfig {
    pub epsilon: f64,
    pub clip_to_box: bool,
}

impl Default for FgsmConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            clip_to_box: true,
        }
    }
}

impl FgsmConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// One signed-gradient step of size ε on the cross-entropy at `label`.
pub fn fgsm(net: &Network, x: &[f64], label: usize, config: &FgsmConfig) -> Result<AttackResult> {
    config.validate()?;
    let goal = AttackGoal::untargeted(label);
    goal.check(net.n_classes())?;
    let (_, grad) = net.input_gradient(x, Objective::CrossEntropy { label })?;
    let original: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let adversarial: Vec<f64> = original
        .iter()
        .zip(sign(&grad))
        .map(|(v, s)| {
            let p = v + config.epsilon * s;
            if config.clip_to_box {
                p.clamp(0.0, 1.0)
            } else {
                p
            }
        })
        .collect();
    let predicted = net.forward_unchecked(&adversarial).predicted();
    Ok(AttackResult::new(
        original,
        adversarial,
        goal.is_success(predicted),
        0.0,
        1,
        goal,
        Vec::new(),
    ))
}

/// Runs FGSM at each ε in ascending order and returns the first success.
pub fn fgsm_smallest_success(net: &Network, x: &[f64], label: usize, epsilons: &[f64]) -> Result<Option<AttackResult>> {
    let mut sorted = epsilons.to_vec();
    sorted.sort_by(f64::total_cmp);
    for eps in sorted {
        let r = fgsm(net, x, label, &FgsmConfig::new(eps))?;
        if r.success {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn toy() -> Network {
        Network::init(&[4, 8, 3], &mut Rng::new(9)).unwrap()
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let net = toy();
        let x = [0.2, 0.4, 0.6, 0.8];
        let label = net.predict(&x).unwrap();
        let r = fgsm(&net, &x, label, &FgsmConfig::new(0.0)).unwrap();
        assert_eq!(r.adversarial, x.to_vec());
        assert_eq!(r.l2, 0.0);
        assert!(!r.success);
    }

    #[test]
    fn perturbation_bounded_by_epsilon() {
        let net = toy();
        let mut rng = Rng::new(2);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.uniform()).collect();
            let eps = rng.uniform() * 0.2;
            let r = fgsm(&net, &x, rng.below(3), &FgsmConfig::new(eps)).unwrap();
            assert!(r.perturbation.iter().all(|p| p.abs() <= eps + 1e-15));
            assert!(r.adversarial.iter().all(|v| (0.0..=1.0).contains(v)));
            let unclipped = fgsm(
                &net,
                &x,
                r.goal.true_label,
                &FgsmConfig {
                    epsilon: eps,
                    clip_to_box: false,
                },
            )
            .unwrap();
            let (_, g) = net.input_gradient(&x, Objective::CrossEntropy { label: r.goal.true_label }).unwrap();
            for (p, gi) in unclipped.perturbation.iter().zip(&g) {
                if *gi != 0.0 {
                    assert!((p.abs() - eps).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn success_flag_matches_prediction() {
        let net = toy();
        let x = [0.5, 0.5, 0.5, 0.5];
        let label = net.predict(&x).unwrap();
        for eps in [0.05, 0.2, 0.5] {
            let r = fgsm(&net, &x, label, &FgsmConfig::new(eps)).unwrap();
            assert_eq!(r.success, net.predict(&r.adversarial).unwrap() != label);
        }
    }

    #[test]
    fn negative_epsilon_rejected() {
        let net = toy();
        assert!(fgsm(&net, &[0.1; 4], 0, &FgsmConfig::new(-0.1)).is_err());
        assert!(fgsm(&net, &[0.1; 4], 0, &FgsmConfig::new(f64::NAN)).is_err());
    }
}
