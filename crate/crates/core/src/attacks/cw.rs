use serde::{Deserialize, Serialize};

use super::{AttackGoal, AttackMode, AttackResult};
use crate::error::{Error, Result};
use crate::mlp::{Network, Objective, Surrogate};
use crate::numerics::{AdamConfig, OptimizerState};

/// Keeps `atanh` finite at the box edges.
const TANH_SQUASH: f64 = 0.999999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CwConfig {
    pub c_init: f64,
    pub c_search_steps: usize,
    /// The ×10 bracketing phase never goes above this constant.
    pub c_max: f64,
    pub inner_iterations: usize,
    pub step_size: f64,
    pub surrogate: Surrogate,
    pub confidence: f64,
    pub abort_early: bool,
}

impl Default for CwConfig {
    fn default() -> Self {
        Self {
            c_init: 1e-2,
            c_search_steps: 6,
            c_max: 1e4,
            inner_iterations: 500,
            step_size: 0.01,
            surrogate: Surrogate::Softmax,
            confidence: 0.0,
            abort_early: true,
        }
    }
}

impl CwConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_init > 0.0 && self.c_init.is_finite()) {
            return Err(Error::invalid("c_init must be positive"));
        }
        if !(self.c_max >= self.c_init) {
            return Err(Error::invalid("c_max must be at least c_init"));
        }
        if self.inner_iterations == 0 {
            return Err(Error::invalid("inner_iterations must be at least 1"));
        }
        if self.c_search_steps == 0 {
            return Err(Error::invalid("c_search_steps must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size must be positive"));
        }
        if !(self.confidence >= 0.0 && self.confidence.is_finite()) {
            return Err(Error::invalid("confidence must be non-negative"));
        }
        Ok(())
    }
}

/// Outcome of one inner optimization at a fixed constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CStep {
    pub c: f64,
    /// Hinge value at the point this step returned.
    pub g: f64,
    pub success: bool,
    pub iterations: usize,
}

/// Everything computed at one point `w` of the reparameterized objective.
#[derive(Debug, Clone)]
pub struct CwEval {
    pub objective: f64,
    pub dist_sq: f64,
    pub g: f64,
    pub x_star: Vec<f64>,
    pub grad_w: Vec<f64>,
    pub predicted: usize,
}

/// `‖x* − x‖² + c·g(x*)` with `x* = (tanh w + 1)/2` and its gradient over w.
///
/// Untargeted: `g = max{0, Z_l − max_{i≠l} Z_i + κ}`; targeted:
/// `g = max{0, max_{i≠t} Z_i − Z_t + κ}`. Z is the softmax output or the
/// logits. On the hinge's flat side (and at the kink) the hinge contributes
/// no gradient.
pub fn cw_objective_and_gradient(
    net: &Network,
    w: &[f64],
    x: &[f64],
    goal: &AttackGoal,
    c: f64,
    surrogate: Surrogate,
    confidence: f64,
) -> Result<CwEval> {
    if w.len() != x.len() || x.len() != net.input_dim() {
        return Err(Error::invalid("w, x and the network input differ in length"));
    }
    goal.check(net.n_classes())?;
    Ok(evaluate(net, w, x, goal, c, surrogate, confidence))
}

fn evaluate(
    net: &Network,
    w: &[f64],
    x: &[f64],
    goal: &AttackGoal,
    c: f64,
    surrogate: Surrogate,
    confidence: f64,
) -> CwEval {
    let tanh: Vec<f64> = w.iter().map(|v| v.tanh()).collect();
    let x_star: Vec<f64> = tanh.iter().map(|t| 0.5 * (t + 1.0)).collect();
    let cache = net.forward_unchecked(&x_star);
    let z = match surrogate {
        Surrogate::Softmax => &cache.probs,
        Surrogate::Logits => &cache.logits,
    };
    let anchor = match goal.mode {
        AttackMode::Untargeted => goal.true_label,
        AttackMode::Targeted(t) => t,
    };
    let mut other = if anchor == 0 { 1 } else { 0 };
    for (i, &v) in z.iter().enumerate() {
        if i != anchor && v > z[other] {
            other = i;
        }
    }
    let (plus, minus) = match goal.mode {
        AttackMode::Untargeted => (anchor, other),
        AttackMode::Targeted(_) => (other, anchor),
    };
    let margin = z[plus] - z[minus] + confidence;
    let g = margin.max(0.0);

    let mut grad_x: Vec<f64> = x_star.iter().zip(x).map(|(s, o)| 2.0 * (s - o)).collect();
    if margin > 0.0 && c != 0.0 {
        let (_, dlogits) = net.objective_at(
            &cache,
            Objective::Margin {
                plus,
                minus,
                surrogate,
            },
        );
        let dg = net.backward_input(&cache, &dlogits);
        for (gx, d) in grad_x.iter_mut().zip(dg) {
            *gx += c * d;
        }
    }
    let grad_w = grad_x
        .iter()
        .zip(&tanh)
        .map(|(gx, t)| gx * 0.5 * (1.0 - t * t))
        .collect();
    let dist_sq: f64 = x_star.iter().zip(x).map(|(s, o)| (s - o).powi(2)).sum();
    CwEval {
        objective: dist_sq + c * g,
        dist_sq,
        g,
        predicted: cache.predicted(),
        x_star,
        grad_w,
    }
}

pub(crate) fn to_w(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| ((2.0 * v - 1.0) * TANH_SQUASH).atanh()).collect()
}

/// C-W L2 attack. Each constant restarts Adam from `atanh(2x − 1)`; the
/// constant is multiplied by 10 until the first success, then bisected.
/// Reports the smallest-norm success over all constants, else the attempt
/// with the lowest hinge value.
pub fn cw_l2(net: &Network, x: &[f64], goal: &AttackGoal, config: &CwConfig) -> Result<AttackResult> {
    config.validate()?;
    goal.check(net.n_classes())?;
    let start = net.forward(x)?;
    let original: Vec<f64> = x.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    if goal.is_success(start.predicted()) {
        return Ok(AttackResult::new(original.clone(), original, true, 0.0, 0, *goal, Vec::new()));
    }

    let w0 = to_w(&original);
    let mut c = config.c_init;
    let (mut lower, mut upper) = (0.0f64, f64::INFINITY);
    let mut best: Option<(f64, Vec<f64>, f64)> = None;
    let mut fallback: Option<(f64, Vec<f64>, f64)> = None;
    let mut trace = Vec::with_capacity(config.c_search_steps);
    let mut total_iterations = 0;

    for _ in 0..config.c_search_steps {
        let mut w = w0.clone();
        let mut adam = OptimizerState::new(w.len(), AdamConfig::with_learning_rate(config.step_size));
        let mut prev = f64::INFINITY;
        let mut step_best: Option<(f64, Vec<f64>)> = None;
        let check_every = (config.inner_iterations / 10).max(1);
        let mut iterations = 0;
        let mut last = evaluate(net, &w, &original, goal, c, config.surrogate, config.confidence);

        for it in 0..config.inner_iterations {
            if goal.is_success(last.predicted) && step_best.as_ref().map_or(true, |(d, _)| last.dist_sq < *d) {
                step_best = Some((last.dist_sq, last.x_star.clone()));
            }
            adam.step(&mut w, &last.grad_w)?;
            iterations += 1;
            last = evaluate(net, &w, &original, goal, c, config.surrogate, config.confidence);
            if config.abort_early && (it + 1) % check_every == 0 {
                if last.objective > prev * 0.9999 {
                    break;
                }
                prev = last.objective;
            }
        }
        if goal.is_success(last.predicted) && step_best.as_ref().map_or(true, |(d, _)| last.dist_sq < *d) {
            step_best = Some((last.dist_sq, last.x_star.clone()));
        }
        total_iterations += iterations;

        let success = step_best.is_some();
        let returned_g = if success { 0.0 } else { last.g };
        trace.push(CStep {
            c,
            g: returned_g,
            success,
            iterations,
        });
        if let Some((d, xs)) = step_best {
            if best.as_ref().map_or(true, |(bd, _, _)| d < *bd) {
                best = Some((d, xs, c));
            }
            upper = upper.min(c);
            c = 0.5 * (lower + upper);
        } else {
            if fallback.as_ref().map_or(true, |(g, _, _)| last.g < *g) {
                fallback = Some((last.g, last.x_star.clone(), c));
            }
            lower = lower.max(c);
            if upper.is_finite() {
                c = 0.5 * (lower + upper);
            } else {
                if c * 10.0 > config.c_max {
                    break;
                }
                c *= 10.0;
            }
        }
    }

    let (success, (_, adversarial, c_used)) = match (best, fallback) {
        (Some(b), _) => (true, b),
        (None, Some(f)) => (false, f),
        (None, None) => unreachable!("at least one constant is tried"),
    };
    Ok(AttackResult::new(
        original,
        adversarial,
        success,
        c_used,
        total_iterations,
        *goal,
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Dense;
    use crate::numerics::{finite_diff_gradient, max_relative_error, Matrix, Rng};

    fn linear_toy() -> Network {
        // Two logits, boundary 2·x0 + x1 = 1.3 inside the unit box.
        let w = Matrix::from_vec(2, 2, vec![2.0, 1.0, 0.0, 0.0]).unwrap();
        Network::new(vec![Dense::new(w, vec![-1.3, 0.0]).unwrap()]).unwrap()
    }

    /// Two classes split by the piecewise-linear parabola
    /// `y = 0.5 − 1.5 (x − 0.5)²`: class 1 above, class 0 below.
    fn nonlinear_toy() -> Network {
        let knots: Vec<f64> = (0..10).map(|k| 0.05 + 0.1 * k as f64).collect();
        let mut w1 = vec![0.0, 1.0, 1.0, 0.0];
        let mut b1 = vec![0.0, 0.0];
        for &a in &knots {
            w1.extend([1.0, 0.0]);
            b1.push(-a);
        }
        let units = b1.len();
        let hidden = Matrix::from_vec(units, 2, w1).unwrap();
        let mut w2 = vec![0.0; 2 * units];
        w2[units] = 1.0;
        w2[units + 1] = -1.5;
        for k in 0..knots.len() {
            w2[units + 2 + k] = 0.3;
        }
        let out = Matrix::from_vec(2, units, w2).unwrap();
        Network::new(vec![
            Dense::new(hidden, b1).unwrap(),
            Dense::new(out, vec![0.5, 0.375]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn linear_boundary_distance_within_ten_percent() {
        let net = linear_toy();
        for x in [[0.3, 0.4], [0.2, 0.1], [0.45, 0.2]] {
            let label = net.predict(&x).unwrap();
            let gap = (2.0 * x[0] + x[1] - 1.3f64).abs();
            let analytic = gap / 5f64.sqrt();
            let r = cw_l2(&net, &x, &AttackGoal::untargeted(label), &CwConfig::default()).unwrap();
            assert!(r.success, "{x:?}");
            assert!(
                (r.l2 - analytic).abs() <= 0.1 * analytic,
                "{x:?}: cw {} vs analytic {analytic}",
                r.l2
            );
        }
    }

    #[test]
    fn nonlinear_norm_close_to_radial_grid_minimum() {
        let net = nonlinear_toy();
        let mut checked = 0;
        for x in [[0.5, 0.3], [0.2, 0.2], [0.35, 0.3], [0.8, 0.7], [0.5, 0.8], [0.1, 0.5]] {
            let label = net.predict(&x).unwrap();
            let mut grid_min = f64::INFINITY;
            for k in 0..360 {
                let theta = (k as f64).to_radians();
                let (dx, dy) = (theta.cos(), theta.sin());
                let mut r = 1e-3;
                while r < 1.5 {
                    let p = [x[0] + r * dx, x[1] + r * dy];
                    if !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]) {
                        break;
                    }
                    if net.predict(&p).unwrap() != label {
                        grid_min = grid_min.min(r);
                        break;
                    }
                    r += 1e-3;
                }
            }
            if !grid_min.is_finite() {
                continue;
            }
            checked += 1;
            let res = cw_l2(&net, &x, &AttackGoal::untargeted(label), &CwConfig::default()).unwrap();
            assert!(res.success);
            assert!(res.l2 <= 1.1 * grid_min, "{x:?}: cw {} vs grid {grid_min}", res.l2);
        }
        assert!(checked >= 5);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let net = nonlinear_toy();
        let mut rng = Rng::new(5);
        for surrogate in [Surrogate::Softmax, Surrogate::Logits] {
            for _ in 0..20 {
                let x = [rng.uniform(), rng.uniform()];
                let w = [rng.uniform() * 2.0 - 1.0, rng.uniform() * 2.0 - 1.0];
                let label = net.predict(&x).unwrap();
                let goal = AttackGoal::untargeted(label);
                let e = cw_objective_and_gradient(&net, &w, &x, &goal, 3.0, surrogate, 0.0).unwrap();
                if e.g.abs() < 1e-6 {
                    continue;
                }
                let fd = finite_diff_gradient(
                    |wp| {
                        cw_objective_and_gradient(&net, wp, &x, &goal, 3.0, surrogate, 0.0)
                            .unwrap()
                            .objective
                    },
                    &w,
                    1e-5,
                );
                assert!(max_relative_error(&e.grad_w, &fd, 1e-8) < 1e-4);
            }
        }
    }

    #[test]
    fn zero_c_reduces_to_distance() {
        let net = nonlinear_toy();
        let x = [0.3, 0.6];
        let goal = AttackGoal::untargeted(0);
        let w_at_x = [(2.0f64 * 0.3 - 1.0).atanh(), (2.0f64 * 0.6 - 1.0).atanh()];
        let e = cw_objective_and_gradient(&net, &w_at_x, &x, &goal, 0.0, Surrogate::Softmax, 0.0).unwrap();
        assert!(e.objective < 1e-24);
        assert!(e.grad_w.iter().all(|g| g.abs() < 1e-12));
        let w = [0.4, -0.2];
        let e = cw_objective_and_gradient(&net, &w, &x, &goal, 0.0, Surrogate::Softmax, 0.0).unwrap();
        assert!((e.objective - e.dist_sq).abs() < 1e-15);
    }

    #[test]
    fn flat_hinge_leaves_distance_gradient_only() {
        let net = linear_toy();
        // Point well inside class 1's region, attacked as if labelled 0: g = 0.
        let x = [0.1, 0.1];
        let goal = AttackGoal::untargeted(0);
        let w = to_w(&x);
        let e = cw_objective_and_gradient(&net, &w, &x, &goal, 100.0, Surrogate::Softmax, 0.0).unwrap();
        assert_eq!(e.g, 0.0);
        let e0 = cw_objective_and_gradient(&net, &w, &x, &goal, 0.0, Surrogate::Softmax, 0.0).unwrap();
        assert_eq!(e.grad_w, e0.grad_w);
    }

    #[test]
    fn misclassified_input_needs_no_perturbation() {
        let net = linear_toy();
        let x = [0.1, 0.1];
        assert_eq!(net.predict(&x).unwrap(), 1);
        let r = cw_l2(&net, &x, &AttackGoal::untargeted(0), &CwConfig::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.l2, 0.0);
        assert_eq!(r.adversarial, x.to_vec());
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn hinge_is_monotone_over_the_search_trace() {
        let net = nonlinear_toy();
        let x = [0.45, 0.55];
        let label = net.predict(&x).unwrap();
        let r = cw_l2(&net, &x, &AttackGoal::untargeted(label), &CwConfig::default()).unwrap();
        let mut steps = r.trace.clone();
        assert!(!steps.is_empty());
        steps.sort_by(|a, b| a.c.total_cmp(&b.c));
        for pair in steps.windows(2) {
            assert!(pair[1].g <= pair[0].g + 1e-12, "{steps:?}");
        }
    }

    #[test]
    fn targeted_attack_hits_target() {
        let net = nonlinear_toy();
        let x = [0.5, 0.5];
        let label = net.predict(&x).unwrap();
        let target = (label + 1) % net.n_classes();
        let goal = AttackGoal::targeted(label, target).unwrap();
        let r = cw_l2(&net, &x, &goal, &CwConfig::default()).unwrap();
        if r.success {
            assert_eq!(net.predict(&r.adversarial).unwrap(), target);
        }
        assert!(AttackGoal::targeted(1, 1).is_err());
    }

    #[test]
    fn unscaled_input_is_a_contract_error() {
        let net = linear_toy();
        let err = cw_l2(&net, &[1.5, 0.2], &AttackGoal::untargeted(0), &CwConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn result_is_boxed_and_consistent() {
        let net = nonlinear_toy();
        let x = [0.05, 0.95];
        let label = net.predict(&x).unwrap();
        let r = cw_l2(&net, &x, &AttackGoal::untargeted(label), &CwConfig::default()).unwrap();
        assert!(r.adversarial.iter().all(|v| (0.0..=1.0).contains(v)));
        let recomputed = crate::numerics::l2_norm(&r.perturbation);
        assert!((recomputed - r.l2).abs() < 1e-12);
        assert_eq!(r.success, net.predict(&r.adversarial).unwrap() != label);
    }
}
