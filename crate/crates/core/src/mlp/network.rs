use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, axpy, cross_entropy, dot, softmax_unchecked, Matrix, Rng, PROB_FLOOR};

/// Inputs may exceed the unit box by this much before the forward pass refuses them.
pub const BOX_TOLERANCE: f64 = 1e-9;

/// Fully connected layer computing `W x + b`; `W` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::invalid(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        if bias.iter().any(|b| !b.is_finite()) || !weights.all_finite() {
            return Err(Error::invalid("non-finite layer parameters"));
        }
        Ok(Self { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

/// Which output the attack surrogate reads: probabilities or raw scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surrogate {
    #[default]
    Softmax,
    Logits,
}

/// Scalar functions of the network output whose input gradient we need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Categorical cross-entropy at the given label.
    CrossEntropy { label: usize },
    /// `Z(x)_plus − Z(x)_minus` where Z is softmax or logits.
    Margin {
        plus: usize,
        minus: usize,
        surrogate: Surrogate,
    },
}

/// Per-layer activations from one forward pass, reused by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l` (post-ReLU for l > 0).
    inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardCache {
    pub fn predicted(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }
}

/// Dense ReLU network with a softmax head. The victim model and the small
/// toy models in the tests share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
}

impl Network {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::invalid(format!(
                    "layer shapes do not chain: {} outputs feed {} inputs",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// He-uniform weights (bound √(6/fan_in)) and zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {layer_sizes:?}")));
        }
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| (2.0 * rng.uniform() - 1.0) * bound)
                    .collect();
                Dense::new(Matrix::from_vec(fan_out, fan_in, data)?, vec![0.0; fan_out])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs())
            .chain(self.layers.iter().map(Dense::outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("nonempty").outputs()
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if let Some(i) = x
            .iter()
            .position(|v| !(-BOX_TOLERANCE..=1.0 + BOX_TOLERANCE).contains(v))
        {
            return Err(Error::contract(format!(
                "input feature {i} = {} lies outside the scaled box [0, 1]",
                x[i]
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> ForwardCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        inputs.push(x.to_vec());
        let last = self.layers.len() - 1;
        let mut logits = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let a = &inputs[l];
            let mut z: Vec<f64> = layer
                .weights
                .row_iter()
                .zip(&layer.bias)
                .map(|(row, b)| dot(row, a) + b)
                .collect();
            if l == last {
                logits = z;
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
                inputs.push(z);
            }
        }
        let probs = softmax_unchecked(&logits);
        ForwardCache {
            inputs,
            logits,
            probs,
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.probs)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.forward(x)?.predicted())
    }

    /// Objective value and ∂/∂logits at a cached forward pass.
    pub fn objective_at(&self, cache: &ForwardCache, objective: Objective) -> (f64, Vec<f64>) {
        let k = self.n_classes();
        match objective {
            Objective::CrossEntropy { label } => {
                let p = &cache.probs;
                let value = cross_entropy(p, label).expect("label in range");
                let mut g = vec![0.0; k];
                if p[label] >= PROB_FLOOR {
                    g.copy_from_slice(p);
                    g[label] -= 1.0;
                }
                (value, g)
            }
            Objective::Margin {
                plus,
                minus,
                surrogate,
            } => {
                let mut u = vec![0.0; k];
                u[plus] += 1.0;
                u[minus] -= 1.0;
                match surrogate {
                    Surrogate::Logits => (cache.logits[plus] - cache.logits[minus], u),
                    Surrogate::Softmax => {
                        let p = &cache.probs;
                        let pu = dot(p, &u);
                        let g = p.iter().zip(&u).map(|(pi, ui)| pi * (ui - pu)).collect();
                        (p[plus] - p[minus], g)
                    }
                }
            }
        }
    }

    /// Backpropagates an upstream gradient on the logits to the input.
    pub fn backward_input(&self, cache: &ForwardCache, dlogits: &[f64]) -> Vec<f64> {
        let mut delta = dlogits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let mut d_in = self.layers[l].weights.matvec_t(&delta);
            if l > 0 {
                // ReLU gate: the layer input is positive exactly where the unit was active.
                for (d, a) in d_in.iter_mut().zip(&cache.inputs[l]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = d_in;
        }
        delta
    }

    /// Analytic ∂objective/∂x, plus the objective value.
    pub fn input_gradient(&self, x: &[f64], objective: Objective) -> Result<(f64, Vec<f64>)> {
        let k = self.n_classes();
        let in_range = match objective {
            Objective::CrossEntropy { label } => label < k,
            Objective::Margin { plus, minus, .. } => plus < k && minus < k,
        };
        if !in_range {
            return Err(Error::invalid(format!(
                "objective refers to a class outside 0..{k}"
            )));
        }
        let cache = self.forward(x)?;
        let (value, dlogits) = self.objective_at(&cache, objective);
        Ok((value, self.backward_input(&cache, &dlogits)))
    }

    /// Mean cross-entropy over a batch and its gradient for every parameter.
    pub fn batch_loss_and_grads(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Vec<Dense>)> {
        let mut ws = Workspace::new(self, x.rows());
        let loss = ws.loss_and_grads(self, x, labels)?;
        Ok((loss, ws.grads))
    }
}

/// Scratch buffers for batched forward/backward passes.
pub(crate) struct Workspace {
    /// Input to each layer (post-ReLU for l > 0), batch-major.
    acts: Vec<Matrix>,
    /// Gradient w.r.t. each layer's pre-activation.
    deltas: Vec<Matrix>,
    pub grads: Vec<Dense>,
}

impl Workspace {
    pub fn new(net: &Network, batch: usize) -> Self {
        let sizes = net.layer_sizes();
        Self {
            acts: sizes[..sizes.len() - 1]
                .iter()
                .map(|&n| Matrix::zeros(batch, n))
                .collect(),
            deltas: sizes[1..].iter().map(|&n| Matrix::zeros(batch, n)).collect(),
            grads: net
                .layers()
                .iter()
                .map(|l| Dense {
                    weights: Matrix::zeros(l.outputs(), l.inputs()),
                    bias: vec![0.0; l.outputs()],
                })
                .collect(),
        }
    }

    pub fn loss_and_grads(&mut self, net: &Network, x: &Matrix, labels: &[usize]) -> Result<f64> {
        use crate::numerics::{gemm, Transpose};

        let b = x.rows();
        if self.acts[0].rows() != b {
            *self = Workspace::new(net, b);
        }
        let n_layers = net.layers().len();
        self.acts[0].as_mut_slice().copy_from_slice(x.as_slice());

        for l in 0..n_layers {
            let layer = &net.layers()[l];
            let out = &mut self.deltas[l];
            for r in 0..b {
                out.row_mut(r).copy_from_slice(&layer.bias);
            }
            gemm(1.0, &self.acts[l], Transpose::No, &layer.weights, Transpose::Yes, 1.0, out)?;
            if l + 1 < n_layers {
                let next = &mut self.acts[l + 1];
                for (a, z) in next.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *a = z.max(0.0);
                }
            }
        }

        // Output deltas hold logits; turn them into (p - y) / B.
        let k = net.n_classes();
        let mut loss = 0.0;
        let out = &mut self.deltas[n_layers - 1];
        for (r, &label) in labels.iter().enumerate() {
            if label >= k {
                return Err(Error::invalid(format!("label {label} out of range")));
            }
            let row = out.row_mut(r);
            let p = softmax_unchecked(row);
            loss += -p[label].max(PROB_FLOOR).ln();
            for (d, pi) in row.iter_mut().zip(&p) {
                *d = pi / b as f64;
            }
            row[label] -= 1.0 / b as f64;
        }

        for l in (0..n_layers).rev() {
            let grad = &mut self.grads[l];
            gemm(1.0, &self.deltas[l], Transpose::Yes, &self.acts[l], Transpose::No, 0.0, &mut grad.weights)?;
            grad.bias.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..b {
                axpy(1.0, self.deltas[l].row(r), &mut grad.bias);
            }
            if l > 0 {
                let (lower, upper) = self.deltas.split_at_mut(l);
                let prev = &mut lower[l - 1];
                gemm(1.0, &upper[0], Transpose::No, &net.layers()[l].weights, Transpose::No, 0.0, prev)?;
                for (d, a) in prev.as_mut_slice().iter_mut().zip(self.acts[l].as_slice()) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
        }
        Ok(loss / b as f64)
    }
}
