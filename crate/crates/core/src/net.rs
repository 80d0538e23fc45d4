//! Fully connected networks with hand-written reverse-mode gradients and an
//! Adam optimizer. Enough for 2-D toy adversarial training, nothing more.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEAKY_RELU_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    LeakyRelu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
        }
    }

    /// Derivative given the pre-activation `x` and the activation `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
        }
    }
}

/// One affine layer, `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Self {
        Self {
            weights: Array2::zeros(self.weights.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Feed-forward chain: affine layers with `hidden_activation` between them
/// and an identity output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    layers: Vec<Dense>,
    hidden_activation: Activation,
}

/// Parameter-shaped gradient set, one entry per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Dense::is_finite)
    }

    /// Accumulates `other` into `self`.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

/// Intermediate values kept by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

impl Mlp {
    /// Random initialization: every weight and bias uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(layer_sizes: &[usize], hidden_activation: Activation, rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-bound..=bound));
                let bias = Array1::from_shape_simple_fn(fan_out, || rng.gen_range(-bound..=bound));
                Dense { weights, bias }
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            hidden_activation,
        })
    }

    /// Builds a network from explicit layers. Shapes must chain.
    pub fn from_layers(layers: Vec<Dense>, hidden_activation: Activation) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::Argument("network needs at least one layer".into()));
        };
        let mut sizes = vec![first.weights.nrows()];
        for (i, l) in layers.iter().enumerate() {
            if l.weights.nrows() != *sizes.last().unwrap() || l.bias.len() != l.weights.ncols() {
                return Err(Error::Shape(format!("layer {i} does not chain with its predecessor")));
            }
            sizes.push(l.weights.ncols());
        }
        check_sizes(&sizes)?;
        Ok(Self {
            layer_sizes: sizes,
            layers,
            hidden_activation,
        })
    }

    /// All-zero network; its output is the constant output bias (zero).
    pub fn zeros(layer_sizes: &[usize], hidden_activation: Activation) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            layers,
            hidden_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(&batch)?;
        let last = self.layers.len() - 1;
        let mut h = batch.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights) + &layer.bias;
            if i < last {
                let act = self.hidden_activation;
                z.mapv_inplace(|v| act.apply(v));
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::numeric(Some(i), "non-finite activation in forward pass"));
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, batch: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_batch(&batch)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(last);
        let mut h = batch.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weights) + &layer.bias;
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::numeric(Some(i), "non-finite activation in forward pass"));
            }
            inputs.push(h);
            if i < last {
                let act = self.hidden_activation;
                h = z.mapv(|v| act.apply(v));
                pre_activations.push(z);
            } else {
                h = z;
            }
        }
        Ok((h, ForwardCache { inputs, pre_activations }))
    }

    /// Backpropagates `grad_output` (dL/d output, same shape as the output)
    /// and returns parameter gradients together with dL/d input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        let last = self.layers.len() - 1;
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                let z = &cache.pre_activations[i];
                let y = &cache.inputs[i + 1];
                let act = self.hidden_activation;
                Zip::from(&mut delta).and(z).and(y).for_each(|d, &z, &y| *d *= act.derivative(z, y));
            }
            let layer = &self.layers[i];
            let g = Dense {
                weights: cache.inputs[i].t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            };
            if !g.is_finite() {
                return Err(Error::numeric(Some(i), "non-finite gradient in backward pass"));
            }
            grads.push(g);
            delta = delta.dot(&layer.weights.t());
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// Reverse-mode gradients of a scalar loss of the batch outputs.
    ///
    /// `loss` receives the `n x out` outputs and returns the loss value and
    /// dL/d outputs; for a mean loss the `1/n` factor belongs in that closure.
    pub fn gradients<F>(&self, batch: ArrayView2<f64>, loss: F) -> Result<(f64, Gradients)>
    where
        F: FnOnce(&Array2<f64>) -> (f64, Array2<f64>),
    {
        let (out, cache) = self.forward_cached(batch)?;
        let (value, grad_out) = loss(&out);
        if !value.is_finite() {
            return Err(Error::numeric(Some(self.layers.len() - 1), "non-finite loss"));
        }
        if grad_out.raw_dim() != out.raw_dim() {
            return Err(Error::Shape("loss gradient shape differs from network output".into()));
        }
        let (grads, _) = self.backward(&cache, grad_out.view())?;
        Ok((value, grads))
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Argument("need at least input and output sizes".into()));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Argument("layer sizes must be positive".into()));
    }
    Ok(())
}

/// Adam state for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<Dense>,
    second_moment: Vec<Dense>,
}

impl OptimizerState {
    pub fn adam(net: &Mlp, learning_rate: f64) -> Self {
        Self::with_betas(net, learning_rate, 0.9, 0.999)
    }

    pub fn with_betas(net: &Mlp, learning_rate: f64, beta1: f64, beta2: f64) -> Self {
        let zeros: Vec<Dense> = net.layers.iter().map(Dense::zeros_like).collect();
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of `net` in place. From a fresh state a zero gradient
    /// leaves the parameters unchanged.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len()
            || grads
                .layers
                .iter()
                .zip(&net.layers)
                .any(|(g, p)| g.weights.raw_dim() != p.weights.raw_dim() || g.bias.raw_dim() != p.bias.raw_dim())
        {
            return Err(Error::Shape("gradient shapes do not match parameters".into()));
        }
        if self.first_moment.len() != net.layers.len() {
            return Err(Error::Shape("optimizer state belongs to a different network".into()));
        }
        if let Some(i) = grads.layers.iter().position(|g| !g.is_finite()) {
            return Err(Error::numeric(Some(i), "non-finite gradient passed to optimizer"));
        }
        self.step += 1;
        let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((p, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            Zip::from(&mut p.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| update(p, m, v, g));
            Zip::from(&mut p.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(w: f64, b: f64) -> Mlp {
        Mlp::from_layers(
            vec![Dense {
                weights: array![[w]],
                bias: array![b],
            }],
            Activation::Tanh,
        )
        .unwrap()
    }

    fn squared_to_one(out: &Array2<f64>) -> (f64, Array2<f64>) {
        let n = out.nrows() as f64;
        let loss = out.mapv(|o| (o - 1.0).powi(2)).sum() / n;
        (loss, out.mapv(|o| 2.0 * (o - 1.0) / n))
    }

    #[test]
    fn identity_layer() {
        let net = linear(1.0, 0.0);
        assert_eq!(net.forward(array![[3.0]].view()).unwrap(), array![[3.0]]);
    }

    #[test]
    fn zero_weights_give_constant_bias() {
        let mut net = Mlp::zeros(&[2, 5, 1], Activation::LeakyRelu).unwrap();
        net.layers_mut()[1].bias[0] = 0.7;
        let out = net.forward(array![[1.0, -2.0], [30.0, 4.0]].view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn tanh_zero_input_zero_bias_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[3, 8, 8, 1], Activation::Tanh, &mut rng).unwrap();
        for l in net.layers_mut() {
            l.bias.fill(0.0);
        }
        let out = net.forward(Array2::zeros((4, 3)).view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let net = linear(1.0, 0.0);
        assert!(matches!(net.forward(array![[1.0, 2.0]].view()), Err(Error::Shape(_))));
    }

    #[test]
    fn hand_chain_rule() {
        // out = w x, L = (out - 1)^2
        let (_, g) = linear(0.5, 0.0).gradients(array![[2.0]].view(), squared_to_one).unwrap();
        assert_eq!(g.layers[0].weights[[0, 0]], 0.0);
        let (_, g) = linear(1.0, 0.0).gradients(array![[2.0]].view(), squared_to_one).unwrap();
        assert_eq!(g.layers[0].weights[[0, 0]], 4.0);
    }

    #[test]
    fn non_finite_reports_layer() {
        let net = Mlp::from_layers(
            vec![
                Dense {
                    weights: array![[1.0]],
                    bias: array![0.0],
                },
                Dense {
                    weights: array![[f64::INFINITY]],
                    bias: array![0.0],
                },
            ],
            Activation::LeakyRelu,
        )
        .unwrap();
        match net.forward(array![[1.0]].view()) {
            Err(Error::Numeric { layer, .. }) => assert_eq!(layer, Some(1)),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn batch_order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[2, 16, 1], Activation::LeakyRelu, &mut rng).unwrap();
        let x = Array::from_shape_fn((6, 2), |(i, j)| (i as f64 - 2.5) * (j as f64 + 0.3));
        let out = net.forward(x.view()).unwrap();
        let perm = [4, 0, 5, 2, 1, 3];
        let out_p = net.forward(x.select(Axis(0), &perm).view()).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            assert_eq!(out_p[[k, 0]].to_bits(), out[[p, 0]].to_bits());
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::new(&[2, 4, 1], Activation::Tanh, &mut rng).unwrap();
        let before = net.clone();
        let mut opt = OptimizerState::adam(&net, 0.1);
        let zero = Gradients {
            layers: net.layers().iter().map(Dense::zeros_like).collect(),
        };
        opt.step(&mut net, &zero).unwrap();
        assert_eq!(net, before);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn scalar_convergence() {
        // gradient of (w - 3)^2 fed straight to the optimizer
        let mut net = linear(0.0, 0.0);
        let mut opt = OptimizerState::adam(&net, 0.01);
        for _ in 0..2000 {
            let w = net.layers()[0].weights[[0, 0]];
            let g = Gradients {
                layers: vec![Dense {
                    weights: array![[2.0 * (w - 3.0)]],
                    bias: array![0.0],
                }],
            };
            opt.step(&mut net, &g).unwrap();
        }
        assert!((net.layers()[0].weights[[0, 0]] - 3.0).abs() < 0.01);
    }

    #[test]
    fn optimizer_rejects_non_finite() {
        let mut net = linear(0.0, 0.0);
        let mut opt = OptimizerState::adam(&net, 0.01);
        let g = Gradients {
            layers: vec![Dense {
                weights: array![[f64::NAN]],
                bias: array![0.0],
            }],
        };
        assert!(matches!(opt.step(&mut net, &g), Err(Error::Numeric { .. })));
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut net = Mlp::new(&[2, 8, 1], Activation::LeakyRelu, &mut rng).unwrap();
            let mut opt = OptimizerState::adam(&net, 0.01);
            let x = Array::from_shape_fn((8, 2), |(i, j)| ((i * 3 + j) as f64).sin());
            for _ in 0..50 {
                let (_, g) = net.gradients(x.view(), squared_to_one).unwrap();
                opt.step(&mut net, &g).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }
}
