use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derived_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Hidden layer widths; input and the single output unit are implied.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![32, 16],
            epochs: 300,
            lr: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, &b)| {
            let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            b + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        }));
    }
}

/// Feed-forward network with ReLU hidden layers and a logistic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    layers: Vec<Dense>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Classifier {
    /// A network with no hidden layers that outputs `p` for every input.
    pub fn constant(inputs: usize, p: f64) -> Self {
        Classifier {
            layers: vec![Dense {
                inputs,
                outputs: 1,
                weights: vec![0.0; inputs],
                bias: vec![(p / (1.0 - p)).ln()],
            }],
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    /// Activations of every layer, input first; the last entry is the logit.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.forward(acts.last().unwrap(), &mut out);
            if l + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.activations(x).last().unwrap()[0])
    }
}

/// First and second moment estimates for one parameter vector.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, t: i32) {
        let c1 = 1.0 - Self::B1.powi(t);
        let c2 = 1.0 - Self::B2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g;
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g * g;
            *p -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

type LayerGrads = Vec<Vec<f64>>;

/// Mean cross-entropy and its gradient for weights and biases of each layer.
fn loss_and_gradient(net: &Classifier, inputs: &[Vec<f64>], labels: &[bool]) -> (f64, LayerGrads, LayerGrads) {
    let count = inputs.len() as f64;
    let mut gw: LayerGrads = net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut gb: LayerGrads = net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(labels) {
        let acts = net.activations(x);
        let z = acts.last().unwrap()[0];
        let target = if y { 1.0 } else { 0.0 };
        // log(1 + e^z) - y z, computed stably
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - target * z;
        let mut delta = vec![(sigmoid(z) - target) / count];
        for l in (0..net.layers.len()).rev() {
            let layer = &net.layers[l];
            let input = &acts[l];
            for o in 0..layer.outputs {
                gb[l][o] += delta[o];
                let row = &mut gw[l][o * layer.inputs..(o + 1) * layer.inputs];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += delta[o] * a;
                }
            }
            if l > 0 {
                delta = (0..layer.inputs)
                    .map(|i| {
                        if input[i] <= 0.0 {
                            return 0.0;
                        }
                        (0..layer.outputs)
                            .map(|o| delta[o] * layer.weights[o * layer.inputs + i])
                            .sum()
                    })
                    .collect();
            }
        }
    }
    (loss / count, gw, gb)
}

/// Full-batch training on binary cross-entropy with Adam steps. Returns the
/// network and the loss per epoch.
pub fn train_mlp(inputs: &[Vec<f64>], labels: &[bool], config: &MlpConfig) -> Result<(Classifier, Vec<f64>)> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(Error::InvalidConfig("training set is empty or mislabeled".into()));
    }
    if !(config.lr > 0.0) {
        return Err(Error::InvalidConfig("learning rate must be positive".into()));
    }
    let width = inputs[0].len();
    if inputs.iter().any(|x| x.len() != width) {
        return Err(Error::InvalidConfig("inputs have mixed widths".into()));
    }

    let mut rng = derived_rng(config.seed, 0, "mlp-init");
    let mut sizes = vec![width];
    sizes.extend(&config.hidden);
    sizes.push(1);
    let layers: Vec<Dense> = sizes
        .windows(2)
        .map(|w| {
            // He-uniform for the ReLU layers
            let limit = (6.0 / w[0].max(1) as f64).sqrt();
            Dense {
                inputs: w[0],
                outputs: w[1],
                weights: (0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)).collect(),
                bias: vec![0.0; w[1]],
            }
        })
        .collect();
    let mut net = Classifier { layers };
    let mut opt_w: Vec<Adam> = net.layers.iter().map(|l| Adam::new(l.weights.len())).collect();
    let mut opt_b: Vec<Adam> = net.layers.iter().map(|l| Adam::new(l.bias.len())).collect();

    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, gw, gb) = loss_and_gradient(&net, inputs, labels);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(loss);
        let t = epoch as i32 + 1;
        for (l, layer) in net.layers.iter_mut().enumerate() {
            opt_w[l].step(&mut layer.weights, &gw[l], config.lr, t);
            opt_b[l].step(&mut layer.bias, &gb[l], config.lr, t);
        }
    }
    Ok((net, losses))
}
