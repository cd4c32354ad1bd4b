use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{sigmoid, softplus, Matrix, MlpParams};
use crate::rng::{derive_seed_tagged, rng_from_seed, PipelineRng};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let w = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

/// Feed-forward network: ReLU hidden layers with dropout, sigmoid output,
/// binary cross-entropy loss, Adam. Inputs are standardised with the
/// training mean and standard deviation stored in the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub layers: Vec<Layer>,
    pub dropout: f64,
}

struct Trace {
    /// Input to each layer (after activation and dropout of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)) per hidden layer.
    masks: Vec<Vec<f64>>,
    logit: f64,
}

impl Mlp {
    /// Returns the model (with the best validation weights restored) and
    /// the validation loss after each epoch.
    pub fn fit(x: &Matrix, y: &[u8], p: &MlpParams, seed: u64) -> (Self, Vec<f64>) {
        let d = x.cols();
        let mut rng = rng_from_seed(derive_seed_tagged(seed, "mlp-init"));
        let (mean, scale) = standardisation(x);
        let mut model = Self {
            mean,
            scale,
            layers: Vec::new(),
            dropout: p.dropout.clamp(0.0, 0.95),
        };
        let mut sizes = vec![d];
        sizes.extend(p.hidden.iter().copied().filter(|&h| h > 0));
        sizes.push(1);
        for w in sizes.windows(2) {
            let (inputs, outputs) = (w[0], w[1]);
            let sd = (2.0 / inputs as f64).sqrt();
            let normal = Normal::new(0.0, sd).expect("finite sd");
            model.layers.push(Layer {
                inputs,
                outputs,
                weights: (0..inputs * outputs).map(|_| normal.sample(&mut rng)).collect(),
                bias: vec![0.0; outputs],
            });
        }

        let rows: Vec<Vec<f64>> = (0..x.rows()).map(|i| model.standardise(x.row(i))).collect();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let mut split_rng = rng_from_seed(derive_seed_tagged(seed, "mlp-validation"));
        order.shuffle(&mut split_rng);
        let n_val = if rows.len() >= 10 {
            ((rows.len() as f64 * p.validation_fraction).round() as usize).clamp(1, rows.len() - 1)
        } else {
            0
        };
        let (val, train) = order.split_at(n_val);
        let mut train = train.to_vec();
        // Without a validation set, early stopping watches the training loss.
        let monitor: Vec<usize> = if val.is_empty() { train.clone() } else { val.to_vec() };

        let mut m1: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; l.weights.len() + l.bias.len()]).collect();
        let mut m2 = m1.clone();
        let mut t = 0i32;
        let mut best = (f64::INFINITY, model.layers.clone());
        let mut stale = 0;
        let mut history = Vec::new();
        let mut train_rng = rng_from_seed(derive_seed_tagged(seed, "mlp-train"));
        let batch = p.batch_size.max(1);

        for _ in 0..p.max_epochs {
            train.shuffle(&mut train_rng);
            for chunk in train.chunks(batch) {
                let mut grads: Vec<Vec<f64>> = m1.iter().map(|v| vec![0.0; v.len()]).collect();
                for &i in chunk {
                    let trace = model.forward_trace(&rows[i], Some(&mut train_rng));
                    model.backward(&trace, f64::from(y[i]), &mut grads);
                }
                t += 1;
                let lr_t = p.learning_rate * (1.0 - ADAM_BETA2.powi(t)).sqrt() / (1.0 - ADAM_BETA1.powi(t));
                let inv = 1.0 / chunk.len() as f64;
                for (li, layer) in model.layers.iter_mut().enumerate() {
                    let nw = layer.weights.len();
                    for (j, g) in grads[li].iter().enumerate() {
                        let g = g * inv;
                        m1[li][j] = ADAM_BETA1 * m1[li][j] + (1.0 - ADAM_BETA1) * g;
                        m2[li][j] = ADAM_BETA2 * m2[li][j] + (1.0 - ADAM_BETA2) * g * g;
                        let delta = lr_t * m1[li][j] / (m2[li][j].sqrt() + ADAM_EPS);
                        if j < nw {
                            layer.weights[j] -= delta;
                        } else {
                            layer.bias[j - nw] -= delta;
                        }
                    }
                }
            }
            let loss = monitor
                .iter()
                .map(|&i| {
                    let z = model.forward_trace(&rows[i], None).logit;
                    if y[i] == 1 {
                        softplus(-z)
                    } else {
                        softplus(z)
                    }
                })
                .sum::<f64>()
                / monitor.len().max(1) as f64;
            history.push(loss);
            if loss < best.0 {
                best = (loss, model.layers.clone());
                stale = 0;
            } else {
                stale += 1;
                if stale >= p.patience {
                    break;
                }
            }
        }
        model.layers = best.1;
        (model, history)
    }

    fn standardise(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    /// Forward pass on a standardised row. Dropout is applied only when an
    /// RNG is supplied, i.e. during training.
    fn forward_trace(&self, row: &[f64], mut dropout_rng: Option<&mut PipelineRng>) -> Trace {
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::new(),
            masks: Vec::new(),
            logit: 0.0,
        };
        let mut act = row.to_vec();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&act);
            trace.inputs.push(std::mem::take(&mut act));
            if li == last {
                trace.logit = z[0];
                break;
            }
            let keep = 1.0 - self.dropout;
            let mask: Vec<f64> = match dropout_rng.as_deref_mut() {
                Some(rng) if self.dropout > 0.0 => (0..z.len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect(),
                _ => vec![1.0; z.len()],
            };
            act = z.iter().zip(&mask).map(|(v, m)| v.max(0.0) * m).collect();
            trace.pre.push(z);
            trace.masks.push(mask);
        }
        trace
    }

    /// Accumulates the BCE gradient for one example into `grads`
    /// (per layer: weights then biases).
    fn backward(&self, trace: &Trace, label: f64, grads: &mut [Vec<f64>]) {
        let mut delta = vec![sigmoid(trace.logit) - label];
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &trace.inputs[li];
            let nw = layer.weights.len();
            for (o, d) in delta.iter().enumerate() {
                let g = &mut grads[li][o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, x) in g.iter_mut().zip(input) {
                    *gw += d * x;
                }
                grads[li][nw + o] += d;
            }
            if li == 0 {
                break;
            }
            let pre = &trace.pre[li - 1];
            let mask = &trace.masks[li - 1];
            delta = (0..layer.inputs)
                .map(|j| {
                    if pre[j] <= 0.0 || mask[j] == 0.0 {
                        return 0.0;
                    }
                    let back: f64 = delta
                        .iter()
                        .enumerate()
                        .map(|(o, d)| d * layer.weights[o * layer.inputs + j])
                        .sum();
                    back * mask[j]
                })
                .collect();
        }
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        let z = self.forward_trace(&self.standardise(row), None).logit;
        sigmoid(z)
    }
}

fn standardisation(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}
