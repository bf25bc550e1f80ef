//! Fully connected feed-forward network with logistic activations, trained by
//! backpropagation on mean squared error.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TEXT_MAGIC: &str = "mlp v1";

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Sample {
    pub fn new(features: Vec<f64>, targets: Vec<f64>) -> Self {
        Sample { features, targets }
    }
}

/// How an epoch turns gradients into parameter updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// One step per epoch along the gradient of the whole training set.
    Batch,
    /// One step per sample, visiting the samples in a seeded order. At the
    /// default rate and epoch count batch steps barely move the weights.
    #[default]
    Online,
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(TrainMode::Batch),
            "online" => Ok(TrainMode::Online),
            _ => Err(Error::config(format!("unknown training mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub mode: TrainMode,
    /// Training stops once the mean squared training error drops below this.
    pub tolerance: f64,
    /// Seeds the per-epoch sample order of online training.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 100,
            mode: TrainMode::Online,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning rate must be > 0"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub final_mse: f64,
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
    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| sigmoid(row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b))
            .collect()
    }
}

/// Multilayer perceptron. Every layer, including the output layer, uses the
/// logistic sigmoid, so outputs lie in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    layers: Vec<Dense>,
}

impl Mlp {
    /// Builds a network with weights and biases drawn uniformly from
    /// `[-0.5, 0.5]`.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let weights = (0..inputs * outputs).map(|_| rng.gen_range(-0.5..=0.5)).collect();
                let bias = (0..outputs).map(|_| rng.gen_range(-0.5..=0.5)).collect();
                Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                }
            })
            .collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    /// Builds a network from explicit `(row-major weights, biases)` per layer.
    pub fn from_layers(sizes: &[usize], params: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        check_sizes(sizes)?;
        if params.len() != sizes.len() - 1 {
            return Err(Error::Dimension {
                expected: sizes.len() - 1,
                got: params.len(),
            });
        }
        let mut layers = Vec::with_capacity(params.len());
        for (w, (weights, bias)) in sizes.windows(2).zip(params) {
            let (inputs, outputs) = (w[0], w[1]);
            if weights.len() != inputs * outputs {
                return Err(Error::Dimension {
                    expected: inputs * outputs,
                    got: weights.len(),
                });
            }
            if bias.len() != outputs {
                return Err(Error::Dimension {
                    expected: outputs,
                    got: bias.len(),
                });
            }
            layers.push(Dense {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn forward(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_size() {
            return Err(Error::Dimension {
                expected: self.input_size(),
                got: features.len(),
            });
        }
        Ok(self.activations(features).pop().expect("output layer"))
    }

    /// Activations of every layer, input first.
    fn activations(&self, features: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(features.to_vec());
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("non-empty"));
            acts.push(next);
        }
        acts
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// All parameters, layer by layer: row-major weights, then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut rest = params;
        for layer in &mut self.layers {
            let (w, tail) = rest.split_at(layer.weights.len());
            let (b, tail) = tail.split_at(layer.bias.len());
            layer.weights.copy_from_slice(w);
            layer.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn check_data(&self, data: &[Sample]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Empty("training data"));
        }
        for s in data {
            if s.features.len() != self.input_size() {
                return Err(Error::Dimension {
                    expected: self.input_size(),
                    got: s.features.len(),
                });
            }
            if s.targets.len() != self.output_size() {
                return Err(Error::Dimension {
                    expected: self.output_size(),
                    got: s.targets.len(),
                });
            }
            if s.features.iter().chain(&s.targets).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("training data"));
            }
        }
        Ok(())
    }

    /// Mean squared error over every sample and output unit.
    pub fn loss(&self, data: &[Sample]) -> Result<f64> {
        self.check_data(data)?;
        Ok(self.loss_unchecked(data))
    }

    fn loss_unchecked(&self, data: &[Sample]) -> f64 {
        let mut sum = 0.0;
        for s in data {
            let out = self.activations(&s.features).pop().expect("output");
            sum += out.iter().zip(&s.targets).map(|(y, t)| (y - t) * (y - t)).sum::<f64>();
        }
        sum / (data.len() * self.output_size()) as f64
    }

    /// Gradient of [`Mlp::loss`] with respect to [`Mlp::parameters`].
    pub fn gradient(&self, data: &[Sample]) -> Result<Vec<f64>> {
        self.check_data(data)?;
        Ok(self.gradient_unchecked(data))
    }

    fn gradient_unchecked(&self, data: &[Sample]) -> Vec<f64> {
        let scale = 2.0 / (data.len() * self.output_size()) as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
            .collect();

        for s in data {
            let acts = self.activations(&s.features);
            let out = acts.last().expect("output");
            let mut delta: Vec<f64> = out
                .iter()
                .zip(&s.targets)
                .map(|(y, t)| scale * (y - t) * y * (1.0 - y))
                .collect();

            for (li, layer) in self.layers.iter().enumerate().rev() {
                let input = &acts[li];
                let (gw, gb) = &mut grads[li];
                for (o, d) in delta.iter().enumerate() {
                    gb[o] += d;
                    let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if li > 0 {
                    delta = (0..layer.inputs)
                        .map(|i| {
                            let back: f64 = (0..layer.outputs)
                                .map(|o| layer.weights[o * layer.inputs + i] * delta[o])
                                .sum();
                            back * input[i] * (1.0 - input[i])
                        })
                        .collect();
                }
            }
        }

        grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect()
    }

    fn step(&mut self, grad: &[f64], learning_rate: f64) {
        let mut rest = grad;
        for layer in &mut self.layers {
            for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *p -= learning_rate * rest[0];
                rest = &rest[1..];
            }
        }
    }

    /// Backpropagation training by gradient descent on the mean squared error.
    /// Stops at the epoch cap or once the training error falls below the
    /// tolerance.
    pub fn train(&mut self, data: &[Sample], config: &TrainConfig) -> Result<TrainReport> {
        config.validate()?;
        self.check_data(data)?;
        if data.iter().flat_map(|s| &s.targets).any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::degenerate("training targets must lie in [0, 1]"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut mse = self.loss_unchecked(data);
        let mut epochs_run = 0;

        while epochs_run < config.epochs && mse >= config.tolerance {
            match config.mode {
                TrainMode::Batch => {
                    let grad = self.gradient_unchecked(data);
                    self.step(&grad, config.learning_rate);
                }
                TrainMode::Online => {
                    order.shuffle(&mut rng);
                    for &i in &order {
                        let grad = self.gradient_unchecked(std::slice::from_ref(&data[i]));
                        self.step(&grad, config.learning_rate);
                    }
                }
            }
            epochs_run += 1;
            mse = self.loss_unchecked(data);
            if !mse.is_finite() {
                return Err(Error::NonFinite("training error"));
            }
        }

        Ok(TrainReport {
            epochs_run,
            final_mse: mse,
        })
    }

    /// Text form: a `mlp v1 <sizes...>` header, then one line per layer with
    /// the row-major weights followed by the biases.
    pub fn to_text(&self) -> String {
        let mut out = String::from(TEXT_MAGIC);
        for s in &self.sizes {
            write!(out, " {s}").expect("write to string");
        }
        out.push('\n');
        for layer in &self.layers {
            let line: Vec<String> = layer.weights.iter().chain(&layer.bias).map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: &str| Error::Parse {
            path: "<mlp>".into(),
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let sizes_text = header
            .strip_prefix(TEXT_MAGIC)
            .ok_or_else(|| bad(1, "expected `mlp v1` header"))?;
        let sizes = sizes_text
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(1, &e.to_string()))?;
        check_sizes(&sizes)?;

        let mut params = Vec::with_capacity(sizes.len() - 1);
        for (i, w) in sizes.windows(2).enumerate() {
            let line = lines.next().ok_or_else(|| bad(i + 2, "missing layer line"))?;
            let values = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(i + 2, &e.to_string()))?;
            let nw = w[0] * w[1];
            if values.len() != nw + w[1] {
                return Err(bad(i + 2, "wrong number of values for layer"));
            }
            let (weights, bias) = values.split_at(nw);
            params.push((weights.to_vec(), bias.to_vec()));
        }
        Mlp::from_layers(&sizes, params)
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::config("a network needs at least an input and an output layer"));
    }
    if sizes.contains(&0) {
        return Err(Error::config("layer sizes must be >= 1"));
    }
    Ok(())
}
