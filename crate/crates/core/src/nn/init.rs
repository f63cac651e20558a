use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use super::network::{Layer, Network};
use crate::tensor::{Distribution, RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum InitStrategy {
    LecunNormal,
    LecunUniform,
    GlorotNormal,
    GlorotUniform,
    HeNormal,
    HeUniform,
    Constant { value: f64 },
    DummyNormal { std: f64 },
    /// Per layer, the rule matching the activation that follows it.
    Recommended,
}

/// Gain applied to the recommended variance of a layer feeding a softmax,
/// so an untrained classifier starts near uniform probabilities.
pub const SOFTMAX_OUTPUT_GAIN: f64 = 0.1;

/// Target weight variance for a dense layer followed by `act`, or `None` when
/// no variance rule applies (softmax outputs).
pub fn recommended_variance(act: ActivationKind, fan_in: usize, fan_out: usize) -> Option<f64> {
    let (fi, fo) = (fan_in as f64, fan_out as f64);
    match act {
        ActivationKind::Relu | ActivationKind::LeakyRelu { .. } => Some(2.0 / fi),
        ActivationKind::Tanh => Some(2.0 / (fi + fo)),
        ActivationKind::Sigmoid | ActivationKind::Identity => Some(1.0 / fi),
        ActivationKind::Softmax | ActivationKind::SoftmaxBatchAxis => None,
    }
}

fn weight_tensor(strategy: InitStrategy, act: ActivationKind, fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Tensor {
    let (fi, fo) = (fan_in as f64, fan_out as f64);
    let shape = [fan_in, fan_out];
    let normal = |rng: &mut RngStream, var: f64| {
        rng.sample(Distribution::Normal { mean: 0.0, std: var.sqrt() }, &shape)
            .expect("valid normal")
    };
    let uniform = |rng: &mut RngStream, limit: f64| {
        rng.sample(Distribution::Uniform { lo: -limit, hi: limit }, &shape)
            .expect("valid uniform")
    };
    match strategy {
        InitStrategy::LecunNormal => normal(rng, 1.0 / fi),
        InitStrategy::LecunUniform => uniform(rng, (3.0 / fi).sqrt()),
        InitStrategy::GlorotNormal => normal(rng, 2.0 / (fi + fo)),
        InitStrategy::GlorotUniform => uniform(rng, (6.0 / (fi + fo)).sqrt()),
        InitStrategy::HeNormal => normal(rng, 2.0 / fi),
        InitStrategy::HeUniform => uniform(rng, (6.0 / fi).sqrt()),
        InitStrategy::Constant { value } => Tensor::filled(&shape, value),
        InitStrategy::DummyNormal { std } => normal(rng, std * std),
        InitStrategy::Recommended => match recommended_variance(act, fan_in, fan_out) {
            Some(v) => normal(rng, v),
            None => normal(rng, SOFTMAX_OUTPUT_GAIN * SOFTMAX_OUTPUT_GAIN / fi),
        },
    }
}

/// Draws fresh weights for every dense layer, zero biases, and identity
/// batch-norm scales.
pub fn init_parameters(net: &mut Network, strategy: InitStrategy, rng: &mut RngStream) {
    for i in 0..net.layers.len() {
        let act = net.activation_after(i);
        match &mut net.layers[i] {
            Layer::Dense(d) => {
                let (fi, fo) = (d.fan_in(), d.fan_out());
                d.weights = weight_tensor(strategy, act, fi, fo, rng);
                if let Some(b) = &mut d.biases {
                    *b = Tensor::zeros(&[fo]);
                }
            }
            Layer::BatchNorm(bn) => {
                let w = bn.gamma.len();
                bn.gamma = Tensor::ones(&[w]);
                bn.beta = Tensor::zeros(&[w]);
                bn.moving_mean = Tensor::zeros(&[w]);
                bn.moving_var = Tensor::ones(&[w]);
            }
            _ => {}
        }
    }
}
