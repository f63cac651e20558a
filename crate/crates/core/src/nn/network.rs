use serde::{Deserialize, Serialize};

use super::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    Classification { n_classes: usize },
    Regression { n_outputs: usize },
}

impl ProblemKind {
    pub fn output_dim(&self) -> usize {
        match *self {
            ProblemKind::Classification { n_classes } => n_classes,
            ProblemKind::Regression { n_outputs } => n_outputs,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, ProblemKind::Classification { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `(fan_in, fan_out)`.
    pub weights: Tensor,
    /// `None` models a layer built without a bias term.
    pub biases: Option<Tensor>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Tensor::zeros(&[fan_in, fan_out]),
            biases: Some(Tensor::zeros(&[fan_out])),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }
}

/// Classic (non-inverted) dropout: training multiplies by a Bernoulli(pkeep)
/// mask, inference multiplies by `pkeep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropout {
    pub pkeep: f64,
    /// Root of the mask stream; each training step draws from `split(step)`.
    pub mask_seed: u64,
}

impl Dropout {
    pub fn mask_stream(&self, step: u64) -> RngStream {
        RngStream::new(self.mask_seed).split(step)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub moving_mean: Tensor,
    pub moving_var: Tensor,
    pub momentum: f64,
    pub epsilon: f64,
    /// When false the moving statistics are never refreshed during training.
    pub update_moving: bool,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        BatchNorm {
            gamma: Tensor::ones(&[width]),
            beta: Tensor::zeros(&[width]),
            moving_mean: Tensor::zeros(&[width]),
            moving_var: Tensor::ones(&[width]),
            momentum: 0.99,
            epsilon: 1e-5,
            update_moving: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layer", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Activation { kind: ActivationKind },
    Dropout(Dropout),
    BatchNorm(BatchNorm),
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Activation { kind } => kind.name(),
            Layer::Dropout(_) => "dropout",
            Layer::BatchNorm(_) => "batchnorm",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

/// Addresses one trainable tensor inside a [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamRef {
    pub layer: usize,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_dim: usize,
    pub problem: ProblemKind,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_dim: usize, problem: ProblemKind, layers: Vec<Layer>) -> Result<Self> {
        let net = Network {
            input_dim,
            problem,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks that adjacent layer widths chain and per-layer invariants hold.
    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_dim;
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    if d.fan_in() != width {
                        return Err(Error::ShapeMismatch {
                            op: "network chain",
                            left: vec![width],
                            right: d.weights.shape().to_vec(),
                        });
                    }
                    if let Some(b) = &d.biases {
                        if b.len() != d.fan_out() {
                            return Err(Error::ShapeMismatch {
                                op: "dense bias",
                                left: d.weights.shape().to_vec(),
                                right: b.shape().to_vec(),
                            });
                        }
                    }
                    width = d.fan_out();
                }
                Layer::Dropout(d) => {
                    if !(d.pkeep > 0.0 && d.pkeep <= 1.0) {
                        return Err(Error::InvalidParameter(format!("layer {i}: pkeep {} outside (0, 1]", d.pkeep)));
                    }
                }
                Layer::BatchNorm(bn) => {
                    if bn.gamma.len() != width || bn.moving_var.len() != width {
                        return Err(Error::ShapeMismatch {
                            op: "batchnorm width",
                            left: vec![width],
                            right: bn.gamma.shape().to_vec(),
                        });
                    }
                    if bn.moving_var.data().iter().any(|&v| v < 0.0) {
                        return Err(Error::InvalidParameter(format!("layer {i}: negative moving variance")));
                    }
                }
                Layer::Activation { .. } => {}
            }
        }
        if width != self.problem.output_dim() {
            return Err(Error::ShapeMismatch {
                op: "network output",
                left: vec![width],
                right: vec![self.problem.output_dim()],
            });
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.problem.output_dim()
    }

    /// The activation applied after the last dense layer, if any.
    pub fn output_activation(&self) -> Option<ActivationKind> {
        let last_dense = self.layers.iter().rposition(|l| matches!(l, Layer::Dense(_)))?;
        self.layers[last_dense + 1..].iter().find_map(|l| match l {
            Layer::Activation { kind } => Some(*kind),
            _ => None,
        })
    }

    /// Activation layers before the last dense layer.
    pub fn hidden_activation_layers(&self) -> Vec<usize> {
        let last_dense = self
            .layers
            .iter()
            .rposition(|l| matches!(l, Layer::Dense(_)))
            .unwrap_or(0);
        (0..last_dense)
            .filter(|&i| matches!(self.layers[i], Layer::Activation { .. }))
            .collect()
    }

    pub fn dense_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&i| matches!(self.layers[i], Layer::Dense(_)))
            .collect()
    }

    /// The first activation found after dense layer `index` (skipping
    /// normalization and dropout), which drives the recommended init variance.
    pub fn activation_after(&self, index: usize) -> ActivationKind {
        for layer in &self.layers[index + 1..] {
            match layer {
                Layer::Activation { kind } => return *kind,
                Layer::Dense(_) => break,
                _ => {}
            }
        }
        ActivationKind::Identity
    }

    pub fn has_dropout(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Dropout(_)))
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::BatchNorm(_)))
    }

    pub fn param_refs(&self) -> Vec<ParamRef> {
        let mut refs = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    refs.push(ParamRef { layer: i, kind: ParamKind::Weight });
                    if d.biases.is_some() {
                        refs.push(ParamRef { layer: i, kind: ParamKind::Bias });
                    }
                }
                Layer::BatchNorm(_) => {
                    refs.push(ParamRef { layer: i, kind: ParamKind::Gamma });
                    refs.push(ParamRef { layer: i, kind: ParamKind::Beta });
                }
                _ => {}
            }
        }
        refs
    }

    pub fn param(&self, r: ParamRef) -> &Tensor {
        match (&self.layers[r.layer], r.kind) {
            (Layer::Dense(d), ParamKind::Weight) => &d.weights,
            (Layer::Dense(d), ParamKind::Bias) => d.biases.as_ref().expect("bias present"),
            (Layer::BatchNorm(bn), ParamKind::Gamma) => &bn.gamma,
            (Layer::BatchNorm(bn), ParamKind::Beta) => &bn.beta,
            _ => panic!("invalid parameter reference {r:?}"),
        }
    }

    pub fn param_mut(&mut self, r: ParamRef) -> &mut Tensor {
        match (&mut self.layers[r.layer], r.kind) {
            (Layer::Dense(d), ParamKind::Weight) => &mut d.weights,
            (Layer::Dense(d), ParamKind::Bias) => d.biases.as_mut().expect("bias present"),
            (Layer::BatchNorm(bn), ParamKind::Gamma) => &mut bn.gamma,
            (Layer::BatchNorm(bn), ParamKind::Beta) => &mut bn.beta,
            _ => panic!("invalid parameter reference {r:?}"),
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_refs().iter().map(|&r| self.param(r).len()).sum()
    }

    /// All trainable values concatenated in `param_refs` order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for r in self.param_refs() {
            out.extend_from_slice(self.param(r).data());
        }
        out
    }

    pub fn set_dropout_pkeep(&mut self, pkeep: f64) {
        for layer in &mut self.layers {
            if let Layer::Dropout(d) = layer {
                d.pkeep = pkeep;
            }
        }
    }
}

/// Fluent builder for stacks of layers.
pub struct NetworkBuilder {
    input_dim: usize,
    width: usize,
    layers: Vec<Layer>,
    dropout_seed: u64,
}

impl NetworkBuilder {
    pub fn new(input_dim: usize) -> Self {
        NetworkBuilder {
            input_dim,
            width: input_dim,
            layers: Vec::new(),
            dropout_seed: 0x5eed,
        }
    }

    pub fn dense(mut self, units: usize) -> Self {
        self.layers.push(Layer::Dense(Dense::zeros(self.width, units)));
        self.width = units;
        self
    }

    /// Dense layer without a bias term, for use in front of batch norm.
    pub fn dense_no_bias(mut self, units: usize) -> Self {
        let mut d = Dense::zeros(self.width, units);
        d.biases = None;
        self.layers.push(Layer::Dense(d));
        self.width = units;
        self
    }

    pub fn activation(mut self, kind: ActivationKind) -> Self {
        self.layers.push(Layer::Activation { kind });
        self
    }

    pub fn dropout(mut self, pkeep: f64) -> Self {
        self.dropout_seed = self.dropout_seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.layers.push(Layer::Dropout(Dropout {
            pkeep,
            mask_seed: self.dropout_seed,
        }));
        self
    }

    pub fn batch_norm(mut self) -> Self {
        self.layers.push(Layer::BatchNorm(BatchNorm::new(self.width)));
        self
    }

    pub fn build(self, problem: ProblemKind) -> Result<Network> {
        Network::new(self.input_dim, problem, self.layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_mismatch_rejected() {
        let layers = vec![
            Layer::Dense(Dense::zeros(3, 4)),
            Layer::Dense(Dense::zeros(5, 2)),
        ];
        assert!(Network::new(3, ProblemKind::Regression { n_outputs: 2 }, layers).is_err());
    }

    #[test]
    fn param_refs_cover_dense_and_batchnorm() {
        let net = NetworkBuilder::new(4)
            .dense(8)
            .batch_norm()
            .activation(ActivationKind::Relu)
            .dense(2)
            .activation(ActivationKind::Softmax)
            .build(ProblemKind::Classification { n_classes: 2 })
            .unwrap();
        assert_eq!(net.param_refs().len(), 6);
        assert_eq!(net.param_count(), 4 * 8 + 8 + 8 + 8 + 8 * 2 + 2);
        assert_eq!(net.output_activation(), Some(ActivationKind::Softmax));
        assert_eq!(net.activation_after(0), ActivationKind::Relu);
        assert_eq!(net.hidden_activation_layers(), vec![2]);
    }

    #[test]
    fn invalid_pkeep_rejected() {
        let r = NetworkBuilder::new(2)
            .dense(2)
            .dropout(0.0)
            .build(ProblemKind::Regression { n_outputs: 2 });
        assert!(r.is_err());
    }
}
