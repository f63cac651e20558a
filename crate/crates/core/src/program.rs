//! A complete, runnable training setup: architecture, initializer, loss,
//! optimizer and the data plumbing that feeds it.

use serde::{Deserialize, Serialize};

use crate::data::{AugmenterSpec, Dataset, FittedScaler, ScalerKind, ShuffleMode};
use crate::error::{Error, Result};
use crate::nn::{
    init_parameters, InitStrategy, Layer, LossSpec, MetricKind, Network, OptimizerSpec, RegularizationSpec, Trainer,
};
use crate::tensor::{RngStream, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBinding {
    /// Applied in order to the features.
    #[serde(default)]
    pub input_scalers: Vec<ScalerKind>,
    /// Applied in order to regression targets.
    #[serde(default)]
    pub output_scalers: Vec<ScalerKind>,
    #[serde(default)]
    pub shuffle: ShuffleMode,
    pub batch_size: usize,
    #[serde(default)]
    pub augmenter: Option<AugmenterSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingProgram {
    pub name: String,
    /// Architecture; parameter values are redrawn by `init`.
    pub net: Network,
    pub init: InitStrategy,
    pub loss: LossSpec,
    #[serde(default)]
    pub reg: RegularizationSpec,
    pub optimizer: OptimizerSpec,
    pub metric: MetricKind,
    pub data: DataBinding,
    #[serde(default)]
    pub flip_gradient_sign: bool,
    #[serde(default)]
    pub seed: u64,
}

/// A dataset after the program's scalers, plus what is needed to map
/// predictions back to raw target units.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub output_scalers: Vec<FittedScaler>,
}

impl PreparedData {
    /// Undo the output scalers on a prediction or target matrix.
    pub fn raw_targets(&self, y: &Tensor) -> Tensor {
        self.output_scalers.iter().rev().fold(y.clone(), |acc, s| s.inverse(&acc))
    }
}

impl TrainingProgram {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.optimizer.validate()?;
        if self.data.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    /// Fits the scalers on `raw` and applies them.
    pub fn prepare(&self, raw: &Dataset) -> Result<PreparedData> {
        Ok(self.prepare_pair(raw, raw)?.0)
    }

    /// Fits the scalers on `train` and applies them to both splits.
    pub fn prepare_pair(&self, train: &Dataset, test: &Dataset) -> Result<(PreparedData, Dataset)> {
        if train.n_features() != self.net.input_dim || test.n_features() != self.net.input_dim {
            return Err(Error::ShapeMismatch {
                op: "program input",
                left: vec![train.n_features(), test.n_features()],
                right: vec![self.net.input_dim],
            });
        }
        let mut xt = train.x.clone();
        let mut xs = test.x.clone();
        for &kind in &self.data.input_scalers {
            let s = FittedScaler::fit(kind, &xt);
            xt = s.transform(&xt);
            xs = s.transform(&xs);
        }
        let mut yt = train.y.clone();
        let mut ys = test.y.clone();
        let mut output_scalers = Vec::new();
        if !train.problem.is_classification() {
            for &kind in &self.data.output_scalers {
                let s = FittedScaler::fit(kind, &yt);
                yt = s.transform(&yt);
                ys = s.transform(&ys);
                output_scalers.push(s);
            }
        }
        Ok((
            PreparedData {
                dataset: Dataset::new(xt, yt, train.problem)?,
                output_scalers,
            },
            Dataset::new(xs, ys, test.problem)?,
        ))
    }

    /// The architecture with freshly drawn parameters and reseeded dropout
    /// masks.
    pub fn initialized_network(&self, seed: u64) -> Network {
        let root = RngStream::new(seed);
        let mut net = self.net.clone();
        init_parameters(&mut net, self.init, &mut root.split(0));
        for (i, layer) in net.layers.iter_mut().enumerate() {
            if let Layer::Dropout(d) = layer {
                d.mask_seed = root.split(1).split(i as u64).next_u64();
            }
        }
        net
    }

    pub fn fresh_trainer(&self, seed: u64) -> Trainer {
        let mut t = Trainer::new(self.initialized_network(seed), self.loss, self.reg, self.optimizer);
        t.flip_gradient_sign = self.flip_gradient_sign;
        t
    }

    pub fn has_scaled_outputs(&self) -> bool {
        !self.data.output_scalers.is_empty()
    }
}
