use serde::{Deserialize, Serialize};

use super::loss::{compute_loss, LossSpec, RegularizationSpec};
use super::network::Network;
use super::optim::{Optimizer, OptimizerSpec};
use super::pass::{backward_pass, forward_pass, update_moving_stats, ForwardMode, ForwardTrace, GradientSet};
use crate::error::Result;
use crate::tensor::Tensor;

/// Everything observable about one optimizer step. Hooks read it; nothing in
/// it feeds back into training.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub iteration: u64,
    pub data_loss: f64,
    pub penalty: f64,
    pub trace: ForwardTrace,
    pub grads: GradientSet,
    /// Update applied to each parameter, aligned with `grads.refs`.
    pub deltas: Vec<Tensor>,
}

impl StepRecord {
    pub fn total_loss(&self) -> f64 {
        self.data_loss + self.penalty
    }
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub net: Network,
    pub loss: LossSpec,
    pub reg: RegularizationSpec,
    pub optimizer: Optimizer,
    /// Apply the negated gradient (ascent). Exists for fault injection.
    pub flip_gradient_sign: bool,
    iteration: u64,
}

impl Trainer {
    pub fn new(net: Network, loss: LossSpec, reg: RegularizationSpec, opt: OptimizerSpec) -> Self {
        Trainer {
            net,
            loss,
            reg,
            optimizer: Optimizer::new(opt),
            flip_gradient_sign: false,
            iteration: 0,
        }
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn step(&mut self, x: &Tensor, targets: &Tensor) -> Result<StepRecord> {
        let trace = forward_pass(&self.net, x, ForwardMode::Train { step: self.iteration })?;
        let (data_loss, penalty) = compute_loss(&trace, targets, &self.loss, &self.reg, &self.net)?;
        let mut grads = backward_pass(&self.net, &trace, targets, &self.loss, &self.reg)?;
        if self.flip_gradient_sign {
            grads.negate();
        }
        let deltas = self.optimizer.apply_update(&mut self.net, &grads)?;
        update_moving_stats(&mut self.net, &trace);
        let record = StepRecord {
            iteration: self.iteration,
            data_loss,
            penalty,
            trace,
            grads,
            deltas,
        };
        self.iteration += 1;
        Ok(record)
    }

    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(forward_pass(&self.net, x, ForwardMode::Inference)?.prediction().clone())
    }

    /// Inference-mode data loss.
    pub fn evaluate(&self, x: &Tensor, targets: &Tensor) -> Result<f64> {
        let pred = self.predict(x)?;
        self.loss.value(&pred, targets)
    }
}

/// Performance metric tracked alongside the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    MeanAbsoluteError,
    /// Typo'd accuracy that always compares against class 1.
    BuggyAccuracy,
}

impl MetricKind {
    pub fn evaluate(&self, pred: &Tensor, targets: &Tensor) -> f64 {
        match self {
            MetricKind::Accuracy => accuracy(pred, targets),
            MetricKind::MeanAbsoluteError => mean_absolute_error(pred, targets),
            MetricKind::BuggyAccuracy => {
                let p = pred.argmax_rows();
                p.iter().filter(|&&c| c == 1).count() as f64 / p.len().max(1) as f64
            }
        }
    }

    /// Larger is better.
    pub fn higher_is_better(&self) -> bool {
        !matches!(self, MetricKind::MeanAbsoluteError)
    }
}

/// Fraction of rows whose arg-max agrees with the one-hot target.
pub fn accuracy(pred: &Tensor, targets: &Tensor) -> f64 {
    let p = pred.argmax_rows();
    let t = targets.argmax_rows();
    let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
    hits as f64 / p.len().max(1) as f64
}

pub fn mean_absolute_error(pred: &Tensor, targets: &Tensor) -> f64 {
    pred.data().iter().zip(targets.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / pred.len().max(1) as f64
}
