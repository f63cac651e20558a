use serde::{Deserialize, Serialize};

use super::network::Network;
use super::pass::GradientSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerSpec {
    pub fn sgd(lr: f64) -> Self {
        OptimizerSpec::Sgd { lr }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerSpec::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match self {
            OptimizerSpec::Sgd { lr } | OptimizerSpec::Adam { lr, .. } => *lr,
        }
    }

    pub fn with_lr(self, new_lr: f64) -> Self {
        match self {
            OptimizerSpec::Sgd { .. } => OptimizerSpec::Sgd { lr: new_lr },
            OptimizerSpec::Adam { beta1, beta2, epsilon, .. } => OptimizerSpec::Adam {
                lr: new_lr,
                beta1,
                beta2,
                epsilon,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerSpec::Sgd { lr } => lr > 0.0,
            OptimizerSpec::Adam { lr, beta1, beta2, epsilon } => {
                lr > 0.0 && epsilon > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid optimizer {self:?}")))
        }
    }
}

/// Optimizer plus its per-parameter moment state.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub spec: OptimizerSpec,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(spec: OptimizerSpec) -> Self {
        Optimizer {
            spec,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update and returns the delta added to each parameter, in
    /// `grads.refs` order.
    pub fn apply_update(&mut self, net: &mut Network, grads: &GradientSet) -> Result<Vec<Tensor>> {
        self.step += 1;
        let mut deltas = Vec::with_capacity(grads.refs.len());
        match self.spec {
            OptimizerSpec::Sgd { lr } => {
                for (idx, &r) in grads.refs.iter().enumerate() {
                    let delta = grads.total(idx).scale(-lr);
                    net.param_mut(r).axpy(1.0, &delta)?;
                    deltas.push(delta);
                }
            }
            OptimizerSpec::Adam { lr, beta1, beta2, epsilon } => {
                if self.m.is_empty() {
                    self.m = grads.data.iter().map(Tensor::zeros_like).collect();
                    self.v = grads.data.iter().map(Tensor::zeros_like).collect();
                }
                if self.m.len() != grads.refs.len() {
                    return Err(Error::InvalidParameter("optimizer state does not match parameters".into()));
                }
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (idx, &r) in grads.refs.iter().enumerate() {
                    let g = grads.total(idx);
                    let m = &mut self.m[idx];
                    let v = &mut self.v[idx];
                    if m.shape() != g.shape() {
                        return Err(Error::ShapeMismatch {
                            op: "adam state",
                            left: m.shape().to_vec(),
                            right: g.shape().to_vec(),
                        });
                    }
                    let mut delta = Tensor::zeros_like(&g);
                    for (((mi, vi), gi), di) in m
                        .data_mut()
                        .iter_mut()
                        .zip(v.data_mut().iter_mut())
                        .zip(g.data())
                        .zip(delta.data_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        *di = -lr * (*mi / c1) / ((*vi / c2).sqrt() + epsilon);
                    }
                    net.param_mut(r).axpy(1.0, &delta)?;
                    deltas.push(delta);
                }
            }
        }
        Ok(deltas)
    }
}
