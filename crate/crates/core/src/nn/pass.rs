//! Forward and backward passes over a [`Network`].

use serde::{Deserialize, Serialize};

use super::loss::{LossSpec, RegularizationSpec};
use super::network::{Layer, Network, ParamKind, ParamRef};
use crate::error::{Error, Result};
use crate::tensor::{Distribution, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMode {
    /// Dropout masks drawn from the layer stream split at `step`; batch
    /// statistics for normalization.
    Train { step: u64 },
    Inference,
}

impl ForwardMode {
    pub fn is_train(&self) -> bool {
        matches!(self, ForwardMode::Train { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerCache {
    None,
    DropoutMask(Tensor),
    BatchNorm {
        x_hat: Tensor,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
    },
}

/// Everything the backward pass and the debugger's hooks need from one forward call.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub mode: ForwardMode,
    pub input: Tensor,
    /// Output of every layer, in order.
    pub outputs: Vec<Tensor>,
    pub caches: Vec<LayerCache>,
}

impl ForwardTrace {
    pub fn prediction(&self) -> &Tensor {
        self.outputs.last().unwrap_or(&self.input)
    }

    pub fn layer_input(&self, layer: usize) -> &Tensor {
        if layer == 0 {
            &self.input
        } else {
            &self.outputs[layer - 1]
        }
    }
}

pub fn forward_pass(net: &Network, x: &Tensor, mode: ForwardMode) -> Result<ForwardTrace> {
    if x.cols() != net.input_dim {
        return Err(Error::ShapeMismatch {
            op: "forward input",
            left: x.shape().to_vec(),
            right: vec![net.input_dim],
        });
    }
    let mut outputs = Vec::with_capacity(net.layers.len());
    let mut caches = Vec::with_capacity(net.layers.len());
    let mut current = x.clone();
    for (i, layer) in net.layers.iter().enumerate() {
        let (out, cache) = match layer {
            Layer::Dense(d) => {
                let z = current.matmul(&d.weights)?;
                let z = match &d.biases {
                    Some(b) => z.add(b)?,
                    None => z,
                };
                (z, LayerCache::None)
            }
            Layer::Activation { kind } => (kind.forward(&current), LayerCache::None),
            Layer::Dropout(d) => match mode {
                ForwardMode::Train { step } => {
                    if d.pkeep >= 1.0 {
                        (current.clone(), LayerCache::None)
                    } else {
                        let mut rng = d.mask_stream(step);
                        let mask = rng.sample(Distribution::Bernoulli { p: d.pkeep }, current.shape())?;
                        (current.hadamard(&mask)?, LayerCache::DropoutMask(mask))
                    }
                }
                ForwardMode::Inference => {
                    if d.pkeep >= 1.0 {
                        (current.clone(), LayerCache::None)
                    } else {
                        (current.scale(d.pkeep), LayerCache::None)
                    }
                }
            },
            Layer::BatchNorm(bn) => {
                let (m, n) = (current.rows(), current.cols());
                match mode {
                    ForwardMode::Train { .. } => {
                        if m < 2 {
                            return Err(Error::InvalidParameter(format!(
                                "layer {i}: batch normalization in training mode needs at least 2 rows, got {m}"
                            )));
                        }
                        let mut mean = vec![0.0; n];
                        for r in 0..m {
                            for (acc, v) in mean.iter_mut().zip(current.row(r)) {
                                *acc += v;
                            }
                        }
                        mean.iter_mut().for_each(|v| *v /= m as f64);
                        let mut var = vec![0.0; n];
                        for r in 0..m {
                            for ((acc, v), mu) in var.iter_mut().zip(current.row(r)).zip(&mean) {
                                *acc += (v - mu) * (v - mu);
                            }
                        }
                        var.iter_mut().for_each(|v| *v /= m as f64);
                        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.epsilon).sqrt()).collect();
                        let mut x_hat = current.clone();
                        let mut out = current.clone();
                        for r in 0..m {
                            let xr = x_hat.row_mut(r);
                            for c in 0..n {
                                xr[c] = (xr[c] - mean[c]) * inv_std[c];
                            }
                            let orow = out.row_mut(r);
                            for c in 0..n {
                                orow[c] = bn.gamma.data()[c] * xr[c] + bn.beta.data()[c];
                            }
                        }
                        (
                            out,
                            LayerCache::BatchNorm {
                                x_hat,
                                inv_std,
                                batch_mean: mean,
                                batch_var: var,
                            },
                        )
                    }
                    ForwardMode::Inference => {
                        let mut out = current.clone();
                        for r in 0..m {
                            let orow = out.row_mut(r);
                            for c in 0..n {
                                let inv = 1.0 / (bn.moving_var.data()[c] + bn.epsilon).sqrt();
                                orow[c] = bn.gamma.data()[c] * (orow[c] - bn.moving_mean.data()[c]) * inv
                                    + bn.beta.data()[c];
                            }
                        }
                        (out, LayerCache::None)
                    }
                }
            }
        };
        current = out.clone();
        outputs.push(out);
        caches.push(cache);
    }
    Ok(ForwardTrace {
        mode,
        input: x.clone(),
        outputs,
        caches,
    })
}

/// Refreshes batch-norm moving statistics from a training-mode trace.
pub fn update_moving_stats(net: &mut Network, trace: &ForwardTrace) {
    for (layer, cache) in net.layers.iter_mut().zip(&trace.caches) {
        if let (Layer::BatchNorm(bn), LayerCache::BatchNorm { batch_mean, batch_var, .. }) = (layer, cache) {
            if !bn.update_moving {
                continue;
            }
            let mom = bn.momentum;
            for (mm, bm) in bn.moving_mean.data_mut().iter_mut().zip(batch_mean) {
                *mm = mom * *mm + (1.0 - mom) * bm;
            }
            for (mv, bv) in bn.moving_var.data_mut().iter_mut().zip(batch_var) {
                *mv = mom * *mv + (1.0 - mom) * bv;
            }
        }
    }
}

/// Result of propagating an output gradient back through the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Backprop {
    pub params: Vec<(ParamRef, Tensor)>,
    /// ∂/∂z for every dense layer output (the error term of that layer).
    pub deltas: Vec<(usize, Tensor)>,
    /// Gradient with respect to the input batch.
    pub input: Tensor,
}

/// Vector-Jacobian product of the whole network for an arbitrary upstream
/// gradient `d_output` on the prediction.
pub fn backpropagate(net: &Network, trace: &ForwardTrace, d_output: &Tensor) -> Result<Backprop> {
    if d_output.shape() != trace.prediction().shape() {
        return Err(Error::ShapeMismatch {
            op: "backpropagate",
            left: d_output.shape().to_vec(),
            right: trace.prediction().shape().to_vec(),
        });
    }
    let mut grad = d_output.clone();
    let mut params = Vec::new();
    let mut deltas = Vec::new();
    for i in (0..net.layers.len()).rev() {
        let x = trace.layer_input(i);
        match &net.layers[i] {
            Layer::Dense(d) => {
                let dw = x.t_matmul(&grad)?;
                if d.biases.is_some() {
                    params.push((ParamRef { layer: i, kind: ParamKind::Bias }, grad.sum_rows()));
                }
                params.push((ParamRef { layer: i, kind: ParamKind::Weight }, dw));
                let next = grad.matmul_t(&d.weights)?;
                deltas.push((i, grad));
                grad = next;
            }
            Layer::Activation { kind } => {
                grad = kind.backward(x, &trace.outputs[i], &grad);
            }
            Layer::Dropout(d) => match &trace.caches[i] {
                LayerCache::DropoutMask(mask) => grad = grad.hadamard(mask)?,
                _ => {
                    if !trace.mode.is_train() && d.pkeep < 1.0 {
                        grad = grad.scale(d.pkeep);
                    }
                }
            },
            Layer::BatchNorm(bn) => match &trace.caches[i] {
                LayerCache::BatchNorm { x_hat, inv_std, .. } => {
                    let (m, n) = (grad.rows(), grad.cols());
                    let mut dgamma = vec![0.0; n];
                    let mut dbeta = vec![0.0; n];
                    let mut sum_dxh = vec![0.0; n];
                    let mut sum_dxh_xh = vec![0.0; n];
                    for r in 0..m {
                        let g = grad.row(r);
                        let xh = x_hat.row(r);
                        for c in 0..n {
                            dgamma[c] += g[c] * xh[c];
                            dbeta[c] += g[c];
                            let dxh = g[c] * bn.gamma.data()[c];
                            sum_dxh[c] += dxh;
                            sum_dxh_xh[c] += dxh * xh[c];
                        }
                    }
                    let mf = m as f64;
                    let mut dx = grad.clone();
                    for r in 0..m {
                        let xh: Vec<f64> = x_hat.row(r).to_vec();
                        let row = dx.row_mut(r);
                        for c in 0..n {
                            let dxh = row[c] * bn.gamma.data()[c];
                            row[c] = inv_std[c] / mf * (mf * dxh - sum_dxh[c] - xh[c] * sum_dxh_xh[c]);
                        }
                    }
                    params.push((ParamRef { layer: i, kind: ParamKind::Beta }, Tensor::vector(dbeta)));
                    params.push((ParamRef { layer: i, kind: ParamKind::Gamma }, Tensor::vector(dgamma)));
                    grad = dx;
                }
                _ => {
                    let n = grad.cols();
                    let mut dgamma = vec![0.0; n];
                    let mut dbeta = vec![0.0; n];
                    let inv: Vec<f64> = (0..n)
                        .map(|c| 1.0 / (bn.moving_var.data()[c] + bn.epsilon).sqrt())
                        .collect();
                    let mut dx = grad.clone();
                    for r in 0..grad.rows() {
                        let xr = x.row(r);
                        let g = grad.row(r);
                        for c in 0..n {
                            let xh = (xr[c] - bn.moving_mean.data()[c]) * inv[c];
                            dgamma[c] += g[c] * xh;
                            dbeta[c] += g[c];
                        }
                        let row = dx.row_mut(r);
                        for c in 0..n {
                            row[c] *= bn.gamma.data()[c] * inv[c];
                        }
                    }
                    params.push((ParamRef { layer: i, kind: ParamKind::Beta }, Tensor::vector(dbeta)));
                    params.push((ParamRef { layer: i, kind: ParamKind::Gamma }, Tensor::vector(dgamma)));
                    grad = dx;
                }
            },
        }
    }
    params.reverse();
    deltas.reverse();
    Ok(Backprop {
        params,
        deltas,
        input: grad,
    })
}

/// Gradients of the regularized loss, with the data term and the penalty term
/// kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub refs: Vec<ParamRef>,
    pub data: Vec<Tensor>,
    /// Penalty gradient, present for dense weights when a penalty is active.
    pub penalty: Vec<Option<Tensor>>,
    pub deltas: Vec<(usize, Tensor)>,
    pub input: Tensor,
}

impl GradientSet {
    pub fn total(&self, idx: usize) -> Tensor {
        match &self.penalty[idx] {
            Some(p) => self.data[idx].add(p).expect("same shape"),
            None => self.data[idx].clone(),
        }
    }

    pub fn index_of(&self, r: ParamRef) -> Option<usize> {
        self.refs.iter().position(|&x| x == r)
    }

    pub fn negate(&mut self) {
        for g in &mut self.data {
            *g = g.scale(-1.0);
        }
        for g in self.penalty.iter_mut().flatten() {
            *g = g.scale(-1.0);
        }
    }
}

pub fn backward_pass(
    net: &Network,
    trace: &ForwardTrace,
    targets: &Tensor,
    loss: &LossSpec,
    reg: &RegularizationSpec,
) -> Result<GradientSet> {
    let d_out = loss.gradient(trace.prediction(), targets)?;
    let bp = backpropagate(net, trace, &d_out)?;
    let batch = trace.input.rows();
    let refs: Vec<ParamRef> = bp.params.iter().map(|(r, _)| *r).collect();
    let penalty = refs
        .iter()
        .map(|&r| {
            if r.kind == ParamKind::Weight && reg.is_active() {
                Some(reg.gradient(net.param(r), batch))
            } else {
                None
            }
        })
        .collect();
    Ok(GradientSet {
        refs,
        data: bp.params.into_iter().map(|(_, g)| g).collect(),
        penalty,
        deltas: bp.deltas,
        input: bp.input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::ActivationKind;
    use crate::nn::network::{Dense, NetworkBuilder, ProblemKind};

    #[test]
    fn identity_dense_layer() {
        let net = Network::new(
            1,
            ProblemKind::Regression { n_outputs: 1 },
            vec![
                Layer::Dense(Dense {
                    weights: Tensor::from_rows(&[vec![1.0]]).unwrap(),
                    biases: Some(Tensor::vector(vec![0.0])),
                }),
                Layer::Activation { kind: ActivationKind::Identity },
            ],
        )
        .unwrap();
        let tr = forward_pass(&net, &Tensor::from_rows(&[vec![2.0]]).unwrap(), ForwardMode::Inference).unwrap();
        assert_eq!(tr.prediction().data(), &[2.0]);
    }

    #[test]
    fn two_layer_relu_hand_computed() {
        // x = [1, -1]; W1 = [[1, 2], [3, -1]], b1 = [0, 0.5]
        // z1 = [1 - 3, 2 + 1 + 0.5] = [-2, 3.5]; a1 = [0, 3.5]
        // W2 = [[2], [0.5]], b2 = [1]; y = 0 + 1.75 + 1 = 2.75
        let net = Network::new(
            2,
            ProblemKind::Regression { n_outputs: 1 },
            vec![
                Layer::Dense(Dense {
                    weights: Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap(),
                    biases: Some(Tensor::vector(vec![0.0, 0.5])),
                }),
                Layer::Activation { kind: ActivationKind::Relu },
                Layer::Dense(Dense {
                    weights: Tensor::from_rows(&[vec![2.0], vec![0.5]]).unwrap(),
                    biases: Some(Tensor::vector(vec![1.0])),
                }),
            ],
        )
        .unwrap();
        let tr = forward_pass(&net, &Tensor::from_rows(&[vec![1.0, -1.0]]).unwrap(), ForwardMode::Inference).unwrap();
        assert_eq!(tr.outputs[0].data(), &[-2.0, 3.5]);
        assert_eq!(tr.outputs[1].data(), &[0.0, 3.5]);
        assert_eq!(tr.prediction().data(), &[2.75]);
    }

    #[test]
    fn batchnorm_single_row_training_is_an_error() {
        let net = NetworkBuilder::new(2)
            .dense(2)
            .batch_norm()
            .build(ProblemKind::Regression { n_outputs: 2 })
            .unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(forward_pass(&net, &x, ForwardMode::Train { step: 0 }).is_err());
        assert!(forward_pass(&net, &x, ForwardMode::Inference).is_ok());
    }

    #[test]
    fn full_keep_dropout_matches_inference_bitwise() {
        let mut net = NetworkBuilder::new(3)
            .dense(4)
            .activation(ActivationKind::Relu)
            .dropout(1.0)
            .dense(2)
            .build(ProblemKind::Regression { n_outputs: 2 })
            .unwrap();
        let mut rng = crate::tensor::RngStream::new(5);
        crate::nn::init::init_parameters(&mut net, crate::nn::init::InitStrategy::Recommended, &mut rng);
        let x = rng.sample(Distribution::Normal { mean: 0.0, std: 1.0 }, &[5, 3]).unwrap();
        let a = forward_pass(&net, &x, ForwardMode::Train { step: 3 }).unwrap();
        let b = forward_pass(&net, &x, ForwardMode::Inference).unwrap();
        assert_eq!(a.prediction(), b.prediction());
    }
}
