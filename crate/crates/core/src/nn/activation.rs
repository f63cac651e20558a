use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Elementwise (or row-wise, for softmax) non-linearities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationKind {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    Tanh,
    /// Normalizes each row (one instance) into a probability vector.
    Softmax,
    /// Softmax normalized down the batch axis instead of across the units of
    /// one instance. Only exists so the fault lab can inject it.
    SoftmaxBatchAxis,
}

impl ActivationKind {
    /// Declared output range.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            ActivationKind::Identity | ActivationKind::LeakyRelu { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            ActivationKind::Relu => (0.0, f64::INFINITY),
            ActivationKind::Sigmoid | ActivationKind::Softmax | ActivationKind::SoftmaxBatchAxis => (0.0, 1.0),
            ActivationKind::Tanh => (-1.0, 1.0),
        }
    }

    /// Bounded on both sides and elementwise, so a saturation measure applies.
    pub fn is_saturating(&self) -> bool {
        matches!(self, ActivationKind::Sigmoid | ActivationKind::Tanh)
    }

    pub fn is_relu_like(&self) -> bool {
        matches!(self, ActivationKind::Relu | ActivationKind::LeakyRelu { .. })
    }

    pub fn is_softmax(&self) -> bool {
        matches!(self, ActivationKind::Softmax | ActivationKind::SoftmaxBatchAxis)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Relu => "relu",
            ActivationKind::LeakyRelu { .. } => "leaky_relu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Softmax => "softmax",
            ActivationKind::SoftmaxBatchAxis => "softmax_batch_axis",
        }
    }

    pub fn forward(&self, z: &Tensor) -> Tensor {
        match self {
            ActivationKind::Identity => z.clone(),
            ActivationKind::Relu => z.map(|v| if v > 0.0 { v } else { 0.0 }),
            ActivationKind::LeakyRelu { slope } => {
                let s = *slope;
                z.map(move |v| if v > 0.0 { v } else { s * v })
            }
            ActivationKind::Sigmoid => z.map(sigmoid),
            ActivationKind::Tanh => z.map(f64::tanh),
            ActivationKind::Softmax => softmax_rows(z),
            ActivationKind::SoftmaxBatchAxis => softmax_rows(&z.transpose()).transpose(),
        }
    }

    /// Vector-Jacobian product: maps ∂L/∂a to ∂L/∂z given the layer input `z`
    /// and output `a`.
    pub fn backward(&self, z: &Tensor, a: &Tensor, da: &Tensor) -> Tensor {
        match self {
            ActivationKind::Identity => da.clone(),
            ActivationKind::Relu => z
                .zip_map(da, |zv, g| if zv > 0.0 { g } else { 0.0 })
                .expect("same shape"),
            ActivationKind::LeakyRelu { slope } => {
                let s = *slope;
                z.zip_map(da, move |zv, g| if zv > 0.0 { g } else { s * g })
                    .expect("same shape")
            }
            ActivationKind::Sigmoid => a.zip_map(da, |av, g| g * av * (1.0 - av)).expect("same shape"),
            ActivationKind::Tanh => a.zip_map(da, |av, g| g * (1.0 - av * av)).expect("same shape"),
            ActivationKind::Softmax => softmax_rows_vjp(a, da),
            ActivationKind::SoftmaxBatchAxis => softmax_rows_vjp(&a.transpose(), &da.transpose()).transpose(),
        }
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    for r in 0..z.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Row-wise log-softmax.
pub(crate) fn log_softmax_rows(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    for r in 0..z.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

fn softmax_rows_vjp(a: &Tensor, da: &Tensor) -> Tensor {
    let mut out = da.clone();
    for r in 0..a.rows() {
        let ar = a.row(r);
        let dot: f64 = ar.iter().zip(da.row(r)).map(|(x, g)| x * g).sum();
        for (o, &av) in out.row_mut(r).iter_mut().zip(ar) {
            *o = av * (*o - dot);
        }
    }
    out
}
