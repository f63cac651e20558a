use std::collections::VecDeque;

use crate::nn::{ActivationKind, Layer, Network, ParamKind, StepRecord};
use crate::tensor::{RngStream, Tensor};

/// Fixed-capacity FIFO; pushing onto a full buffer evicts the oldest entry.
#[derive(Debug, Clone)]
pub struct RingBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        RingBuffer {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.max(1)),
        }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn first(&self) -> Option<&T> {
        self.items.front()
    }

    pub fn last(&self) -> Option<&T> {
        self.items.back()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }
}

#[derive(Debug, Clone)]
pub struct DenseSnapshot {
    pub layer: usize,
    pub weights: Tensor,
    pub biases: Option<Tensor>,
    pub weight_delta_abs_mean: f64,
    pub bias_delta_abs_mean: Option<f64>,
    pub data_grad_abs_mean: f64,
    pub penalty_grad_abs_mean: f64,
}

#[derive(Debug, Clone)]
pub struct ActivationSnapshot {
    pub layer: usize,
    pub kind: ActivationKind,
    /// Batch rows × sampled neurons.
    pub sample: Tensor,
}

/// State of one iteration, taken after its optimizer step.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub iteration: u64,
    pub loss: f64,
    pub data_loss: f64,
    pub metric: f64,
    pub dense: Vec<DenseSnapshot>,
    pub activations: Vec<ActivationSnapshot>,
    pub output: Tensor,
}

/// Fixed per-layer choice of at most `limit` neuron columns to record.
#[derive(Debug, Clone)]
pub struct NeuronSampler {
    columns: Vec<(usize, Vec<usize>)>,
}

impl NeuronSampler {
    pub fn new(net: &Network, limit: usize, seed: u64) -> Self {
        let root = RngStream::new(seed);
        let mut columns = Vec::new();
        let mut width = net.input_dim;
        for (i, layer) in net.layers.iter().enumerate() {
            if let Layer::Dense(d) = layer {
                width = d.fan_out();
            }
            if let Layer::Activation { .. } = layer {
                let mut cols = if width <= limit {
                    (0..width).collect()
                } else {
                    root.split(i as u64).choose_distinct(width, limit)
                };
                cols.sort_unstable();
                columns.push((i, cols));
            }
        }
        NeuronSampler { columns }
    }

    pub fn layers(&self) -> impl Iterator<Item = usize> + '_ {
        self.columns.iter().map(|(l, _)| *l)
    }
}

impl Snapshot {
    /// `net` is the network after the step's update.
    pub fn capture(record: &StepRecord, net: &Network, metric: f64, sampler: &NeuronSampler) -> Snapshot {
        let g = &record.grads;
        let mut dense = Vec::new();
        for (i, layer) in net.layers.iter().enumerate() {
            let Layer::Dense(d) = layer else { continue };
            let find = |kind: ParamKind| g.refs.iter().position(|r| r.layer == i && r.kind == kind);
            let w_idx = find(ParamKind::Weight);
            let b_idx = find(ParamKind::Bias);
            let (wd, dg, pg) = match w_idx {
                Some(k) => (
                    record.deltas[k].abs_mean(),
                    g.data[k].abs_mean(),
                    g.penalty[k].as_ref().map_or(0.0, Tensor::abs_mean),
                ),
                None => (0.0, 0.0, 0.0),
            };
            dense.push(DenseSnapshot {
                layer: i,
                weights: d.weights.clone(),
                biases: d.biases.clone(),
                weight_delta_abs_mean: wd,
                bias_delta_abs_mean: b_idx.map(|k| record.deltas[k].abs_mean()),
                data_grad_abs_mean: dg,
                penalty_grad_abs_mean: pg,
            });
        }
        let activations = sampler
            .columns
            .iter()
            .map(|(layer, cols)| {
                let kind = match &net.layers[*layer] {
                    Layer::Activation { kind } => *kind,
                    _ => unreachable!("sampler only tracks activation layers"),
                };
                ActivationSnapshot {
                    layer: *layer,
                    kind,
                    sample: record.trace.outputs[*layer].select_columns(cols),
                }
            })
            .collect();
        Snapshot {
            iteration: record.iteration,
            loss: record.total_loss(),
            data_loss: record.data_loss,
            metric,
            dense,
            activations,
            output: record.trace.prediction().clone(),
        }
    }
}
