#![allow(dead_code)]

use fitprobe::data::one_hot;
use fitprobe::nn::{
    forward_pass, init_parameters, ActivationKind, ForwardMode, InitStrategy, LossSpec, Network, NetworkBuilder,
    OptimizerSpec, ProblemKind, Reduction, RegularizationSpec, Trainer,
};
use fitprobe::tensor::{Distribution, RngStream, Tensor};

pub const HIDDEN: [ActivationKind; 5] = [
    ActivationKind::Identity,
    ActivationKind::Relu,
    ActivationKind::LeakyRelu { slope: 0.1 },
    ActivationKind::Sigmoid,
    ActivationKind::Tanh,
];

/// Output head and loss pairing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Head {
    MseMean,
    MseSum,
    MseTanh,
    SoftmaxCe,
    LogitsCe,
    SoftmaxMse,
}

pub const HEADS: [Head; 6] = [Head::MseMean, Head::MseSum, Head::MseTanh, Head::SoftmaxCe, Head::LogitsCe, Head::SoftmaxMse];

#[derive(Debug, Clone)]
pub struct Case {
    pub net: Network,
    pub loss: LossSpec,
    pub x: Tensor,
    pub y: Tensor,
}

/// A random net of at most three dense layers, trained for ten burn-in steps.
/// Dropout masks stay fixed because every pass uses step 0.
pub fn random_case(seed: u64, hidden: ActivationKind, head: Head, depth: usize, width: usize, batchnorm: bool, dropout: bool) -> Case {
    let mut rng = RngStream::new(seed);
    let (inputs, rows) = (2 + rng.index(4), 6 + rng.index(6));
    let classes = 2 + rng.index(4);
    let classification = matches!(head, Head::SoftmaxCe | Head::LogitsCe | Head::SoftmaxMse);
    let outputs = if classification { classes } else { 1 + rng.index(2) };
    let mut b = NetworkBuilder::new(inputs);
    for _ in 1..depth.clamp(1, 3) {
        b = b.dense(width);
        if batchnorm {
            b = b.batch_norm();
        }
        b = b.activation(hidden);
        if dropout {
            b = b.dropout(0.8);
        }
    }
    let out_act = match head {
        Head::MseMean | Head::MseSum => ActivationKind::Identity,
        Head::MseTanh => ActivationKind::Tanh,
        Head::SoftmaxCe | Head::SoftmaxMse => ActivationKind::Softmax,
        Head::LogitsCe => ActivationKind::Identity,
    };
    let problem = if classification {
        ProblemKind::Classification { n_classes: classes }
    } else {
        ProblemKind::Regression { n_outputs: outputs }
    };
    let mut net = b.dense(outputs).activation(out_act).build(problem).unwrap();
    init_parameters(&mut net, InitStrategy::Recommended, &mut rng.split(1));
    let x = rng.sample(Distribution::Normal { mean: 0.0, std: 1.0 }, &[rows, inputs]).unwrap();
    let y = if classification {
        let labels: Vec<usize> = (0..rows).map(|_| rng.index(classes)).collect();
        one_hot(&labels, classes).unwrap()
    } else {
        rng.sample(Distribution::Uniform { lo: -0.9, hi: 0.9 }, &[rows, outputs]).unwrap()
    };
    let loss = match head {
        Head::MseMean | Head::MseTanh | Head::SoftmaxMse => LossSpec::mse(),
        Head::MseSum => LossSpec { reduction: Reduction::Sum, ..LossSpec::mse() },
        Head::SoftmaxCe => LossSpec::cross_entropy(),
        Head::LogitsCe => LossSpec { from_logits: true, ..LossSpec::cross_entropy() },
    };
    let mut trainer = Trainer::new(net, loss, RegularizationSpec::none(), OptimizerSpec::sgd(0.01));
    for _ in 0..10 {
        trainer.step(&x, &y).unwrap();
    }
    Case { net: trainer.net, loss, x, y }
}

pub fn case_loss(net: &Network, loss: &LossSpec, x: &Tensor, y: &Tensor) -> f64 {
    let t = forward_pass(net, x, ForwardMode::Train { step: 0 }).unwrap();
    loss.value(t.prediction(), y).unwrap()
}

fn sample_indices(len: usize, budget: usize, key: u64) -> Vec<usize> {
    if len <= budget {
        return (0..len).collect();
    }
    let mut rng = RngStream::new(key);
    (0..budget).map(|_| rng.index(len)).collect()
}

fn centered(f: &dyn Fn(f64) -> f64, v: f64, h: f64) -> f64 {
    (f(v + h) - f(v - h)) / (2.0 * h)
}

/// Worst relative error between the engine gradients and centered
/// differences over up to `per_tensor` coordinates of each parameter tensor
/// and of the input. Coordinates whose
/// difference quotient changes with the step are straddling a kink and are
/// skipped.
pub fn oracle_max_error(case: &Case, h: f64, per_tensor: usize) -> (f64, usize) {
    let Case { net, loss, x, y } = case;
    let trace = forward_pass(net, x, ForwardMode::Train { step: 0 }).unwrap();
    let grads = fitprobe::nn::backward_pass(net, &trace, y, loss, &RegularizationSpec::none()).unwrap();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    let mut compare = |a: f64, f: &dyn Fn(f64) -> f64, v: f64| {
        let n = centered(f, v, h);
        let n_small = centered(f, v, h / 10.0);
        if (n - n_small).abs() > 1e-3 * n.abs().max(n_small.abs()).max(1e-6) {
            return;
        }
        let denom = a.abs().max(n.abs());
        if denom < 1e-9 {
            return;
        }
        compared += 1;
        worst = worst.max((a - n).abs() / denom);
    };
    for (k, &r) in grads.refs.iter().enumerate() {
        for i in sample_indices(net.param(r).len(), per_tensor, k as u64) {
            let v = net.param(r).data()[i];
            let f = |w: f64| {
                let mut probe = net.clone();
                probe.param_mut(r).data_mut()[i] = w;
                case_loss(&probe, loss, x, y)
            };
            compare(grads.data[k].data()[i], &f, v);
        }
    }
    for i in sample_indices(x.len(), per_tensor, u64::MAX) {
        let f = |w: f64| {
            let mut xp = x.clone();
            xp.data_mut()[i] = w;
            case_loss(net, loss, &xp, y)
        };
        compare(grads.input.data()[i], &f, x.data()[i]);
    }
    (worst, compared)
}
