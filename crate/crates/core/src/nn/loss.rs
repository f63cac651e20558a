use serde::{Deserialize, Serialize};

use super::activation::{log_softmax_rows, softmax_rows};
use super::network::{Layer, Network};
use super::pass::ForwardTrace;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Sum,
}

/// Deliberate defects the fault lab can switch on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossDefect {
    #[default]
    None,
    /// Cross-entropy normalizes its inputs down the batch axis.
    WrongAxis,
    /// Averages over classes and sums over instances.
    MeanSumInverted,
    /// Every prediction is compared against every target of the batch.
    WrongBroadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub reduction: Reduction,
    /// Cross-entropy takes raw scores and applies log-softmax itself.
    pub from_logits: bool,
    /// Lower clamp on probabilities before the logarithm. Zero disables it.
    pub epsilon: f64,
    #[serde(default)]
    pub defect: LossDefect,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        LossSpec {
            kind: LossKind::CrossEntropy,
            reduction: Reduction::Mean,
            from_logits: false,
            epsilon: 1e-12,
            defect: LossDefect::None,
        }
    }

    pub fn mse() -> Self {
        LossSpec {
            kind: LossKind::Mse,
            reduction: Reduction::Mean,
            from_logits: false,
            epsilon: 1e-12,
            defect: LossDefect::None,
        }
    }

    /// Reduction actually applied after any defect.
    pub fn effective_reduction(&self) -> Reduction {
        match (self.defect, self.reduction) {
            (LossDefect::MeanSumInverted, Reduction::Mean) => Reduction::Sum,
            (LossDefect::MeanSumInverted, Reduction::Sum) => Reduction::Mean,
            (_, r) => r,
        }
    }

    /// Weight of each instance loss in the reduced data loss.
    pub fn instance_weight(&self, batch: usize) -> f64 {
        match self.effective_reduction() {
            Reduction::Mean => 1.0 / batch.max(1) as f64,
            Reduction::Sum => 1.0,
        }
    }

    fn check_shapes(&self, pred: &Tensor, targets: &Tensor) -> Result<()> {
        if pred.shape() != targets.shape() {
            return Err(Error::ShapeMismatch {
                op: "loss",
                left: pred.shape().to_vec(),
                right: targets.shape().to_vec(),
            });
        }
        if pred.is_empty() {
            return Err(Error::EmptyTensor("loss"));
        }
        Ok(())
    }

    fn class_scale(&self, pred: &Tensor) -> f64 {
        if self.defect == LossDefect::MeanSumInverted {
            1.0 / pred.cols() as f64
        } else {
            1.0
        }
    }

    fn clamp(&self, p: f64) -> f64 {
        if self.epsilon > 0.0 {
            p.max(self.epsilon)
        } else {
            p
        }
    }

    /// Per-instance losses before reduction.
    pub fn instance_losses(&self, pred: &Tensor, targets: &Tensor) -> Result<Vec<f64>> {
        self.check_shapes(pred, targets)?;
        let (m, k) = (pred.rows(), pred.cols());
        let scale = self.class_scale(pred);
        let losses = match self.kind {
            LossKind::Mse => {
                if self.defect == LossDefect::WrongBroadcast {
                    (0..m)
                        .map(|i| {
                            let mut s = 0.0;
                            for j in 0..m {
                                for c in 0..k {
                                    let d = pred.get(i, c) - targets.get(j, c);
                                    s += d * d;
                                }
                            }
                            s / (m * k) as f64
                        })
                        .collect()
                } else {
                    (0..m)
                        .map(|i| {
                            pred.row(i)
                                .iter()
                                .zip(targets.row(i))
                                .map(|(y, t)| (y - t) * (y - t))
                                .sum::<f64>()
                                / k as f64
                        })
                        .collect()
                }
            }
            LossKind::CrossEntropy => {
                let wrong = self.defect == LossDefect::WrongAxis;
                let logp = if self.from_logits {
                    if wrong {
                        log_softmax_rows(&pred.transpose()).transpose()
                    } else {
                        log_softmax_rows(pred)
                    }
                } else {
                    let q = if wrong {
                        normalize_rows(&pred.transpose()).transpose()
                    } else {
                        normalize_rows(pred)
                    };
                    q.map(|v| self.clamp(v).ln())
                };
                (0..m)
                    .map(|i| {
                        -targets
                            .row(i)
                            .iter()
                            .zip(logp.row(i))
                            .map(|(t, lp)| t * lp)
                            .sum::<f64>()
                            * scale
                    })
                    .collect()
            }
        };
        Ok(losses)
    }

    /// Reduced data loss.
    pub fn value(&self, pred: &Tensor, targets: &Tensor) -> Result<f64> {
        let l = self.instance_losses(pred, targets)?;
        let w = self.instance_weight(l.len());
        Ok(l.iter().sum::<f64>() * w)
    }

    /// Gradient of `Σ_i weights[i] · loss_i` with respect to the predictions.
    pub fn weighted_gradient(&self, pred: &Tensor, targets: &Tensor, weights: &[f64]) -> Result<Tensor> {
        self.check_shapes(pred, targets)?;
        let (m, k) = (pred.rows(), pred.cols());
        if weights.len() != m {
            return Err(Error::InvalidParameter(format!(
                "{} instance weights for a batch of {m}",
                weights.len()
            )));
        }
        let scale = self.class_scale(pred);
        let w: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let mut g = Tensor::zeros(pred.shape());
        match self.kind {
            LossKind::Mse => {
                if self.defect == LossDefect::WrongBroadcast {
                    for c in 0..k {
                        let tsum: f64 = (0..m).map(|j| targets.get(j, c)).sum();
                        for i in 0..m {
                            let v = 2.0 * (m as f64 * pred.get(i, c) - tsum) / (m * k) as f64;
                            g.set(i, c, w[i] * v);
                        }
                    }
                } else {
                    for i in 0..m {
                        for c in 0..k {
                            g.set(i, c, w[i] * 2.0 * (pred.get(i, c) - targets.get(i, c)) / k as f64);
                        }
                    }
                }
            }
            LossKind::CrossEntropy => {
                let wrong = self.defect == LossDefect::WrongAxis;
                // upstream weights folded into the targets: G = w_i · t_ik
                let mut wt = targets.clone();
                for i in 0..m {
                    for v in wt.row_mut(i) {
                        *v *= w[i];
                    }
                }
                let (p, wt) = if wrong { (pred.transpose(), wt.transpose()) } else { (pred.clone(), wt) };
                let gr = if self.from_logits {
                    log_softmax_weighted_grad(&p, &wt)
                } else {
                    self.normalized_log_grad(&p, &wt)
                };
                g = if wrong { gr.transpose() } else { gr };
            }
        }
        Ok(g)
    }

    /// Gradient of the reduced data loss.
    pub fn gradient(&self, pred: &Tensor, targets: &Tensor) -> Result<Tensor> {
        let w = vec![self.instance_weight(pred.rows()); pred.rows()];
        self.weighted_gradient(pred, targets, &w)
    }

    // d/dp of −Σ wt_ik · ln clamp(p_ik / S_i)
    fn normalized_log_grad(&self, p: &Tensor, wt: &Tensor) -> Tensor {
        let mut g = Tensor::zeros(p.shape());
        for i in 0..p.rows() {
            let pr = p.row(i);
            let s: f64 = pr.iter().sum();
            let gq: Vec<f64> = pr
                .iter()
                .zip(wt.row(i))
                .map(|(&pv, &t)| {
                    let q = pv / s;
                    if (self.epsilon > 0.0 && q < self.epsilon) || t == 0.0 {
                        0.0
                    } else {
                        -t / q
                    }
                })
                .collect();
            let dot: f64 = gq.iter().zip(pr).map(|(a, b)| a * b).sum();
            for (o, gv) in g.row_mut(i).iter_mut().zip(&gq) {
                *o = gv / s - dot / (s * s);
            }
        }
        g
    }
}

fn normalize_rows(p: &Tensor) -> Tensor {
    let mut out = p.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

// d/dz of −Σ wt_ik · log_softmax(z)_ik
fn log_softmax_weighted_grad(z: &Tensor, wt: &Tensor) -> Tensor {
    let s = softmax_rows(z);
    let mut g = Tensor::zeros(z.shape());
    for i in 0..z.rows() {
        let tot: f64 = wt.row(i).iter().sum();
        for ((o, sv), t) in g.row_mut(i).iter_mut().zip(s.row(i)).zip(wt.row(i)) {
            *o = tot * sv - t;
        }
    }
    g
}

/// Norm penalty on dense weights.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegularizationSpec {
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    /// Divide λ by the batch size.
    #[serde(default)]
    pub scale_by_batch: bool,
}

impl RegularizationSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn l2(lambda: f64) -> Self {
        RegularizationSpec { lambda_l2: lambda, ..Self::default() }
    }

    pub fn is_active(&self) -> bool {
        self.lambda_l1 != 0.0 || self.lambda_l2 != 0.0
    }

    fn factor(&self, batch: usize) -> f64 {
        if self.scale_by_batch {
            1.0 / batch.max(1) as f64
        } else {
            1.0
        }
    }

    /// λ₂‖W‖² + λ₁‖W‖₁ summed over every dense weight matrix.
    pub fn penalty(&self, net: &Network, batch: usize) -> f64 {
        if !self.is_active() {
            return 0.0;
        }
        let f = self.factor(batch);
        net.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense(d) => Some(&d.weights),
                _ => None,
            })
            .map(|w| f * (self.lambda_l2 * w.sq_norm() + self.lambda_l1 * w.data().iter().map(|v| v.abs()).sum::<f64>()))
            .sum()
    }

    /// 2λ₂W + λ₁·sign(W).
    pub fn gradient(&self, w: &Tensor, batch: usize) -> Tensor {
        let f = self.factor(batch);
        let (l1, l2) = (self.lambda_l1, self.lambda_l2);
        w.map(move |v| {
            let sign = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            f * (2.0 * l2 * v + l1 * sign)
        })
    }
}

/// Data loss and penalty for a forward trace.
pub fn compute_loss(
    trace: &ForwardTrace,
    targets: &Tensor,
    loss: &LossSpec,
    reg: &RegularizationSpec,
    net: &Network,
) -> Result<(f64, f64)> {
    let data = loss.value(trace.prediction(), targets)?;
    Ok((data, reg.penalty(net, trace.input.rows())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_hot(labels: &[usize], k: usize) -> Tensor {
        let mut t = Tensor::zeros(&[labels.len(), k]);
        for (i, &l) in labels.iter().enumerate() {
            t.set(i, l, 1.0);
        }
        t
    }

    fn numeric(f: impl Fn(&Tensor) -> f64, x: &Tensor) -> Tensor {
        let h = 1e-6;
        let mut g = Tensor::zeros(x.shape());
        for i in 0..x.len() {
            let mut a = x.clone();
            a.data_mut()[i] += h;
            let mut b = x.clone();
            b.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&a) - f(&b)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn uniform_ten_class_cross_entropy() {
        let p = Tensor::filled(&[4, 10], 0.1);
        let t = one_hot(&[0, 3, 7, 9], 10);
        let v = LossSpec::cross_entropy().value(&p, &t).unwrap();
        assert_abs_diff_eq!(v, -(0.1f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let y = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        assert_eq!(LossSpec::mse().value(&y, &y).unwrap(), 0.0);
        assert!(LossSpec::mse().gradient(&y, &y).unwrap().data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_epsilon_lets_nan_through() {
        let p = Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let t = one_hot(&[1], 2);
        let spec = LossSpec { epsilon: 0.0, ..LossSpec::cross_entropy() };
        assert!(spec.value(&p, &t).unwrap().is_nan());
        assert!(LossSpec::cross_entropy().value(&p, &t).unwrap().is_finite());
    }

    #[test]
    fn doubled_batch_mean_invariant_sum_doubles() {
        let p = Tensor::from_rows(&[vec![0.2, 0.8], vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let t = one_hot(&[1, 0, 0], 2);
        let p2 = Tensor::concat_rows(&[&p, &p]).unwrap();
        let t2 = Tensor::concat_rows(&[&t, &t]).unwrap();
        let mean = LossSpec::cross_entropy();
        assert_abs_diff_eq!(mean.value(&p2, &t2).unwrap(), mean.value(&p, &t).unwrap(), epsilon = 1e-9);
        let sum = LossSpec { reduction: Reduction::Sum, ..mean };
        assert_abs_diff_eq!(sum.value(&p2, &t2).unwrap(), 2.0 * sum.value(&p, &t).unwrap(), epsilon = 1e-9);
        let inv = LossSpec { defect: LossDefect::MeanSumInverted, ..mean };
        assert_abs_diff_eq!(inv.value(&p2, &t2).unwrap(), 2.0 * inv.value(&p, &t).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = Tensor::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3], vec![0.25, 0.25, 0.5]]).unwrap();
        let z = Tensor::from_rows(&[vec![0.3, -1.0, 2.0], vec![0.0, 0.5, -0.5], vec![1.5, 0.2, 0.1]]).unwrap();
        let t = one_hot(&[1, 0, 2], 3);
        let reg_t = Tensor::from_rows(&[vec![0.1, 0.4, -1.0], vec![2.0, 0.0, 0.3], vec![0.0, 1.0, 1.0]]).unwrap();
        let specs = [
            (LossSpec::cross_entropy(), &p, &t),
            (LossSpec { from_logits: true, ..LossSpec::cross_entropy() }, &z, &t),
            (LossSpec { defect: LossDefect::WrongAxis, ..LossSpec::cross_entropy() }, &p, &t),
            (LossSpec { from_logits: true, defect: LossDefect::WrongAxis, ..LossSpec::cross_entropy() }, &z, &t),
            (LossSpec { defect: LossDefect::MeanSumInverted, ..LossSpec::cross_entropy() }, &p, &t),
            (LossSpec::mse(), &z, &reg_t),
            (LossSpec { defect: LossDefect::WrongBroadcast, ..LossSpec::mse() }, &z, &reg_t),
        ];
        for (spec, x, tt) in specs {
            let analytic = spec.gradient(x, tt).unwrap();
            let num = numeric(|v| spec.value(v, tt).unwrap(), x);
            assert!(analytic.max_abs_diff(&num) < 1e-6, "{spec:?}");
        }
    }

    #[test]
    fn wrong_axis_couples_instances() {
        let p = Tensor::from_rows(&[vec![0.2, 0.8], vec![0.6, 0.4]]).unwrap();
        let t = one_hot(&[1, 0], 2);
        let spec = LossSpec { defect: LossDefect::WrongAxis, ..LossSpec::cross_entropy() };
        let g = spec.weighted_gradient(&p, &t, &[1.0, 0.0]).unwrap();
        assert!(g.row(1).iter().any(|v| v.abs() > 1e-8));
        let g = LossSpec::cross_entropy().weighted_gradient(&p, &t, &[1.0, 0.0]).unwrap();
        assert!(g.row(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn penalty_and_gradient() {
        let reg = RegularizationSpec { lambda_l1: 0.5, lambda_l2: 0.25, scale_by_batch: false };
        let w = Tensor::vector(vec![2.0, -1.0, 0.0]);
        let g = reg.gradient(&w, 8);
        assert_eq!(g.data(), &[1.0 + 0.5, -0.5 - 0.5, 0.0]);
        assert!(!RegularizationSpec::none().is_active());
    }
}
