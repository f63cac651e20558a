//! Checks run before any training.

use super::context::CheckContext;
use super::report::{global, layer_label, CheckId, Finding, Phase};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{f_test_variance, shannon_equitability, smoothness_ratio};
use crate::nn::{
    backpropagate, check_network_gradients, forward_pass, max_relative_error, recommended_variance, ForwardMode,
    Layer, LossKind, MetricKind, Network, RegularizationSpec, Trainer,
};
use crate::program::TrainingProgram;
use crate::tensor::{RngStream, Tensor};

fn pre(check: CheckId, layer: String, metric: f64, threshold: f64, message: String) -> Finding {
    Finding {
        check,
        phase: Phase::PreTraining,
        iteration: None,
        layer,
        metric,
        threshold,
        message,
    }
}

const BOUND_TOL: f64 = 1e-6;

/// A column counts as scaled when it is z-scored, or fills a good part of
/// [0, 1] or [-1, 1].
pub fn column_is_scaled(values: &[f64]) -> bool {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    if mean.abs() < 0.1 && (0.9..=1.1).contains(&std) {
        return true;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let unit = lo >= -BOUND_TOL && hi <= 1.0 + BOUND_TOL && span >= 0.5;
    let sym = lo >= -1.0 - BOUND_TOL && hi <= 1.0 + BOUND_TOL && span >= 1.0;
    unit || sym
}

fn list(cols: &[usize]) -> String {
    let shown: Vec<String> = cols.iter().take(8).map(|c| c.to_string()).collect();
    if cols.len() > 8 {
        format!("{} and {} more", shown.join(", "), cols.len() - 8)
    } else {
        shown.join(", ")
    }
}

fn scaling_findings(m: &Tensor, id: CheckId, what: &str) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut constant = Vec::new();
    let mut unscaled = Vec::new();
    for c in 0..m.cols() {
        let col = m.column(c);
        let bad = col.iter().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            out.push(pre(
                id,
                global(),
                bad as f64,
                0.0,
                format!("{what} column {c} holds {bad} non-finite values"),
            ));
            continue;
        }
        if col.iter().all(|&v| v == col[0]) {
            constant.push(c);
        } else if !column_is_scaled(&col) {
            unscaled.push(c);
        }
    }
    if !unscaled.is_empty() {
        let varying = m.cols() - constant.len();
        out.push(pre(
            id,
            global(),
            unscaled.len() as f64 / varying.max(1) as f64,
            0.0,
            format!("{} of {varying} {what} columns are neither standardized nor in [0,1] or [-1,1]: {}", unscaled.len(), list(&unscaled)),
        ));
    }
    if !constant.is_empty() {
        out.push(pre(
            CheckId::ConstInps,
            global(),
            constant.len() as f64,
            0.0,
            format!("{what} columns with zero variance: {}", list(&constant)),
        ));
    }
    out
}

pub fn pre_check_data_scaling(ds: &Dataset) -> Vec<Finding> {
    let mut out = scaling_findings(&ds.x, CheckId::UnsInps, "feature");
    if !ds.problem.is_classification() {
        out.extend(scaling_findings(&ds.y, CheckId::UnsOuts, "target"));
    }
    out
}

/// Findings plus the equitability measured (classification only).
pub fn pre_check_label_balance(ds: &Dataset, ctx: &CheckContext) -> Result<(Vec<Finding>, Option<f64>)> {
    if !ds.problem.is_classification() {
        return Ok((Vec::new(), None));
    }
    let counts: Vec<f64> = ds.class_counts().iter().map(|&c| c as f64).collect();
    let e = shannon_equitability(&counts)?;
    let mut out = Vec::new();
    if e < ctx.shannon_min {
        out.push(pre(
            CheckId::UnbalancedLabels,
            global(),
            e,
            ctx.shannon_min,
            format!("label distribution equitability {e:.4} is below {}", ctx.shannon_min),
        ));
    }
    Ok((out, Some(e)))
}

fn followed_by_batchnorm(net: &Network, i: usize) -> bool {
    matches!(net.layers.get(i + 1), Some(Layer::BatchNorm(_)))
}

pub fn pre_check_weight_init(net: &Network, ctx: &CheckContext) -> Result<Vec<Finding>> {
    let mut out = Vec::new();
    for i in net.dense_layers() {
        let Layer::Dense(d) = &net.layers[i] else { continue };
        let w = d.weights.data();
        let label = layer_label(i, "dense");
        let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            out.push(pre(CheckId::UnSymW, label, 0.0, 0.0, format!("all {} weights equal {lo}", w.len())));
            continue;
        }
        let act = net.activation_after(i);
        let Some(target) = recommended_variance(act, d.fan_in(), d.fan_out()) else { continue };
        if w.len() < 2 {
            continue;
        }
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        let outcome = f_test_variance(var, w.len(), target, ctx.alpha)?;
        if !outcome.passed() {
            out.push(pre(
                CheckId::PiW,
                label,
                var,
                target,
                format!(
                    "weight variance {var:.4e} differs from the {} rule {target:.4e} (p = {:.3e})",
                    act.name(),
                    outcome.p_value()
                ),
            ));
        }
    }
    Ok(out)
}

pub fn pre_check_bias_init(net: &Network, ds: &Dataset, equitability: Option<f64>, ctx: &CheckContext) -> Vec<Finding> {
    let mut out = Vec::new();
    let dense = net.dense_layers();
    let last = dense.last().copied();
    for &i in &dense {
        let Layer::Dense(d) = &net.layers[i] else { continue };
        let label = layer_label(i, "dense");
        let Some(b) = &d.biases else {
            if !followed_by_batchnorm(net, i) {
                out.push(pre(CheckId::MissB, label, 0.0, 1.0, "dense layer has no bias term".into()));
            }
            continue;
        };
        let mut expected = vec![0.0; b.len()];
        let mut why = "zero";
        if Some(i) == last {
            if ds.problem.is_classification() {
                if equitability.is_some_and(|e| e < ctx.shannon_min) {
                    let counts = ds.class_counts();
                    let total = ds.len() as f64;
                    for (k, &c) in counts.iter().enumerate().take(expected.len()) {
                        let p = (c as f64 / total).clamp(1e-12, 1.0 - 1e-12);
                        expected[k] = (p / (1.0 - p)).ln();
                    }
                    why = "the log-odds of the class frequencies";
                }
            } else {
                for (k, e) in expected.iter_mut().enumerate() {
                    let col = ds.y.column(k);
                    let n = col.len() as f64;
                    let mean = col.iter().sum::<f64>() / n;
                    let std = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
                    if mean != 0.0 && std / mean.abs() < ctx.regression_bias_cv {
                        *e = mean;
                        why = "the target mean";
                    }
                }
            }
        }
        let dev = b.data().iter().zip(&expected).map(|(v, e)| (v - e).abs()).fold(0.0, f64::max);
        if dev > BOUND_TOL {
            out.push(pre(
                CheckId::PiB,
                label,
                dev,
                BOUND_TOL,
                format!("initial biases deviate by up to {dev:.4e} from {why}"),
            ));
        }
    }
    out
}

fn loss_at(program: &TrainingProgram, net: &Network, x: &Tensor, y: &Tensor) -> Result<f64> {
    let trace = forward_pass(net, x, ForwardMode::Inference)?;
    program.loss.value(trace.prediction(), y)
}

/// Cold-start loss against its expected value, and the doubled-batch probe.
pub fn pre_check_initial_loss(
    program: &TrainingProgram,
    net: &Network,
    x: &Tensor,
    y: &Tensor,
    balanced: bool,
    ctx: &CheckContext,
) -> Result<Vec<Finding>> {
    let mut out = Vec::new();
    let loss = loss_at(program, net, x, y)?;
    if net.problem.is_classification() && balanced && program.loss.kind == LossKind::CrossEntropy {
        let expected = (net.output_dim() as f64).ln();
        let rel = (loss - expected).abs() / expected;
        if !(rel <= ctx.initial_loss_rel_tol) {
            let huge = if rel > 1.0 || rel.is_nan() { " (Huge Err)" } else { "" };
            out.push(pre(
                CheckId::PiLoss,
                global(),
                rel,
                ctx.initial_loss_rel_tol,
                format!("initial loss {loss:.4} is {:.1}% away from -ln(1/{}) = {expected:.4}{huge}", rel * 100.0, net.output_dim()),
            ));
        }
    }
    let x2 = Tensor::concat_rows(&[x, x])?;
    let y2 = Tensor::concat_rows(&[y, y])?;
    let ratio = loss_at(program, net, &x2, &y2)? / loss;
    if ratio >= ctx.sum_ratio_low && ratio <= ctx.sum_ratio_high {
        out.push(pre(
            CheckId::PiLoss,
            global(),
            ratio,
            ctx.sum_ratio_low,
            format!("loss scales with the batch size (doubled batch ratio {ratio:.3}); the reduction sums over instances"),
        ));
    }
    Ok(out)
}

fn stray_row_norm(g: &Tensor, keep: usize) -> f64 {
    (0..g.rows())
        .filter(|&r| r != keep)
        .map(|r| g.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Gradients of one instance's loss, and of one of its outputs, must not
/// reach the other instances of the batch.
pub fn pre_check_dependencies(
    program: &TrainingProgram,
    net: &Network,
    x: &Tensor,
    y: &Tensor,
    ctx: &CheckContext,
) -> Result<Vec<Finding>> {
    let mut out = Vec::new();
    if x.rows() < 2 {
        return Ok(out);
    }
    let trace = forward_pass(net, x, ForwardMode::Inference)?;
    let pred = trace.prediction();
    let i = 0;
    let mut weights = vec![0.0; x.rows()];
    weights[i] = 1.0;
    let d_loss = program.loss.weighted_gradient(pred, y, &weights)?;
    let stray = stray_row_norm(&backpropagate(net, &trace, &d_loss)?.input, i);
    if !(stray <= ctx.dependency_tol) {
        out.push(pre(
            CheckId::InvLossDep,
            global(),
            stray,
            ctx.dependency_tol,
            format!("loss of instance {i} has gradient norm {stray:.3e} on other instances"),
        ));
    }
    let mut d_out = Tensor::zeros(pred.shape());
    d_out.set(i, 0, 1.0);
    let stray = stray_row_norm(&backpropagate(net, &trace, &d_out)?.input, i);
    if !(stray <= ctx.dependency_tol) {
        out.push(pre(
            CheckId::InvOutDep,
            global(),
            stray,
            ctx.dependency_tol,
            format!("output 0 of instance {i} has gradient norm {stray:.3e} on other instances"),
        ));
    }
    Ok(out)
}

/// Analytic against numerical gradients after a short burn-in, with dropout
/// and norm penalties switched off.
pub fn pre_check_gradient(
    program: &TrainingProgram,
    x: &Tensor,
    y: &Tensor,
    ctx: &CheckContext,
    seed: u64,
) -> Result<Vec<Finding>> {
    let mut trainer = program.fresh_trainer(seed);
    trainer.net.set_dropout_pkeep(1.0);
    trainer.reg = RegularizationSpec::none();
    let nan = |what: String| {
        vec![pre(CheckId::GradProbeNonFinite, global(), f64::NAN, ctx.grad_rel_err_max, what)]
    };
    for _ in 0..ctx.gradient_burn_in {
        let rec = trainer.step(x, y)?;
        if !rec.data_loss.is_finite() {
            return Ok(nan(format!("loss became {} during burn-in", rec.data_loss)));
        }
    }
    let mut rng = RngStream::new(seed).split(0x6772);
    let probes = match check_network_gradients(
        &trainer.net,
        x,
        y,
        &program.loss,
        ctx.gradient_samples_per_tensor,
        ctx.gradient_step,
        program.flip_gradient_sign,
        &mut rng,
    ) {
        Ok(p) => p,
        Err(Error::NonFinite(what)) => return Ok(nan(format!("non-finite loss while probing {what}"))),
        Err(e) => return Err(e),
    };
    let worst = max_relative_error(&probes);
    if !(worst <= ctx.grad_rel_err_max) {
        let p = probes
            .iter()
            .find(|p| p.relative_error == worst)
            .expect("worst probe exists");
        let layer = match p.param {
            Some(r) => layer_label(r.layer, trainer.net.layers[r.layer].kind_name()),
            None => "input".to_string(),
        };
        return Ok(vec![pre(
            CheckId::GradErr,
            layer,
            worst,
            ctx.grad_rel_err_max,
            format!("analytic {:.4e} vs numerical {:.4e} at coordinate {}", p.analytic, p.numeric, p.index),
        )]);
    }
    Ok(Vec::new())
}

/// Training on the real batch must beat training on all-zero features.
pub fn pre_check_input_dependency(
    program: &TrainingProgram,
    x: &Tensor,
    y: &Tensor,
    ctx: &CheckContext,
    seed: u64,
) -> Result<Vec<Finding>> {
    let zeros = Tensor::zeros_like(x);
    let run = |input: &Tensor| -> Result<f64> {
        let mut t = program.fresh_trainer(seed);
        for _ in 0..ctx.input_dependency_iterations {
            t.step(input, y)?;
        }
        t.evaluate(input, y)
    };
    let (real, zero) = (run(x)?, run(&zeros)?);
    // a diverged baseline gives nothing to compare against
    if zero.is_finite() && !(real < zero) {
        return Ok(vec![pre(
            CheckId::InpIndep,
            global(),
            real,
            zero,
            format!("after {} iterations the loss on real inputs ({real:.4e}) is not below the loss on zeroed inputs ({zero:.4e})", ctx.input_dependency_iterations),
        )]);
    }
    Ok(Vec::new())
}

/// What the single-batch fit observed.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub findings: Vec<Finding>,
    /// First iteration (1-based) after which the batch was fitted.
    pub iterations_to_fit: Option<usize>,
    pub final_loss: f64,
    pub final_metric: f64,
}

/// Whether the batch counts as fitted, judged in inference mode.
pub fn batch_fitted(trainer: &Trainer, x: &Tensor, y: &Tensor, ctx: &CheckContext) -> Result<(bool, f64)> {
    let pred = trainer.predict(x)?;
    if trainer.net.problem.is_classification() {
        let acc = MetricKind::Accuracy.evaluate(&pred, y);
        Ok((acc >= 1.0, acc))
    } else {
        let mae = MetricKind::MeanAbsoluteError.evaluate(&pred, y);
        Ok((mae <= ctx.overfit_mae, mae))
    }
}

pub(crate) fn divergence(iteration: u64, phase: Phase, loss: f64, ctx: &CheckContext) -> Finding {
    Finding {
        check: CheckId::DivLoss,
        phase,
        iteration: Some(iteration),
        layer: global(),
        metric: loss,
        threshold: ctx.div_low_bound,
        message: format!("loss became {loss}"),
    }
}

pub fn pre_check_single_batch_fit(
    program: &TrainingProgram,
    x: &Tensor,
    y: &Tensor,
    ctx: &CheckContext,
    seed: u64,
) -> Result<FitOutcome> {
    let mut trainer = program.fresh_trainer(seed);
    let mut losses = Vec::with_capacity(ctx.max_fit_iterations);
    let mut iterations_to_fit = None;
    let mut last_metric = f64::NAN;
    for it in 0..ctx.max_fit_iterations {
        let rec = trainer.step(x, y)?;
        let loss = rec.total_loss();
        if !loss.is_finite() {
            return Ok(FitOutcome {
                findings: vec![divergence(rec.iteration, Phase::PreTraining, loss, ctx)],
                iterations_to_fit,
                final_loss: loss,
                final_metric: last_metric,
            });
        }
        losses.push(loss);
        let (fitted, metric) = batch_fitted(&trainer, x, y, ctx)?;
        last_metric = metric;
        if fitted && iterations_to_fit.is_none() {
            iterations_to_fit = Some(it + 1);
        }
    }
    let mut findings = Vec::new();
    let (fitted, metric) = batch_fitted(&trainer, x, y, ctx)?;
    if !fitted {
        let (threshold, what) = if trainer.net.problem.is_classification() {
            (1.0, "accuracy")
        } else {
            (ctx.overfit_mae, "mean absolute error")
        };
        findings.push(pre(
            CheckId::UnFitBatch,
            global(),
            metric,
            threshold,
            format!("single batch not fitted after {} iterations ({what} {metric:.4e})", ctx.max_fit_iterations),
        ));
    }
    let final_loss = losses.last().copied().unwrap_or(f64::NAN);
    if final_loss < ctx.zero_loss_eps && losses.len() >= 3 {
        let sampled: Vec<f64> = losses.iter().skip(ctx.period - 1).step_by(ctx.period).copied().collect();
        let smooth = if sampled.len() >= 3 { smoothness_ratio(&sampled)? } else { smoothness_ratio(&losses)? };
        if smooth > ctx.zero_loss_smoothness {
            findings.push(pre(
                CheckId::ZeroLoss,
                global(),
                final_loss,
                ctx.zero_loss_eps,
                format!("loss reached {final_loss:.3e} along a smooth curve (smoothness {smooth:.3}); the program lacks regularization"),
            ));
        }
    }
    Ok(FitOutcome {
        findings,
        iterations_to_fit,
        final_loss,
        final_metric: metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::one_hot;
    use crate::nn::{init_parameters, ActivationKind, InitStrategy, NetworkBuilder, ProblemKind};

    fn column(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
    }

    fn classification(x: Tensor, labels: &[usize], k: usize) -> Dataset {
        Dataset::from_labels(x, labels, k).unwrap()
    }

    #[test]
    fn raw_pixels_flagged() {
        let x = column(&[0.0, 128.0, 255.0, 17.0]);
        let f = pre_check_data_scaling(&classification(x, &[0, 1, 0, 1], 2));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].check, CheckId::UnsInps);
    }

    #[test]
    fn z_scored_passes() {
        let v = [-1.5, -0.5, 0.5, 1.5];
        let m = v.iter().sum::<f64>() / 4.0;
        let s = (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 4.0).sqrt();
        let z: Vec<f64> = v.iter().map(|a| (a - m) / s).collect();
        assert!(pre_check_data_scaling(&classification(column(&z), &[0, 1, 0, 1], 2)).is_empty());
    }

    #[test]
    fn nan_cell_names_its_column() {
        let x = Tensor::from_rows(&[vec![0.0, 0.5], vec![1.0, f64::NAN], vec![0.2, 0.9]]).unwrap();
        let f = pre_check_data_scaling(&classification(x, &[0, 1, 0], 2));
        assert!(f.iter().any(|f| f.message.contains("column 1") && f.metric == 1.0));
    }

    #[test]
    fn squeezed_values_are_not_scaled() {
        assert!(!column_is_scaled(&[-0.004, 0.003, 0.001, -0.002]));
        assert!(column_is_scaled(&[0.0, 0.3, 0.9, 1.0]));
        assert!(column_is_scaled(&[-1.0, 0.2, 1.0]));
    }

    #[test]
    fn label_balance_examples() {
        let ctx = CheckContext::default();
        let ds = |counts: &[usize]| {
            let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(k, &c)| vec![k; c]).collect();
            classification(Tensor::zeros(&[labels.len(), 1]), &labels, counts.len())
        };
        assert!(pre_check_label_balance(&ds(&[100, 100]), &ctx).unwrap().0.is_empty());
        assert!(pre_check_label_balance(&ds(&[60, 40]), &ctx).unwrap().0.is_empty());
        let (f, e) = pre_check_label_balance(&ds(&[198, 2]), &ctx).unwrap();
        assert_eq!(f.len(), 1);
        let (p, q) = (0.99f64, 0.01f64);
        let oracle = -(p * p.ln() + q * q.ln()) / 2f64.ln();
        assert!((e.unwrap() - oracle).abs() < 1e-12);
    }

    fn relu_net(fan_in: usize) -> Network {
        NetworkBuilder::new(fan_in)
            .dense(64)
            .activation(ActivationKind::Relu)
            .dense(10)
            .activation(ActivationKind::Softmax)
            .build(ProblemKind::Classification { n_classes: 10 })
            .unwrap()
    }

    #[test]
    fn weight_init_rules() {
        let ctx = CheckContext::default();
        let mut net = relu_net(784);
        init_parameters(&mut net, InitStrategy::Constant { value: 0.05 }, &mut RngStream::new(1));
        let f = pre_check_weight_init(&net, &ctx).unwrap();
        assert!(f.iter().any(|f| f.check == CheckId::UnSymW));

        init_parameters(&mut net, InitStrategy::DummyNormal { std: 1.0 }, &mut RngStream::new(1));
        let f = pre_check_weight_init(&net, &ctx).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].check, CheckId::PiW);
        assert_eq!(f[0].threshold, 2.0 / 784.0);

        init_parameters(&mut net, InitStrategy::HeNormal, &mut RngStream::new(3));
        assert!(pre_check_weight_init(&net, &ctx).unwrap().is_empty());
    }

    #[test]
    fn bias_rules() {
        let ctx = CheckContext::default();
        let mut net = NetworkBuilder::new(1)
            .dense(2)
            .activation(ActivationKind::Softmax)
            .build(ProblemKind::Classification { n_classes: 2 })
            .unwrap();
        init_parameters(&mut net, InitStrategy::HeNormal, &mut RngStream::new(1));
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
        let ds = classification(Tensor::zeros(&[100, 1]), &labels, 2);
        let (_, e) = pre_check_label_balance(&ds, &ctx).unwrap();
        assert!(e.unwrap() < ctx.shannon_min);
        let f = pre_check_bias_init(&net, &ds, e, &ctx);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].check, CheckId::PiB);
        assert!((f[0].metric - 9f64.ln()).abs() < 1e-9);
        assert!(pre_check_bias_init(&net, &ds, Some(1.0), &ctx).is_empty());

        if let Layer::Dense(d) = &mut net.layers[0] {
            d.biases = None;
        }
        let f = pre_check_bias_init(&net, &ds, e, &ctx);
        assert_eq!(f[0].check, CheckId::MissB);
    }

    #[test]
    fn single_row_dependency_probe_is_silent() {
        let mut net = relu_net(3);
        init_parameters(&mut net, InitStrategy::HeNormal, &mut RngStream::new(2));
        let p = TrainingProgram {
            name: "t".into(),
            net: net.clone(),
            init: InitStrategy::HeNormal,
            loss: crate::nn::LossSpec::cross_entropy(),
            reg: RegularizationSpec::none(),
            optimizer: crate::nn::OptimizerSpec::sgd(0.1),
            metric: MetricKind::Accuracy,
            data: crate::program::DataBinding {
                input_scalers: vec![],
                output_scalers: vec![],
                shuffle: Default::default(),
                batch_size: 1,
                augmenter: None,
            },
            flip_gradient_sign: false,
            seed: 0,
        };
        let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
        let y = one_hot(&[1], 10).unwrap();
        assert!(pre_check_dependencies(&p, &net, &x, &y, &CheckContext::default()).unwrap().is_empty());
    }
}
