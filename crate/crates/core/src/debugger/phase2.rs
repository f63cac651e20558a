//! Hooks evaluated every `period` iterations while fitting the single batch.

use std::collections::{BTreeMap, HashMap};

use super::buffer::{NeuronSampler, RingBuffer, Snapshot};
use super::context::CheckContext;
use super::report::{global, layer_label, CheckId, Finding, Phase};
use crate::error::Result;
use crate::metrics::{f_test_variance, pearson_correlation, saturation_rho, smoothness_ratio, trend_test, TrendMode};
use crate::nn::{ActivationKind, Layer, Network, StepRecord};
use crate::tensor::{SummaryStats, Tensor};

/// A violation observed at one hook evaluation, before forbearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub check: CheckId,
    pub layer: String,
    pub metric: f64,
    pub threshold: f64,
    pub message: String,
}

fn cond(check: CheckId, layer: String, metric: f64, threshold: f64, message: String) -> Condition {
    Condition {
        check,
        layer,
        metric,
        threshold,
        message,
    }
}

/// Emits a condition once it has held for `periods` consecutive evaluations.
#[derive(Debug, Clone)]
pub struct Forbearance {
    periods: usize,
    streak: HashMap<(CheckId, String), usize>,
}

impl Forbearance {
    pub fn new(periods: usize) -> Self {
        Forbearance {
            periods: periods.max(1),
            streak: HashMap::new(),
        }
    }

    pub fn update(&mut self, conditions: Vec<Condition>, iteration: u64, phase: Phase) -> Vec<Finding> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for c in conditions {
            let key = (c.check, c.layer.clone());
            if !seen.insert(key.clone()) {
                continue;
            }
            let n = self.streak.entry(key).or_insert(0);
            *n += 1;
            if *n == self.periods {
                out.push(Finding {
                    check: c.check,
                    phase,
                    iteration: Some(iteration),
                    layer: c.layer,
                    metric: c.metric,
                    threshold: c.threshold,
                    message: c.message,
                });
            }
        }
        self.streak.retain(|k, _| seen.contains(k));
        out
    }
}

fn tail(values: &[f64], n: usize) -> &[f64] {
    &values[values.len().saturating_sub(n)..]
}

/// Loss-curve conditions over the per-hook loss series.
pub fn loss_curve_conditions(losses: &[f64], ctx: &CheckContext) -> Result<Vec<Condition>> {
    let mut out = Vec::new();
    let Some(&last) = losses.last() else { return Ok(out) };
    if !last.is_finite() {
        out.push(cond(CheckId::DivLoss, global(), last, ctx.div_low_bound, format!("loss became {last}")));
        return Ok(out);
    }
    if losses.len() < ctx.window {
        return Ok(out);
    }
    let w = tail(losses, ctx.window);
    let decays: Vec<f64> = w.windows(2).map(|p| (p[0] - p[1]) / p[0].abs().max(f64::MIN_POSITIVE)).collect();
    if decays.iter().all(|&d| d < ctx.min_loss_decay) {
        let best = decays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.push(cond(
            CheckId::SdLoss,
            global(),
            best,
            ctx.min_loss_decay,
            format!("loss decreased by at most {:.2}% per period over the last {} periods", best * 100.0, decays.len()),
        ));
    }
    let mut lowest = f64::INFINITY;
    let abs_ratio: Vec<f64> = losses
        .iter()
        .map(|&l| {
            lowest = lowest.min(l.abs());
            l.abs() / lowest.max(f64::MIN_POSITIVE)
        })
        .collect();
    if trend_test(&abs_ratio, TrendMode::Diverging { low_bound: ctx.div_low_bound }, ctx.window)? {
        let t = tail(losses, ctx.window);
        let growth = t.windows(2).map(|p| p[1] / p[0]).fold(f64::INFINITY, f64::min);
        out.push(cond(
            CheckId::DivLoss,
            global(),
            growth,
            ctx.div_low_bound,
            format!("loss grew by at least {growth:.2}x per period over the last {} periods", ctx.window - 1),
        ));
    }
    let smooth = smoothness_ratio(w)?;
    if smooth < ctx.fluct_smoothness_min {
        out.push(cond(
            CheckId::HfLoss,
            global(),
            smooth,
            ctx.fluct_smoothness_min,
            format!("loss curve smoothness {smooth:.2} over the last {} periods", ctx.window),
        ));
    }
    Ok(out)
}

pub fn correlation_conditions(losses: &[f64], metrics: &[f64], ctx: &CheckContext) -> Result<Vec<Condition>> {
    if losses.len() < 5 || losses.len() != metrics.len() {
        return Ok(Vec::new());
    }
    let r = pearson_correlation(losses, metrics)?;
    if r.abs() < ctx.corr_min {
        return Ok(vec![cond(
            CheckId::NrLoss,
            global(),
            r.abs(),
            ctx.corr_min,
            format!("loss and metric correlate weakly (r = {r:.3}) over {} periods", losses.len()),
        )]);
    }
    Ok(Vec::new())
}

/// Strict reading of the update-ratio bounds: the healthy band is the open
/// interval between them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateVerdict {
    Slow,
    Healthy,
    Fast,
}

pub fn update_verdict(log_ratio: f64, ctx: &CheckContext) -> UpdateVerdict {
    if log_ratio.is_nan() {
        UpdateVerdict::Healthy
    } else if log_ratio <= ctx.update_log_ratio_low {
        UpdateVerdict::Slow
    } else if log_ratio >= ctx.update_log_ratio_high {
        UpdateVerdict::Fast
    } else {
        UpdateVerdict::Healthy
    }
}

/// log₁₀(mean|ΔW| / mean|W|), with 0/0 read as no update at all.
pub fn update_log_ratio(delta_abs_mean: f64, weight_abs_mean: f64) -> f64 {
    if delta_abs_mean == 0.0 {
        f64::NEG_INFINITY
    } else if weight_abs_mean == 0.0 {
        f64::INFINITY
    } else {
        (delta_abs_mean / weight_abs_mean).log10()
    }
}

#[derive(Debug, Clone, Default)]
struct LayerSeries {
    grad: Vec<f64>,
    overreg: Vec<f64>,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

/// Watches a training run: buffers snapshots and turns them into findings.
#[derive(Debug, Clone)]
pub struct Monitor {
    ctx: CheckContext,
    sampler: NeuronSampler,
    buffer: RingBuffer<Snapshot>,
    losses: Vec<f64>,
    metrics: Vec<f64>,
    layers: BTreeMap<usize, LayerSeries>,
    forbearance: Forbearance,
    targets: Tensor,
    output_layer: Option<usize>,
    classification: bool,
    evaluations: usize,
}

impl Monitor {
    pub fn new(net: &Network, targets: &Tensor, ctx: &CheckContext, seed: u64) -> Self {
        let last_dense = net.dense_layers().last().copied();
        let output_layer = last_dense.and_then(|d| {
            (d + 1..net.layers.len()).find(|&i| matches!(net.layers[i], Layer::Activation { .. }))
        });
        Monitor {
            ctx: ctx.clone(),
            sampler: NeuronSampler::new(net, ctx.max_sampled_neurons, seed),
            buffer: RingBuffer::new(ctx.buffer_size),
            losses: Vec::new(),
            metrics: Vec::new(),
            layers: BTreeMap::new(),
            forbearance: Forbearance::new(ctx.forbearance_periods),
            targets: targets.clone(),
            output_layer,
            classification: net.problem.is_classification(),
            evaluations: 0,
        }
    }

    pub fn buffer(&self) -> &RingBuffer<Snapshot> {
        &self.buffer
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    /// Records the state after one optimizer step. Reads only.
    pub fn record(&mut self, record: &StepRecord, net: &Network, metric: f64) {
        self.buffer.push(Snapshot::capture(record, net, metric, &self.sampler));
    }

    /// Runs every hook on the buffered state and applies forbearance.
    pub fn evaluate(&mut self) -> Result<Vec<Finding>> {
        let Some(last) = self.buffer.last() else { return Ok(Vec::new()) };
        let iteration = last.iteration;
        self.evaluations += 1;
        let n = self.buffer.len() as f64;
        let mean_loss = self.buffer.iter().map(|s| s.loss).sum::<f64>() / n;
        let mean_metric = self.buffer.iter().map(|s| s.metric).sum::<f64>() / n;
        self.losses.push(mean_loss);
        self.metrics.push(mean_metric);
        let mut conditions = loss_curve_conditions(&self.losses, &self.ctx)?;
        conditions.extend(correlation_conditions(&self.losses, &self.metrics, &self.ctx)?);
        conditions.extend(self.gradient_conditions()?);
        conditions.extend(self.parameter_conditions()?);
        conditions.extend(self.activation_conditions()?);
        Ok(self.forbearance.update(conditions, iteration, Phase::OnTraining))
    }

    /// Output-law finding on the latest record, reported at once. Used when
    /// training cannot continue long enough for forbearance.
    pub fn output_findings(&self) -> Vec<Finding> {
        let Some(last) = self.buffer.last() else { return Vec::new() };
        self.output_condition()
            .map(|c| Finding {
                check: c.check,
                phase: Phase::OnTraining,
                iteration: Some(last.iteration),
                layer: c.layer,
                metric: c.metric,
                threshold: c.threshold,
                message: c.message,
            })
            .into_iter()
            .collect()
    }

    fn gradient_conditions(&mut self) -> Result<Vec<Condition>> {
        let ctx = &self.ctx;
        let n = self.buffer.len() as f64;
        let last = self.buffer.last().expect("non-empty");
        let mut out = Vec::new();
        for (k, d) in last.dense.iter().enumerate() {
            let grad = self.buffer.iter().map(|s| s.dense[k].data_grad_abs_mean).sum::<f64>() / n;
            let pen = self.buffer.iter().map(|s| s.dense[k].penalty_grad_abs_mean).sum::<f64>() / n;
            let w = self.buffer.iter().map(|s| s.dense[k].weights.abs_mean()).sum::<f64>() / n;
            let b = last.dense[k].biases.as_ref().map(Tensor::abs_mean);
            let series = self.layers.entry(d.layer).or_default();
            series.grad.push(grad);
            series.weight.push(w);
            if let Some(b) = b {
                series.bias.push(b);
            }
            if pen > 0.0 {
                series.overreg.push(if grad > 0.0 { pen / grad } else { f64::INFINITY });
            }
            let label = layer_label(d.layer, "dense");
            let tail_all_tiny = series.grad.len() >= ctx.window && tail(&series.grad, ctx.window).iter().all(|&g| g < 1e-10);
            if tail_all_tiny
                || (series.grad.len() >= ctx.window
                    && trend_test(&series.grad, TrendMode::Vanishing { high_bound: ctx.van_high_bound }, ctx.window)?)
            {
                out.push(cond(
                    CheckId::VanGrad,
                    label.clone(),
                    grad,
                    ctx.van_high_bound,
                    format!("mean gradient magnitude {grad:.3e} keeps shrinking"),
                ));
            }
            if series.grad.len() >= ctx.window
                && trend_test(&series.grad, TrendMode::Diverging { low_bound: ctx.div_low_bound }, ctx.window)?
            {
                out.push(cond(
                    CheckId::DivGrad,
                    label.clone(),
                    grad,
                    ctx.div_low_bound,
                    format!("mean gradient magnitude {grad:.3e} keeps growing"),
                ));
            }
            if series.overreg.len() >= ctx.window
                && trend_test(&series.overreg, TrendMode::Diverging { low_bound: ctx.div_low_bound }, ctx.window)?
            {
                let r = *series.overreg.last().expect("non-empty");
                out.push(cond(
                    CheckId::OverRegLoss,
                    label,
                    r,
                    ctx.div_low_bound,
                    format!("penalty gradient now {r:.3e} times the data gradient and growing"),
                ));
            }
        }
        Ok(out)
    }

    fn parameter_conditions(&mut self) -> Result<Vec<Condition>> {
        let ctx = &self.ctx;
        let first = self.buffer.first().expect("non-empty");
        let last = self.buffer.last().expect("non-empty");
        let n = self.buffer.len() as f64;
        let converged = match (self.losses.first(), self.losses.last()) {
            (Some(&a), Some(&b)) => b < ctx.converged_loss_fraction * a,
            _ => false,
        };
        let mut out = Vec::new();
        for (k, d) in last.dense.iter().enumerate() {
            let label = layer_label(d.layer, "dense");
            if self.buffer.len() >= 2 && first.dense[k].weights == d.weights && first.dense[k].biases == d.biases {
                out.push(cond(
                    CheckId::UntrainedW,
                    label.clone(),
                    0.0,
                    0.0,
                    format!("parameters unchanged over the last {} iterations", self.buffer.len()),
                ));
            }
            let w = d.weights.data();
            let total = w.len() as f64;
            let dead = w.iter().filter(|v| v.abs() < ctx.dead_value_eps).count() as f64 / total;
            if dead > ctx.weight_extreme_ratio {
                out.push(cond(CheckId::DeadW, label.clone(), dead, ctx.weight_extreme_ratio, format!("{:.1}% of weights are near zero", dead * 100.0)));
            }
            let neg = w.iter().filter(|&&v| v < 0.0).count() as f64 / total;
            if neg > ctx.weight_extreme_ratio {
                out.push(cond(CheckId::NegW, label.clone(), neg, ctx.weight_extreme_ratio, format!("{:.1}% of weights are negative", neg * 100.0)));
            }
            let delta = self.buffer.iter().map(|s| s.dense[k].weight_delta_abs_mean).sum::<f64>() / n;
            let mag = self.buffer.iter().map(|s| s.dense[k].weights.abs_mean()).sum::<f64>() / n;
            let lr = update_log_ratio(delta, mag);
            match update_verdict(lr, ctx) {
                UpdateVerdict::Slow if !converged => out.push(cond(
                    CheckId::WUpSlow,
                    label.clone(),
                    lr,
                    ctx.update_log_ratio_low,
                    format!("log10 update ratio {lr:.2} is at or below {}", ctx.update_log_ratio_low),
                )),
                UpdateVerdict::Fast => out.push(cond(
                    CheckId::WUpFast,
                    label.clone(),
                    lr,
                    ctx.update_log_ratio_high,
                    format!("log10 update ratio {lr:.2} is at or above {}", ctx.update_log_ratio_high),
                )),
                _ => {}
            }
            let series = &self.layers[&d.layer];
            let div = TrendMode::Diverging { low_bound: ctx.div_low_bound };
            if series.weight.len() >= ctx.window && trend_test(&series.weight, div, ctx.window)? {
                out.push(cond(CheckId::DivW, label.clone(), mag, ctx.div_low_bound, format!("mean weight magnitude {mag:.3e} keeps growing")));
            }
            if series.bias.len() >= ctx.window && trend_test(&series.bias, div, ctx.window)? {
                let b = *series.bias.last().expect("non-empty");
                out.push(cond(CheckId::DivB, label, b, ctx.div_low_bound, format!("mean bias magnitude {b:.3e} keeps growing")));
            }
        }
        Ok(out)
    }

    fn activation_conditions(&self) -> Result<Vec<Condition>> {
        let ctx = &self.ctx;
        let mut out = Vec::new();
        let last = self.buffer.last().expect("non-empty");
        if let Some(c) = self.output_condition() {
            out.push(c);
        }
        for (a_idx, a) in last.activations.iter().enumerate() {
            if Some(a.layer) == self.output_layer {
                continue;
            }
            let label = layer_label(a.layer, a.kind.name());
            let cols = a.sample.cols();
            let per_neuron: Vec<Vec<f64>> = (0..cols)
                .map(|c| self.buffer.iter().flat_map(|s| s.activations[a_idx].sample.column(c)).collect())
                .collect();
            let pooled: Vec<f64> = per_neuron.iter().flatten().copied().collect();
            if pooled.is_empty() {
                continue;
            }
            let (lo, hi) = a.kind.bounds();
            let violation = pooled
                .iter()
                .map(|&v| if v.is_nan() { f64::INFINITY } else { (lo - v).max(v - hi).max(0.0) })
                .fold(0.0, f64::max);
            if violation > 1e-6 {
                out.push(cond(
                    CheckId::OutRangeAct,
                    label.clone(),
                    violation,
                    1e-6,
                    format!("activations leave the {} range by {violation:.3e}", a.kind.name()),
                ));
                continue;
            }
            if a.kind.is_saturating() {
                let mut saturated = 0usize;
                for v in &per_neuron {
                    if saturation_rho(v, a.kind, ctx.sat_bins)? > ctx.sat_rho_min {
                        saturated += 1;
                    }
                }
                let frac = saturated as f64 / cols as f64;
                if frac > ctx.sat_layer_ratio {
                    out.push(cond(CheckId::SatAct, label.clone(), frac, ctx.sat_layer_ratio, format!("{:.0}% of sampled neurons are saturated", frac * 100.0)));
                }
            }
            if a.kind.is_relu_like() {
                let mut dead = 0usize;
                for v in &per_neuron {
                    if SummaryStats::from_values(v)?.percentile(95.0) < ctx.dead_value_eps {
                        dead += 1;
                    }
                }
                let frac = dead as f64 / cols as f64;
                if frac > ctx.dead_layer_ratio {
                    out.push(cond(CheckId::DeadRelu, label.clone(), frac, ctx.dead_layer_ratio, format!("{:.0}% of sampled neurons never activate", frac * 100.0)));
                }
            }
            let scale = if matches!(a.kind, ActivationKind::Sigmoid) { 2.0 } else { 1.0 };
            let stats = SummaryStats::from_values(&pooled)?;
            let std = stats.std * scale;
            let n = pooled.len();
            if n >= 2 {
                let var = std * std * n as f64 / (n - 1) as f64;
                if std < ctx.act_std_min {
                    let t = ctx.act_std_min * ctx.act_std_min;
                    if !f_test_variance(var, n, t, ctx.alpha)?.passed() {
                        out.push(cond(CheckId::UnsActLs, label.clone(), std, ctx.act_std_min, format!("activation std {std:.3} below {}", ctx.act_std_min)));
                    }
                } else if std > ctx.act_std_max {
                    let t = ctx.act_std_max * ctx.act_std_max;
                    if !f_test_variance(var, n, t, ctx.alpha)?.passed() {
                        out.push(cond(CheckId::UnsActHs, label, std, ctx.act_std_max, format!("activation std {std:.3} above {}", ctx.act_std_max)));
                    }
                }
            }
        }
        Ok(out)
    }

    fn output_condition(&self) -> Option<Condition> {
        let last = self.buffer.last()?;
        let label = match self.output_layer {
            Some(i) => layer_label(i, last.activations.iter().find(|a| a.layer == i).map_or("output", |a| a.kind.name())),
            None => "output".to_string(),
        };
        if self.classification {
            let mut worst: f64 = 0.0;
            for s in self.buffer.iter() {
                for r in 0..s.output.rows() {
                    let row = s.output.row(r);
                    for &p in row {
                        let v = if p.is_nan() { f64::INFINITY } else { (-p).max(p - 1.0).max(0.0) };
                        worst = worst.max(v);
                    }
                    let sum: f64 = row.iter().sum();
                    let v = if sum.is_nan() { f64::INFINITY } else { (sum - 1.0).abs() };
                    worst = worst.max(v);
                }
            }
            if worst > 1e-6 {
                return Some(cond(
                    CheckId::InvOuts,
                    label,
                    worst,
                    1e-6,
                    format!("outputs are not probability vectors (largest violation {worst:.3e})"),
                ));
            }
            return None;
        }
        let kind = self.output_layer.and_then(|i| last.activations.iter().find(|a| a.layer == i)).map(|a| a.kind)?;
        let (lo, hi) = kind.bounds();
        let t = self.targets.data();
        let outside = t.iter().filter(|&&v| v < lo - 1e-6 || v > hi + 1e-6).count() as f64 / t.len().max(1) as f64;
        if outside > 0.0 {
            return Some(cond(
                CheckId::InvOuts,
                label,
                outside,
                0.0,
                format!("{:.1}% of targets lie outside the {} output range", outside * 100.0, kind.name()),
            ));
        }
        None
    }
}
