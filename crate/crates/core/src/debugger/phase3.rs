//! Checks on fully trained copies of the program.

use super::context::CheckContext;
use super::report::{global, layer_label, CheckId, Finding, Phase};
use crate::data::{augment, BatchStream, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{linear_cka, slope_significance, SlopeOutcome};
use crate::nn::{forward_pass, ForwardMode, Network, Trainer};
use crate::program::TrainingProgram;
use crate::tensor::{RngStream, Tensor};

fn post(check: CheckId, layer: String, metric: f64, threshold: f64, message: String) -> Finding {
    Finding {
        check,
        phase: Phase::PostTraining,
        iteration: None,
        layer,
        metric,
        threshold,
        message,
    }
}

/// A trained copy and what was seen on the way.
#[derive(Debug, Clone)]
pub struct EpochRun {
    pub trainer: Trainer,
    /// Data loss of the first iteration of every epoch.
    pub first_losses: Vec<f64>,
    /// Iteration and loss value, if the loss stopped being finite.
    pub diverged: Option<(u64, f64)>,
}

/// Trains a fresh copy of `program` for `epochs` passes over `ds`.
pub fn train_epochs(program: &TrainingProgram, ds: &Dataset, epochs: usize, seed: u64, with_augmenter: bool) -> Result<EpochRun> {
    let mut trainer = program.fresh_trainer(seed);
    let batch = program.data.batch_size.min(ds.len());
    let mut stream = BatchStream::new(batch, RngStream::new(seed).split(0x5348).next_u64(), program.data.shuffle);
    let mut aug_rng = RngStream::new(seed).split(0x4155);
    let augmenter = program.data.augmenter.as_ref().filter(|_| with_augmenter);
    let per_epoch = stream.batches_per_epoch(ds);
    let mut first_losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        for b in 0..per_epoch {
            let (mut x, y) = stream.next_batch(ds)?;
            if let Some(spec) = augmenter {
                x = augment(&x, spec, &mut aug_rng)?;
            }
            if x.rows() < 2 && trainer.net.has_batchnorm() {
                continue;
            }
            let rec = trainer.step(&x, &y)?;
            if !rec.data_loss.is_finite() {
                return Ok(EpochRun {
                    trainer,
                    first_losses,
                    diverged: Some((rec.iteration, rec.data_loss)),
                });
            }
            if b == 0 {
                first_losses.push(rec.data_loss);
            }
        }
    }
    Ok(EpochRun {
        trainer,
        first_losses,
        diverged: None,
    })
}

/// Output of the last hidden activation layer, or of the last layer before
/// the output when there is none.
pub fn last_hidden(net: &Network, x: &Tensor, mode: ForwardMode) -> Result<(usize, Tensor)> {
    let trace = forward_pass(net, x, mode)?;
    let idx = match net.hidden_activation_layers().last() {
        Some(&i) => i,
        None => trace.outputs.len().saturating_sub(2),
    };
    Ok((idx, trace.outputs[idx].clone()))
}

pub fn post_check_corrupted_labels(first_losses: &[f64], ctx: &CheckContext) -> Result<Vec<Finding>> {
    if first_losses.len() < 4 {
        return Err(Error::TooFewSamples {
            what: "corrupted-label check (epochs)",
            need: 4,
            got: first_losses.len(),
        });
    }
    let n = first_losses.len();
    let w = ctx.window.min(n / 2);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (head, tail) = (mean(&first_losses[..w]), mean(&first_losses[n - w..]));
    let drop = (head - tail) / head;
    let n_epochs = first_losses.len();
    match slope_significance(first_losses, ctx.alpha)? {
        SlopeOutcome::Improving { .. } if drop >= ctx.corrupted_min_drop => Ok(Vec::new()),
        SlopeOutcome::Improving { slope, .. } => Ok(vec![post(
            CheckId::CorruptedLabels,
            global(),
            drop,
            ctx.corrupted_min_drop,
            format!(
                "first-iteration losses over {n_epochs} epochs fell by only {:.1}% (slope {slope:.3e})",
                100.0 * drop
            ),
        )]),
        SlopeOutcome::NotImproving { slope, p_value } => Ok(vec![post(
            CheckId::CorruptedLabels,
            global(),
            p_value,
            ctx.alpha,
            format!("first-iteration losses over {n_epochs} epochs show no significant decrease (slope {slope:.3e}, p = {p_value:.3})"),
        )]),
    }
}

/// Compares copies trained with and without augmentation on a validation
/// sample.
pub fn post_check_augmentation(
    program: &TrainingProgram,
    augmented: &Network,
    original: &Network,
    val_x: &Tensor,
    val_y: &Tensor,
    ctx: &CheckContext,
) -> Result<Vec<Finding>> {
    let loss = |net: &Network| -> Result<f64> {
        let t = forward_pass(net, val_x, ForwardMode::Inference)?;
        program.loss.value(t.prediction(), val_y)
    };
    let (la, lo) = (loss(augmented)?, loss(original)?);
    let (idx, ha) = last_hidden(augmented, val_x, ForwardMode::Inference)?;
    let (_, ho) = last_hidden(original, val_x, ForwardMode::Inference)?;
    let cka = linear_cka(&ha, &ho)?;
    if la > lo && cka < ctx.cka_augm_min {
        return Ok(vec![post(
            CheckId::ShiftedAugmentedData,
            layer_label(idx, augmented.layers[idx].kind_name()),
            cka,
            ctx.cka_augm_min,
            format!("augmented training raised the validation loss ({la:.4} vs {lo:.4}) and its representation drifted (CKA {cka:.3})"),
        )]);
    }
    Ok(Vec::new())
}

/// Same batch through training mode and inference mode.
pub fn post_check_mode_transfer(
    program: &TrainingProgram,
    net: &Network,
    x: &Tensor,
    y: &Tensor,
    ctx: &CheckContext,
    step: u64,
) -> Result<Vec<Finding>> {
    if !net.has_dropout() && !net.has_batchnorm() {
        return Ok(Vec::new());
    }
    let train = forward_pass(net, x, ForwardMode::Train { step })?;
    let infer = forward_pass(net, x, ForwardMode::Inference)?;
    let lt = program.loss.value(train.prediction(), y)?;
    let li = program.loss.value(infer.prediction(), y)?;
    let idx = net.hidden_activation_layers().last().copied().unwrap_or(0);
    let cka = linear_cka(&train.outputs[idx], &infer.outputs[idx])?;
    let rel = (lt - li).abs() / lt.abs().max(f64::MIN_POSITIVE);
    let label = layer_label(idx, net.layers[idx].kind_name());
    if !(cka >= ctx.cka_mode_min) {
        return Ok(vec![post(
            CheckId::UnsModeTr,
            label,
            cka,
            ctx.cka_mode_min,
            format!("training and inference representations disagree (CKA {cka:.3})"),
        )]);
    }
    if !(rel <= ctx.mode_loss_rel_max) {
        return Ok(vec![post(
            CheckId::UnsModeTr,
            global(),
            rel,
            ctx.mode_loss_rel_max,
            format!("loss moves from {lt:.4} in training mode to {li:.4} in inference mode"),
        )]);
    }
    Ok(Vec::new())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_labels_needs_four_epochs() {
        let ctx = CheckContext::default();
        assert!(post_check_corrupted_labels(&[2.3, 2.2], &ctx).is_err());
        let falling: Vec<f64> = (0..10).map(|i| 2.3 * 0.6f64.powi(i)).collect();
        assert!(post_check_corrupted_labels(&falling, &ctx).unwrap().is_empty());
        let flat = [2.30, 2.31, 2.29, 2.30, 2.32, 2.28, 2.31, 2.30];
        let f = post_check_corrupted_labels(&flat, &ctx).unwrap();
        assert_eq!(f[0].check, CheckId::CorruptedLabels);
    }

    #[test]
    fn slow_drift_towards_chance_is_flagged() {
        let ctx = CheckContext::default();
        let drift: Vec<f64> = (0..30).map(|i| 2.40 - 0.002 * i as f64).collect();
        let f = post_check_corrupted_labels(&drift, &ctx).unwrap();
        assert_eq!(f.len(), 1);
        assert!(f[0].metric < 0.05);
    }
}
