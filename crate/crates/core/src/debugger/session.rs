use std::time::Instant;

use super::context::CheckContext;
use super::phase1::{self, batch_fitted};
use super::phase2::Monitor;
use super::phase3;
use super::report::{CheckId, CheckReport, Finding, Phase, PhaseSummary, SessionEcho};
use crate::data::{stratified_single_batch, Dataset};
use crate::error::Result;
use crate::program::TrainingProgram;
use crate::tensor::{RngStream, Tensor};

/// Runs `a` and `b`, on two threads when `parallel` is set.
fn both<A, B, RA, RB>(parallel: bool, a: A, b: B) -> (RA, RB)
where
    A: FnOnce() -> RA + Send,
    B: FnOnce() -> RB + Send,
    RA: Send,
    RB: Send,
{
    if parallel {
        rayon::join(a, b)
    } else {
        (a(), b())
    }
}

/// Rows each check runs on: the stratified single batch.
pub fn single_batch(ds: &Dataset, ctx: &CheckContext, seed: u64) -> Result<(Tensor, Tensor)> {
    let per = if ds.problem.is_classification() { ctx.per_class } else { ctx.regression_batch };
    stratified_single_batch(ds, per, &mut RngStream::new(seed).split(0x5342))
}

/// Seeded split into (train, validation).
pub fn validation_split(ds: &Dataset, ctx: &CheckContext, seed: u64) -> (Dataset, Dataset) {
    let n_val = ((ds.len() as f64 * ctx.validation_fraction).round() as usize).clamp(2, ds.len().saturating_sub(2).max(2));
    let order = RngStream::new(seed).split(0x5641).permutation(ds.len());
    let (val, train) = order.split_at(n_val.min(ds.len()));
    (ds.subset(train), ds.subset(val))
}

fn is_fatal(f: &Finding) -> bool {
    f.check == CheckId::DivLoss && !f.metric.is_finite() && f.phase != Phase::PreTraining
}

struct Recorder<'a> {
    report: CheckReport,
    ctx: &'a CheckContext,
    stopped: bool,
}

impl Recorder<'_> {
    /// Appends findings; returns true when the session must stop.
    fn push(&mut self, findings: Vec<Finding>) -> bool {
        for f in findings {
            let fatal = is_fatal(&f);
            self.report.findings.push(f);
            if fatal {
                self.report.aborted = Some("loss is no longer finite".into());
                self.stopped = true;
                return true;
            }
            if self.ctx.failed_on {
                self.report.aborted = Some("failed_on: stopped at the first finding".into());
                self.stopped = true;
                return true;
            }
        }
        false
    }

    fn close_phase(&mut self, phase: Phase, start: Instant, first_finding: usize) {
        let n = self.report.findings.len() - first_finding;
        self.report.phases.push(PhaseSummary {
            phase,
            passed: n == 0,
            findings: n,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
}

/// Executes the selected phases of a debugging session on `raw`.
pub fn run_session(program: &TrainingProgram, raw: &Dataset, ctx: &CheckContext, phases: &[Phase]) -> Result<CheckReport> {
    ctx.validate()?;
    program.validate()?;
    let mut phases = phases.to_vec();
    phases.sort();
    phases.dedup();
    let seed = program.seed;
    let prepared = program.prepare(raw)?;
    let ds = &prepared.dataset;
    let (x, y) = single_batch(ds, ctx, seed)?;
    let mut rec = Recorder {
        report: CheckReport::new(SessionEcho {
            program: program.name.clone(),
            seed,
            phases: phases.clone(),
            context: ctx.clone(),
        }),
        ctx,
        stopped: false,
    };
    for phase in phases {
        if rec.stopped {
            break;
        }
        let start = Instant::now();
        let first = rec.report.findings.len();
        match phase {
            Phase::PreTraining => pre_training(program, ds, &x, &y, ctx, &mut rec)?,
            Phase::OnTraining => on_training(program, &x, &y, ctx, &mut rec)?,
            Phase::PostTraining => post_training(program, ds, ctx, &mut rec)?,
        }
        rec.close_phase(phase, start, first);
    }
    Ok(rec.report)
}

fn pre_training(
    program: &TrainingProgram,
    ds: &Dataset,
    x: &Tensor,
    y: &Tensor,
    ctx: &CheckContext,
    rec: &mut Recorder,
) -> Result<()> {
    let seed = program.seed;
    if rec.push(phase1::pre_check_data_scaling(ds)) {
        return Ok(());
    }
    let (f, equitability) = phase1::pre_check_label_balance(ds, ctx)?;
    if rec.push(f) {
        return Ok(());
    }
    let net = program.initialized_network(seed);
    if rec.push(phase1::pre_check_weight_init(&net, ctx)?) {
        return Ok(());
    }
    if rec.push(phase1::pre_check_bias_init(&net, ds, equitability, ctx)) {
        return Ok(());
    }
    let balanced = equitability.is_none_or(|e| e >= ctx.shannon_min);
    if rec.push(phase1::pre_check_initial_loss(program, &net, x, y, balanced, ctx)?) {
        return Ok(());
    }
    if rec.push(phase1::pre_check_dependencies(program, &net, x, y, ctx)?) {
        return Ok(());
    }
    let ((grad, input), fit) = both(
        ctx.parallel,
        || {
            both(
                ctx.parallel,
                || phase1::pre_check_gradient(program, x, y, ctx, seed),
                || phase1::pre_check_input_dependency(program, x, y, ctx, seed),
            )
        },
        || phase1::pre_check_single_batch_fit(program, x, y, ctx, seed),
    );
    if rec.push(grad?) || rec.push(input?) {
        return Ok(());
    }
    rec.push(fit?.findings);
    Ok(())
}

/// Monitored fitting of the single batch. Stops early once the batch is
/// fitted and the forbearance window has been observed.
fn on_training(program: &TrainingProgram, x: &Tensor, y: &Tensor, ctx: &CheckContext, rec: &mut Recorder) -> Result<()> {
    let seed = program.seed;
    let mut trainer = program.fresh_trainer(seed);
    let mut monitor = Monitor::new(&trainer.net, y, ctx, seed);
    for it in 0..ctx.max_fit_iterations {
        let step = trainer.step(x, y)?;
        let loss = step.total_loss();
        if !loss.is_finite() {
            monitor.record(&step, &trainer.net, f64::NAN);
            if rec.push(monitor.output_findings()) {
                return Ok(());
            }
            rec.push(vec![phase1::divergence(step.iteration, Phase::OnTraining, loss, ctx)]);
            return Ok(());
        }
        let metric = program.metric.evaluate(step.trace.prediction(), y);
        monitor.record(&step, &trainer.net, metric);
        if (it + 1) % ctx.period == 0 {
            if rec.push(monitor.evaluate()?) {
                return Ok(());
            }
            if monitor.evaluations() >= ctx.forbearance_periods && batch_fitted(&trainer, x, y, ctx)?.0 {
                break;
            }
        }
    }
    Ok(())
}

fn post_training(program: &TrainingProgram, ds: &Dataset, ctx: &CheckContext, rec: &mut Recorder) -> Result<()> {
    let seed = program.seed;
    let (train, val) = validation_split(ds, ctx, seed);
    let has_aug = program.data.augmenter.is_some();
    let (run, plain) = both(
        ctx.parallel,
        || phase3::train_epochs(program, &train, ctx.post_epochs, seed, true),
        || {
            if has_aug {
                phase3::train_epochs(program, &train, ctx.post_epochs, seed, false).map(Some)
            } else {
                Ok(None)
            }
        },
    );
    let run = run?;
    if let Some((it, loss)) = run.diverged {
        rec.push(vec![phase1::divergence(it, Phase::PostTraining, loss, ctx)]);
        return Ok(());
    }
    if rec.push(phase3::post_check_corrupted_labels(&run.first_losses, ctx)?) {
        return Ok(());
    }
    if let Some(plain) = plain? {
        if plain.diverged.is_none()
            && rec.push(phase3::post_check_augmentation(program, &run.trainer.net, &plain.trainer.net, &val.x, &val.y, ctx)?)
        {
            return Ok(());
        }
    }
    rec.push(phase3::post_check_mode_transfer(program, &run.trainer.net, &val.x, &val.y, ctx, run.trainer.iteration())?);
    Ok(())
}
