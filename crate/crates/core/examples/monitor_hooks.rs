//! A hand-written training loop with the on-training monitor attached,
//! run on a program whose learning rate is far too small.

use fitprobe::debugger::{single_batch, CheckContext, Monitor};
use fitprobe::faults::{base_program, inject_fault, BaseProgramId, FaultId};

fn main() -> fitprobe::Result<()> {
    let ctx = CheckContext::default();
    let setup = inject_fault(&base_program(BaseProgramId::ShallowFnn, 7)?, FaultId::LowLearningRate)?;
    let program = &setup.program;
    let prep = program.prepare(&setup.train)?;
    let (x, y) = single_batch(&prep.dataset, &ctx, program.seed)?;

    let mut trainer = program.fresh_trainer(program.seed);
    let mut monitor = Monitor::new(&trainer.net, &y, &ctx, program.seed);
    for it in 0..ctx.max_fit_iterations {
        let step = trainer.step(&x, &y)?;
        let metric = program.metric.evaluate(step.trace.prediction(), &y);
        monitor.record(&step, &trainer.net, metric);
        if (it + 1) % ctx.period == 0 {
            for f in monitor.evaluate()? {
                println!("iteration {:>3} {:<12} {:<16} metric {:.4} threshold {}", it + 1, f.check.name(), f.layer, f.metric, f.threshold);
            }
        }
    }
    println!("{} hook evaluations", monitor.evaluations());
    Ok(())
}
