//! Runs the full debugger on each clean reference program.

use fitprobe::debugger::{run_session, CheckContext, Phase};
use fitprobe::faults::{base_program, BaseProgramId};

fn main() -> fitprobe::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(fitprobe::cli::DEFAULT_SEED);
    let ctx = CheckContext::default();
    for id in BaseProgramId::ALL {
        let base = base_program(id, seed)?;
        let report = run_session(&base.program, &base.train, &ctx, &Phase::ALL)?;
        println!("{id}: {} finding(s)", report.findings.len());
        print!("{}", report.to_text());
    }
    Ok(())
}
