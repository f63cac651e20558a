//! Per-phase cost and monitoring overhead on each reference program.

use fitprobe::cli::{cmd_timing, DEFAULT_SEED};
use fitprobe::debugger::{CheckContext, Phase};
use fitprobe::faults::BaseProgramId;

fn main() -> fitprobe::Result<()> {
    let ctx = CheckContext::default();
    for id in BaseProgramId::ALL {
        let t = cmd_timing(id, DEFAULT_SEED, &ctx, &Phase::ALL)?;
        print!("{}", t.to_text());
    }
    Ok(())
}
