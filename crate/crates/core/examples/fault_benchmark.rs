//! Injects every catalogued fault into its base program, runs a debugging
//! session on each and prints the detection matrix.

use fitprobe::debugger::CheckContext;
use fitprobe::faults::{catalog, run_benchmark};

fn main() -> fitprobe::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(fitprobe::cli::DEFAULT_SEED);
    let m = run_benchmark(&catalog(), seed, &CheckContext::default())?;
    print!("{}", m.to_text());
    println!("took {:.1}s", m.seconds);
    Ok(())
}
