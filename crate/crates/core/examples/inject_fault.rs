//! Injects one fault into a reference program, shows what changed, and
//! debugs both versions side by side.

use fitprobe::debugger::{run_session, CheckContext, Phase};
use fitprobe::faults::{base_program, catalog_entry, inject_fault, symptom_gate, BaseProgramId, FaultId};

fn main() -> fitprobe::Result<()> {
    let fault: FaultId = std::env::args().nth(1).as_deref().unwrap_or("missing-softmax").parse()?;
    let id: BaseProgramId = std::env::args().nth(2).as_deref().unwrap_or("S").parse()?;
    let entry = catalog_entry(fault, id)?;
    println!("{}: {}", entry.label(), fault.description());
    println!("expected checks: {:?}", entry.expected.iter().map(|c| c.name()).collect::<Vec<_>>());

    let ctx = CheckContext::default();
    let clean = base_program(id, 7)?;
    let faulty = inject_fault(&clean, fault)?;
    let gate = symptom_gate(&clean, &faulty, &ctx)?;
    println!("symptom gate accepted={} ({})", gate.accepted, gate.reason);

    for (name, setup) in [("clean", &clean), ("faulty", &faulty)] {
        let r = run_session(&setup.program, &setup.train, &ctx, &Phase::ALL)?;
        let fired: Vec<&str> = r.findings.iter().map(|f| f.check.name()).collect();
        println!("{name:<6} fired {fired:?}");
    }
    Ok(())
}
