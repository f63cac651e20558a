//! Three-phase training debugger: checks before training, hooks while
//! fitting a single batch, and checks on fully trained copies.

mod buffer;
mod context;
pub mod phase1;
pub mod phase2;
pub mod phase3;
mod report;
mod session;

pub use buffer::{ActivationSnapshot, DenseSnapshot, NeuronSampler, RingBuffer, Snapshot};
pub use context::CheckContext;
pub use phase2::{Condition, Forbearance, Monitor};
pub use report::{flex_f64, parse_phases, CheckId, CheckReport, Finding, Phase, PhaseSummary, SessionEcho, SCHEMA_VERSION};
pub use session::{run_session, single_batch, validation_split};
