//! Clean reference programs, the catalog of injectable faults and the
//! detection-matrix harness.

mod base;
mod bench;
mod catalog;

pub use base::{base_program, blob_split, mild_augmenter, BaseProgramId, BaseSetup, N_CLASSES, TRAIN_PER_CLASS};
pub use bench::{run_benchmark, symptom_gate, test_performance, CleanResult, DetectionMatrix, PairResult, Score, SymptomGate};
pub use catalog::{catalog, catalog_entry, inject_fault, CatalogEntry, FaultCategory, FaultId, NOT_APPLICABLE};
