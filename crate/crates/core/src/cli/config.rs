use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, DataFormat, Dataset};
use crate::debugger::{CheckContext, Phase, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::faults::{base_program, inject_fault, BaseProgramId, FaultId};
use crate::program::TrainingProgram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProgramSource {
    /// One of the reference programs, optionally with a fault injected.
    Base {
        base: BaseProgramId,
        #[serde(default)]
        fault: Option<FaultId>,
    },
    /// A fully spelled-out program.
    Spec { program: Box<TrainingProgram> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// Seeded synthetic data of a base program.
    Synthetic,
    File { path: PathBuf, format: DataFormat },
}

/// Seed of the reference programs when none is given.
pub const DEFAULT_SEED: u64 = 7;

fn default_phases() -> Vec<Phase> {
    Phase::ALL.to_vec()
}

/// A debugging session as read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub schema_version: u32,
    pub program: ProgramSource,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub context: CheckContext,
    #[serde(default = "default_phases")]
    pub phases: Vec<Phase>,
    /// Replaces the program's own seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub parallel: Option<bool>,
    #[serde(default)]
    pub failed_on: Option<bool>,
    /// Reports go to `<output>.json` and `<output>.txt`.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// A program with the data it trains on.
#[derive(Debug, Clone)]
pub struct ResolvedSession {
    pub program: TrainingProgram,
    pub dataset: Dataset,
    pub context: CheckContext,
    pub phases: Vec<Phase>,
}

impl SessionConfig {
    pub fn for_base(base: BaseProgramId, fault: Option<FaultId>) -> Self {
        SessionConfig {
            schema_version: SCHEMA_VERSION,
            program: ProgramSource::Base { base, fault },
            dataset: DatasetSource::Synthetic,
            context: CheckContext::default(),
            phases: default_phases(),
            seed: None,
            parallel: None,
            failed_on: None,
            output: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: SessionConfig = serde_json::from_str(s)
            .map_err(|e| Error::Config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Context with the top-level toggles applied.
    pub fn effective_context(&self) -> CheckContext {
        let mut ctx = self.context.clone();
        if let Some(p) = self.parallel {
            ctx.parallel = p;
        }
        if let Some(f) = self.failed_on {
            ctx.failed_on = f;
        }
        ctx
    }

    /// Builds the program and loads or generates its data.
    pub fn resolve(&self) -> Result<ResolvedSession> {
        let (mut program, synthetic) = match &self.program {
            ProgramSource::Base { base, fault } => {
                let setup = base_program(*base, self.seed.unwrap_or(DEFAULT_SEED))?;
                let setup = match fault {
                    Some(f) => inject_fault(&setup, *f)?,
                    None => setup,
                };
                (setup.program, Some(setup.train))
            }
            ProgramSource::Spec { program } => ((**program).clone(), None),
        };
        if let Some(seed) = self.seed {
            program.seed = seed;
        }
        let dataset = match (&self.dataset, synthetic) {
            (DatasetSource::File { path, format }, _) => {
                if !path.exists() {
                    return Err(Error::Config(format!("dataset {} does not exist", path.display())));
                }
                load_dataset(path, format)?
            }
            (DatasetSource::Synthetic, Some(train)) => train,
            (DatasetSource::Synthetic, None) => {
                return Err(Error::Config("synthetic data is only available for base programs".into()))
            }
        };
        let context = self.effective_context();
        context.validate()?;
        program.validate()?;
        if self.phases.is_empty() {
            return Err(Error::Config("empty phase list".into()));
        }
        Ok(ResolvedSession {
            program,
            dataset,
            context,
            phases: self.phases.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = SessionConfig::from_json(
            r#"{"schema_version": 1, "program": {"source": "base", "base": "ShallowFNN"}, "dataset": {"source": "synthetic"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.phases, Phase::ALL.to_vec());
        assert_eq!(cfg.context, CheckContext::default());
        assert!(cfg.effective_context().parallel);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = SessionConfig::from_json(
            "{\"schema_version\": 1,\n \"program\": {\"source\": \"base\", \"base\": \"RegrFNN\"},\n \"dataset\": {\"source\": \"synthetic\"},\n \"sed\": 3}",
        )
        .unwrap_err();
        let Error::Config(msg) = err else { panic!("wrong error kind") };
        assert!(msg.contains("line 4") && msg.contains("sed"), "{msg}");
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let cfg = SessionConfig::for_base(BaseProgramId::RegrFnn, None);
        let text = cfg.to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(SessionConfig::from_json(&text).is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = SessionConfig::for_base(BaseProgramId::DeepFnn, Some(FaultId::HighLearningRate));
        cfg.failed_on = Some(true);
        cfg.phases = vec![Phase::OnTraining];
        assert_eq!(SessionConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn missing_dataset_file_is_a_config_error() {
        let mut cfg = SessionConfig::for_base(BaseProgramId::RegrFnn, None);
        cfg.dataset = DatasetSource::File {
            path: "/nonexistent/data.csv".into(),
            format: DataFormat::Csv {
                schema: crate::data::CsvSchema { targets: vec!["y".into()], classification: false },
            },
        };
        assert!(matches!(cfg.resolve(), Err(Error::Config(_))));
    }

    #[test]
    fn spec_programs_need_a_file() {
        let b = base_program(BaseProgramId::RegrFnn, 1).unwrap();
        let mut cfg = SessionConfig::for_base(BaseProgramId::RegrFnn, None);
        cfg.program = ProgramSource::Spec { program: Box::new(b.program) };
        assert!(cfg.resolve().is_err());
    }
}
