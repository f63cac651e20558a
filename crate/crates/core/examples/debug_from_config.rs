//! Runs a session described by a JSON config, as the `debug` subcommand
//! does, and writes the JSON and text reports.

use fitprobe::cli::{cmd_debug, SessionConfig};

const CONFIG: &str = r#"{
  "schema_version": 1,
  "program": { "source": "base", "base": "DeepFNN", "fault": "no-batchnorm-update" },
  "dataset": { "source": "synthetic" },
  "context": { "period": 10 },
  "phases": ["on_training", "post_training"],
  "seed": 7
}"#;

fn main() -> fitprobe::Result<()> {
    let mut cfg = SessionConfig::from_json(CONFIG)?;
    let dir = std::env::temp_dir().join("fitprobe-example");
    cfg.output = Some(dir.join("report"));
    let (report, code) = cmd_debug(&cfg)?;
    print!("{}", report.to_text());
    println!("exit code {code}; reports in {}", dir.display());
    Ok(())
}
