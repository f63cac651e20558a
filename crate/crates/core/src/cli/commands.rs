use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{SessionConfig, DEFAULT_SEED};
use crate::debugger::{run_session, single_batch, CheckContext, CheckReport, Monitor, Phase, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::faults::{base_program, catalog, run_benchmark, BaseProgramId, CatalogEntry, DetectionMatrix, FaultCategory, FaultId};
use crate::program::TrainingProgram;
use crate::tensor::Tensor;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Writes `<stem>.json` and `<stem>.txt`.
fn write_pair(stem: &Path, json: &str, text: &str) -> Result<(PathBuf, PathBuf)> {
    if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let (j, t) = (stem.with_extension("json"), stem.with_extension("txt"));
    fs::write(&j, json)?;
    fs::write(&t, text)?;
    Ok((j, t))
}

pub fn debug_exit_code(report: &CheckReport) -> i32 {
    if report.is_clean() {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    }
}

/// Runs the configured session and writes its reports when an output path
/// is set. Errors map to exit code 2 in the binary.
pub fn cmd_debug(cfg: &SessionConfig) -> Result<(CheckReport, i32)> {
    let s = cfg.resolve()?;
    let report = run_session(&s.program, &s.dataset, &s.context, &s.phases)?;
    if let Some(out) = &cfg.output {
        write_pair(out, &report.to_json()?, &report.to_text())?;
    }
    let code = debug_exit_code(&report);
    Ok((report, code))
}

/// Catalog entries matched by a comma separated selector. Each term is
/// `all`, a fault category, a base program, a fault name, or a
/// `fault/Program` label.
pub fn select_suite(selector: &str) -> Result<Vec<CatalogEntry>> {
    let all = catalog();
    let mut keep = vec![false; all.len()];
    for term in selector.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let hit: Box<dyn Fn(&CatalogEntry) -> bool> = match term.to_ascii_lowercase().as_str() {
            "all" => Box::new(|_| true),
            "coding" => Box::new(|e| e.category() == FaultCategory::CodingBug),
            "misconfiguration" => Box::new(|e| e.category() == FaultCategory::Misconfiguration),
            _ => {
                if let Ok(b) = term.parse::<BaseProgramId>() {
                    Box::new(move |e| e.program == b)
                } else if let Ok(f) = term.parse::<FaultId>() {
                    Box::new(move |e| e.fault == f)
                } else if term.contains('/') {
                    let label = term.to_string();
                    Box::new(move |e| e.label().eq_ignore_ascii_case(&label))
                } else {
                    return Err(Error::Config(format!("unknown selector term {term:?}")));
                }
            }
        };
        for (k, e) in keep.iter_mut().zip(&all) {
            *k |= hit(e);
        }
    }
    Ok(all.into_iter().zip(keep).filter_map(|(e, k)| k.then_some(e)).collect())
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub selector: String,
    pub seed: u64,
    pub recall_floor: f64,
    pub context: CheckContext,
    pub output: Option<PathBuf>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            selector: "all".into(),
            seed: DEFAULT_SEED,
            recall_floor: 0.8,
            context: CheckContext::default(),
            output: None,
        }
    }
}

/// Exit 0 when overall recall reaches the floor, 1 otherwise.
pub fn bench_exit_code(m: &DetectionMatrix, floor: f64) -> i32 {
    if m.overall.recall >= floor {
        EXIT_OK
    } else {
        EXIT_FINDINGS
    }
}

pub fn cmd_bench(opts: &BenchOptions) -> Result<(DetectionMatrix, i32)> {
    opts.context.validate()?;
    let suite = select_suite(&opts.selector)?;
    if suite.is_empty() {
        return Err(Error::Config(format!("selector {:?} matches no catalog entry", opts.selector)));
    }
    let m = run_benchmark(&suite, opts.seed, &opts.context)?;
    if let Some(out) = &opts.output {
        write_pair(out, &m.to_json()?, &m.to_text())?;
    }
    let code = bench_exit_code(&m, opts.recall_floor);
    Ok((m, code))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub phase: Phase,
    pub seconds: f64,
    pub findings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub schema_version: u32,
    pub program: String,
    pub seed: u64,
    pub period: usize,
    pub rows: Vec<TimingRow>,
    pub iterations: usize,
    pub plain_seconds: f64,
    pub monitored_seconds: f64,
    pub ratio: f64,
}

impl TimingReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "timing {} seed {} period {}", self.program, self.seed, self.period);
        for r in &self.rows {
            let _ = writeln!(s, "phase {:<13} {:>9.3}s findings={}", r.phase.name(), r.seconds, r.findings);
        }
        let per = |t: f64| 1e3 * t / self.iterations.max(1) as f64;
        let _ = writeln!(
            s,
            "iterations {} plain {:.4}ms/it monitored {:.4}ms/it ratio {:.2}x",
            self.iterations,
            per(self.plain_seconds),
            per(self.monitored_seconds),
            self.ratio
        );
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

fn plain_run(program: &TrainingProgram, x: &Tensor, y: &Tensor, iterations: usize) -> Result<f64> {
    let mut trainer = program.fresh_trainer(program.seed);
    let start = Instant::now();
    for _ in 0..iterations {
        trainer.step(x, y)?;
    }
    Ok(start.elapsed().as_secs_f64())
}

fn monitored_run(program: &TrainingProgram, x: &Tensor, y: &Tensor, ctx: &CheckContext, iterations: usize) -> Result<f64> {
    let mut trainer = program.fresh_trainer(program.seed);
    let start = Instant::now();
    let mut monitor = Monitor::new(&trainer.net, y, ctx, program.seed);
    for it in 0..iterations {
        let step = trainer.step(x, y)?;
        let metric = program.metric.evaluate(step.trace.prediction(), y);
        monitor.record(&step, &trainer.net, metric);
        if (it + 1) % ctx.period == 0 {
            monitor.evaluate()?;
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Wall time of `iterations` single-batch steps with and without the
/// monitoring hooks. Each side keeps its fastest of `repeats` runs.
pub fn measure_overhead(
    program: &TrainingProgram,
    x: &Tensor,
    y: &Tensor,
    ctx: &CheckContext,
    iterations: usize,
    repeats: usize,
) -> Result<(f64, f64)> {
    let (mut plain, mut monitored) = (f64::INFINITY, f64::INFINITY);
    for _ in 0..repeats.max(1) {
        plain = plain.min(plain_run(program, x, y, iterations)?);
        monitored = monitored.min(monitored_run(program, x, y, ctx, iterations)?);
    }
    Ok((plain, monitored))
}

/// Per-phase wall time of a session on `base` plus the monitoring overhead
/// ratio over `max_fit_iterations` steps.
pub fn cmd_timing(base: BaseProgramId, seed: u64, ctx: &CheckContext, phases: &[Phase]) -> Result<TimingReport> {
    ctx.validate()?;
    let setup = base_program(base, seed)?;
    let report = run_session(&setup.program, &setup.train, ctx, phases)?;
    let rows = report
        .phases
        .iter()
        .map(|p| TimingRow {
            phase: p.phase,
            seconds: p.seconds,
            findings: p.findings,
        })
        .collect();
    let prep = setup.program.prepare(&setup.train)?;
    let (x, y) = single_batch(&prep.dataset, ctx, seed)?;
    let iterations = ctx.max_fit_iterations;
    let (plain, monitored) = measure_overhead(&setup.program, &x, &y, ctx, iterations, 3)?;
    Ok(TimingReport {
        schema_version: SCHEMA_VERSION,
        program: setup.program.name.clone(),
        seed,
        period: ctx.period,
        rows,
        iterations,
        plain_seconds: plain,
        monitored_seconds: monitored,
        ratio: monitored / plain,
    })
}
