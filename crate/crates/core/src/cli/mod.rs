//! Command-line front end: session configs, debug runs, benchmark runs and
//! timing reports.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    bench_exit_code, cmd_bench, cmd_debug, cmd_timing, debug_exit_code, measure_overhead, select_suite, BenchOptions,
    TimingReport, TimingRow, EXIT_ERROR, EXIT_FINDINGS, EXIT_OK,
};
pub use config::{DatasetSource, DEFAULT_SEED, ProgramSource, ResolvedSession, SessionConfig};

use crate::debugger::{parse_phases, CheckContext, Phase};
use crate::error::{Error, Result};
use crate::faults::{BaseProgramId, FaultId};

#[derive(Debug, Parser)]
#[command(name = "fitprobe", version, about = "Property-based debugger for feedforward network training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a debugging session.
    Debug {
        /// JSON session config. Without it, --base selects a reference program.
        config: Option<PathBuf>,
        #[arg(long)]
        base: Option<BaseProgramId>,
        #[arg(long)]
        fault: Option<FaultId>,
        /// Report path stem; writes .json and .txt.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Run the fault-injection benchmark.
    Bench {
        /// `all`, `coding`, `misconfiguration`, a program, a fault or `fault/Program`, comma separated.
        #[arg(default_value = "all")]
        selector: String,
        #[arg(long, default_value_t = 0.8)]
        floor: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Time each phase and the monitoring overhead on a reference program.
    Timing {
        base: BaseProgramId,
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        common: CommonFlags,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub period: Option<usize>,
    #[arg(long)]
    pub buffer_size: Option<usize>,
    #[arg(long)]
    pub max_fit_iters: Option<usize>,
    #[arg(long)]
    pub failed_on: bool,
    #[arg(long)]
    pub no_parallel: bool,
    /// Comma separated, e.g. `pre,post` or `1,2`.
    #[arg(long)]
    pub phases: Option<String>,
}

impl CommonFlags {
    pub fn phase_list(&self) -> Result<Option<Vec<Phase>>> {
        self.phases.as_deref().map(parse_phases).transpose()
    }

    pub fn apply(&self, ctx: &mut CheckContext) {
        if let Some(p) = self.period {
            ctx.period = p;
        }
        if let Some(b) = self.buffer_size {
            ctx.buffer_size = b;
        }
        if let Some(m) = self.max_fit_iters {
            ctx.max_fit_iterations = m;
        }
        if self.failed_on {
            ctx.failed_on = true;
        }
        if self.no_parallel {
            ctx.parallel = false;
        }
    }
}

fn debug_config(config: Option<PathBuf>, base: Option<BaseProgramId>, fault: Option<FaultId>) -> Result<SessionConfig> {
    match (config, base) {
        (Some(path), None) if fault.is_none() => SessionConfig::load(&path),
        (None, Some(b)) => Ok(SessionConfig::for_base(b, fault)),
        _ => Err(Error::Config("give either a config file or --base (with an optional --fault)".into())),
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Debug { config, base, fault, out, common } => {
            let mut cfg = debug_config(config, base, fault)?;
            common.apply(&mut cfg.context);
            if common.no_parallel {
                cfg.parallel = Some(false);
            }
            if common.failed_on {
                cfg.failed_on = Some(true);
            }
            if let Some(seed) = common.seed {
                cfg.seed = Some(seed);
            }
            if let Some(p) = common.phase_list()? {
                cfg.phases = p;
            }
            if out.is_some() {
                cfg.output = out;
            }
            let (report, code) = cmd_debug(&cfg)?;
            print!("{}", report.to_text());
            Ok(code)
        }
        Command::Bench { selector, floor, out, common } => {
            let mut opts = BenchOptions { selector, recall_floor: floor, output: out, ..BenchOptions::default() };
            common.apply(&mut opts.context);
            if let Some(seed) = common.seed {
                opts.seed = seed;
            }
            let (m, code) = cmd_bench(&opts)?;
            print!("{}", m.to_text());
            Ok(code)
        }
        Command::Timing { base, json, common } => {
            let mut ctx = CheckContext::default();
            common.apply(&mut ctx);
            let phases = common.phase_list()?.unwrap_or_else(|| Phase::ALL.to_vec());
            let t = cmd_timing(base, common.seed.unwrap_or(DEFAULT_SEED), &ctx, &phases)?;
            if json {
                println!("{}", t.to_json()?);
            } else {
                print!("{}", t.to_text());
            }
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_into_context() {
        let cli = Cli::try_parse_from([
            "fitprobe", "debug", "--base", "S", "--period", "5", "--buffer-size", "4", "--max-fit-iters", "50",
            "--failed-on", "--no-parallel", "--phases", "pre,post", "--seed", "3",
        ])
        .unwrap();
        let Command::Debug { base, common, .. } = cli.command else { panic!("not debug") };
        assert_eq!(base, Some(BaseProgramId::ShallowFnn));
        let mut ctx = CheckContext::default();
        common.apply(&mut ctx);
        assert_eq!((ctx.period, ctx.buffer_size, ctx.max_fit_iterations), (5, 4, 50));
        assert!(ctx.failed_on && !ctx.parallel);
        assert_eq!(common.phase_list().unwrap(), Some(vec![Phase::PreTraining, Phase::PostTraining]));
    }

    #[test]
    fn bad_invocations_exit_two() {
        assert_eq!(run(["fitprobe", "debug"]), EXIT_ERROR);
        assert_eq!(run(["fitprobe", "debug", "/nonexistent/config.json"]), EXIT_ERROR);
        assert_eq!(run(["fitprobe", "bench", "nothing-matches-this"]), EXIT_ERROR);
        assert_eq!(run(["fitprobe", "timing", "CNN"]), EXIT_ERROR);
        assert_eq!(run(["fitprobe", "timing", "R", "--phases", "4"]), EXIT_ERROR);
    }
}
