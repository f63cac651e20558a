use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::base::{base_program, BaseProgramId, BaseSetup};
use super::catalog::{inject_fault, CatalogEntry, FaultCategory, NOT_APPLICABLE};
use crate::debugger::{flex_f64, phase1, phase3, run_session, single_batch, CheckContext, CheckId, CheckReport, Phase};
use crate::error::{Error, Result};
use crate::nn::{forward_pass, ForwardMode};

/// Degradation of a faulty program against its clean reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymptomGate {
    #[serde(with = "flex_f64")]
    pub clean_metric: f64,
    #[serde(with = "flex_f64")]
    pub faulty_metric: f64,
    pub clean_iterations_to_fit: Option<usize>,
    pub faulty_iterations_to_fit: Option<usize>,
    pub accepted: bool,
    pub reason: String,
}

/// Test metric of a fully trained copy, in raw target units for regressors.
/// A diverged run scores the worst possible value.
pub fn test_performance(setup: &BaseSetup, ctx: &CheckContext) -> Result<f64> {
    let p = &setup.program;
    let (prep, test) = p.prepare_pair(&setup.train, &setup.test)?;
    let run = phase3::train_epochs(p, &prep.dataset, ctx.post_epochs, p.seed, true)?;
    let worst = if p.metric.higher_is_better() { 0.0 } else { f64::INFINITY };
    if run.diverged.is_some() {
        return Ok(worst);
    }
    let pred = forward_pass(&run.trainer.net, &test.x, ForwardMode::Inference)?.prediction().clone();
    let m = p.metric.evaluate(&prep.raw_targets(&pred), &prep.raw_targets(&test.y));
    Ok(if m.is_finite() { m } else { worst })
}

fn iterations_to_fit(setup: &BaseSetup, ctx: &CheckContext) -> Result<Option<usize>> {
    let prep = setup.program.prepare(&setup.train)?;
    let (x, y) = single_batch(&prep.dataset, ctx, setup.program.seed)?;
    Ok(phase1::pre_check_single_batch_fit(&setup.program, &x, &y, ctx, setup.program.seed)?.iterations_to_fit)
}

/// Accepts the injection when the faulty program trains measurably worse:
/// test accuracy lower by at least one point, MAE higher by at least 10%, or
/// at least twice the iterations to fit the single batch.
pub fn symptom_gate(clean: &BaseSetup, faulty: &BaseSetup, ctx: &CheckContext) -> Result<SymptomGate> {
    let clean_metric = test_performance(clean, ctx)?;
    let faulty_metric = test_performance(faulty, ctx)?;
    let ci = iterations_to_fit(clean, ctx)?;
    let fi = iterations_to_fit(faulty, ctx)?;
    let worse_metric = if clean.program.metric.higher_is_better() {
        faulty_metric <= clean_metric - 0.01
    } else {
        !(faulty_metric < clean_metric * 1.1)
    };
    let slower = match (ci, fi) {
        (Some(c), Some(f)) => f >= 2 * c,
        (Some(_), None) => true,
        _ => false,
    };
    let reason = match (worse_metric, slower) {
        (true, _) => format!("test metric {faulty_metric:.4} vs {clean_metric:.4}"),
        (false, true) => format!("iterations to fit {fi:?} vs {ci:?}"),
        (false, false) => format!("no degradation: test metric {faulty_metric:.4} vs {clean_metric:.4}, iterations to fit {fi:?} vs {ci:?}"),
    };
    Ok(SymptomGate {
        clean_metric,
        faulty_metric,
        clean_iterations_to_fit: ci,
        faulty_iterations_to_fit: fi,
        accepted: worse_metric || slower,
        reason,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub entry: CatalogEntry,
    pub gate: SymptomGate,
    /// Distinct checks that fired, in order of first appearance.
    pub fired: Vec<CheckId>,
    /// Designated checks among `fired`.
    pub a: usize,
    /// Other checks among `fired`.
    pub b: usize,
    pub detected: bool,
    pub aborted: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanResult {
    pub program: BaseProgramId,
    pub fired: Vec<CheckId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Gate-accepted pairs with designated checks.
    pub faults: usize,
    pub detected: usize,
    /// Accepted designated pairs where only other checks fired.
    pub false_alarms: usize,
    #[serde(with = "flex_f64")]
    pub recall: f64,
    #[serde(with = "flex_f64")]
    pub precision: f64,
}

impl Score {
    fn from_pairs<'a>(pairs: impl Iterator<Item = &'a PairResult>, clean_alarms: usize) -> Score {
        let (mut faults, mut detected, mut false_alarms) = (0, 0, 0);
        for p in pairs.filter(|p| p.gate.accepted && p.entry.is_designated()) {
            faults += 1;
            if p.detected {
                detected += 1;
            } else if !p.fired.is_empty() {
                false_alarms += 1;
            }
        }
        let fp = false_alarms + clean_alarms;
        let ratio = |n: usize, d: usize| if d == 0 { f64::NAN } else { n as f64 / d as f64 };
        Score {
            faults,
            detected,
            false_alarms: fp,
            recall: ratio(detected, faults),
            precision: ratio(detected, detected + fp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMatrix {
    pub schema_version: u32,
    pub seed: u64,
    pub clean: Vec<CleanResult>,
    pub pairs: Vec<PairResult>,
    pub not_applicable: Vec<(String, String)>,
    pub coding: Score,
    pub misconfiguration: Score,
    pub overall: Score,
    pub seconds: f64,
}

impl DetectionMatrix {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("matrix at line {}: {e}", e.line())))
    }

    pub fn pair(&self, label: &str) -> Option<&PairResult> {
        self.pairs.iter().find(|p| p.entry.label() == label)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let names = |v: &[CheckId]| {
            if v.is_empty() {
                "-".to_string()
            } else {
                v.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")
            }
        };
        for cat in [FaultCategory::CodingBug, FaultCategory::Misconfiguration] {
            let _ = writeln!(s, "== {} ==", cat.name());
            let _ = writeln!(s, "{:<26} {:<4} {:<7} {:<5} {:<30} fired", "fault", "prog", "gate", "a+b", "expected");
            for p in self.pairs.iter().filter(|p| p.entry.category() == cat) {
                let verdict = if !p.entry.is_designated() {
                    "n/a"
                } else if p.detected {
                    "hit"
                } else {
                    "MISS"
                };
                let _ = writeln!(
                    s,
                    "{:<26} {:<4} {:<7} {:<5} {:<30} {} [{verdict}]",
                    p.entry.fault.name(),
                    p.entry.program.short(),
                    if p.gate.accepted { "ok" } else { "reject" },
                    format!("{}+{}", p.a, p.b),
                    names(&p.entry.expected),
                    names(&p.fired),
                );
            }
        }
        for c in &self.clean {
            let _ = writeln!(s, "clean {:<10} fired {}", c.program.name(), names(&c.fired));
        }
        for (f, why) in &self.not_applicable {
            let _ = writeln!(s, "not applicable {f}: {why}");
        }
        let line = |name: &str, sc: &Score| {
            format!(
                "{name:<17} faults={} detected={} false_alarms={} recall={} precision={}\n",
                sc.faults,
                sc.detected,
                sc.false_alarms,
                fmt_ratio(sc.recall),
                fmt_ratio(sc.precision)
            )
        };
        s.push_str(&line("coding", &self.coding));
        s.push_str(&line("misconfiguration", &self.misconfiguration));
        s.push_str(&line("overall", &self.overall));
        s
    }
}

fn fmt_ratio(r: f64) -> String {
    if r.is_finite() {
        format!("{r:.3}")
    } else {
        "N/A".into()
    }
}

fn fired_checks(report: &CheckReport) -> Vec<CheckId> {
    let mut seen = BTreeSet::new();
    report.findings.iter().map(|f| f.check).filter(|c| seen.insert(*c)).collect()
}

fn run_pair(entry: &CatalogEntry, seed: u64, ctx: &CheckContext) -> Result<PairResult> {
    let start = Instant::now();
    let clean = base_program(entry.program, seed)?;
    let faulty = inject_fault(&clean, entry.fault)?;
    let gate = symptom_gate(&clean, &faulty, ctx)?;
    let report = run_session(&faulty.program, &faulty.train, ctx, &Phase::ALL)?;
    let fired = fired_checks(&report);
    let a = fired.iter().filter(|c| entry.expected.contains(c)).count();
    Ok(PairResult {
        entry: entry.clone(),
        gate,
        b: fired.len() - a,
        a,
        detected: a > 0,
        fired,
        aborted: report.aborted,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every pair of `suite` plus the clean programs involved, and scores
/// the fired checks against the expected ones.
pub fn run_benchmark(suite: &[CatalogEntry], seed: u64, ctx: &CheckContext) -> Result<DetectionMatrix> {
    let start = Instant::now();
    let inner = CheckContext { parallel: false, ..ctx.clone() };
    let programs: BTreeSet<BaseProgramId> = suite.iter().map(|e| e.program).collect();
    let clean_one = |id: BaseProgramId| -> Result<CleanResult> {
        let b = base_program(id, seed)?;
        let r = run_session(&b.program, &b.train, &inner, &Phase::ALL)?;
        Ok(CleanResult { program: id, fired: fired_checks(&r) })
    };
    let (clean, pairs): (Result<Vec<_>>, Result<Vec<_>>) = if ctx.parallel {
        rayon::join(
            || programs.par_iter().map(|&id| clean_one(id)).collect(),
            || suite.par_iter().map(|e| run_pair(e, seed, &inner)).collect(),
        )
    } else {
        (
            programs.iter().map(|&id| clean_one(id)).collect(),
            suite.iter().map(|e| run_pair(e, seed, &inner)).collect(),
        )
    };
    let (clean, pairs) = (clean?, pairs?);
    let clean_alarms = clean.iter().filter(|c| !c.fired.is_empty()).count();
    let by_cat = |cat| Score::from_pairs(pairs.iter().filter(|p| p.entry.category() == cat), 0);
    Ok(DetectionMatrix {
        schema_version: crate::debugger::SCHEMA_VERSION,
        seed,
        coding: by_cat(FaultCategory::CodingBug),
        misconfiguration: by_cat(FaultCategory::Misconfiguration),
        overall: Score::from_pairs(pairs.iter(), clean_alarms),
        clean,
        pairs,
        not_applicable: NOT_APPLICABLE.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        seconds: start.elapsed().as_secs_f64(),
    })
}
