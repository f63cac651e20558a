use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::context::CheckContext;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

macro_rules! check_ids {
    ($($variant:ident => $name:literal),* $(,)?) => {
        /// Identifier of a verification routine.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum CheckId {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl CheckId {
            pub const ALL: &'static [CheckId] = &[$(CheckId::$variant,)*];

            pub fn name(&self) -> &'static str {
                match self {
                    $(CheckId::$variant => $name,)*
                }
            }
        }
    };
}

check_ids! {
    UnsInps => "Uns-Inps",
    UnsOuts => "Uns-Outs",
    ConstInps => "Const-Inps",
    UnbalancedLabels => "Unbalanced-Labels",
    UnSymW => "Un-Sym-W",
    PiW => "PI-W",
    PiB => "PI-B",
    MissB => "Miss-B",
    PiLoss => "PI-Loss",
    InvLossDep => "Inv-Loss-Dep",
    InvOutDep => "Inv-Out-Dep",
    GradErr => "Grad-Err",
    GradProbeNonFinite => "Grad-Probe-NaN",
    InpIndep => "Inp-Indep",
    UnFitBatch => "Un-Fit-Batch",
    ZeroLoss => "Zero-Loss",
    SdLoss => "SD-Loss",
    DivLoss => "Div-Loss",
    HfLoss => "HF-Loss",
    NrLoss => "NR-Loss",
    VanGrad => "Van-Grad",
    DivGrad => "Div-Grad",
    OverRegLoss => "Over-Reg-Loss",
    UntrainedW => "Untrained-W",
    DeadW => "Dead-W",
    NegW => "Neg-W",
    WUpSlow => "W-Up-Slow",
    WUpFast => "W-Up-Fast",
    DivW => "Div-W",
    DivB => "Div-B",
    OutRangeAct => "Out-Range-Act",
    InvOuts => "Inv-Outs",
    SatAct => "Sat-Act",
    DeadRelu => "Dead-ReLU",
    UnsActLs => "Uns-Act-LS",
    UnsActHs => "Uns-Act-HS",
    ShiftedAugmentedData => "Shifted-Augmented-Data",
    CorruptedLabels => "Corrupted-Labels",
    UnsModeTr => "Uns-Mode-Tr",
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CheckId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CheckId::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown check id {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreTraining,
    OnTraining,
    PostTraining,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::PreTraining, Phase::OnTraining, Phase::PostTraining];

    pub fn name(&self) -> &'static str {
        match self {
            Phase::PreTraining => "pre_training",
            Phase::OnTraining => "on_training",
            Phase::PostTraining => "post_training",
        }
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "pre" | "pre_training" => Ok(Phase::PreTraining),
            "2" | "on" | "on_training" => Ok(Phase::OnTraining),
            "3" | "post" | "post_training" => Ok(Phase::PostTraining),
            other => Err(Error::Config(format!("unknown phase {other:?}"))),
        }
    }
}

/// Parses a comma separated phase list such as `1,3` or `pre,post`.
pub fn parse_phases(s: &str) -> Result<Vec<Phase>> {
    let mut out: Vec<Phase> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Config("empty phase list".into()));
    }
    Ok(out)
}

/// JSON numbers cannot carry NaN or infinities, so those travel as strings.
pub mod flex_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// One shrunk violation: where, what was measured, and the bound it broke.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Finding {
    pub check: CheckId,
    pub phase: Phase,
    pub iteration: Option<u64>,
    /// `"global"` or `"layer <index> (<kind>)"`.
    pub layer: String,
    #[serde(with = "flex_f64")]
    pub metric: f64,
    #[serde(with = "flex_f64")]
    pub threshold: f64,
    pub message: String,
}

fn same_f64(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

impl PartialEq for Finding {
    fn eq(&self, o: &Self) -> bool {
        self.check == o.check
            && self.phase == o.phase
            && self.iteration == o.iteration
            && self.layer == o.layer
            && same_f64(self.metric, o.metric)
            && same_f64(self.threshold, o.threshold)
            && self.message == o.message
    }
}

pub fn global() -> String {
    "global".to_string()
}

pub fn layer_label(index: usize, kind: &str) -> String {
    format!("layer {index} ({kind})")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub passed: bool,
    pub findings: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEcho {
    pub program: String,
    pub seed: u64,
    pub phases: Vec<Phase>,
    pub context: CheckContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub schema_version: u32,
    pub session: SessionEcho,
    pub phases: Vec<PhaseSummary>,
    pub findings: Vec<Finding>,
    /// Why the session stopped early, if it did.
    pub aborted: Option<String>,
}

impl CheckReport {
    pub fn new(session: SessionEcho) -> Self {
        CheckReport {
            schema_version: SCHEMA_VERSION,
            session,
            phases: Vec::new(),
            findings: Vec::new(),
            aborted: None,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn fired(&self) -> Vec<CheckId> {
        let mut ids: Vec<CheckId> = self.findings.iter().map(|f| f.check).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn has(&self, id: CheckId) -> bool {
        self.findings.iter().any(|f| f.check == id)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("report at line {}: {e}", e.line())))
    }

    /// Line-oriented rendering of the same content.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("report schema {}\n", self.schema_version));
        out.push_str(&format!("program {} seed {}\n", self.session.program, self.session.seed));
        for p in &self.phases {
            out.push_str(&format!(
                "phase {} {} findings={} time={:.3}s\n",
                p.phase.name(),
                if p.passed { "PASS" } else { "FAIL" },
                p.findings,
                p.seconds
            ));
        }
        for (i, f) in self.findings.iter().enumerate() {
            let it = f.iteration.map_or("-".to_string(), |v| v.to_string());
            out.push_str(&format!(
                "finding {} {} phase={} iteration={} layer=\"{}\" metric={} threshold={} :: {}\n",
                i + 1,
                f.check,
                f.phase.name(),
                it,
                f.layer,
                fmt_num(f.metric),
                fmt_num(f.threshold),
                f.message
            ));
        }
        if let Some(why) = &self.aborted {
            out.push_str(&format!("aborted: {why}\n"));
        }
        out.push_str(&format!("total findings {}\n", self.findings.len()));
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6e}")
    }
}
