use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalerKind {
    Standardize,
    MinMax { lo: f64, hi: f64 },
    /// Multiply every value by a constant.
    Rescale { factor: f64 },
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleTarget {
    Inputs,
    Outputs,
}

/// A scaler with per-column statistics: (mean, std) for standardize, (min,
/// max) for min-max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedScaler {
    pub kind: ScalerKind,
    pub stats: Vec<(f64, f64)>,
    /// Zero-variance columns, left unchanged.
    pub constant_columns: Vec<usize>,
}

impl FittedScaler {
    pub fn fit(kind: ScalerKind, x: &Tensor) -> Self {
        let mut stats = Vec::with_capacity(x.cols());
        let mut constant_columns = Vec::new();
        for c in 0..x.cols() {
            let col = x.column(c);
            let finite: Vec<f64> = col.iter().copied().filter(|v| v.is_finite()).collect();
            let n = finite.len().max(1) as f64;
            let s = match kind {
                ScalerKind::Standardize => {
                    let mean = finite.iter().sum::<f64>() / n;
                    let var = finite.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                    (mean, var.sqrt())
                }
                _ => {
                    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi)
                }
            };
            let constant = match kind {
                ScalerKind::Standardize => !(s.1 > 0.0),
                ScalerKind::MinMax { .. } => !(s.1 > s.0),
                _ => false,
            };
            if constant {
                constant_columns.push(c);
            }
            stats.push(s);
        }
        FittedScaler {
            kind,
            stats,
            constant_columns,
        }
    }

    pub fn transform(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                if self.constant_columns.contains(&c) {
                    continue;
                }
                let (a, b) = self.stats[c];
                *v = match self.kind {
                    ScalerKind::Standardize => (*v - a) / b,
                    ScalerKind::MinMax { lo, hi } => lo + (*v - a) / (b - a) * (hi - lo),
                    ScalerKind::Rescale { factor } => *v * factor,
                    ScalerKind::None => *v,
                };
            }
        }
        out
    }

    /// Maps scaled values back to the original units.
    pub fn inverse(&self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                if self.constant_columns.contains(&c) {
                    continue;
                }
                let (a, b) = self.stats[c];
                *v = match self.kind {
                    ScalerKind::Standardize => *v * b + a,
                    ScalerKind::MinMax { lo, hi } => a + (*v - lo) / (hi - lo) * (b - a),
                    ScalerKind::Rescale { factor } => *v / factor,
                    ScalerKind::None => *v,
                };
            }
        }
        out
    }
}

/// Fits a scaler on the chosen side of `ds` and applies it.
pub fn scale_features(ds: &Dataset, kind: ScalerKind, target: ScaleTarget) -> Result<(Dataset, FittedScaler)> {
    let src = match target {
        ScaleTarget::Inputs => &ds.x,
        ScaleTarget::Outputs => &ds.y,
    };
    let scaler = FittedScaler::fit(kind, src);
    let scaled = scaler.transform(src);
    let out = match target {
        ScaleTarget::Inputs => Dataset { x: scaled, ..ds.clone() },
        ScaleTarget::Outputs => Dataset { y: scaled, ..ds.clone() },
    };
    Ok((out, scaler))
}
