//! Statistical kernels shared by the checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::nn::ActivationKind;
use crate::tensor::Tensor;

pub use crate::nn::gradcheck::relative_error;

/// Scalar observations tagged with strictly increasing iteration indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Series {
    indices: Vec<u64>,
    values: Vec<f64>,
}

impl Series {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Series {
            indices: (0..values.len() as u64).collect(),
            values,
        }
    }

    pub fn push(&mut self, index: u64, value: f64) -> Result<()> {
        if let Some(&last) = self.indices.last() {
            if index <= last {
                return Err(Error::InvalidParameter(format!(
                    "series index {index} does not follow {last}"
                )));
            }
        }
        self.indices.push(index);
        self.values.push(value);
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// Normalized entropy of a class histogram.
pub fn shannon_equitability(counts: &[f64]) -> Result<f64> {
    if counts.is_empty() {
        return Err(Error::EmptyTensor("shannon_equitability"));
    }
    if counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(Error::InvalidParameter("class counts must be finite and nonnegative".into()));
    }
    let n: f64 = counts.iter().sum();
    if n <= 0.0 {
        return Err(Error::InvalidParameter("class counts sum to zero".into()));
    }
    if counts.len() == 1 {
        return Ok(0.0);
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| {
            let p = c / n;
            -p * p.ln()
        })
        .sum();
    Ok((h / (counts.len() as f64).ln()).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FTestOutcome {
    Pass { p_value: f64 },
    Fail { p_value: f64 },
}

impl FTestOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, FTestOutcome::Pass { .. })
    }

    pub fn p_value(&self) -> f64 {
        match self {
            FTestOutcome::Pass { p_value } | FTestOutcome::Fail { p_value } => *p_value,
        }
    }
}

/// Two-sided test of `sample_var` against a known `target_var`. With the
/// denominator degrees of freedom infinite, (n−1)·F follows χ²(n−1).
pub fn f_test_variance(sample_var: f64, n: usize, target_var: f64, alpha: f64) -> Result<FTestOutcome> {
    if !(target_var > 0.0) {
        return Err(Error::InvalidParameter(format!("target variance must be positive, got {target_var}")));
    }
    if n < 2 {
        return Err(Error::TooFewSamples { what: "f_test_variance", need: 2, got: n });
    }
    let df = (n - 1) as f64;
    let stat = df * sample_var / target_var;
    let chi = ChiSquared::new(df).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let cdf = chi.cdf(stat);
    let p_value = (2.0 * cdf.min(1.0 - cdf)).clamp(0.0, 1.0);
    Ok(if p_value >= alpha {
        FTestOutcome::Pass { p_value }
    } else {
        FTestOutcome::Fail { p_value }
    })
}

/// Pearson r; 0 when either side has zero variance.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "pearson_correlation",
            left: vec![a.len()],
            right: vec![b.len()],
        });
    }
    if a.len() < 3 {
        return Err(Error::TooFewSamples { what: "pearson_correlation", need: 3, got: a.len() });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Share of samples not involved in a direction change of the curve.
pub fn smoothness_ratio(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::TooFewSamples { what: "smoothness_ratio", need: 3, got: values.len() });
    }
    let mut prev_sign = 0i8;
    let mut flips = 0usize;
    for w in values.windows(2) {
        let d = w[1] - w[0];
        let sign = if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            prev_sign
        };
        if prev_sign != 0 && sign != prev_sign {
            flips += 1;
        }
        prev_sign = sign;
    }
    let n = values.len();
    Ok((n - flips) as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TrendMode {
    Stagnating { min_change: f64 },
    Diverging { low_bound: f64 },
    Vanishing { high_bound: f64 },
}

/// Applies the trend rule to the last `window` observations.
pub fn trend_test(values: &[f64], mode: TrendMode, window: usize) -> Result<bool> {
    let window = window.max(2);
    if values.len() < window {
        return Err(Error::TooFewSamples { what: "trend_test", need: window, got: values.len() });
    }
    let tail = &values[values.len() - window..];
    if tail.iter().all(|&v| v == 0.0) {
        return Ok(matches!(mode, TrendMode::Vanishing { .. }));
    }
    let ratio = |prev: f64, cur: f64| -> f64 {
        if prev == 0.0 {
            if cur == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            cur / prev
        }
    };
    Ok(tail.windows(2).all(|w| {
        let r = ratio(w[0], w[1]);
        match mode {
            TrendMode::Diverging { low_bound } => r > low_bound,
            TrendMode::Vanishing { high_bound } => r < high_bound,
            TrendMode::Stagnating { min_change } => (r - 1.0).abs() < min_change,
        }
    }))
}

/// Weighted mean magnitude of binned, rescaled outputs of one neuron.
pub fn saturation_rho(outputs: &[f64], act: ActivationKind, bins: usize) -> Result<f64> {
    let (lo, hi) = act.bounds();
    if !lo.is_finite() || !hi.is_finite() || act.is_softmax() {
        return Err(Error::InvalidParameter(format!(
            "saturation needs a bounded elementwise activation, got {}",
            act.name()
        )));
    }
    if bins < 2 {
        return Err(Error::InvalidParameter("at least 2 bins required".into()));
    }
    if outputs.is_empty() {
        return Err(Error::EmptyTensor("saturation_rho"));
    }
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for &g in outputs {
        let s = (2.0 * (g - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
        let b = (((s + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
        sums[b] += s;
        counts[b] += 1;
    }
    let num: f64 = sums.iter().map(|s| s.abs()).sum();
    Ok(num / outputs.len() as f64)
}

fn center_columns(x: &Tensor) -> Tensor {
    let m = x.rows() as f64;
    let means = x.sum_rows().scale(1.0 / m);
    x.sub(&means).expect("broadcast row")
}

/// Linear centered kernel alignment between two activation matrices.
pub fn linear_cka(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch {
            op: "linear_cka",
            left: x.shape().to_vec(),
            right: y.shape().to_vec(),
        });
    }
    if x.rows() < 2 {
        return Err(Error::TooFewSamples { what: "linear_cka", need: 2, got: x.rows() });
    }
    let xc = center_columns(x);
    let yc = center_columns(y);
    let xy = yc.t_matmul(&xc)?.sq_norm();
    let xx = xc.t_matmul(&xc)?.sq_norm().sqrt();
    let yy = yc.t_matmul(&yc)?.sq_norm().sqrt();
    if xx == 0.0 || yy == 0.0 {
        return Ok(0.0);
    }
    Ok((xy / (xx * yy)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SlopeOutcome {
    Improving { slope: f64, p_value: f64 },
    NotImproving { slope: f64, p_value: f64 },
}

impl SlopeOutcome {
    pub fn is_improving(&self) -> bool {
        matches!(self, SlopeOutcome::Improving { .. })
    }

    pub fn p_value(&self) -> f64 {
        match self {
            SlopeOutcome::Improving { p_value, .. } | SlopeOutcome::NotImproving { p_value, .. } => *p_value,
        }
    }
}

/// One-sided t-test that the least-squares slope against the index is negative.
pub fn slope_significance(values: &[f64], alpha: f64) -> Result<SlopeOutcome> {
    let n = values.len();
    if n < 4 {
        return Err(Error::TooFewSamples { what: "slope_significance", need: 4, got: n });
    }
    let nf = n as f64;
    let mx = (nf - 1.0) / 2.0;
    let my = values.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in values.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = values
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let r = y - (intercept + slope * i as f64);
            r * r
        })
        .sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    let p_value = if se == 0.0 || !se.is_finite() {
        if slope < 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        t.cdf(slope / se)
    };
    Ok(if slope < 0.0 && p_value < alpha {
        SlopeOutcome::Improving { slope, p_value }
    } else {
        SlopeOutcome::NotImproving { slope, p_value }
    })
}
