use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Distribution summary of a set of values. Keeps the sorted values so any
/// percentile can be queried afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    /// Population variance.
    pub variance: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub abs_mean: f64,
    #[serde(skip)]
    sorted: Vec<f64>,
}

impl SummaryStats {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyTensor("reduce_stats"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).max(0.0);
        let abs_mean = values.iter().map(|v| v.abs()).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(SummaryStats {
            count: values.len(),
            mean,
            variance,
            std: variance.sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            abs_mean,
            sorted,
        })
    }

    /// Percentile with linear interpolation between order statistics
    /// (rank = q/100 · (n − 1)).
    pub fn percentile(&self, q: f64) -> f64 {
        percentile_sorted(&self.sorted, q)
    }
}

pub(crate) fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let q = q.clamp(0.0, 100.0);
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Summary statistics over the flattened tensor (`axis = None`) or one per
/// slice along `axis` of a matrix (`Some(0)`: one per column, `Some(1)`: one per row).
pub fn reduce_stats(t: &Tensor, axis: Option<usize>) -> Result<Vec<SummaryStats>> {
    if t.is_empty() {
        return Err(Error::EmptyTensor("reduce_stats"));
    }
    match axis {
        None => Ok(vec![SummaryStats::from_values(t.data())?]),
        Some(0) => (0..t.cols()).map(|c| SummaryStats::from_values(&t.column(c))).collect(),
        Some(1) => (0..t.rows()).map(|r| SummaryStats::from_values(t.row(r))).collect(),
        Some(a) => Err(Error::InvalidParameter(format!("axis {a} out of range"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_to_five() {
        let s = &reduce_stats(&Tensor::vector(vec![1.0, 2.0, 3.0, 4.0, 5.0]), None).unwrap()[0];
        assert_eq!(s.mean, 3.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.percentile(50.0), 3.0);
    }

    #[test]
    fn constant_tensor() {
        let s = &reduce_stats(&Tensor::filled(&[3, 4], 2.5), None).unwrap()[0];
        assert_eq!(s.variance, 0.0);
        assert_eq!(s.percentile(95.0), 2.5);
    }

    #[test]
    fn robust_maximum_ignores_single_outlier() {
        let mut v = vec![0.0; 99];
        v.push(1.0);
        let s = SummaryStats::from_values(&v).unwrap();
        // rank 0.95 * 99 = 94.05 sits between two zeros
        assert!(s.percentile(95.0).abs() < 1e-12);
        assert_eq!(s.percentile(100.0), 1.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(reduce_stats(&Tensor::zeros(&[0]), None).is_err());
    }

    #[test]
    fn per_column() {
        let t = Tensor::from_rows(&[vec![1.0, 10.0], vec![3.0, 10.0]]).unwrap();
        let s = reduce_stats(&t, Some(0)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].mean, 2.0);
        assert_eq!(s[1].variance, 0.0);
    }

    proptest! {
        #[test]
        fn percentile_bounds_and_monotone(values in prop::collection::vec(-1e6f64..1e6, 1..60), q1 in 0.0f64..100.0, q2 in 0.0f64..100.0) {
            let s = SummaryStats::from_values(&values).unwrap();
            prop_assert_eq!(s.percentile(0.0), s.min);
            prop_assert_eq!(s.percentile(100.0), s.max);
            let (a, b) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(s.percentile(a) <= s.percentile(b) + 1e-9);
            prop_assert!(s.percentile(a) >= s.min && s.percentile(b) <= s.max);
            prop_assert!(s.variance >= 0.0);
        }
    }
}
