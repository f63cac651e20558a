//! Seeded stand-ins for the image and tabular datasets.

use super::Dataset;
use crate::error::Result;
use crate::nn::ProblemKind;
use crate::tensor::{RngStream, Tensor};

/// Side of the square pixel grid of [`gaussian_blobs`].
pub const GRID: usize = 8;

/// Image-like classification data: each class is a random 8×8 prototype with
/// intensities in [0, 255]; samples add Gaussian pixel noise and are clipped.
/// `counts[k]` rows are drawn for class k.
pub fn gaussian_blobs(counts: &[usize], noise: f64, rng: &mut RngStream) -> Result<Dataset> {
    let d = GRID * GRID;
    let k = counts.len();
    let mut proto_rng = rng.split(0);
    let prototypes: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| 30.0 + 195.0 * proto_rng.next_f64()).collect())
        .collect();
    let mut sample_rng = rng.split(1);
    let total: usize = counts.iter().sum();
    let mut x = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    for (class, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            for &p in &prototypes[class] {
                x.push((p + sample_rng.normal(0.0, noise)).clamp(0.0, 255.0).round());
            }
            labels.push(class);
        }
    }
    // interleave classes so the rows are not sorted by label
    let order = rng.split(2).permutation(total);
    let x = Tensor::matrix(total, d, x)?.select_rows(&order);
    let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    Dataset::from_labels(x, &labels, k)
}

/// Tabular regression data with heterogeneous raw feature scales and a single
/// target around 23 ± 8, generated from a fixed linear model of the
/// standardized features plus a mild interaction term and noise.
pub fn noisy_linear(n: usize, noise: f64, rng: &mut RngStream) -> Result<Dataset> {
    const MEANS: [f64; 6] = [5.4, 194.0, 104.0, 2970.0, 15.6, 76.0];
    const STDS: [f64; 6] = [1.7, 104.0, 38.0, 846.0, 2.8, 3.7];
    const COEF: [f64; 6] = [-1.2, 1.5, -2.0, -4.5, 0.6, 2.8];
    let mut x = Vec::with_capacity(n * 6);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..6).map(|_| rng.normal(0.0, 1.0)).collect();
        for j in 0..6 {
            x.push(MEANS[j] + STDS[j] * z[j]);
        }
        let lin: f64 = z.iter().zip(COEF).map(|(a, b)| a * b).sum();
        y.push(23.5 + lin + 0.8 * z[1] * z[3] + rng.normal(0.0, noise));
    }
    Dataset::new(
        Tensor::matrix(n, 6, x)?,
        Tensor::matrix(n, 1, y)?,
        ProblemKind::Regression { n_outputs: 1 },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_shape_range_and_counts() {
        let ds = gaussian_blobs(&[5, 7, 3], 20.0, &mut RngStream::new(1)).unwrap();
        assert_eq!(ds.x.shape(), &[15, 64]);
        assert_eq!(ds.class_counts(), vec![5, 7, 3]);
        assert!(ds.x.data().iter().all(|v| (0.0..=255.0).contains(v)));
        let again = gaussian_blobs(&[5, 7, 3], 20.0, &mut RngStream::new(1)).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn regression_target_scale() {
        let ds = noisy_linear(2000, 0.5, &mut RngStream::new(2)).unwrap();
        let t = ds.y.column(0);
        let m = t.iter().sum::<f64>() / t.len() as f64;
        assert!((m - 23.5).abs() < 0.5);
        assert!(ds.x.column(3).iter().sum::<f64>() / 2000.0 > 2500.0);
    }
}
