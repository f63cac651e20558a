use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    /// Adds N(0, σ) noise to a `ratio` fraction of entries.
    GaussianNoise { sigma: f64, ratio: f64 },
    /// Mirrors each row laid out as `height × width` grids, with the given
    /// per-instance probability.
    HorizontalFlip { height: usize, width: usize, probability: f64 },
    /// Overwrites a random `patch × patch` square of each grid with `value`.
    RandomErase { height: usize, width: usize, patch: usize, value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmenterSpec {
    pub transforms: Vec<Transform>,
}

impl AugmenterSpec {
    pub fn new(transforms: Vec<Transform>) -> Self {
        AugmenterSpec { transforms }
    }
}

fn grid_check(cols: usize, height: usize, width: usize) -> Result<usize> {
    let cell = height * width;
    if cell == 0 || !cols.is_multiple_of(cell) {
        return Err(Error::ShapeMismatch {
            op: "augment grid",
            left: vec![cols],
            right: vec![height, width],
        });
    }
    Ok(cols / cell)
}

/// Applies the transformations in order.
pub fn augment(batch: &Tensor, spec: &AugmenterSpec, rng: &mut RngStream) -> Result<Tensor> {
    let mut out = batch.clone();
    for t in &spec.transforms {
        match *t {
            Transform::GaussianNoise { sigma, ratio } => {
                if sigma < 0.0 || !(0.0..=1.0).contains(&ratio) {
                    return Err(Error::InvalidParameter(format!("noise sigma {sigma}, ratio {ratio}")));
                }
                for v in out.data_mut() {
                    if rng.next_f64() < ratio {
                        *v += rng.normal(0.0, sigma);
                    }
                }
            }
            Transform::HorizontalFlip { height, width, probability } => {
                let channels = grid_check(out.cols(), height, width)?;
                for r in 0..out.rows() {
                    if rng.next_f64() >= probability {
                        continue;
                    }
                    let row = out.row_mut(r);
                    for ch in 0..channels {
                        for y in 0..height {
                            let base = ch * height * width + y * width;
                            row[base..base + width].reverse();
                        }
                    }
                }
            }
            Transform::RandomErase { height, width, patch, value } => {
                let channels = grid_check(out.cols(), height, width)?;
                if patch == 0 || patch > height || patch > width {
                    return Err(Error::InvalidParameter(format!("erase patch {patch} on {height}x{width}")));
                }
                for r in 0..out.rows() {
                    let y0 = rng.index(height - patch + 1);
                    let x0 = rng.index(width - patch + 1);
                    let row = out.row_mut(r);
                    for ch in 0..channels {
                        for y in y0..y0 + patch {
                            let base = ch * height * width + y * width;
                            row[base + x0..base + x0 + patch].fill(value);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Distribution;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn zero_noise_is_identity() {
        let mut rng = RngStream::new(0);
        let x = rng.sample(Distribution::Uniform { lo: 0.0, hi: 1.0 }, &[4, 6]).unwrap();
        let spec = AugmenterSpec::new(vec![Transform::GaussianNoise { sigma: 0.0, ratio: 1.0 }]);
        assert_eq!(augment(&x, &spec, &mut rng).unwrap(), x);
    }

    #[test]
    fn flip_is_an_involution() {
        let mut rng = RngStream::new(1);
        let x = rng.sample(Distribution::Uniform { lo: 0.0, hi: 1.0 }, &[3, 12]).unwrap();
        let spec = AugmenterSpec::new(vec![Transform::HorizontalFlip { height: 3, width: 4, probability: 1.0 }]);
        let once = augment(&x, &spec, &mut rng).unwrap();
        assert_ne!(once, x);
        assert_eq!(once.get(0, 0), x.get(0, 3));
        assert_eq!(augment(&once, &spec, &mut rng).unwrap(), x);
    }

    #[test]
    fn large_noise_leaves_unit_range() {
        let mut rng = RngStream::new(2);
        let x = rng.sample(Distribution::Uniform { lo: 0.0, hi: 1.0 }, &[200, 50]).unwrap();
        let spec = AugmenterSpec::new(vec![Transform::GaussianNoise { sigma: 5.0, ratio: 0.5 }]);
        let y = augment(&x, &spec, &mut rng).unwrap();
        let touched: Vec<f64> = x.data().iter().zip(y.data()).filter(|(a, b)| a != b).map(|(_, b)| *b).collect();
        let outside = touched.iter().filter(|v| !(0.0..=1.0).contains(*v)).count() as f64 / touched.len() as f64;
        // oracle: 1 − ∫₀¹ [Φ((1−x)/5) − Φ(−x/5)] dx by the midpoint rule
        let n = Normal::new(0.0, 5.0).unwrap();
        let inside: f64 = (0..1000)
            .map(|i| {
                let x = (i as f64 + 0.5) / 1000.0;
                n.cdf(1.0 - x) - n.cdf(-x)
            })
            .sum::<f64>()
            / 1000.0;
        assert!((outside - (1.0 - inside)).abs() < 0.02, "{outside} vs {}", 1.0 - inside);
        assert!(touched.len() > 4000 && touched.len() < 6000);
    }

    #[test]
    fn erase_and_grid_errors() {
        let x = Tensor::ones(&[2, 16]);
        let spec = AugmenterSpec::new(vec![Transform::RandomErase { height: 4, width: 4, patch: 2, value: 0.0 }]);
        let y = augment(&x, &spec, &mut RngStream::new(3)).unwrap();
        for r in 0..2 {
            assert_eq!(y.row(r).iter().filter(|&&v| v == 0.0).count(), 4);
        }
        let bad = AugmenterSpec::new(vec![Transform::HorizontalFlip { height: 3, width: 3, probability: 1.0 }]);
        assert!(augment(&x, &bad, &mut RngStream::new(0)).is_err());
    }
}
