//! Datasets, loaders, scaling, batching and augmentation.

mod augment;
mod batch;
mod io;
mod scale;
pub mod synthetic;

pub use augment::{augment, AugmenterSpec, Transform};
pub use batch::{stratified_single_batch, BatchStream, ShuffleMode};
pub use io::{load_csv, load_dataset, load_idx_pair, read_idx, write_idx, CsvSchema, DataFormat};
pub use scale::{scale_features, FittedScaler, ScaleTarget, ScalerKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ProblemKind;
use crate::tensor::Tensor;

/// Features `x` (m×d) and targets `y` (m×k one-hot, or m×r continuous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Tensor,
    pub y: Tensor,
    pub problem: ProblemKind,
}

impl Dataset {
    pub fn new(x: Tensor, y: Tensor, problem: ProblemKind) -> Result<Self> {
        if x.shape().len() != 2 || y.shape().len() != 2 || x.rows() != y.rows() {
            return Err(Error::ShapeMismatch {
                op: "dataset rows",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        if y.cols() != problem.output_dim() {
            return Err(Error::ShapeMismatch {
                op: "dataset targets",
                left: y.shape().to_vec(),
                right: vec![y.rows(), problem.output_dim()],
            });
        }
        if problem.is_classification() {
            for r in 0..y.rows() {
                let row = y.row(r);
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-9 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidParameter(format!("label row {r} is not one-hot")));
                }
            }
        }
        Ok(Dataset { x, y, problem })
    }

    /// Builds a classification dataset from integer labels.
    pub fn from_labels(x: Tensor, labels: &[usize], n_classes: usize) -> Result<Self> {
        Self::new(x, one_hot(labels, n_classes)?, ProblemKind::Classification { n_classes })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    /// Class index per row (classification only).
    pub fn labels(&self) -> Vec<usize> {
        self.y.argmax_rows()
    }

    /// Rows per class, empty for regression.
    pub fn class_counts(&self) -> Vec<usize> {
        match self.problem {
            ProblemKind::Classification { n_classes } => {
                let mut counts = vec![0; n_classes];
                for l in self.labels() {
                    counts[l] += 1;
                }
                counts
            }
            ProblemKind::Regression { .. } => Vec::new(),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(rows),
            y: self.y.select_rows(rows),
            problem: self.problem,
        }
    }

    /// Splits off the first `n` rows.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Tensor> {
    let mut t = Tensor::zeros(&[labels.len(), n_classes]);
    for (i, &l) in labels.iter().enumerate() {
        if l >= n_classes {
            return Err(Error::InvalidParameter(format!("label {l} out of range for {n_classes} classes")));
        }
        t.set(i, l, 1.0);
    }
    Ok(t)
}
