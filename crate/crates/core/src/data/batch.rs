use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleMode {
    /// Same permutation for features and targets each epoch.
    #[default]
    Correct,
    /// Only feature rows are permuted, so pairs get scrambled.
    FeaturesOnly,
    /// Original order every epoch.
    Off,
}

/// Mini-batch iterator over epochs. The last batch of an epoch may be short.
#[derive(Debug, Clone)]
pub struct BatchStream {
    pub batch_size: usize,
    pub seed: u64,
    pub mode: ShuffleMode,
    epoch: u64,
    cursor: usize,
    order_x: Vec<usize>,
    order_y: Vec<usize>,
}

impl BatchStream {
    pub fn new(batch_size: usize, seed: u64, mode: ShuffleMode) -> Self {
        BatchStream {
            batch_size,
            seed,
            mode,
            epoch: 0,
            cursor: 0,
            order_x: Vec::new(),
            order_y: Vec::new(),
        }
    }

    /// Epochs started so far.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn batches_per_epoch(&self, ds: &Dataset) -> usize {
        ds.len().div_ceil(self.batch_size.max(1))
    }

    fn start_epoch(&mut self, m: usize) {
        let mut rng = RngStream::new(self.seed).split(self.epoch);
        let (ox, oy) = match self.mode {
            ShuffleMode::Off => ((0..m).collect(), (0..m).collect()),
            ShuffleMode::Correct => {
                let p = rng.permutation(m);
                (p.clone(), p)
            }
            ShuffleMode::FeaturesOnly => (rng.permutation(m), (0..m).collect()),
        };
        self.order_x = ox;
        self.order_y = oy;
        self.cursor = 0;
        self.epoch += 1;
    }

    /// True when the next call starts a new epoch.
    pub fn at_epoch_start(&self) -> bool {
        self.order_x.is_empty() || self.cursor >= self.order_x.len()
    }

    pub fn next_batch(&mut self, ds: &Dataset) -> Result<(Tensor, Tensor)> {
        let m = ds.len();
        if self.batch_size == 0 || self.batch_size > m {
            return Err(Error::InvalidParameter(format!(
                "batch size {} for a dataset of {m} rows",
                self.batch_size
            )));
        }
        if self.order_x.len() != m || self.cursor >= m {
            self.start_epoch(m);
        }
        let end = (self.cursor + self.batch_size).min(m);
        let xs = &self.order_x[self.cursor..end];
        let ys = &self.order_y[self.cursor..end];
        self.cursor = end;
        Ok((ds.x.select_rows(xs), ds.y.select_rows(ys)))
    }
}

/// Exactly `per_class` rows of every class, shuffled. Regression datasets get
/// `per_class` uniformly drawn rows.
pub fn stratified_single_batch(ds: &Dataset, per_class: usize, rng: &mut RngStream) -> Result<(Tensor, Tensor)> {
    let mut rows = Vec::new();
    if ds.problem.is_classification() {
        let labels = ds.labels();
        let counts = ds.class_counts();
        for (class, &available) in counts.iter().enumerate() {
            if available < per_class {
                return Err(Error::InsufficientClassRows {
                    class,
                    available,
                    requested: per_class,
                });
            }
            let members: Vec<usize> = (0..ds.len()).filter(|&i| labels[i] == class).collect();
            for k in rng.choose_distinct(members.len(), per_class) {
                rows.push(members[k]);
            }
        }
        rng.shuffle(&mut rows);
    } else {
        if ds.len() < per_class {
            return Err(Error::InsufficientClassRows {
                class: 0,
                available: ds.len(),
                requested: per_class,
            });
        }
        rows = rng.choose_distinct(ds.len(), per_class);
    }
    Ok((ds.x.select_rows(&rows), ds.y.select_rows(&rows)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ProblemKind;
    use proptest::prelude::*;

    fn paired(m: usize) -> Dataset {
        let x = Tensor::matrix(m, 1, (0..m).map(|i| i as f64).collect()).unwrap();
        let y = x.clone();
        Dataset::new(x, y, ProblemKind::Regression { n_outputs: 1 }).unwrap()
    }

    #[test]
    fn unshuffled_full_batch_is_identity() {
        let ds = paired(7);
        let mut s = BatchStream::new(7, 0, ShuffleMode::Off);
        let (x, y) = s.next_batch(&ds).unwrap();
        assert_eq!(x, ds.x);
        assert_eq!(y, ds.y);
    }

    #[test]
    fn features_only_breaks_pairs() {
        let ds = paired(20);
        let mut s = BatchStream::new(5, 1, ShuffleMode::FeaturesOnly);
        let mut mismatch = false;
        for _ in 0..8 {
            let (x, y) = s.next_batch(&ds).unwrap();
            mismatch |= x.data() != y.data();
        }
        assert_eq!(s.epoch(), 2);
        assert!(mismatch);
    }

    #[test]
    fn stratified_counts() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let ds = Dataset::from_labels(Tensor::zeros(&[100, 2]), &labels, 10).unwrap();
        let (_, y) = stratified_single_batch(&ds, 4, &mut RngStream::new(0)).unwrap();
        assert_eq!(y.rows(), 40);
        let mut counts = [0; 10];
        for l in y.argmax_rows() {
            counts[l] += 1;
        }
        assert_eq!(counts, [4; 10]);
    }

    #[test]
    fn stratified_insufficient_class() {
        let labels: Vec<usize> = (0..103).map(|i| usize::from(i >= 3)).collect();
        let ds = Dataset::from_labels(Tensor::zeros(&[103, 1]), &labels, 2).unwrap();
        assert!(matches!(
            stratified_single_batch(&ds, 4, &mut RngStream::new(0)),
            Err(Error::InsufficientClassRows { class: 0, available: 3, requested: 4 })
        ));
    }

    #[test]
    fn regression_fallback() {
        let (x, _) = stratified_single_batch(&paired(30), 8, &mut RngStream::new(1)).unwrap();
        assert_eq!(x.rows(), 8);
    }

    proptest! {
        #[test]
        fn correct_shuffle_preserves_pairs(m in 2usize..40, bs in 1usize..10, seed in 0u64..100) {
            let ds = paired(m);
            let bs = bs.min(m);
            let mut s = BatchStream::new(bs, seed, ShuffleMode::Correct);
            let mut seen = Vec::new();
            for _ in 0..s.batches_per_epoch(&ds) {
                let (x, y) = s.next_batch(&ds).unwrap();
                prop_assert_eq!(x.data(), y.data());
                seen.extend_from_slice(x.data());
            }
            seen.sort_by(f64::total_cmp);
            prop_assert_eq!(seen, ds.x.data().to_vec());
        }
    }
}
