use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::synthetic::{gaussian_blobs, noisy_linear};
use crate::data::{AugmenterSpec, Dataset, ScalerKind, ShuffleMode, Transform};
use crate::error::{Error, Result};
use crate::nn::{
    ActivationKind, InitStrategy, LossSpec, MetricKind, NetworkBuilder, OptimizerSpec, ProblemKind, RegularizationSpec,
};
use crate::program::{DataBinding, TrainingProgram};
use crate::tensor::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaseProgramId {
    #[serde(rename = "RegrFNN")]
    RegrFnn,
    #[serde(rename = "ShallowFNN")]
    ShallowFnn,
    #[serde(rename = "DeepFNN")]
    DeepFnn,
}

impl BaseProgramId {
    pub const ALL: [BaseProgramId; 3] = [BaseProgramId::RegrFnn, BaseProgramId::ShallowFnn, BaseProgramId::DeepFnn];

    pub fn name(&self) -> &'static str {
        match self {
            BaseProgramId::RegrFnn => "RegrFNN",
            BaseProgramId::ShallowFnn => "ShallowFNN",
            BaseProgramId::DeepFnn => "DeepFNN",
        }
    }

    /// Single-letter tag used in matrix tables.
    pub fn short(&self) -> char {
        self.name().chars().next().unwrap_or('?')
    }
}

impl fmt::Display for BaseProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaseProgramId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let l = s.to_ascii_lowercase();
        BaseProgramId::ALL
            .into_iter()
            .find(|b| b.name().to_ascii_lowercase() == l || b.short().to_ascii_lowercase().to_string() == l)
            .ok_or_else(|| Error::Config(format!("unknown base program {s:?} (expected RegrFNN, ShallowFNN or DeepFNN)")))
    }
}

/// A program bound to its raw train and test data.
#[derive(Debug, Clone)]
pub struct BaseSetup {
    pub id: BaseProgramId,
    pub program: TrainingProgram,
    pub train: Dataset,
    pub test: Dataset,
}

pub const N_CLASSES: usize = 10;
pub const TRAIN_PER_CLASS: usize = 50;
const TEST_PER_CLASS: usize = 20;
const BLOB_NOISE: f64 = 150.0;
/// Dropout after each hidden block of DeepFNN.
const DEEP_PKEEP: [Option<f64>; 4] = [Some(0.8), None, None, Some(0.5)];
const REGR_TRAIN: usize = 320;
const REGR_TEST: usize = 80;
const REGR_NOISE: f64 = 0.5;

/// Mild pixel noise used as the healthy augmentation.
pub fn mild_augmenter() -> AugmenterSpec {
    AugmenterSpec::new(vec![Transform::GaussianNoise { sigma: 0.1, ratio: 0.5 }])
}

/// Blob data with `train_counts[k]` training rows of class k and a balanced
/// test split. Class prototypes depend only on `seed` and `id`.
pub fn blob_split(id: BaseProgramId, seed: u64, train_counts: &[usize]) -> Result<(Dataset, Dataset)> {
    let counts: Vec<usize> = train_counts.iter().map(|c| c + TEST_PER_CLASS).collect();
    let ds = gaussian_blobs(&counts, BLOB_NOISE, &mut RngStream::new(seed).split(id as u64))?;
    let mut taken = vec![0; counts.len()];
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (row, label) in ds.labels().into_iter().enumerate() {
        if taken[label] < TEST_PER_CLASS {
            taken[label] += 1;
            test.push(row);
        } else {
            train.push(row);
        }
    }
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Clean reference program for `id` with seeded synthetic data.
pub fn base_program(id: BaseProgramId, seed: u64) -> Result<BaseSetup> {
    let classes = ProblemKind::Classification { n_classes: N_CLASSES };
    let (program, train, test) = match id {
        BaseProgramId::RegrFnn => {
            let ds = noisy_linear(REGR_TRAIN + REGR_TEST, REGR_NOISE, &mut RngStream::new(seed).split(id as u64))?;
            let (train, test) = ds.split_at(REGR_TRAIN);
            let net = NetworkBuilder::new(train.n_features())
                .dense(64)
                .activation(ActivationKind::Relu)
                .dense(64)
                .activation(ActivationKind::Relu)
                .dense(1)
                .activation(ActivationKind::Identity)
                .build(ProblemKind::Regression { n_outputs: 1 })?;
            let program = TrainingProgram {
                name: id.name().into(),
                net,
                init: InitStrategy::Recommended,
                loss: LossSpec::mse(),
                reg: RegularizationSpec::l2(1e-6),
                optimizer: OptimizerSpec::adam(1e-2),
                metric: MetricKind::MeanAbsoluteError,
                data: DataBinding {
                    input_scalers: vec![ScalerKind::Standardize],
                    output_scalers: vec![ScalerKind::Standardize],
                    shuffle: ShuffleMode::Correct,
                    batch_size: 32,
                    augmenter: None,
                },
                flip_gradient_sign: false,
                seed,
            };
            (program, train, test)
        }
        BaseProgramId::ShallowFnn => {
            let (train, test) = blob_split(id, seed, &[TRAIN_PER_CLASS; N_CLASSES])?;
            let net = NetworkBuilder::new(train.n_features())
                .dense(64)
                .activation(ActivationKind::Relu)
                .dense(64)
                .activation(ActivationKind::Relu)
                .dense(N_CLASSES)
                .activation(ActivationKind::Softmax)
                .build(classes)?;
            let program = TrainingProgram {
                name: id.name().into(),
                net,
                init: InitStrategy::Recommended,
                loss: LossSpec { epsilon: 0.0, ..LossSpec::cross_entropy() },
                reg: RegularizationSpec {
                    lambda_l1: 1e-5,
                    lambda_l2: 1e-4,
                    scale_by_batch: false,
                },
                optimizer: OptimizerSpec::sgd(0.1),
                metric: MetricKind::Accuracy,
                data: DataBinding {
                    input_scalers: vec![ScalerKind::Standardize],
                    output_scalers: vec![],
                    shuffle: ShuffleMode::Correct,
                    batch_size: 32,
                    augmenter: Some(mild_augmenter()),
                },
                flip_gradient_sign: false,
                seed,
            };
            (program, train, test)
        }
        BaseProgramId::DeepFnn => {
            let (train, test) = blob_split(id, seed, &[TRAIN_PER_CLASS; N_CLASSES])?;
            let mut b = NetworkBuilder::new(train.n_features());
            for pkeep in DEEP_PKEEP {
                b = b.dense_no_bias(64).batch_norm().activation(ActivationKind::Relu);
                if let Some(p) = pkeep {
                    b = b.dropout(p);
                }
            }
            let net = b.dense(N_CLASSES).activation(ActivationKind::Softmax).build(classes)?;
            let program = TrainingProgram {
                name: id.name().into(),
                net,
                init: InitStrategy::Recommended,
                loss: LossSpec { epsilon: 0.0, ..LossSpec::cross_entropy() },
                reg: RegularizationSpec::none(),
                optimizer: OptimizerSpec::adam(3e-3),
                metric: MetricKind::Accuracy,
                data: DataBinding {
                    input_scalers: vec![ScalerKind::Standardize],
                    output_scalers: vec![],
                    shuffle: ShuffleMode::Correct,
                    batch_size: 32,
                    augmenter: Some(mild_augmenter()),
                },
                flip_gradient_sign: false,
                seed,
            };
            (program, train, test)
        }
    };
    Ok(BaseSetup { id, program, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_parse_by_name_or_letter() {
        assert_eq!("deepfnn".parse::<BaseProgramId>().unwrap(), BaseProgramId::DeepFnn);
        assert_eq!("R".parse::<BaseProgramId>().unwrap(), BaseProgramId::RegrFnn);
        assert!("cnn".parse::<BaseProgramId>().is_err());
    }

    #[test]
    fn base_programs_validate() {
        for id in BaseProgramId::ALL {
            let b = base_program(id, 1).unwrap();
            b.program.validate().unwrap();
            b.program.prepare_pair(&b.train, &b.test).unwrap();
        }
    }

    #[test]
    fn deep_has_five_dense_layers() {
        let b = base_program(BaseProgramId::DeepFnn, 1).unwrap();
        assert_eq!(b.program.net.dense_layers().len(), 5);
        assert!(b.program.net.has_batchnorm() && b.program.net.has_dropout());
    }
}
