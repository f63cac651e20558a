use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::base::{blob_split, BaseProgramId, BaseSetup, N_CLASSES, TRAIN_PER_CLASS};
use crate::data::{AugmenterSpec, ScalerKind, ShuffleMode, Transform};
use crate::debugger::CheckId;
use crate::error::{Error, Result};
use crate::nn::{ActivationKind, InitStrategy, Layer, LossDefect, LossSpec, Network, RegularizationSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultCategory {
    CodingBug,
    Misconfiguration,
}

impl FaultCategory {
    pub fn name(&self) -> &'static str {
        match self {
            FaultCategory::CodingBug => "coding",
            FaultCategory::Misconfiguration => "misconfiguration",
        }
    }
}

macro_rules! faults {
    ($($variant:ident => $name:literal, $cat:ident, $desc:literal;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum FaultId {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl FaultId {
            pub const ALL: &'static [FaultId] = &[$(FaultId::$variant),*];

            pub fn name(&self) -> &'static str {
                match self { $(FaultId::$variant => $name,)* }
            }

            pub fn category(&self) -> FaultCategory {
                match self { $(FaultId::$variant => FaultCategory::$cat,)* }
            }

            pub fn description(&self) -> &'static str {
                match self { $(FaultId::$variant => $desc,)* }
            }
        }
    };
}

faults! {
    MissingInputNorm => "missing-input-norm", CodingBug, "features fed without normalization";
    OverScaledOutputs => "over-scaled-outputs", CodingBug, "regression targets multiplied after standardization";
    RedundantNorm => "redundant-norm", CodingBug, "features normalized twice";
    FlippedGradient => "flipped-gradient", CodingBug, "gradients applied with the wrong sign";
    MissingSoftmax => "missing-softmax", CodingBug, "output layer left linear";
    SoftmaxInAndOutLoss => "softmax-in-and-out-loss", CodingBug, "softmax applied by the network and again inside the loss";
    SoftmaxWrongAxis => "softmax-wrong-axis", CodingBug, "output softmax normalized down the batch";
    CrossEntropyWrongAxis => "ce-wrong-axis", CodingBug, "cross-entropy normalizes down the batch";
    MseWrongBroadcast => "mse-wrong-broadcast", CodingBug, "squared error between every prediction and every target";
    InvertedMeanSum => "inverted-ce-mean-sum", CodingBug, "cross-entropy sums over instances and averages over classes";
    ShuffleFeaturesOnly => "shuffle-features-only", CodingBug, "features shuffled without their labels";
    InvalidAugmentation => "invalid-augmentation", CodingBug, "augmentation noise far larger than the feature scale";
    ConstantWeights => "constant-weights", Misconfiguration, "every weight starts at the same value";
    DummyWeights => "dummy-weights", Misconfiguration, "weights drawn from N(0, 1)";
    MseForCrossEntropy => "mse-for-ce", Misconfiguration, "squared error on a classifier";
    CrossEntropyForMse => "ce-for-mse", Misconfiguration, "cross-entropy on a regressor";
    LowLearningRate => "low-lr", Misconfiguration, "learning rate four orders too small";
    HighLearningRate => "high-lr", Misconfiguration, "learning rate far too large";
    AdamEpsilon => "adam-epsilon", Misconfiguration, "Adam epsilon far below 1e-8";
    MissingBatchNorm => "missing-batchnorm", Misconfiguration, "batch normalization layers removed";
    NoBatchNormUpdate => "no-batchnorm-update", Misconfiguration, "batch-norm moving statistics never updated";
    LowLambda => "low-lambda", Misconfiguration, "norm penalty removed";
    HighLambda => "high-lambda", Misconfiguration, "norm penalty dominates the loss";
    HighKeepProb => "high-keep-p", Misconfiguration, "dropout disabled";
    LowKeepProb => "low-keep-p", Misconfiguration, "dropout keeps one unit in ten";
    UnbalancedData => "unbalanced-data", Misconfiguration, "one class dominates the training data";
}

impl fmt::Display for FaultId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FaultId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaultId::ALL
            .iter()
            .copied()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown fault {s:?}")))
    }
}

/// One (fault, program) pair of the benchmark and the checks expected to
/// catch it. An empty `expected` list marks a fault no check is meant to
/// catch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub fault: FaultId,
    pub program: BaseProgramId,
    pub expected: Vec<CheckId>,
    /// The expectation was stated for the convolutional variant and is
    /// carried over to the dense analogue.
    pub transferred: bool,
}

impl CatalogEntry {
    pub fn category(&self) -> FaultCategory {
        self.fault.category()
    }

    pub fn is_designated(&self) -> bool {
        !self.expected.is_empty()
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.fault, self.program)
    }
}

/// Faults from the taxonomy with no synthetic benchmark row.
pub const NOT_APPLICABLE: &[(&str, &str)] = &[
    ("softmax-for-hidden-activations", "only observed in collected programs, no synthetic row"),
    ("softmax-for-1-dim-output", "only observed in collected programs, no synthetic row"),
    ("over-restricted-output-domain", "only observed in collected programs, no synthetic row"),
];

/// Every applicable (fault, program) pair with its expected checks.
pub fn catalog() -> Vec<CatalogEntry> {
    use BaseProgramId::{DeepFnn as D, RegrFnn as R, ShallowFnn as S};
    use CheckId as C;
    use FaultId as F;
    let rows: Vec<(FaultId, Vec<BaseProgramId>, Vec<CheckId>)> = vec![
        (F::MissingInputNorm, vec![R, S, D], vec![C::UnsInps]),
        (F::OverScaledOutputs, vec![R], vec![C::UnsOuts]),
        (F::RedundantNorm, vec![R, S, D], vec![C::UnsInps]),
        (F::FlippedGradient, vec![R, S, D], vec![C::DivLoss]),
        (F::MissingSoftmax, vec![S, D], vec![C::InvOuts]),
        (F::SoftmaxInAndOutLoss, vec![S, D], vec![]),
        (F::SoftmaxWrongAxis, vec![S, D], vec![C::InvOuts, C::InvOutDep]),
        (F::CrossEntropyWrongAxis, vec![S, D], vec![C::PiLoss, C::InvLossDep]),
        (F::MseWrongBroadcast, vec![R], vec![]),
        (F::InvertedMeanSum, vec![S, D], vec![C::PiLoss]),
        (F::ShuffleFeaturesOnly, vec![R, S, D], vec![C::CorruptedLabels]),
        (F::InvalidAugmentation, vec![S, D], vec![C::ShiftedAugmentedData]),
        (F::ConstantWeights, vec![R, S, D], vec![C::UnSymW]),
        (F::DummyWeights, vec![R, S, D], vec![C::PiW]),
        (F::MseForCrossEntropy, vec![S, D], vec![]),
        (F::CrossEntropyForMse, vec![R], vec![]),
        (F::LowLearningRate, vec![R, S, D], vec![C::WUpSlow]),
        (F::HighLearningRate, vec![R, D], vec![C::WUpFast]),
        (F::HighLearningRate, vec![S], vec![]),
        (F::AdamEpsilon, vec![D], vec![C::WUpFast]),
        (F::MissingBatchNorm, vec![D], vec![C::UnsActLs, C::UnsActHs]),
        (F::NoBatchNormUpdate, vec![D], vec![C::UnsModeTr]),
        (F::LowLambda, vec![R, S], vec![C::ZeroLoss]),
        (F::HighLambda, vec![R, S], vec![C::OverRegLoss]),
        (F::HighKeepProb, vec![D], vec![C::ZeroLoss]),
        (F::LowKeepProb, vec![D], vec![C::UnsModeTr]),
        (F::UnbalancedData, vec![S, D], vec![C::UnbalancedLabels]),
    ];
    let mut out = Vec::new();
    for (fault, programs, expected) in rows {
        for program in programs {
            out.push(CatalogEntry {
                fault,
                program,
                expected: expected.clone(),
                transferred: program != R,
            });
        }
    }
    out.sort_by_key(|e| (e.fault.category(), FaultId::ALL.iter().position(|f| *f == e.fault), e.program));
    out
}

/// Looks up the catalog row for a pair.
pub fn catalog_entry(fault: FaultId, program: BaseProgramId) -> Result<CatalogEntry> {
    catalog()
        .into_iter()
        .find(|e| e.fault == fault && e.program == program)
        .ok_or(Error::InapplicableFault {
            fault: fault.name().to_string(),
            program: program.name().to_string(),
        })
}

fn output_activation_mut(net: &mut Network) -> Option<&mut ActivationKind> {
    net.layers.iter_mut().rev().find_map(|l| match l {
        Layer::Activation { kind } => Some(kind),
        _ => None,
    })
}

/// Returns the base with exactly one component mutated by `fault`.
pub fn inject_fault(base: &BaseSetup, fault: FaultId) -> Result<BaseSetup> {
    catalog_entry(fault, base.id)?;
    let mut out = base.clone();
    out.program.name = format!("{}+{}", base.program.name, fault);
    let p = &mut out.program;
    match fault {
        FaultId::MissingInputNorm => p.data.input_scalers.clear(),
        FaultId::OverScaledOutputs => p.data.output_scalers.push(ScalerKind::Rescale { factor: 100.0 }),
        FaultId::RedundantNorm => p.data.input_scalers.push(ScalerKind::Rescale { factor: 1.0 / 255.0 }),
        FaultId::FlippedGradient => p.flip_gradient_sign = true,
        FaultId::MissingSoftmax => {
            if let Some(k) = output_activation_mut(&mut p.net) {
                *k = ActivationKind::Identity;
            }
        }
        FaultId::SoftmaxInAndOutLoss => p.loss.from_logits = true,
        FaultId::SoftmaxWrongAxis => {
            if let Some(k) = output_activation_mut(&mut p.net) {
                *k = ActivationKind::SoftmaxBatchAxis;
            }
        }
        FaultId::CrossEntropyWrongAxis => p.loss.defect = LossDefect::WrongAxis,
        FaultId::MseWrongBroadcast => p.loss.defect = LossDefect::WrongBroadcast,
        FaultId::InvertedMeanSum => p.loss.defect = LossDefect::MeanSumInverted,
        FaultId::ShuffleFeaturesOnly => p.data.shuffle = ShuffleMode::FeaturesOnly,
        FaultId::InvalidAugmentation => {
            p.data.augmenter = Some(AugmenterSpec::new(vec![Transform::GaussianNoise { sigma: 5.0, ratio: 1.0 }]))
        }
        FaultId::ConstantWeights => p.init = InitStrategy::Constant { value: 0.01 },
        FaultId::DummyWeights => p.init = InitStrategy::DummyNormal { std: 1.0 },
        FaultId::MseForCrossEntropy => p.loss = LossSpec::mse(),
        FaultId::CrossEntropyForMse => p.loss = LossSpec::cross_entropy(),
        FaultId::LowLearningRate => p.optimizer = p.optimizer.with_lr(p.optimizer.lr() * 1e-4),
        FaultId::HighLearningRate => p.optimizer = p.optimizer.with_lr(p.optimizer.lr() * 10.0),
        FaultId::AdamEpsilon => {
            if let crate::nn::OptimizerSpec::Adam { epsilon, .. } = &mut p.optimizer {
                *epsilon = 1e-30;
            }
        }
        FaultId::MissingBatchNorm => {
            p.net.layers.retain(|l| !matches!(l, Layer::BatchNorm(_)));
            for l in &mut p.net.layers {
                if let Layer::Dense(d) = l {
                    if d.biases.is_none() {
                        d.biases = Some(crate::tensor::Tensor::zeros(&[d.fan_out()]));
                    }
                }
            }
        }
        FaultId::NoBatchNormUpdate => {
            for l in &mut p.net.layers {
                if let Layer::BatchNorm(bn) = l {
                    bn.update_moving = false;
                }
            }
        }
        FaultId::LowLambda => p.reg = RegularizationSpec::none(),
        FaultId::HighLambda => {
            // penalty step worth a tenth of each weight per update
            let lambda_l2 = 0.1 / p.optimizer.lr();
            p.reg = RegularizationSpec { lambda_l1: 0.0, lambda_l2, scale_by_batch: false }
        }
        FaultId::HighKeepProb => p.net.set_dropout_pkeep(1.0),
        FaultId::LowKeepProb => p.net.set_dropout_pkeep(0.1),
        FaultId::UnbalancedData => {
            let mut counts = [UNBALANCED_MINORITY; N_CLASSES];
            counts[0] = TRAIN_PER_CLASS * 9;
            let (train, _) = blob_split(base.id, base.program.seed, &counts)?;
            out.train = train;
        }
    }
    out.program.validate()?;
    Ok(out)
}

/// Rows kept for each minority class of the unbalanced variant.
const UNBALANCED_MINORITY: usize = 5;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::base::base_program;

    #[test]
    fn catalog_covers_every_pair_once() {
        let c = catalog();
        assert_eq!(c.len(), 52);
        assert_eq!(c.iter().filter(|e| e.is_designated()).count(), 45);
        let mut keys: Vec<_> = c.iter().map(|e| (e.fault, e.program)).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 52);
        assert_eq!(c.iter().filter(|e| e.category() == FaultCategory::CodingBug).count(), 26);
    }

    #[test]
    fn broadcast_miss_is_recorded() {
        let e = catalog_entry(FaultId::MseWrongBroadcast, BaseProgramId::RegrFnn).unwrap();
        assert!(e.expected.is_empty());
    }

    #[test]
    fn batchnorm_faults_need_deep_program() {
        let base = base_program(BaseProgramId::ShallowFnn, 1).unwrap();
        let err = inject_fault(&base, FaultId::NoBatchNormUpdate).unwrap_err();
        assert!(matches!(err, Error::InapplicableFault { .. }));
    }

    #[test]
    fn names_round_trip() {
        for f in FaultId::ALL {
            assert_eq!(f.name().parse::<FaultId>().unwrap(), *f);
        }
    }

    #[test]
    fn injection_touches_one_component() {
        for entry in catalog() {
            let base = base_program(entry.program, 3).unwrap();
            let bad = inject_fault(&base, entry.fault).unwrap();
            let (a, b) = (&base.program, &bad.program);
            let changed = [
                a.net != b.net,
                a.init != b.init,
                a.loss != b.loss,
                a.reg != b.reg,
                a.optimizer != b.optimizer,
                a.data != b.data,
                a.flip_gradient_sign != b.flip_gradient_sign,
                base.train.x != bad.train.x,
            ]
            .iter()
            .filter(|&&c| c)
            .count();
            assert_eq!(changed, 1, "{}", entry.label());
        }
    }
}
