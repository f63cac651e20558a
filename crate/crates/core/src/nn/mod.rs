//! Feedforward networks: layers, passes, losses, initializers and optimizers.

pub mod activation;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod network;
pub mod optim;
pub mod pass;
pub mod train;

pub use activation::ActivationKind;
pub use gradcheck::{check_network_gradients, max_relative_error, numerical_gradient, relative_error, GradientProbe, DEFAULT_STEP};
pub use init::{init_parameters, recommended_variance, InitStrategy};
pub use loss::{compute_loss, LossDefect, LossKind, LossSpec, Reduction, RegularizationSpec};
pub use network::{BatchNorm, Dense, Dropout, Layer, Network, NetworkBuilder, ParamKind, ParamRef, ProblemKind};
pub use optim::{Optimizer, OptimizerSpec};
pub use pass::{backpropagate, backward_pass, forward_pass, update_moving_stats, ForwardMode, ForwardTrace, GradientSet, LayerCache};
pub use train::{accuracy, mean_absolute_error, MetricKind, StepRecord, Trainer};
