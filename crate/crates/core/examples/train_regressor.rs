//! Trains a small regressor with the built-in engine and prints its loss
//! curve and test error.

use fitprobe::data::synthetic::noisy_linear;
use fitprobe::data::{scale_features, BatchStream, ScaleTarget, ScalerKind, ShuffleMode};
use fitprobe::nn::{
    init_parameters, mean_absolute_error, ActivationKind, InitStrategy, LossSpec, NetworkBuilder, OptimizerSpec,
    ProblemKind, RegularizationSpec, Trainer,
};
use fitprobe::tensor::RngStream;

fn main() -> fitprobe::Result<()> {
    let mut rng = RngStream::new(3);
    let raw = noisy_linear(400, 0.3, &mut rng)?;
    let (ds, _) = scale_features(&raw, ScalerKind::Standardize, ScaleTarget::Inputs)?;
    let (ds, y_scaler) = scale_features(&ds, ScalerKind::Standardize, ScaleTarget::Outputs)?;
    let (train, test) = ds.split_at(320);

    let mut net = NetworkBuilder::new(train.n_features())
        .dense(32)
        .activation(ActivationKind::Relu)
        .dense(16)
        .activation(ActivationKind::Tanh)
        .dense(1)
        .build(ProblemKind::Regression { n_outputs: 1 })?;
    init_parameters(&mut net, InitStrategy::Recommended, &mut rng.split(1));

    let mut trainer = Trainer::new(net, LossSpec::mse(), RegularizationSpec::l2(1e-4), OptimizerSpec::adam(1e-2));
    let mut batches = BatchStream::new(32, 3, ShuffleMode::Correct);
    for epoch in 0..30 {
        let mut total = 0.0;
        let n = batches.batches_per_epoch(&train);
        for _ in 0..n {
            let (x, y) = batches.next_batch(&train)?;
            total += trainer.step(&x, &y)?.data_loss;
        }
        if epoch % 5 == 0 || epoch == 29 {
            println!("epoch {epoch:>2} train loss {:.4}", total / n as f64);
        }
    }
    let pred = trainer.predict(&test.x)?;
    let mae = mean_absolute_error(&y_scaler.inverse(&pred), &y_scaler.inverse(&test.y));
    println!("test MAE {mae:.4} in target units");
    Ok(())
}
