//! Compares backpropagated gradients with centered differences on a net
//! with batch normalization and a softmax head.

use fitprobe::data::one_hot;
use fitprobe::nn::{
    check_network_gradients, init_parameters, max_relative_error, ActivationKind, InitStrategy, LossSpec,
    NetworkBuilder, ProblemKind, DEFAULT_STEP,
};
use fitprobe::tensor::{Distribution, RngStream};

fn main() -> fitprobe::Result<()> {
    let mut rng = RngStream::new(11);
    let mut net = NetworkBuilder::new(4)
        .dense(12)
        .batch_norm()
        .activation(ActivationKind::Sigmoid)
        .dense(3)
        .activation(ActivationKind::Softmax)
        .build(ProblemKind::Classification { n_classes: 3 })?;
    init_parameters(&mut net, InitStrategy::Recommended, &mut rng.split(0));
    let x = rng.sample(Distribution::Normal { mean: 0.0, std: 1.0 }, &[16, 4])?;
    let labels: Vec<usize> = (0..16).map(|i| i % 3).collect();
    let y = one_hot(&labels, 3)?;

    let probes = check_network_gradients(&net, &x, &y, &LossSpec::cross_entropy(), 5, DEFAULT_STEP, false, &mut rng)?;
    for p in probes.iter().take(8) {
        let what = p.param.map_or("input".to_string(), |r| format!("layer {} {:?}", r.layer, r.kind));
        println!("{what:<22} [{:>3}] analytic {:+.6e} numeric {:+.6e} rel {:.1e}", p.index, p.analytic, p.numeric, p.relative_error);
    }
    println!("{} probes, worst relative error {:.2e}", probes.len(), max_relative_error(&probes));

    let flipped = check_network_gradients(&net, &x, &y, &LossSpec::cross_entropy(), 5, DEFAULT_STEP, true, &mut rng)?;
    println!("with the gradient sign flipped: worst relative error {:.2e}", max_relative_error(&flipped));
    Ok(())
}
