//! The statistics behind the checks: label equitability, saturation,
//! representation similarity and loss-curve shape.

use fitprobe::metrics::{linear_cka, saturation_rho, shannon_equitability, slope_significance, smoothness_ratio};
use fitprobe::nn::ActivationKind;
use fitprobe::tensor::{Distribution, RngStream};

fn main() -> fitprobe::Result<()> {
    println!("equitability balanced {:.3}", shannon_equitability(&[50.0, 50.0, 50.0])?);
    println!("equitability skewed   {:.3}", shannon_equitability(&[140.0, 5.0, 5.0])?);

    let mut rng = RngStream::new(2);
    let z = rng.sample(Distribution::Normal { mean: 0.0, std: 1.0 }, &[5000])?;
    for gain in [0.5, 2.0, 8.0] {
        let out: Vec<f64> = z.data().iter().map(|v| (gain * v).tanh()).collect();
        println!("tanh gain {gain:>3}: rho {:.3}", saturation_rho(&out, ActivationKind::Tanh, 10)?);
    }

    let a = rng.sample(Distribution::Normal { mean: 0.0, std: 1.0 }, &[200, 16])?;
    let noise = rng.sample(Distribution::Normal { mean: 0.0, std: 1.0 }, &[200, 16])?;
    let near = a.add(&noise.scale(0.2))?;
    println!("CKA self {:.4}, perturbed {:.4}, unrelated {:.4}", linear_cka(&a, &a)?, linear_cka(&a, &near)?, linear_cka(&a, &noise)?);

    let smooth: Vec<f64> = (0..10).map(|i| 2.0 * 0.8f64.powi(i)).collect();
    let jagged: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 2.0 } else { 1.0 }).collect();
    println!("smoothness decaying {:.2}, alternating {:.2}", smoothness_ratio(&smooth)?, smoothness_ratio(&jagged)?);
    println!("decaying series: {:?}", slope_significance(&smooth, 0.05)?);
    Ok(())
}
