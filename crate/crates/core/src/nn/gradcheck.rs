use super::loss::{LossSpec, RegularizationSpec};
use super::network::{Network, ParamRef};
use super::pass::{backward_pass, forward_pass, ForwardMode};
use crate::error::{Error, Result};
use crate::tensor::{RngStream, Tensor};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Centered differences `(f(x + h·e_i) − f(x − h·e_i)) / 2h` at the sampled
/// flat coordinates of `point`.
pub fn numerical_gradient<F>(f: F, point: &Tensor, h: f64, sample: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step h must be positive, got {h}")));
    }
    let mut x = point.clone();
    let mut out = Vec::with_capacity(sample.len());
    for &i in sample {
        if i >= x.len() {
            return Err(Error::InvalidParameter(format!("coordinate {i} out of range")));
        }
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = f(&x)?;
        x.data_mut()[i] = orig - h;
        let down = f(&x)?;
        x.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// |a − n| / max(|a|, |n|), zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs());
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// One compared coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProbe {
    pub param: Option<ParamRef>,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

/// Compares analytic against numerical gradients of the data loss on randomly
/// sampled parameter and input coordinates. Runs in training mode with a fixed
/// step, so dropout masks are frozen; callers disable dropout beforehand.
/// `negate` flips the analytic sign, which is how a program with sign-flipped
/// gradients is modelled.
#[allow(clippy::too_many_arguments)]
pub fn check_network_gradients(
    net: &Network,
    x: &Tensor,
    targets: &Tensor,
    loss: &LossSpec,
    per_tensor: usize,
    h: f64,
    negate: bool,
    rng: &mut RngStream,
) -> Result<Vec<GradientProbe>> {
    let mode = ForwardMode::Train { step: 0 };
    let trace = forward_pass(net, x, mode)?;
    let mut grads = backward_pass(net, &trace, targets, loss, &RegularizationSpec::none())?;
    if negate {
        grads.negate();
    }
    let mut probes = Vec::new();
    let skip = |a: f64, n: f64| a.abs() < 1e-10 && n.abs() < 1e-10;
    for (idx, &r) in grads.refs.iter().enumerate() {
        let p = net.param(r);
        let k = per_tensor.min(p.len());
        let sample = rng.choose_distinct(p.len(), k);
        let numeric = numerical_gradient(
            |v| {
                let mut probe = net.clone();
                *probe.param_mut(r) = v.clone();
                let t = forward_pass(&probe, x, mode)?;
                loss.value(t.prediction(), targets)
            },
            p,
            h,
            &sample,
        )?;
        for (&i, &n) in sample.iter().zip(&numeric) {
            let a = grads.data[idx].data()[i];
            if skip(a, n) {
                continue;
            }
            probes.push(GradientProbe {
                param: Some(r),
                index: i,
                analytic: a,
                numeric: n,
                relative_error: relative_error(a, n),
            });
        }
    }
    let k = per_tensor.min(x.len());
    let sample = rng.choose_distinct(x.len(), k);
    let numeric = numerical_gradient(
        |v| {
            let t = forward_pass(net, v, mode)?;
            loss.value(t.prediction(), targets)
        },
        x,
        h,
        &sample,
    )?;
    for (&i, &n) in sample.iter().zip(&numeric) {
        let a = grads.input.data()[i];
        if skip(a, n) {
            continue;
        }
        probes.push(GradientProbe {
            param: None,
            index: i,
            analytic: a,
            numeric: n,
            relative_error: relative_error(a, n),
        });
    }
    Ok(probes)
}

pub fn max_relative_error(probes: &[GradientProbe]) -> f64 {
    probes.iter().map(|p| p.relative_error).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let g = numerical_gradient(|t| Ok(t.data()[0] * t.data()[0]), &Tensor::vector(vec![3.0]), 1e-5, &[0]).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_exactly_zero() {
        let g = numerical_gradient(|_| Ok(4.2), &Tensor::vector(vec![1.0, 2.0]), 1e-5, &[0, 1]).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn abs_at_kink_is_zero() {
        let g = numerical_gradient(|t| Ok(t.data()[0].abs()), &Tensor::vector(vec![0.0]), 1e-5, &[0]).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn rejects_bad_step_and_non_finite() {
        assert!(numerical_gradient(|_| Ok(0.0), &Tensor::vector(vec![0.0]), 0.0, &[0]).is_err());
        assert!(numerical_gradient(|_| Ok(f64::NAN), &Tensor::vector(vec![0.0]), 1e-5, &[0]).is_err());
    }

    #[test]
    fn relative_error_conventions() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, -1.0), 2.0);
    }
}
