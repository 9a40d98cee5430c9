//! Central finite-difference gradient checks.

use alloc::vec;
use alloc::vec::Vec;

use super::layer::{backward, forward, LayerSpec};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

pub const FD_STEP: f64 = 1e-5;

/// Error metric `|a − n| / max(|a|, |n|, 1e-2)`: relative for ordinary
/// gradients, absolute (scaled) for near-zero ones where relative error
/// only measures rounding noise.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-2)
}

pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic.iter().zip(numeric).map(|(&a, &n)| rel_error(a, n)).fold(0.0, f64::max)
}

/// Central differences of a scalar function at `x`.
pub fn numeric_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Input shape used when checking `spec` in isolation.
pub fn example_input_shape(spec: &LayerSpec) -> Vec<usize> {
    match spec {
        LayerSpec::Dense { fan_in, .. } => vec![3, *fan_in],
        LayerSpec::Conv1d { fan_in, .. } => vec![2, *fan_in, 8],
        LayerSpec::GroupNorm { channels, .. } => vec![2, *channels, 6],
        LayerSpec::Silu | LayerSpec::Down2 | LayerSpec::Up2 => vec![2, 3, 8],
        LayerSpec::Residual(body) | LayerSpec::Sequential(body) => {
            body.first().map(example_input_shape).unwrap_or_else(|| vec![2, 3, 8])
        }
    }
}

/// Compares analytic input and parameter gradients of `L = Σ r ⊙ layer(x)`
/// against central differences (h = 1e-5) on random `x`, params and `r`.
/// Returns the largest [`rel_error`].
pub fn grad_check(spec: &LayerSpec, seed: u64) -> Result<f64> {
    let mut r = rng::rng(seed);
    let mut params = spec.init_params(rng::derive_seed(seed, 1));
    // perturb so norm gains and biases are not at their special init values
    for p in params.iter_mut() {
        *p += 0.1 * rng::normal(&mut r);
    }
    let shape = example_input_shape(spec);
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape.clone(), (0..n).map(|_| rng::normal(&mut r)).collect())?;
    grad_check_at(spec, &params, &x, seed)
}

/// Like [`grad_check`] with caller-chosen parameters and input.
pub fn grad_check_at(spec: &LayerSpec, params: &[f64], x: &Tensor, seed: u64) -> Result<f64> {
    let (y, cache) = forward(spec, params, x)?;
    let mut r = rng::rng(rng::derive_seed(seed, 2));
    let weights: Vec<f64> = (0..y.len()).map(|_| rng::normal(&mut r)).collect();
    let g = Tensor::new(y.shape().to_vec(), weights.clone())?;
    let (gx, gp) = backward(spec, params, &cache, &g)?;

    let objective = |p: &[f64], xin: &[f64]| -> f64 {
        let t = Tensor::new(x.shape().to_vec(), xin.to_vec()).expect("same shape");
        let (y, _) = forward(spec, p, &t).expect("forward succeeded once");
        y.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
    };
    let num_p = numeric_grad(|p| objective(p, x.data()), params, FD_STEP);
    let num_x = numeric_grad(|xi| objective(params, xi), x.data(), FD_STEP);
    Ok(max_rel_error(&gp, &num_p).max(max_rel_error(gx.data(), &num_x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds() -> Vec<LayerSpec> {
        vec![
            LayerSpec::dense(4, 3),
            LayerSpec::Dense { fan_in: 3, fan_out: 5, bias: false },
            LayerSpec::conv_same(2, 3, 3),
            LayerSpec::Conv1d { fan_in: 2, fan_out: 2, kernel: 3, stride: 2, pad: 1, bias: true },
            LayerSpec::Conv1d { fan_in: 3, fan_out: 2, kernel: 1, stride: 1, pad: 0, bias: false },
            LayerSpec::GroupNorm { groups: 2, channels: 4 },
            LayerSpec::GroupNorm { groups: 1, channels: 3 },
            LayerSpec::Silu,
            LayerSpec::Down2,
            LayerSpec::Up2,
            LayerSpec::Residual(vec![LayerSpec::conv_same(3, 3, 3), LayerSpec::Silu]),
        ]
    }

    #[test]
    fn every_layer_kind_passes() {
        for (i, spec) in all_kinds().iter().enumerate() {
            let e = grad_check(spec, 100 + i as u64).unwrap();
            assert!(e <= 1e-6, "{}: {e:e}", spec.name());
        }
    }

    #[test]
    fn composed_stack_passes() {
        let stack = LayerSpec::Sequential(vec![
            LayerSpec::conv_same(2, 4, 3),
            LayerSpec::GroupNorm { groups: 2, channels: 4 },
            LayerSpec::Silu,
            LayerSpec::Down2,
        ]);
        assert!(grad_check(&stack, 7).unwrap() <= 1e-5);
    }

    #[test]
    fn bias_free_dense_at_zero() {
        let spec = LayerSpec::Dense { fan_in: 3, fan_out: 2, bias: false };
        let x = Tensor::zeros(vec![2, 3]);
        let (y, cache) = forward(&spec, &[0.0; 6], &x).unwrap();
        let g = Tensor::new(y.shape().to_vec(), vec![1.0; y.len()]).unwrap();
        let (gx, gp) = backward(&spec, &[0.0; 6], &cache, &g).unwrap();
        assert!(gx.data().iter().chain(&gp).all(|&v| v == 0.0));
    }
}
