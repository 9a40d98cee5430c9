use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels as k;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;

/// One differentiable layer. Parameters live outside the `LayerSpec` in a flat
/// buffer; [`LayerSpec::param_count`] gives the slice length and the
/// per-kind layout is documented on each variant.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "args", rename_all = "snake_case"))]
pub enum LayerSpec {
    /// `(rows, fan_in) → (rows, fan_out)`; params `W[fan_out][fan_in]` then bias.
    Dense {
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    },
    /// `(B, fan_in, L) → (B, fan_out, L')`; params `W[fan_out][fan_in][kernel]` then bias.
    Conv1d {
        fan_in: usize,
        fan_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    /// `(B, C, L)`; params `gamma[C]` then `beta[C]`.
    GroupNorm {
        groups: usize,
        channels: usize,
    },
    Silu,
    /// Average pooling by 2 along the length axis.
    Down2,
    /// Nearest-neighbour upsampling by 2 along the length axis.
    Up2,
    /// `x + body(x)`; the body must preserve shape.
    Residual(Vec<LayerSpec>),
    Sequential(Vec<LayerSpec>),
}

impl LayerSpec {
    pub fn dense(fan_in: usize, fan_out: usize) -> Self {
        LayerSpec::Dense { fan_in, fan_out, bias: true }
    }

    /// Length-preserving convolution (odd kernel, stride 1).
    pub fn conv_same(fan_in: usize, fan_out: usize, kernel: usize) -> Self {
        LayerSpec::Conv1d { fan_in, fan_out, kernel, stride: 1, pad: kernel / 2, bias: true }
    }

    pub fn name(&self) -> String {
        match self {
            LayerSpec::Dense { fan_in, fan_out, .. } => format!("dense({fan_in}->{fan_out})"),
            LayerSpec::Conv1d { fan_in, fan_out, kernel, .. } => {
                format!("conv1d({fan_in}->{fan_out}, k={kernel})")
            }
            LayerSpec::GroupNorm { groups, channels } => format!("group_norm({groups}x{channels})"),
            LayerSpec::Silu => "silu".into(),
            LayerSpec::Down2 => "down2".into(),
            LayerSpec::Up2 => "up2".into(),
            LayerSpec::Residual(_) => "residual".into(),
            LayerSpec::Sequential(_) => "sequential".into(),
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { fan_in, fan_out, bias } => fan_in * fan_out + if bias { fan_out } else { 0 },
            LayerSpec::Conv1d { fan_in, fan_out, kernel, bias, .. } => {
                fan_in * fan_out * kernel + if bias { fan_out } else { 0 }
            }
            LayerSpec::GroupNorm { channels, .. } => 2 * channels,
            LayerSpec::Silu | LayerSpec::Down2 | LayerSpec::Up2 => 0,
            LayerSpec::Residual(ref body) | LayerSpec::Sequential(ref body) => {
                body.iter().map(LayerSpec::param_count).sum()
            }
        }
    }

    fn mismatch(&self, expected: impl Into<String>, got: &[usize]) -> Error {
        Error::ShapeMismatch { layer: self.name(), expected: expected.into(), got: format!("{got:?}") }
    }

    /// Output shape for `input`, or a shape error naming this layer.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { fan_in, fan_out, .. } => match input {
                [r, c] if *c == fan_in => Ok(vec![*r, fan_out]),
                _ => Err(self.mismatch(format!("(rows, {fan_in})"), input)),
            },
            LayerSpec::Conv1d { fan_in, fan_out, kernel, stride, pad, .. } => match input {
                [b, c, l] if *c == fan_in => match k::conv_out_len(*l, kernel, stride, pad) {
                    Some(lo) if lo > 0 => Ok(vec![*b, fan_out, lo]),
                    _ => Err(self.mismatch("length >= kernel after padding", input)),
                },
                _ => Err(self.mismatch(format!("(B, {fan_in}, L)"), input)),
            },
            LayerSpec::GroupNorm { groups, channels } => {
                if groups == 0 || channels % groups != 0 {
                    return Err(self.mismatch("channels divisible by groups", input));
                }
                match input {
                    [_, c, l] if *c == channels && *l > 0 => Ok(input.to_vec()),
                    _ => Err(self.mismatch(format!("(B, {channels}, L)"), input)),
                }
            }
            LayerSpec::Silu => Ok(input.to_vec()),
            LayerSpec::Down2 => match input {
                [b, c, l] if l % 2 == 0 && *l > 0 => Ok(vec![*b, *c, l / 2]),
                _ => Err(self.mismatch("(B, C, even L)", input)),
            },
            LayerSpec::Up2 => match input {
                [b, c, l] => Ok(vec![*b, *c, l * 2]),
                _ => Err(self.mismatch("(B, C, L)", input)),
            },
            LayerSpec::Residual(ref body) => {
                let out = chain_shape(body, input)?;
                if out != input {
                    return Err(self.mismatch(format!("body preserving {input:?}"), &out));
                }
                Ok(out)
            }
            LayerSpec::Sequential(ref body) => chain_shape(body, input),
        }
    }

    /// He-style uniform fan-in initialization; biases 0, norm gain 1.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.init_into(&mut rng::rng(seed), &mut out);
        out
    }

    fn init_into(&self, r: &mut rng::Rng, out: &mut Vec<f64>) {
        let mut he = |n: usize, fan: usize, out: &mut Vec<f64>| {
            let bound = libm::sqrt(6.0 / fan as f64);
            out.extend((0..n).map(|_| rng::uniform_range(r, -bound, bound)));
        };
        match *self {
            LayerSpec::Dense { fan_in, fan_out, bias } => {
                he(fan_in * fan_out, fan_in, out);
                if bias {
                    out.extend(core::iter::repeat_n(0.0, fan_out));
                }
            }
            LayerSpec::Conv1d { fan_in, fan_out, kernel, bias, .. } => {
                he(fan_in * fan_out * kernel, fan_in * kernel, out);
                if bias {
                    out.extend(core::iter::repeat_n(0.0, fan_out));
                }
            }
            LayerSpec::GroupNorm { channels, .. } => {
                out.extend(core::iter::repeat_n(1.0, channels));
                out.extend(core::iter::repeat_n(0.0, channels));
            }
            LayerSpec::Silu | LayerSpec::Down2 | LayerSpec::Up2 => {}
            LayerSpec::Residual(ref body) | LayerSpec::Sequential(ref body) => {
                for l in body {
                    l.init_into(r, out);
                }
            }
        }
    }
}

fn chain_shape(body: &[LayerSpec], input: &[usize]) -> Result<Vec<usize>> {
    let mut s = input.to_vec();
    for l in body {
        s = l.output_shape(&s)?;
    }
    Ok(s)
}

/// Activations saved by [`forward`] for the matching [`backward`].
#[derive(Debug, Clone)]
pub struct Cache {
    spec: LayerSpec,
    fingerprint: u64,
    input: Tensor,
    out_shape: Vec<usize>,
    inner: Inner,
}

#[derive(Debug, Clone)]
enum Inner {
    None,
    Norm { xhat: Vec<f64>, inv_std: Vec<f64> },
    Children(Vec<Cache>),
}

impl Cache {
    pub fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }
}

/// FNV-1a over the parameter bit patterns.
fn fingerprint(params: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        h ^= p.to_bits();
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ params.len() as u64
}

fn check_params(spec: &LayerSpec, params: &[f64]) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::ShapeMismatch {
            layer: spec.name(),
            expected: format!("{} parameters", spec.param_count()),
            got: format!("{}", params.len()),
        });
    }
    Ok(())
}

pub fn forward(spec: &LayerSpec, params: &[f64], input: &Tensor) -> Result<(Tensor, Cache)> {
    check_params(spec, params)?;
    let out_shape = spec.output_shape(input.shape())?;
    let mut y = Tensor::zeros(out_shape.clone());
    let x = input.data();
    let inner = match *spec {
        LayerSpec::Dense { fan_in, fan_out, bias } => {
            let (rows, _) = input.dims2("dense")?;
            let (w, b) = params.split_at(fan_in * fan_out);
            k::dense_fwd(x, rows, fan_in, w, bias.then_some(b), fan_out, y.data_mut());
            Inner::None
        }
        LayerSpec::Conv1d { fan_in, fan_out, kernel, stride, pad, bias } => {
            let (batch, _, len) = input.dims3("conv1d")?;
            let lout = out_shape[2];
            let (w, b) = params.split_at(fan_in * fan_out * kernel);
            k::conv1d_fwd(
                x,
                batch,
                fan_in,
                len,
                w,
                bias.then_some(b),
                fan_out,
                kernel,
                stride,
                pad,
                lout,
                y.data_mut(),
            );
            Inner::None
        }
        LayerSpec::GroupNorm { groups, channels } => {
            let (batch, _, len) = input.dims3("group_norm")?;
            let (g, b) = params.split_at(channels);
            let mut xhat = vec![0.0; x.len()];
            let mut inv_std = vec![0.0; batch * groups];
            k::groupnorm_fwd(x, batch, channels, len, groups, g, b, y.data_mut(), &mut xhat, &mut inv_std);
            Inner::Norm { xhat, inv_std }
        }
        LayerSpec::Silu => {
            k::silu_fwd(x, y.data_mut());
            Inner::None
        }
        LayerSpec::Down2 => {
            let (b, c, l) = input.dims3("down2")?;
            k::down2_fwd(x, b * c, l, y.data_mut());
            Inner::None
        }
        LayerSpec::Up2 => {
            let (b, c, l) = input.dims3("up2")?;
            k::up2_fwd(x, b * c, l, y.data_mut());
            Inner::None
        }
        LayerSpec::Residual(ref body) | LayerSpec::Sequential(ref body) => {
            let mut caches = Vec::with_capacity(body.len());
            let mut cur = input.clone();
            let mut off = 0;
            for l in body {
                let n = l.param_count();
                let (o, c) = forward(l, &params[off..off + n], &cur)?;
                off += n;
                caches.push(c);
                cur = o;
            }
            if matches!(spec, LayerSpec::Residual(_)) {
                cur.add_assign(input)?;
            }
            y = cur;
            Inner::Children(caches)
        }
    };
    if !y.is_finite() {
        return Err(Error::Degenerate("non-finite activation"));
    }
    let cache = Cache { spec: spec.clone(), fingerprint: fingerprint(params), input: input.clone(), out_shape, inner };
    Ok((y, cache))
}

/// Reverse-mode pass. Returns `(grad_input, grad_params)` with
/// `grad_params` laid out like `params`.
pub fn backward(spec: &LayerSpec, params: &[f64], cache: &Cache, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    check_params(spec, params)?;
    if cache.spec != *spec || cache.fingerprint != fingerprint(params) {
        return Err(Error::StaleCache { layer: spec.name() });
    }
    if grad_out.shape() != cache.out_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            layer: spec.name(),
            expected: format!("grad of shape {:?}", cache.out_shape),
            got: format!("{:?}", grad_out.shape()),
        });
    }
    let x = cache.input.data();
    let dy = grad_out.data();
    let mut dx = Tensor::zeros(cache.input.shape().to_vec());
    let mut dp = vec![0.0; params.len()];
    match (spec, &cache.inner) {
        (&LayerSpec::Dense { fan_in, fan_out, bias }, _) => {
            let rows = cache.input.shape()[0];
            let (w, _) = params.split_at(fan_in * fan_out);
            let (dw, db) = dp.split_at_mut(fan_in * fan_out);
            k::dense_bwd(x, rows, fan_in, w, fan_out, dy, dx.data_mut(), dw, bias.then_some(db));
        }
        (&LayerSpec::Conv1d { fan_in, fan_out, kernel, stride, pad, bias }, _) => {
            let (batch, _, len) = cache.input.dims3("conv1d")?;
            let lout = cache.out_shape[2];
            let (w, _) = params.split_at(fan_in * fan_out * kernel);
            let (dw, db) = dp.split_at_mut(fan_in * fan_out * kernel);
            k::conv1d_bwd(
                x,
                batch,
                fan_in,
                len,
                w,
                fan_out,
                kernel,
                stride,
                pad,
                lout,
                dy,
                dx.data_mut(),
                dw,
                bias.then_some(db),
            );
        }
        (&LayerSpec::GroupNorm { groups, channels }, Inner::Norm { xhat, inv_std }) => {
            let (batch, _, len) = cache.input.dims3("group_norm")?;
            let (g, _) = params.split_at(channels);
            let (dg, db) = dp.split_at_mut(channels);
            k::groupnorm_bwd(xhat, inv_std, batch, channels, len, groups, g, dy, dx.data_mut(), dg, db);
        }
        (LayerSpec::Silu, _) => k::silu_bwd(x, dy, dx.data_mut()),
        (LayerSpec::Down2, _) => {
            let (b, c, l) = cache.input.dims3("down2")?;
            k::down2_bwd(b * c, l, dy, dx.data_mut());
        }
        (LayerSpec::Up2, _) => {
            let (b, c, l) = cache.input.dims3("up2")?;
            k::up2_bwd(b * c, l, dy, dx.data_mut());
        }
        (LayerSpec::Residual(body) | LayerSpec::Sequential(body), Inner::Children(caches)) => {
            let mut offs = Vec::with_capacity(body.len() + 1);
            offs.push(0);
            for l in body {
                offs.push(offs.last().unwrap() + l.param_count());
            }
            let mut g = grad_out.clone();
            for i in (0..body.len()).rev() {
                let (gi, gp) = backward(&body[i], &params[offs[i]..offs[i + 1]], &caches[i], &g)?;
                dp[offs[i]..offs[i + 1]].copy_from_slice(&gp);
                g = gi;
            }
            if matches!(spec, LayerSpec::Residual(_)) {
                g.add_assign(grad_out)?;
            }
            dx = g;
        }
        _ => return Err(Error::StaleCache { layer: spec.name() }),
    }
    Ok((dx, dp))
}

/// A layer bundled with its parameters, for building models piecewise.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Vec<f64>,
}

impl Layer {
    pub fn new(spec: LayerSpec, seed: u64) -> Self {
        let params = spec.init_params(seed);
        Self { spec, params }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Cache)> {
        forward(&self.spec, &self.params, x)
    }

    pub fn backward(&self, cache: &Cache, g: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        backward(&self.spec, &self.params, cache, g)
    }
}
