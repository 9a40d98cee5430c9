//! 1D U-Net noise predictor. Encoder blocks see the timestep embedding,
//! decoder blocks see timestep plus complexity style; skips pair blocks of
//! equal width and length.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::geom::Point;
use crate::nn::kernels::{silu_bwd, silu_fwd};
use crate::nn::{backward, forward, sinusoid_embed, style_embed, Cache, LayerSpec, Tensor};
use crate::rng;

/// Input channels: `x, y, mask, line_x, line_y`.
pub const IN_CH: usize = 5;
/// Output channels: predicted noise `x, y`.
pub const OUT_CH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenoiserConfig {
    /// Channels of the first level; doubled per level.
    pub base: usize,
    /// Number of encoder/decoder levels.
    pub depth: usize,
    pub kernel: usize,
    /// Width of the raw sinusoidal embeddings.
    pub emb_dim: usize,
    /// Width of the projected conditioning vectors.
    pub cond_dim: usize,
    pub n_styles: usize,
    pub groups: usize,
    pub n_max: usize,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            base: 32,
            depth: 2,
            kernel: 3,
            emb_dim: 32,
            cond_dim: 64,
            n_styles: crate::nn::embed::DEFAULT_STYLES,
            groups: 8,
            n_max: crate::geom::DEFAULT_N_MAX,
        }
    }
}

impl DenoiserConfig {
    pub fn channels(&self, level: usize) -> usize {
        self.base << level
    }

    /// Buffer length `n_max + 1` rounded up to a multiple of `2^depth`.
    pub fn seq_len(&self) -> usize {
        let q = 1usize << self.depth;
        (self.n_max + 1).div_ceil(q) * q
    }

    /// Every violated constraint, one per entry.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.base == 0 {
            p.push("base channels must be positive".into());
        }
        if self.depth == 0 || self.depth > 6 {
            p.push("depth must lie in [1, 6]".into());
        }
        if self.kernel % 2 == 0 {
            p.push("kernel must be odd".into());
        }
        if self.emb_dim == 0 || self.emb_dim % 2 != 0 {
            p.push("emb_dim must be even and positive".into());
        }
        if self.cond_dim == 0 {
            p.push("cond_dim must be positive".into());
        }
        if self.n_styles < 2 {
            p.push("n_styles must be at least 2".into());
        }
        if self.groups == 0 || self.base % self.groups != 0 {
            p.push("groups must divide base channels".into());
        }
        if self.n_max < 2 {
            p.push("n_max must be at least 2".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(invalid("denoiser", p.join("; ")))
        }
    }
}

/// A named parameter range inside the flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub name: String,
    pub spec: LayerSpec,
    pub offset: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.spec.param_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ResIdx {
    a: usize,
    cond: usize,
    b: usize,
    skip: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Index {
    t_mlp: usize,
    s_mlp: usize,
    in_conv: usize,
    enc: Vec<ResIdx>,
    mid: ResIdx,
    dec: Vec<ResIdx>,
    out_head: usize,
    out_conv: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    cfg: DenoiserConfig,
    slots: Vec<Slot>,
    params: Vec<f64>,
    idx: Index,
}

struct Builder {
    slots: Vec<Slot>,
    offset: usize,
}

impl Builder {
    fn add(&mut self, name: String, spec: LayerSpec) -> usize {
        let n = spec.param_count();
        self.slots.push(Slot { name, spec, offset: self.offset });
        self.offset += n;
        self.slots.len() - 1
    }

    fn res(&mut self, name: &str, cin: usize, cout: usize, cfg: &DenoiserConfig) -> ResIdx {
        let g = cfg.groups;
        let a = self.add(
            format!("{name}.conv1"),
            LayerSpec::Sequential(vec![
                LayerSpec::conv_same(cin, cout, cfg.kernel),
                LayerSpec::GroupNorm { groups: g, channels: cout },
                LayerSpec::Silu,
            ]),
        );
        let cond = self.add(format!("{name}.cond"), LayerSpec::dense(cfg.cond_dim, cout));
        let b = self.add(
            format!("{name}.conv2"),
            LayerSpec::Sequential(vec![
                LayerSpec::conv_same(cout, cout, cfg.kernel),
                LayerSpec::GroupNorm { groups: g, channels: cout },
                LayerSpec::Silu,
            ]),
        );
        let skip = (cin != cout).then(|| {
            self.add(
                format!("{name}.skip"),
                LayerSpec::Conv1d { fan_in: cin, fan_out: cout, kernel: 1, stride: 1, pad: 0, bias: true },
            )
        });
        ResIdx { a, cond, b, skip }
    }
}

fn mlp(i: usize, o: usize) -> LayerSpec {
    LayerSpec::Sequential(vec![LayerSpec::dense(i, o), LayerSpec::Silu, LayerSpec::dense(o, o)])
}

fn layout(cfg: &DenoiserConfig) -> (Vec<Slot>, Index) {
    let mut b = Builder { slots: Vec::new(), offset: 0 };
    let t_mlp = b.add("time_mlp".into(), mlp(cfg.emb_dim, cfg.cond_dim));
    let s_mlp = b.add("style_mlp".into(), mlp(cfg.emb_dim, cfg.cond_dim));
    let in_conv = b.add("in_conv".into(), LayerSpec::conv_same(IN_CH, cfg.base, cfg.kernel));
    let mut enc = Vec::new();
    for i in 0..cfg.depth {
        let cin = if i == 0 { cfg.channels(0) } else { cfg.channels(i - 1) };
        enc.push(b.res(&format!("enc{i}"), cin, cfg.channels(i), cfg));
    }
    let mid = b.res("mid", cfg.channels(cfg.depth - 1), cfg.channels(cfg.depth), cfg);
    let mut dec = Vec::new();
    for i in 0..cfg.depth {
        // decoder i consumes the upsampled level i+1 plus the level-i skip
        let cin = cfg.channels(i + 1) + cfg.channels(i);
        dec.push(b.res(&format!("dec{i}"), cin, cfg.channels(i), cfg));
    }
    let out_head = b.add(
        "out_head".into(),
        LayerSpec::Sequential(vec![LayerSpec::GroupNorm { groups: cfg.groups, channels: cfg.base }, LayerSpec::Silu]),
    );
    let out_conv = b.add("out_conv".into(), LayerSpec::conv_same(cfg.base, OUT_CH, cfg.kernel));
    (b.slots, Index { t_mlp, s_mlp, in_conv, enc, mid, dec, out_head, out_conv })
}

struct ResTape {
    x_shape: Vec<usize>,
    a: Cache,
    cond: Cache,
    b: Cache,
    skip: Option<Cache>,
}

/// Everything [`Denoiser::backward`] needs from a forward pass.
pub struct Tape {
    fingerprint: [u8; 32],
    batch: usize,
    t_cache: Cache,
    s_cache: Cache,
    t_act: Vec<f64>,
    sum_act: Vec<f64>,
    in_cache: Cache,
    enc: Vec<ResTape>,
    mid: ResTape,
    dec: Vec<ResTape>,
    up_channels: Vec<usize>,
    head: Cache,
    out: Cache,
}

fn concat(a: &Tensor, b: &Tensor) -> Tensor {
    let (bs, ca, l) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let cb = b.shape()[1];
    let mut out = Vec::with_capacity(bs * (ca + cb) * l);
    for i in 0..bs {
        out.extend_from_slice(&a.data()[i * ca * l..(i + 1) * ca * l]);
        out.extend_from_slice(&b.data()[i * cb * l..(i + 1) * cb * l]);
    }
    Tensor::new(vec![bs, ca + cb, l], out).expect("concat shape")
}

fn split(g: &Tensor, ca: usize) -> (Tensor, Tensor) {
    let (bs, c, l) = (g.shape()[0], g.shape()[1], g.shape()[2]);
    let cb = c - ca;
    let mut a = Vec::with_capacity(bs * ca * l);
    let mut b = Vec::with_capacity(bs * cb * l);
    for i in 0..bs {
        let row = &g.data()[i * c * l..(i + 1) * c * l];
        a.extend_from_slice(&row[..ca * l]);
        b.extend_from_slice(&row[ca * l..]);
    }
    (Tensor::new(vec![bs, ca, l], a).expect("split shape"), Tensor::new(vec![bs, cb, l], b).expect("split shape"))
}

fn up2(x: &Tensor) -> Tensor {
    let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut y = Tensor::zeros(vec![b, c, 2 * l]);
    crate::nn::kernels::up2_fwd(x.data(), b * c, l, y.data_mut());
    y
}

fn up2_grad(g: &Tensor) -> Tensor {
    let (b, c, l2) = (g.shape()[0], g.shape()[1], g.shape()[2]);
    let mut dx = Tensor::zeros(vec![b, c, l2 / 2]);
    crate::nn::kernels::up2_bwd(b * c, l2 / 2, g.data(), dx.data_mut());
    dx
}

fn down2(x: &Tensor) -> Tensor {
    let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut y = Tensor::zeros(vec![b, c, l / 2]);
    crate::nn::kernels::down2_fwd(x.data(), b * c, l, y.data_mut());
    y
}

fn down2_grad(g: &Tensor) -> Tensor {
    let (b, c, h) = (g.shape()[0], g.shape()[1], g.shape()[2]);
    let mut dx = Tensor::zeros(vec![b, c, 2 * h]);
    crate::nn::kernels::down2_bwd(b * c, 2 * h, g.data(), dx.data_mut());
    dx
}

impl Denoiser {
    /// Fresh network; the output convolution starts at zero so the initial
    /// noise prediction is identically 0.
    pub fn new(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (slots, idx) = layout(&cfg);
        let mut params = Vec::new();
        for (i, s) in slots.iter().enumerate() {
            if i == idx.out_conv {
                params.extend(core::iter::repeat_n(0.0, s.len()));
            } else {
                params.extend(s.spec.init_params(rng::derive_seed(seed, i as u64)));
            }
        }
        Ok(Self { cfg, slots, params, idx })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_params(cfg: DenoiserConfig, params: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let (slots, idx) = layout(&cfg);
        let n: usize = slots.iter().map(Slot::len).sum();
        if params.len() != n {
            return Err(Error::LengthMismatch { left: params.len(), right: n });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(invalid("params", "non-finite value"));
        }
        Ok(Self { cfg, slots, params, idx })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// SHA-256 over the configuration and little-endian parameter bytes.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let c = &self.cfg;
        for v in [c.base, c.depth, c.kernel, c.emb_dim, c.cond_dim, c.n_styles, c.groups, c.n_max] {
            h.update((v as u64).to_le_bytes());
        }
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        h.finalize().into()
    }

    pub fn checkpoint_id(&self) -> String {
        let mut s = String::with_capacity(64);
        for b in self.digest() {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    fn slot_params(&self, i: usize) -> &[f64] {
        let s = &self.slots[i];
        &self.params[s.offset..s.offset + s.len()]
    }

    fn run(&self, i: usize, x: &Tensor) -> Result<(Tensor, Cache)> {
        forward(&self.slots[i].spec, self.slot_params(i), x)
    }

    fn grad(&self, i: usize, cache: &Cache, g: &Tensor, grads: &mut [f64]) -> Result<Tensor> {
        let (gx, gp) = backward(&self.slots[i].spec, self.slot_params(i), cache, g)?;
        let off = self.slots[i].offset;
        for (d, v) in grads[off..off + gp.len()].iter_mut().zip(gp) {
            *d += v;
        }
        Ok(gx)
    }

    fn res_fwd(&self, r: &ResIdx, x: &Tensor, cond: &Tensor) -> Result<(Tensor, ResTape)> {
        let (mut h, a) = self.run(r.a, x)?;
        let (proj, cc) = self.run(r.cond, cond)?;
        let (bs, c, l) = h.dims3("resblock")?;
        for b in 0..bs {
            for ch in 0..c {
                let v = proj.data()[b * c + ch];
                h.data_mut()[(b * c + ch) * l..(b * c + ch + 1) * l].iter_mut().for_each(|e| *e += v);
            }
        }
        let (mut y, bc) = self.run(r.b, &h)?;
        let skip = match r.skip {
            Some(s) => {
                let (sx, sc) = self.run(s, x)?;
                y.add_assign(&sx)?;
                Some(sc)
            }
            None => {
                y.add_assign(x)?;
                None
            }
        };
        Ok((y, ResTape { x_shape: x.shape().to_vec(), a, cond: cc, b: bc, skip }))
    }

    /// Returns `(grad_x, grad_cond)`.
    fn res_bwd(&self, r: &ResIdx, tape: &ResTape, g: &Tensor, grads: &mut [f64]) -> Result<(Tensor, Tensor)> {
        let gh = self.grad(r.b, &tape.b, g, grads)?;
        let (bs, c, l) = gh.dims3("resblock")?;
        let mut gproj = Tensor::zeros(vec![bs, c]);
        for b in 0..bs {
            for ch in 0..c {
                gproj.data_mut()[b * c + ch] = gh.data()[(b * c + ch) * l..(b * c + ch + 1) * l].iter().sum();
            }
        }
        let gcond = self.grad(r.cond, &tape.cond, &gproj, grads)?;
        let mut gx = self.grad(r.a, &tape.a, &gh, grads)?;
        match (r.skip, &tape.skip) {
            (Some(s), Some(sc)) => gx.add_assign(&self.grad(s, sc, g, grads)?)?,
            _ => gx.add_assign(g)?,
        }
        debug_assert_eq!(gx.shape(), tape.x_shape.as_slice());
        Ok((gx, gcond))
    }

    fn embed_rows(&self, values: &[f64], style: bool) -> Result<Tensor> {
        let d = self.cfg.emb_dim;
        let mut data = Vec::with_capacity(values.len() * d);
        for &v in values {
            let e = if style { style_embed(v, self.cfg.n_styles, d)? } else { sinusoid_embed(v, d)? };
            data.extend(e);
        }
        Tensor::new(vec![values.len(), d], data)
    }

    /// Predicts noise for a batch. `x` is `(B, 5, seq_len)`; `t` and
    /// `alpha_bar` carry one entry per batch row.
    pub fn forward(&self, x: &Tensor, t: &[usize], alpha_bar: &[f64]) -> Result<(Tensor, Tape)> {
        let (bs, c, l) = x.dims3("denoiser")?;
        if c != IN_CH || l != self.cfg.seq_len() {
            return Err(Error::ShapeMismatch {
                layer: "denoiser".into(),
                expected: format!("(B, {IN_CH}, {})", self.cfg.seq_len()),
                got: format!("{:?}", x.shape()),
            });
        }
        if t.len() != bs || alpha_bar.len() != bs {
            return Err(Error::LengthMismatch { left: bs, right: t.len().min(alpha_bar.len()) });
        }
        let tf: Vec<f64> = t.iter().map(|&v| v as f64).collect();
        let (temb, t_cache) = self.run(self.idx.t_mlp, &self.embed_rows(&tf, false)?)?;
        let (semb, s_cache) = self.run(self.idx.s_mlp, &self.embed_rows(alpha_bar, true)?)?;
        let t_act = temb.data().to_vec();
        let sum_act: Vec<f64> = temb.data().iter().zip(semb.data()).map(|(a, b)| a + b).collect();
        let shape = temb.shape().to_vec();
        let mut ce = Tensor::zeros(shape.clone());
        silu_fwd(&t_act, ce.data_mut());
        let mut cd = Tensor::zeros(shape);
        silu_fwd(&sum_act, cd.data_mut());

        let (mut h, in_cache) = self.run(self.idx.in_conv, x)?;
        let mut enc = Vec::with_capacity(self.cfg.depth);
        let mut skips = Vec::with_capacity(self.cfg.depth);
        for r in &self.idx.enc {
            let (y, tp) = self.res_fwd(r, &h, &ce)?;
            enc.push(tp);
            h = down2(&y);
            skips.push(y);
        }
        let (mut h, mid) = self.res_fwd(&self.idx.mid, &h, &ce)?;
        let mut dec = Vec::with_capacity(self.cfg.depth);
        let mut up_channels = Vec::with_capacity(self.cfg.depth);
        for i in (0..self.cfg.depth).rev() {
            let u = up2(&h);
            up_channels.push(u.shape()[1]);
            let cat = concat(&u, &skips[i]);
            let (y, tp) = self.res_fwd(&self.idx.dec[i], &cat, &cd)?;
            dec.push(tp);
            h = y;
        }
        let (hh, head) = self.run(self.idx.out_head, &h)?;
        let (eps, out) = self.run(self.idx.out_conv, &hh)?;
        let tape = Tape {
            fingerprint: self.digest(),
            batch: bs,
            t_cache,
            s_cache,
            t_act,
            sum_act,
            in_cache,
            enc,
            mid,
            dec,
            up_channels,
            head,
            out,
        };
        Ok((eps, tape))
    }

    /// Parameter gradient of `Σ g ⊙ forward(x)`.
    pub fn backward(&self, tape: &Tape, g: &Tensor) -> Result<Vec<f64>> {
        if tape.fingerprint != self.digest() {
            return Err(Error::StaleCache { layer: "denoiser".into() });
        }
        let mut grads = vec![0.0; self.params.len()];
        let gh = self.grad(self.idx.out_conv, &tape.out, g, &mut grads)?;
        let mut gh = self.grad(self.idx.out_head, &tape.head, &gh, &mut grads)?;
        let cd_len = tape.sum_act.len();
        let mut g_cd = vec![0.0; cd_len];
        let mut g_ce = vec![0.0; cd_len];
        let mut g_skips: Vec<Option<Tensor>> = (0..self.cfg.depth).map(|_| None).collect();
        // decoder tapes were pushed deepest-first; unwind shallowest-first
        for i in 0..self.cfg.depth {
            let k = self.cfg.depth - 1 - i;
            let (gcat, gc) = self.res_bwd(&self.idx.dec[i], &tape.dec[k], &gh, &mut grads)?;
            for (a, b) in g_cd.iter_mut().zip(gc.data()) {
                *a += b;
            }
            let (gu, gs) = split(&gcat, tape.up_channels[k]);
            g_skips[i] = Some(gs);
            gh = up2_grad(&gu);
        }
        let (mut gh, gc) = self.res_bwd(&self.idx.mid, &tape.mid, &gh, &mut grads)?;
        for (a, b) in g_ce.iter_mut().zip(gc.data()) {
            *a += b;
        }
        for i in (0..self.cfg.depth).rev() {
            let mut gy = down2_grad(&gh);
            gy.add_assign(g_skips[i].as_ref().expect("skip grad"))?;
            let (gx, gc) = self.res_bwd(&self.idx.enc[i], &tape.enc[i], &gy, &mut grads)?;
            for (a, b) in g_ce.iter_mut().zip(gc.data()) {
                *a += b;
            }
            gh = gx;
        }
        self.grad(self.idx.in_conv, &tape.in_cache, &gh, &mut grads)?;

        // conditioning: ce = silu(temb), cd = silu(temb + semb)
        let mut g_temb = vec![0.0; cd_len];
        silu_bwd(&tape.t_act, &g_ce, &mut g_temb);
        let mut g_sum = vec![0.0; cd_len];
        silu_bwd(&tape.sum_act, &g_cd, &mut g_sum);
        for (a, b) in g_temb.iter_mut().zip(&g_sum) {
            *a += b;
        }
        let shape = vec![tape.batch, self.cfg.cond_dim];
        self.grad(self.idx.t_mlp, &tape.t_cache, &Tensor::new(shape.clone(), g_temb)?, &mut grads)?;
        self.grad(self.idx.s_mlp, &tape.s_cache, &Tensor::new(shape, g_sum)?, &mut grads)?;
        Ok(grads)
    }
}

/// Writes the network input for one trajectory (task frame, real nodes
/// only) into row `b` of a `(B, 5, L)` buffer.
pub fn encode_input(z: &[Point], seq_len: usize, out: &mut [f64]) {
    let m = z.len() - 1;
    let (s, e) = (z[0], z[m]);
    let row = &mut out[..IN_CH * seq_len];
    row.iter_mut().for_each(|v| *v = 0.0);
    for (j, p) in z.iter().enumerate() {
        let line = s.lerp(e, j as f64 / m as f64);
        row[j] = p.x;
        row[seq_len + j] = p.y;
        row[2 * seq_len + j] = 1.0;
        row[3 * seq_len + j] = line.x;
        row[4 * seq_len + j] = line.y;
    }
}

/// Reads node `j` of row `b` from a `(B, 2, L)` output.
pub fn read_output(eps: &Tensor, b: usize, j: usize) -> Point {
    let l = eps.shape()[2];
    let base = b * OUT_CH * l;
    Point::new(eps.data()[base + j], eps.data()[base + l + j])
}
