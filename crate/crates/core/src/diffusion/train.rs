use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use super::frame::TaskFrame;
use super::loss::{item_loss, total_loss, LossWeights};
use super::process::DiffusionModel;
use super::schedule::{NoiseSchedule, ScheduleKind};
use super::unet::{encode_input, read_output, Denoiser, DenoiserConfig, IN_CH, OUT_CH};
use crate::error::{invalid, Error, Result};
use crate::geom::{alpha_bar_from_alpha, excess_path_ratio, Point, Trajectory, DEFAULT_KC};
use crate::nn::{adam_step, AdamConfig, AdamState, Tensor};
use crate::rng;

/// Smallest corpus `train` accepts.
pub const MIN_TRAIN_SET: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub weights: LossWeights,
    pub lr: f64,
    /// Learning rate reached at the last step; cosine annealing from `lr`.
    pub lr_final: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub t_steps: usize,
    pub schedule: ScheduleKind,
    pub k_c: f64,
    /// Probability of replacing the style label with a uniform draw, so
    /// every complexity bucket is seen during training.
    pub style_dropout: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
    pub net: DenoiserConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            lr: 1e-3,
            lr_final: 1e-5,
            batch: 64,
            epochs: 20,
            seed: 0,
            t_steps: 1000,
            schedule: ScheduleKind::Cosine,
            k_c: DEFAULT_KC,
            style_dropout: 0.1,
            grad_clip: 1.0,
            net: DenoiserConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Every violated constraint.
    pub fn problems(&self) -> Vec<String> {
        let mut p: Vec<String> = self.weights.problems().into_iter().map(String::from).collect();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            p.push("lr must be positive".into());
        } else if !(self.lr_final >= 0.0 && self.lr_final <= self.lr) {
            p.push("lr_final must lie in [0, lr]".into());
        }
        if self.batch == 0 {
            p.push("batch must be positive".into());
        }
        if self.epochs == 0 {
            p.push("epochs must be positive".into());
        }
        if self.t_steps < 2 {
            p.push("t_steps must be at least 2".into());
        }
        if !(self.k_c > 0.0 && self.k_c.is_finite()) {
            p.push("k_c must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.style_dropout) {
            p.push("style_dropout must lie in [0, 1]".into());
        }
        if !(self.grad_clip >= 0.0) {
            p.push("grad_clip must be non-negative".into());
        }
        p.extend(self.net.problems());
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(invalid("train_config", p.join("; ")))
        }
    }
}

/// Mean per-item losses of one epoch. `l_sim` and `l_style` include their
/// `a_t` weighting; `total` applies the loss weights.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLoss {
    pub epoch: usize,
    pub l_ddim: f64,
    pub l_sim: f64,
    pub l_style: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
    pub checkpoint_id: String,
    pub steps: usize,
    /// Filled in by callers that have a clock.
    pub wall_clock_s: Option<f64>,
}

struct Item {
    z0: Vec<Point>,
    alpha: f64,
    alpha_bar: f64,
}

fn prepare(data: &[Trajectory], cfg: &TrainConfig) -> Result<Vec<Item>> {
    if data.len() < MIN_TRAIN_SET {
        return Err(Error::TooFewSamples { needed: MIN_TRAIN_SET, got: data.len() });
    }
    data.iter()
        .enumerate()
        .map(|(i, tr)| {
            let m = tr.m();
            if m < 2 || m > cfg.net.n_max {
                return Err(invalid("dataset", format!("trajectory {i} has {m} moves; need 2..={}", cfg.net.n_max)));
            }
            let task = crate::geom::TaskSpec::new(tr.start(), tr.end(), m, 1.0, cfg.net.n_max)
                .map_err(|_| invalid("dataset", format!("trajectory {i} starts where it ends")))?;
            let frame = TaskFrame::new(&task, cfg.k_c)?;
            let alpha = excess_path_ratio(tr)?;
            Ok(Item { z0: frame.nodes_to_z(tr.nodes()), alpha, alpha_bar: alpha_bar_from_alpha(alpha) })
        })
        .collect()
}

/// Cosine decay from `lr` at step 0 to `lr_final` at `total − 1`.
fn annealed_lr(cfg: &TrainConfig, step: usize, total: usize) -> f64 {
    if total < 2 {
        return cfg.lr;
    }
    let f = step as f64 / (total - 1) as f64;
    cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + libm::cos(core::f64::consts::PI * f))
}

/// Trains a denoiser on human trajectories. Deterministic under `cfg.seed`.
/// `progress` is called after every epoch.
pub fn train(
    data: &[Trajectory],
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn FnMut(&EpochLoss)>,
) -> Result<(DiffusionModel, TrainReport)> {
    cfg.validate()?;
    let items = prepare(data, cfg)?;
    let schedule = NoiseSchedule::build(cfg.schedule, cfg.t_steps)?;
    let mut net = Denoiser::new(cfg.net, rng::derive_seed(cfg.seed, 0))?;
    let mut adam = AdamState::new(net.param_count());
    let mut opt = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut r = rng::rng(rng::derive_seed(cfg.seed, 1));
    let l = cfg.net.seq_len();
    let mut report = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    let total_steps = cfg.epochs * items.len().div_ceil(cfg.batch);

    for epoch in 0..cfg.epochs {
        let order = rng::permutation(&mut r, items.len());
        let mut sums = [0.0; 4];
        for chunk in order.chunks(cfg.batch) {
            let bs = chunk.len();
            let mut input = Tensor::zeros(vec![bs, IN_CH, l]);
            let mut ts = Vec::with_capacity(bs);
            let mut styles = Vec::with_capacity(bs);
            let mut noisy = Vec::with_capacity(bs);
            for (row, &i) in chunk.iter().enumerate() {
                let it = &items[i];
                let t = rng::uniform_int(&mut r, 1, cfg.t_steps);
                let a = schedule.a(t);
                let (sa, sb) = (sqrt(a), sqrt(1.0 - a));
                let m = it.z0.len() - 1;
                let mut eps = vec![Point::ORIGIN; m + 1];
                let mut zt = it.z0.clone();
                for j in 1..m {
                    eps[j] = Point::new(rng::normal(&mut r), rng::normal(&mut r));
                    zt[j] = it.z0[j] * sa + eps[j] * sb;
                }
                let style = if rng::uniform(&mut r) < cfg.style_dropout {
                    // (0, 1]
                    1.0 - rng::uniform(&mut r)
                } else {
                    it.alpha_bar
                };
                encode_input(&zt, l, &mut input.data_mut()[row * IN_CH * l..]);
                ts.push(t);
                styles.push(style);
                noisy.push((zt, eps, a));
            }
            let (out, tape) = net.forward(&input, &ts, &styles)?;
            let mut g = Tensor::zeros(out.shape().to_vec());
            for (row, &i) in chunk.iter().enumerate() {
                let it = &items[i];
                let (zt, eps, a) = &noisy[row];
                let n = it.z0.len();
                let eps_hat: Vec<Point> = (0..n).map(|j| read_output(&out, row, j)).collect();
                let li = item_loss(&it.z0, zt, eps, &eps_hat, *a, it.alpha, &cfg.weights);
                sums[0] += li.ddim;
                sums[1] += li.sim;
                sums[2] += li.style;
                sums[3] += total_loss(li.ddim, li.sim, li.style, &cfg.weights);
                let gd = g.data_mut();
                let base = row * OUT_CH * l;
                for (j, p) in li.grad.iter().enumerate() {
                    gd[base + j] = p.x / bs as f64;
                    gd[base + l + j] = p.y / bs as f64;
                }
            }
            let mut grads = net.backward(&tape, &g)?;
            if cfg.grad_clip > 0.0 {
                let norm = sqrt(grads.iter().map(|v| v * v).sum::<f64>());
                if norm > cfg.grad_clip {
                    let k = cfg.grad_clip / norm;
                    grads.iter_mut().for_each(|v| *v *= k);
                }
            }
            opt.lr = annealed_lr(cfg, steps, total_steps);
            adam_step(net.params_mut(), &grads, &mut adam, &opt)?;
            steps += 1;
        }
        let n = items.len() as f64;
        let e = EpochLoss {
            epoch: epoch + 1,
            l_ddim: sums[0] / n,
            l_sim: sums[1] / n,
            l_style: sums[2] / n,
            total: sums[3] / n,
        };
        if !(e.total.is_finite()) {
            return Err(Error::Degenerate("training diverged"));
        }
        if let Some(cb) = progress.as_deref_mut() {
            cb(&e);
        }
        report.push(e);
    }
    let model = DiffusionModel { net, schedule, k_c: cfg.k_c, seed: cfg.seed };
    let report = TrainReport { epochs: report, checkpoint_id: model.checkpoint_id(), steps, wall_clock_s: None };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_fitts, FittsParams};
    use crate::geom::TaskSpec;

    fn corpus(n: usize) -> Vec<Trajectory> {
        let mut r = rng::rng(77);
        (0..n)
            .map(|i| {
                let s = Point::new(rng::uniform_range(&mut r, 0., 800.), rng::uniform_range(&mut r, 0., 600.));
                let e = Point::new(rng::uniform_range(&mut r, 900., 1800.), rng::uniform_range(&mut r, 0., 1000.));
                let m = rng::uniform_int(&mut r, 6, 16);
                let t = TaskSpec::new(s, e, m, 0.9, 16).unwrap();
                let p = FittsParams { bow: 0.15, ..Default::default() };
                gen_fitts(&t, i as u64, &p).unwrap()
            })
            .collect()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            batch: 16,
            epochs: 2,
            t_steps: 100,
            seed: 5,
            net: DenoiserConfig { base: 8, emb_dim: 16, cond_dim: 16, n_max: 16, ..DenoiserConfig::default() },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn smoke_train_decreases_and_is_deterministic() {
        let data = corpus(200);
        let cfg = small_cfg();
        let (_, r1) = train(&data, &cfg, None).unwrap();
        assert_eq!(r1.epochs.len(), 2);
        assert!(r1.epochs[1].total < r1.epochs[0].total, "{:?}", r1.epochs);
        let (_, r2) = train(&data, &cfg, None).unwrap();
        assert_eq!(r1.checkpoint_id, r2.checkpoint_id);
        let other = TrainConfig { weights: LossWeights { w1: 1.0, w2: 0.0, w3: 0.0 }, ..cfg };
        let (_, r3) = train(&data, &other, None).unwrap();
        let ones = TrainConfig { weights: LossWeights { w1: 1.0, w2: 1.0, w3: 1.0 }, ..cfg };
        let (_, r4) = train(&data, &ones, None).unwrap();
        assert_ne!(r3.checkpoint_id, r4.checkpoint_id);
    }

    #[test]
    fn rejects_small_or_bad_input() {
        let cfg = small_cfg();
        assert!(matches!(train(&corpus(50), &cfg, None), Err(Error::TooFewSamples { .. })));
        let bad = TrainConfig { lr: -1.0, batch: 0, ..cfg };
        assert_eq!(bad.problems().len(), 2);
        assert!(train(&corpus(120), &bad, None).is_err());
    }
}
