//! Versioned JSON checkpoints.
//!
//! A checkpoint is a single JSON object:
//!
//! | key | meaning |
//! |-----|---------|
//! | `format` | always `"dmtg-checkpoint"` |
//! | `version` | manifest version, currently 1 |
//! | `checkpoint_id` | hex SHA-256 of the network config and parameters |
//! | `seed` | training seed |
//! | `k_c` | covariance scale used during training |
//! | `schedule` | `{ "kind": "cosine" \| "linear", "steps": T }` |
//! | `net` | denoiser configuration |
//! | `layers` | parameter slots in buffer order |
//!
//! Each layer entry holds `name`, its `spec` (`{"kind": …, "args": …}`) and a list of
//! `tensors`, each `{name, shape, values}` with `values` in row-major order.
//! Dense weights have shape `[fan_out, fan_in]`, convolution weights
//! `[fan_out, fan_in, kernel]`, biases and norm gains `[channels]`.
//! Floats are written with shortest round-trip formatting, so a load
//! reproduces the parameters bit for bit. Loading recomputes the id and
//! rejects any mismatch.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use dmtg_core::diffusion::{Denoiser, DenoiserConfig, DiffusionModel, NoiseSchedule, ScheduleKind};
use dmtg_core::nn::layer::LayerSpec;
use serde::{Deserialize, Serialize};

pub const FORMAT: &str = "dmtg-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleMeta {
    pub kind: ScheduleKind,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub name: String,
    pub spec: LayerSpec,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub checkpoint_id: String,
    pub seed: u64,
    pub k_c: f64,
    pub schedule: ScheduleMeta,
    pub net: DenoiserConfig,
    pub layers: Vec<LayerRecord>,
}

/// Named parameter tensors of one spec, in buffer order.
pub fn tensor_shapes(spec: &LayerSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    collect_shapes(spec, "", &mut out);
    out
}

fn collect_shapes(spec: &LayerSpec, prefix: &str, out: &mut Vec<(String, Vec<usize>)>) {
    let name = |s: &str| format!("{prefix}{s}");
    match spec {
        LayerSpec::Dense { fan_in, fan_out, bias } => {
            out.push((name("weight"), vec![*fan_out, *fan_in]));
            if *bias {
                out.push((name("bias"), vec![*fan_out]));
            }
        }
        LayerSpec::Conv1d { fan_in, fan_out, kernel, bias, .. } => {
            out.push((name("weight"), vec![*fan_out, *fan_in, *kernel]));
            if *bias {
                out.push((name("bias"), vec![*fan_out]));
            }
        }
        LayerSpec::GroupNorm { channels, .. } => {
            out.push((name("gamma"), vec![*channels]));
            out.push((name("beta"), vec![*channels]));
        }
        LayerSpec::Silu | LayerSpec::Down2 | LayerSpec::Up2 => {}
        LayerSpec::Residual(body) | LayerSpec::Sequential(body) => {
            for (i, s) in body.iter().enumerate() {
                collect_shapes(s, &format!("{prefix}{i}."), out);
            }
        }
    }
}

impl Manifest {
    pub fn from_model(model: &DiffusionModel) -> Self {
        let net = &model.net;
        let params = net.params();
        let layers = net
            .slots()
            .iter()
            .map(|slot| {
                let mut off = slot.offset;
                let tensors = tensor_shapes(&slot.spec)
                    .into_iter()
                    .map(|(name, shape)| {
                        let n: usize = shape.iter().product();
                        let values = params[off..off + n].to_vec();
                        off += n;
                        TensorRecord { name, shape, values }
                    })
                    .collect();
                LayerRecord { name: slot.name.clone(), spec: slot.spec.clone(), tensors }
            })
            .collect();
        Manifest {
            format: FORMAT.into(),
            version: VERSION,
            checkpoint_id: model.checkpoint_id(),
            seed: model.seed,
            k_c: model.k_c,
            schedule: ScheduleMeta { kind: model.schedule.kind(), steps: model.schedule.steps() },
            net: *net.config(),
            layers,
        }
    }

    pub fn into_model(self) -> Result<DiffusionModel> {
        ensure!(self.format == FORMAT, "not a checkpoint: format {:?}", self.format);
        ensure!(self.version == VERSION, "unsupported checkpoint version {}", self.version);
        ensure!(self.k_c.is_finite() && self.k_c > 0.0, "k_c must be positive");
        // Rebuild the expected layout from the config and compare it slot by slot.
        let blank = Denoiser::new(self.net, 0).context("checkpoint network config")?;
        let slots = blank.slots();
        ensure!(
            slots.len() == self.layers.len(),
            "checkpoint has {} layers, config implies {}",
            self.layers.len(),
            slots.len()
        );
        let mut params = Vec::with_capacity(blank.param_count());
        for (slot, layer) in slots.iter().zip(self.layers) {
            ensure!(
                slot.name == layer.name && slot.spec == layer.spec,
                "layer {:?} does not match expected {:?}",
                layer.name,
                slot.name
            );
            let expected = tensor_shapes(&slot.spec);
            ensure!(
                expected.len() == layer.tensors.len(),
                "layer {}: expected {} tensors, found {}",
                slot.name,
                expected.len(),
                layer.tensors.len()
            );
            for ((name, shape), t) in expected.into_iter().zip(layer.tensors) {
                ensure!(
                    t.name == name && t.shape == shape,
                    "layer {}: tensor {} {:?} does not match expected {} {:?}",
                    slot.name,
                    t.name,
                    t.shape,
                    name,
                    shape
                );
                let n: usize = shape.iter().product();
                ensure!(
                    t.values.len() == n,
                    "layer {}.{}: {} values for shape {:?}",
                    slot.name,
                    t.name,
                    t.values.len(),
                    shape
                );
                params.extend(t.values);
            }
        }
        let net = Denoiser::from_params(self.net, params)?;
        if net.checkpoint_id() != self.checkpoint_id {
            bail!("checkpoint id mismatch: stored {}, computed {}", self.checkpoint_id, net.checkpoint_id());
        }
        Ok(DiffusionModel {
            net,
            schedule: NoiseSchedule::build(self.schedule.kind, self.schedule.steps)?,
            k_c: self.k_c,
            seed: self.seed,
        })
    }
}

pub fn save(model: &DiffusionModel, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = std::io::BufWriter::new(f);
    serde_json::to_writer(&mut w, &Manifest::from_model(model))
        .with_context(|| format!("cannot write {}", path.display()))?;
    std::io::Write::flush(&mut w).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DiffusionModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    let m: Manifest =
        serde_json::from_str(&text).with_context(|| format!("{}: malformed checkpoint", path.display()))?;
    m.into_model().with_context(|| format!("{}", path.display()))
}
