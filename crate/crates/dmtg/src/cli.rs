//! Command-line front end: `ingest`, `train`, `sample`, `eval`, `diag`.
//!
//! Every command resolves its configuration as defaults ← `--config` file
//! ← `--set key=value` ← dedicated flags, and writes the result to
//! `<out-dir>/config.json`. Passing that file back with `--config`
//! reproduces the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dmtg_core::diag::{self, EntropyMstConfig};
use dmtg_core::diffusion::{sample_batch, SamplerConfig, TrainConfig};
use dmtg_core::eval::{
    accel_direction_stats, protocol_independent, protocol_unified, Corpus, EvalConfig, EvalOutcome, EvalReport,
};
use dmtg_core::generators::{generate_baseline, BaselineConfig, GeneratorKind};
use dmtg_core::geom::{complexity_ratio, resample, DEFAULT_N_MAX};
use dmtg_core::oracle::{sample_task, synth_corpus, OracleProfile};
use dmtg_core::{rng, Sample, TaskSpec, Trajectory};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{checkpoint, config, io, report};

/// Exit status for a failed `--assert` check.
pub const EXIT_ASSERT: i32 = 1;
/// Exit status for bad usage or unreadable input.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dmtg", version, about = "Complexity-controlled mouse trajectory diffusion")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Global seed; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON or key=value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Config override, `dotted.key=value`; repeatable.
    #[arg(long = "set", global = true, value_parser = config::parse_set)]
    pub set: Vec<(String, Value)>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw recordings (or synthesize a corpus) into JSONL.
    Ingest {
        /// Input file; repeatable.
        #[arg(long)]
        input: Vec<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<InputFormat>,
        /// Synthesize this many oracle trajectories instead of reading files.
        #[arg(long)]
        synth: Option<usize>,
    },
    /// Train a denoiser on a JSONL corpus.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Generate trajectories with a checkpoint or a baseline generator.
    Sample {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        generator: Option<GenArg>,
        #[arg(short, long)]
        n: Option<usize>,
        /// Corpus whose tasks are reused; oracle tasks otherwise.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Fixed complexity target for every sample.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Compare model corpora with a human corpus.
    Eval {
        #[arg(long)]
        human: Option<PathBuf>,
        /// `name=path`; repeatable.
        #[arg(long = "model", value_parser = parse_named)]
        models: Vec<(String, PathBuf)>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
    },
    /// Diagnostic studies.
    Diag {
        #[arg(value_enum)]
        study: Study,
        /// Generated samples (control) or human corpus (sweep).
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Exit with status 1 when the study's acceptance check fails.
        #[arg(long)]
        assert: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Auto,
    Jsonl,
    Sapimouse,
    Traces,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenArg {
    Dmtg,
    Linear,
    Bezier,
    Fitts,
}

impl From<GenArg> for GeneratorKind {
    fn from(g: GenArg) -> Self {
        match g {
            GenArg::Dmtg => GeneratorKind::Dmtg,
            GenArg::Linear => GeneratorKind::Linear,
            GenArg::Bezier => GeneratorKind::Bezier,
            GenArg::Fitts => GeneratorKind::Fitts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolArg {
    Independent,
    Unified,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Study {
    EntropyMst,
    Control,
    Sweep,
}

fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    let (n, p) = s.split_once('=').ok_or_else(|| format!("expected name=path, got {s:?}"))?;
    if n.is_empty() || p.is_empty() {
        return Err(format!("expected name=path, got {s:?}"));
    }
    Ok((n.to_string(), PathBuf::from(p)))
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    AssertFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRun {
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub format: InputFormat,
    /// Oracle corpus size; 0 reads `inputs` instead.
    pub synth: usize,
    pub oracle: OracleProfile,
    pub n_max: usize,
    pub gap_ms: f64,
    pub min_len: usize,
}

impl Default for IngestRun {
    fn default() -> Self {
        Self {
            seed: 0,
            inputs: Vec::new(),
            format: InputFormat::Auto,
            synth: 0,
            oracle: OracleProfile::default(),
            n_max: DEFAULT_N_MAX,
            gap_ms: 1000.0,
            min_len: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    /// Use at most this many corpus entries, in file order.
    pub max_samples: Option<usize>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMode {
    /// Uniform draw from `[alpha_lo, alpha_hi]`.
    Uniform,
    Fixed,
    /// Keep the target stored in the task corpus.
    Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRun {
    pub seed: u64,
    pub generator: GeneratorKind,
    pub checkpoint: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    /// Number of samples; with a task corpus, defaults to its size.
    pub n: Option<usize>,
    pub alpha_mode: AlphaMode,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub alpha: f64,
    /// Timestamp spacing attached to generators that produce none.
    pub poll_ms: f64,
    pub n_max: usize,
    pub batch: usize,
    pub sampler: SamplerConfig,
    pub baseline: BaselineConfig,
    pub oracle: OracleProfile,
}

impl Default for SampleRun {
    fn default() -> Self {
        Self {
            seed: 0,
            generator: GeneratorKind::Dmtg,
            checkpoint: None,
            tasks: None,
            n: None,
            alpha_mode: AlphaMode::Uniform,
            alpha_lo: 0.3,
            alpha_hi: 0.8,
            alpha: 0.5,
            poll_ms: dmtg_core::geom::DEFAULT_POLL_MS,
            n_max: DEFAULT_N_MAX,
            batch: 256,
            sampler: SamplerConfig::default(),
            baseline: BaselineConfig::default(),
            oracle: OracleProfile::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRun {
    pub seed: u64,
    pub human: Option<PathBuf>,
    pub models: BTreeMap<String, PathBuf>,
    pub protocol: ProtocolArg,
    /// Histogram bins for the vertical acceleration export.
    pub accel_bins: usize,
    pub eval: EvalConfig,
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            seed: 0,
            human: None,
            models: BTreeMap::new(),
            protocol: ProtocolArg::Both,
            accel_bins: 20,
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagRun {
    pub seed: u64,
    pub study: Study,
    pub corpus: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub entropy_mst: EntropyMstConfig,
    /// Accepted slope band and minimum correlation for the entropy study.
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub min_r: f64,
    /// Largest tolerated normalized endpoint error for the control study.
    pub endpoint_tol: f64,
    pub sweep_targets: Vec<f64>,
    /// Samples per sweep bucket.
    pub sweep_n: usize,
    /// Largest tolerated mean complexity error per sweep bucket.
    pub sweep_tol: f64,
    pub poll_ms: f64,
    pub sampler: SamplerConfig,
    pub eval: EvalConfig,
}

impl Default for DiagRun {
    fn default() -> Self {
        Self {
            seed: 0,
            study: Study::EntropyMst,
            corpus: None,
            checkpoint: None,
            entropy_mst: EntropyMstConfig::default(),
            slope_lo: 0.8,
            slope_hi: 1.2,
            min_r: 0.95,
            endpoint_tol: 1e-6,
            sweep_targets: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            sweep_n: 100,
            sweep_tol: 0.1,
            poll_ms: dmtg_core::geom::DEFAULT_POLL_MS,
            sampler: SamplerConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn resolve<T: Serialize + serde::de::DeserializeOwned>(
    c: &Common,
    defaults: T,
    flags: Vec<(&str, Value)>,
) -> Result<T> {
    let mut overrides = c.set.clone();
    if let Some(s) = c.seed {
        overrides.push(("seed".into(), Value::from(s)));
    }
    overrides.extend(flags.into_iter().map(|(k, v)| (k.to_string(), v)));
    config::resolve(&defaults, c.config.as_deref(), &overrides)
}

fn path_value(p: &Path) -> Value {
    Value::String(p.to_string_lossy().into_owned())
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn require(p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.clone().with_context(|| format!("missing {what}"))
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let c = &cli.common;
    match &cli.command {
        Command::Ingest { input, format, synth } => {
            let mut flags = Vec::new();
            if !input.is_empty() {
                flags.push(("inputs", Value::Array(input.iter().map(|p| path_value(p)).collect())));
            }
            if let Some(f) = format {
                flags.push(("format", serde_json::to_value(f)?));
            }
            if let Some(n) = synth {
                flags.push(("synth", Value::from(*n)));
            }
            let cfg = resolve(c, IngestRun::default(), flags)?;
            cmd_ingest(&cfg, &c.out_dir)
        }
        Command::Train { corpus, epochs } => {
            let mut flags = Vec::new();
            if let Some(p) = corpus {
                flags.push(("corpus", path_value(p)));
            }
            if let Some(e) = epochs {
                flags.push(("train.epochs", Value::from(*e)));
            }
            let cfg = resolve(c, TrainRun::default(), flags)?;
            cmd_train(&cfg, &c.out_dir)
        }
        Command::Sample { checkpoint, generator, n, tasks, alpha } => {
            let mut flags = Vec::new();
            if let Some(p) = checkpoint {
                flags.push(("checkpoint", path_value(p)));
            }
            if let Some(g) = generator {
                flags.push(("generator", serde_json::to_value(GeneratorKind::from(*g))?));
            }
            if let Some(n) = n {
                flags.push(("n", Value::from(*n)));
            }
            if let Some(p) = tasks {
                flags.push(("tasks", path_value(p)));
            }
            if let Some(a) = alpha {
                flags.push(("alpha_mode", Value::from("fixed")));
                flags.push(("alpha", Value::from(*a)));
            }
            let cfg = resolve(c, SampleRun::default(), flags)?;
            cmd_sample(&cfg, &c.out_dir)
        }
        Command::Eval { human, models, protocol } => {
            let mut flags = Vec::new();
            if let Some(p) = human {
                flags.push(("human", path_value(p)));
            }
            if !models.is_empty() {
                let m: serde_json::Map<String, Value> =
                    models.iter().map(|(n, p)| (n.clone(), path_value(p))).collect();
                flags.push(("models", Value::Object(m)));
            }
            if let Some(p) = protocol {
                flags.push(("protocol", serde_json::to_value(p)?));
            }
            let cfg = resolve(c, EvalRun::default(), flags)?;
            cmd_eval(&cfg, &c.out_dir)
        }
        Command::Diag { study, corpus, checkpoint, assert } => {
            let mut flags = vec![("study", serde_json::to_value(study)?)];
            if let Some(p) = corpus {
                flags.push(("corpus", path_value(p)));
            }
            if let Some(p) = checkpoint {
                flags.push(("checkpoint", path_value(p)));
            }
            let cfg = resolve(c, DiagRun::default(), flags)?;
            let passed = cmd_diag(&cfg, &c.out_dir)?;
            Ok(if *assert && !passed { Outcome::AssertFailed } else { Outcome::Ok })
        }
    }
}

#[derive(Debug, Default, Serialize)]
struct IngestSummary {
    total: usize,
    per_source: BTreeMap<String, usize>,
    malformed_rows: usize,
    dropped_segments: usize,
    skipped_traces: usize,
    /// Trajectories rejected because they end where they start.
    rejected: usize,
}

fn detect(format: InputFormat, p: &Path) -> Result<InputFormat> {
    if format != InputFormat::Auto {
        return Ok(format);
    }
    match p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jsonl") => Ok(InputFormat::Jsonl),
        Some("csv") => Ok(InputFormat::Sapimouse),
        Some("json") => Ok(InputFormat::Traces),
        _ => bail!("{}: cannot infer the input format, pass --format", p.display()),
    }
}

pub fn cmd_ingest(cfg: &IngestRun, out: &Path) -> Result<Outcome> {
    ensure!(cfg.synth > 0 || !cfg.inputs.is_empty(), "nothing to ingest: give --input or --synth");
    let mut samples = Vec::new();
    let mut sum = IngestSummary::default();
    if cfg.synth > 0 {
        samples = synth_corpus(cfg.synth, &cfg.oracle, cfg.n_max, cfg.seed)?;
    }
    for p in &cfg.inputs {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("input").to_string();
        let trajs: Vec<Trajectory> = match detect(cfg.format, p)? {
            InputFormat::Jsonl => {
                samples.extend(io::read_jsonl(p)?);
                continue;
            }
            InputFormat::Sapimouse => {
                let l = io::load_sapimouse_csv(p)?;
                sum.malformed_rows += l.skipped;
                let seg = io::segment_sessions(&l.sessions, cfg.gap_ms, cfg.min_len);
                sum.dropped_segments += seg.dropped;
                seg.trajs
            }
            InputFormat::Traces => {
                let l = io::load_traces_json(p)?;
                sum.skipped_traces += l.skipped;
                l.trajs
            }
            InputFormat::Auto => unreachable!(),
        };
        for (i, t) in trajs.into_iter().enumerate() {
            match Sample::from_trajectory(format!("{stem}-{i:06}"), stem.clone(), t) {
                Ok(s) => samples.push(s),
                Err(_) => sum.rejected += 1,
            }
        }
    }
    for s in &samples {
        *sum.per_source.entry(s.source.clone()).or_default() += 1;
    }
    sum.total = samples.len();
    prepare_out(out)?;
    io::write_jsonl(&samples, &out.join("corpus.jsonl"))?;
    report::write_json(&sum, &out.join("ingest_report.json"))?;
    config::persist(cfg, out)?;
    log::info!("ingested {} trajectories", sum.total);
    Ok(Outcome::Ok)
}

/// Fits training data into the model's node budget.
pub fn training_set(samples: &[Sample], n_max: usize) -> Result<Vec<Trajectory>> {
    samples
        .iter()
        .map(|s| if s.traj.m() > n_max { Ok(resample(&s.traj, n_max)?) } else { Ok(s.traj.clone()) })
        .collect()
}

pub fn cmd_train(cfg: &TrainRun, out: &Path) -> Result<Outcome> {
    let path = require(&cfg.corpus, "training corpus (--corpus)")?;
    let mut samples = io::read_jsonl(&path)?;
    if let Some(n) = cfg.max_samples {
        samples.truncate(n);
    }
    let mut tc = cfg.train;
    tc.seed = cfg.seed;
    if let Err(e) = tc.validate() {
        bail!("invalid training config: {e}");
    }
    let data = training_set(&samples, tc.net.n_max)?;
    prepare_out(out)?;
    config::persist(cfg, out)?;
    let started = std::time::Instant::now();
    let mut log_epoch = |e: &dmtg_core::diffusion::EpochLoss| {
        log::info!(
            "epoch {} total {:.5} ddim {:.5} sim {:.5} style {:.5} ({:.1}s)",
            e.epoch,
            e.total,
            e.l_ddim,
            e.l_sim,
            e.l_style,
            started.elapsed().as_secs_f64()
        );
    };
    let (model, mut rep) = dmtg_core::diffusion::train(&data, &tc, Some(&mut log_epoch))?;
    log::info!("trained in {:.1}s", started.elapsed().as_secs_f64());
    // Timing varies between runs and stays out of the written outputs.
    rep.wall_clock_s = None;
    checkpoint::save(&model, &out.join("checkpoint.json"))?;
    report::write_train_csv(&rep, &out.join("train_report.csv"))?;
    report::write_json(&rep, &out.join("train_report.json"))?;
    Ok(Outcome::Ok)
}

fn target_alpha(cfg: &SampleRun, task: &TaskSpec, r: &mut rng::Rng) -> f64 {
    match cfg.alpha_mode {
        AlphaMode::Uniform => rng::uniform_range(r, cfg.alpha_lo, cfg.alpha_hi),
        AlphaMode::Fixed => cfg.alpha,
        AlphaMode::Task => task.alpha_bar(),
    }
}

/// Tasks for a sampling run, from a corpus or drawn from the oracle.
pub fn sampling_tasks(cfg: &SampleRun) -> Result<Vec<TaskSpec>> {
    let base: Vec<TaskSpec> = match &cfg.tasks {
        Some(p) => {
            let s = io::read_jsonl(p)?;
            let n = cfg.n.unwrap_or(s.len()).min(s.len());
            s[..n].iter().map(|s| s.task).collect()
        }
        None => {
            let n = cfg.n.context("missing sample count (-n) or task corpus (--tasks)")?;
            (0..n)
                .map(|i| sample_task(&cfg.oracle, cfg.n_max, rng::derive_seed(cfg.seed, 2 * i as u64)))
                .collect::<dmtg_core::Result<_>>()?
        }
    };
    let mut r = rng::rng(rng::derive_seed(cfg.seed, u64::MAX));
    base.iter()
        .map(|t| {
            let a = target_alpha(cfg, t, &mut r);
            let (w, h) = t.screen();
            Ok(TaskSpec::new(t.start(), t.end(), t.m().min(cfg.n_max), a, cfg.n_max)?.with_screen(w, h)?)
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct AchievedRow {
    id: String,
    target: f64,
    achieved: f64,
    stop_t: Option<usize>,
}

/// Generates one sample per task; returns samples and the stop step of
/// each reverse chain (`None` for baselines).
pub fn generate(
    cfg: &SampleRun,
    tasks: &[TaskSpec],
    model: Option<&dmtg_core::diffusion::DiffusionModel>,
) -> Result<(Vec<Sample>, Vec<Option<usize>>)> {
    let seeds: Vec<u64> = (0..tasks.len()).map(|i| rng::derive_seed(cfg.seed, 2 * i as u64 + 1)).collect();
    let name = cfg.generator.name();
    let mut samples = Vec::with_capacity(tasks.len());
    let mut stops = Vec::with_capacity(tasks.len());
    let mut push = |i: usize, task: TaskSpec, traj: Trajectory| {
        samples.push(Sample { id: format!("{name}-{i:06}"), source: name.to_string(), task, traj });
    };
    match cfg.generator {
        GeneratorKind::Dmtg => {
            let model = model.context("the dmtg generator needs --checkpoint")?;
            ensure!(cfg.batch > 0, "batch must be positive");
            for (c, (tb, sb)) in tasks.chunks(cfg.batch).zip(seeds.chunks(cfg.batch)).enumerate() {
                let outs = sample_batch(tb, sb, model, &cfg.sampler)?;
                for (j, (o, t)) in outs.into_iter().zip(tb).enumerate() {
                    stops.push(Some(o.stop_t));
                    push(c * cfg.batch + j, *t, o.traj.with_uniform_timestamps(cfg.poll_ms)?);
                }
                log::info!("sampled {}/{}", (c * cfg.batch + tb.len()), tasks.len());
            }
        }
        kind => {
            let bc = BaselineConfig { poll_ms: cfg.poll_ms, ..cfg.baseline };
            for (i, (t, s)) in tasks.iter().zip(&seeds).enumerate() {
                stops.push(None);
                push(i, *t, generate_baseline(kind, t, *s, &bc)?);
            }
        }
    }
    Ok((samples, stops))
}

pub fn cmd_sample(cfg: &SampleRun, out: &Path) -> Result<Outcome> {
    let model = match (cfg.generator, &cfg.checkpoint) {
        (GeneratorKind::Dmtg, Some(p)) => Some(checkpoint::load(p)?),
        (GeneratorKind::Dmtg, None) => bail!("the dmtg generator needs --checkpoint"),
        _ => None,
    };
    if let Some(m) = &model {
        ensure!(
            m.net.config().n_max >= cfg.n_max,
            "checkpoint supports {} moves, config asks for n_max {}",
            m.net.config().n_max,
            cfg.n_max
        );
    }
    let tasks = sampling_tasks(cfg)?;
    let (samples, stops) = generate(cfg, &tasks, model.as_ref())?;
    prepare_out(out)?;
    config::persist(cfg, out)?;
    io::write_jsonl(&samples, &out.join("samples.jsonl"))?;
    let rows = samples
        .iter()
        .zip(stops)
        .map(|(s, stop_t)| {
            Ok(AchievedRow {
                id: s.id.clone(),
                target: s.task.alpha_bar(),
                achieved: complexity_ratio(&s.traj)?,
                stop_t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    report::write_rows(&rows, &out.join("achieved.csv"))?;
    Ok(Outcome::Ok)
}

#[derive(Debug, Serialize)]
struct AccelSummary {
    corpus: String,
    n_up: usize,
    n_down: usize,
    mean_up: f64,
    mean_down: f64,
    score: f64,
}

fn write_outcome(o: &EvalOutcome, tag: &str, out: &Path, all: &mut Vec<EvalReport>) -> Result<()> {
    report::write_embedding(&o.embedding, &out.join(format!("embedding_{tag}.csv")))?;
    all.extend(o.reports.iter().cloned());
    Ok(())
}

pub fn cmd_eval(cfg: &EvalRun, out: &Path) -> Result<Outcome> {
    let hp = require(&cfg.human, "human corpus (--human)")?;
    ensure!(!cfg.models.is_empty(), "no model corpora (--model name=path)");
    let human = io::read_jsonl(&hp)?;
    let mut corpora = Vec::new();
    for (name, p) in &cfg.models {
        corpora.push((name.clone(), io::read_jsonl(p)?));
    }
    let ec = EvalConfig { seed: cfg.seed, ..cfg.eval.clone() };
    prepare_out(out)?;
    config::persist(cfg, out)?;
    let views: Vec<Corpus<'_>> = corpora.iter().map(|(n, s)| Corpus { name: n, samples: s }).collect();
    let mut reports = Vec::new();
    if matches!(cfg.protocol, ProtocolArg::Independent | ProtocolArg::Both) {
        for v in &views {
            let o =
                protocol_independent(&human, *v, &ec).with_context(|| format!("independent protocol, {}", v.name))?;
            write_outcome(&o, &format!("independent_{}", v.name), out, &mut reports)?;
        }
    }
    if matches!(cfg.protocol, ProtocolArg::Unified | ProtocolArg::Both) {
        let o = protocol_unified(&human, &views, &ec).context("unified protocol")?;
        write_outcome(&o, "unified", out, &mut reports)?;
    }
    report::write_json(&reports, &out.join("eval_report.json"))?;
    report::write_eval_csv(&reports, &out.join("eval_report.csv"))?;

    let mut accel = Vec::new();
    let named = std::iter::once(("human", &human[..])).chain(corpora.iter().map(|(n, s)| (n.as_str(), &s[..])));
    for (name, s) in named {
        let trajs: Vec<Trajectory> = s.iter().map(|x| x.traj.clone()).collect();
        match accel_direction_stats(&trajs, cfg.accel_bins) {
            Ok(st) => {
                let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                report::write_histogram(&st.histogram, &out.join(format!("accel_hist_{name}.csv")))?;
                accel.push(AccelSummary {
                    corpus: name.to_string(),
                    n_up: st.up.len(),
                    n_down: st.down.len(),
                    mean_up: mean(&st.up),
                    mean_down: mean(&st.down),
                    score: st.score,
                });
            }
            Err(e) => log::warn!("no acceleration statistics for {name}: {e}"),
        }
    }
    report::write_json(&accel, &out.join("accel_summary.json"))?;
    Ok(Outcome::Ok)
}

/// Runs the study and reports whether its acceptance check passed.
pub fn cmd_diag(cfg: &DiagRun, out: &Path) -> Result<bool> {
    prepare_out(out)?;
    config::persist(cfg, out)?;
    match cfg.study {
        Study::EntropyMst => {
            let ec = EntropyMstConfig { seed: cfg.seed, ..cfg.entropy_mst.clone() };
            let (rows, fits) = diag::entropy_mst_study(&ec)?;
            report::write_rows(&rows, &out.join("entropy_mst.csv"))?;
            #[derive(Serialize)]
            struct FitRow {
                m: usize,
                slope: f64,
                intercept: f64,
                r: f64,
            }
            let fr: Vec<FitRow> = fits
                .iter()
                .map(|f| FitRow { m: f.m, slope: f.fit.slope, intercept: f.fit.intercept, r: f.fit.r })
                .collect();
            report::write_rows(&fr, &out.join("entropy_mst_fit.csv"))?;
            let ok =
                fits.iter().all(|f| f.fit.slope >= cfg.slope_lo && f.fit.slope <= cfg.slope_hi && f.fit.r >= cfg.min_r);
            Ok(ok)
        }
        Study::Control => {
            let p = require(&cfg.corpus, "generated corpus (--corpus)")?;
            let samples = io::read_jsonl(&p)?;
            let (rows, sum) = diag::parameter_control(&samples)?;
            report::write_rows(&rows, &out.join("control.csv"))?;
            report::write_json(&sum, &out.join("control_summary.json"))?;
            Ok(sum.max_length_error == 0 && sum.max_endpoint_error <= cfg.endpoint_tol)
        }
        Study::Sweep => {
            let hp = require(&cfg.corpus, "human corpus (--corpus)")?;
            let cp = require(&cfg.checkpoint, "checkpoint (--checkpoint)")?;
            let human = io::read_jsonl(&hp)?;
            let model = checkpoint::load(&cp)?;
            ensure!(!human.is_empty(), "empty human corpus");
            let n_max = model.net.config().n_max;
            let mut buckets = Vec::new();
            for (b, &target) in cfg.sweep_targets.iter().enumerate() {
                let sr = SampleRun {
                    seed: rng::derive_seed(cfg.seed, b as u64),
                    generator: GeneratorKind::Dmtg,
                    alpha_mode: AlphaMode::Fixed,
                    alpha: target,
                    poll_ms: cfg.poll_ms,
                    n_max,
                    sampler: cfg.sampler,
                    ..SampleRun::default()
                };
                let tasks: Vec<TaskSpec> = (0..cfg.sweep_n)
                    .map(|i| {
                        let t = human[i % human.len()].task;
                        let (w, h) = t.screen();
                        Ok(TaskSpec::new(t.start(), t.end(), t.m().min(n_max), target, n_max)?.with_screen(w, h)?)
                    })
                    .collect::<Result<_>>()?;
                let (s, _) = generate(&sr, &tasks, Some(&model))?;
                buckets.push((target, s));
            }
            let ec = EvalConfig { seed: cfg.seed, ..cfg.eval.clone() };
            let rows = diag::sweep_panel(&human, &buckets, &ec)?;
            report::write_rows(&rows, &out.join("sweep.csv"))?;
            Ok(rows.iter().all(|r| r.mean_abs_error <= cfg.sweep_tol))
        }
    }
}

/// Parses arguments, runs the command and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::AssertFailed) => {
            eprintln!("assertion failed");
            EXIT_ASSERT
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}
