use alloc::string::String;
use alloc::vec::Vec;

use super::classify::{fit, BinaryMetrics, DiscriminatorConfig, DiscriminatorKind};
use super::embed::{embed_2d, EmbedConfig};
use super::features::{extract_features, mean_features, FeatureVec, FEATURE_DIM};
use super::metrics::{cos_sim, emd, jsd, mse_rmse, pair_by_task, EmdConfig, JsdConfig};
use crate::error::{invalid, Error, Result};
use crate::geom::{Point, Sample, Trajectory, DEFAULT_POLL_MS};
use crate::rng;

pub const GROUPS: usize = 10;
pub const TRAIN_GROUPS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ProtocolKind {
    Independent,
    Unified,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Independent => "independent",
            ProtocolKind::Unified => "unified",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "independent" => Some(ProtocolKind::Independent),
            "unified" => Some(ProtocolKind::Unified),
            _ => None,
        }
    }
}

/// Train/test indices into one corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolSplit {
    pub kind: ProtocolKind,
    /// Group of every item (independent) or 0/1 for train/test (unified).
    pub groups: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalConfig {
    pub seed: u64,
    /// Spacing given to trajectories without timestamps.
    pub poll_ms: f64,
    /// Moves both corpora are resampled to for MSE.
    pub m_common: usize,
    pub jsd: JsdConfig,
    pub emd: EmdConfig,
    pub embed: EmbedConfig,
    pub discriminators: Vec<DiscriminatorKind>,
    pub classifier: DiscriminatorConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            poll_ms: DEFAULT_POLL_MS,
            m_common: 32,
            jsd: JsdConfig::default(),
            emd: EmdConfig::default(),
            embed: EmbedConfig::default(),
            discriminators: DiscriminatorKind::ALL.to_vec(),
            classifier: DiscriminatorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscriminatorScore {
    pub kind: DiscriminatorKind,
    pub metrics: BinaryMetrics,
}

/// Metric panel of one model corpus against the human corpus. JSD and EMD
/// are measured on the 2D embedding; MSE pairs every model sample with the
/// human sample of the nearest task. `cos_sim` compares mean feature
/// vectors after dividing each feature by its human std, and is absent when
/// either mean is the zero vector.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub model: String,
    pub protocol: ProtocolKind,
    pub n_human: usize,
    pub n_model: usize,
    pub jsd: f64,
    pub emd: f64,
    pub mse: f64,
    pub rmse: f64,
    pub cos_sim: Option<f64>,
    pub discriminators: Vec<DiscriminatorScore>,
    /// Mean over `discriminators`.
    pub mean: BinaryMetrics,
    /// Trajectories that had no timestamps and got uniform spacing.
    pub synthesized_timestamps: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbeddedPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub reports: Vec<EvalReport>,
    pub embedding: Vec<EmbeddedPoint>,
}

/// A named model corpus.
#[derive(Debug, Clone, Copy)]
pub struct Corpus<'a> {
    pub name: &'a str,
    pub samples: &'a [Sample],
}

/// Ten groups per side, seven for training and three for testing. When both
/// sides have the same size, one permutation is shared so that item `i` of
/// each side lands in the same group; generated corpora are indexed by the
/// human task they were drawn for, which keeps a task out of both halves.
pub fn independent_split(n_human: usize, n_model: usize, seed: u64) -> Result<(ProtocolSplit, ProtocolSplit)> {
    let fewest = n_human.min(n_model);
    if fewest < GROUPS {
        return Err(Error::TooFewSamples { needed: GROUPS, got: fewest });
    }
    let mut r = rng::rng(rng::derive_seed(seed, 10));
    let chosen = rng::permutation(&mut r, GROUPS);
    let train_group = |g: usize| chosen[..TRAIN_GROUPS].contains(&g);
    let hp = rng::permutation(&mut r, n_human);
    let mp = if n_model == n_human { hp.clone() } else { rng::permutation(&mut r, n_model) };
    let split = |perm: &[usize]| {
        let n = perm.len();
        let mut groups = alloc::vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            groups[i] = k * GROUPS / n;
        }
        let train = (0..n).filter(|&i| train_group(groups[i])).collect();
        let test = (0..n).filter(|&i| !train_group(groups[i])).collect();
        ProtocolSplit { kind: ProtocolKind::Independent, groups, train, test }
    };
    Ok((split(&hp), split(&mp)))
}

/// 7:3 split of `n` items shared by every equally sized source.
pub fn unified_split(n: usize, seed: u64) -> ProtocolSplit {
    let mut r = rng::rng(rng::derive_seed(seed, 11));
    let perm = rng::permutation(&mut r, n);
    let cut = n * TRAIN_GROUPS / GROUPS;
    let mut groups = alloc::vec![0; n];
    for &i in &perm[cut..] {
        groups[i] = 1;
    }
    let mut train: Vec<usize> = perm[..cut].to_vec();
    let mut test: Vec<usize> = perm[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    ProtocolSplit { kind: ProtocolKind::Unified, groups, train, test }
}

struct Prepared {
    feats: Vec<FeatureVec>,
    synthesized: usize,
}

fn prepare(samples: &[Sample], cfg: &EvalConfig) -> Result<Prepared> {
    let feats = samples.iter().map(|s| extract_features(&s.traj, cfg.poll_ms)).collect::<Result<Vec<_>>>()?;
    let synthesized = samples.iter().filter(|s| s.traj.timestamps().is_none()).count();
    Ok(Prepared { feats, synthesized })
}

fn scaled_cos(human: &[FeatureVec], model: &[FeatureVec]) -> Result<Option<f64>> {
    let scale = super::classify::Standardizer::fit(human);
    let (a, b) = (mean_features(human)?, mean_features(model)?);
    let mut va = [0.0; FEATURE_DIM];
    let mut vb = [0.0; FEATURE_DIM];
    for k in 0..FEATURE_DIM {
        va[k] = a.0[k] / scale.std[k];
        vb[k] = b.0[k] / scale.std[k];
    }
    match cos_sim(&va, &vb) {
        Ok(c) => Ok(Some(c)),
        Err(Error::InvalidArgument { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn trajs(s: &[Sample]) -> Vec<Trajectory> {
    s.iter().map(|x| x.traj.clone()).collect()
}

#[allow(clippy::too_many_arguments)]
fn panel(
    name: &str,
    protocol: ProtocolKind,
    human: &[Sample],
    model: &[Sample],
    h: &Prepared,
    m: &Prepared,
    he: &[Point],
    me: &[Point],
    discriminators: Vec<DiscriminatorScore>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    let pairs = pair_by_task(human, model)?;
    let paired: Vec<Trajectory> = pairs.iter().map(|&i| human[i].traj.clone()).collect();
    let (mse, rmse) = mse_rmse(&trajs(model), &paired, cfg.m_common)?;
    let mean = BinaryMetrics::mean(&discriminators.iter().map(|d| d.metrics).collect::<Vec<_>>());
    Ok(EvalReport {
        model: name.into(),
        protocol,
        n_human: human.len(),
        n_model: model.len(),
        jsd: jsd(he, me, &cfg.jsd)?,
        emd: emd(he, me, &cfg.emd)?,
        mse,
        rmse,
        cos_sim: scaled_cos(&h.feats, &m.feats)?,
        discriminators,
        mean,
        synthesized_timestamps: h.synthesized + m.synthesized,
    })
}

fn pick<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

fn embed_all(corpora: &[(&str, &[Sample])], cfg: &EvalConfig) -> Result<(Vec<Vec<Point>>, Vec<EmbeddedPoint>)> {
    let all: Vec<Trajectory> = corpora.iter().flat_map(|(_, s)| trajs(s)).collect();
    let pts = embed_2d(&all, &cfg.embed)?;
    let mut out = Vec::with_capacity(corpora.len());
    let mut export = Vec::with_capacity(all.len());
    let mut off = 0;
    for (name, s) in corpora {
        out.push(pts[off..off + s.len()].to_vec());
        for (k, smp) in s.iter().enumerate() {
            let p = pts[off + k];
            export.push(EmbeddedPoint { id: smp.id.clone(), x: p.x, y: p.y, label: String::from(*name) });
        }
        off += s.len();
    }
    Ok((out, export))
}

fn check_kinds(cfg: &EvalConfig) -> Result<()> {
    if cfg.discriminators.is_empty() {
        return Err(invalid("discriminators", "need at least one"));
    }
    Ok(())
}

/// Human against one model corpus; a separate discriminator per kind.
pub fn protocol_independent(human: &[Sample], model: Corpus<'_>, cfg: &EvalConfig) -> Result<EvalOutcome> {
    check_kinds(cfg)?;
    let (hs, ms) = independent_split(human.len(), model.samples.len(), cfg.seed)?;
    let (h, m) = (prepare(human, cfg)?, prepare(model.samples, cfg)?);
    let mut trx = pick(&h.feats, &hs.train);
    trx.extend(pick(&m.feats, &ms.train));
    let mut try_ = alloc::vec![false; hs.train.len()];
    try_.extend(core::iter::repeat_n(true, ms.train.len()));
    let mut tex = pick(&h.feats, &hs.test);
    tex.extend(pick(&m.feats, &ms.test));
    let mut tey = alloc::vec![false; hs.test.len()];
    tey.extend(core::iter::repeat_n(true, ms.test.len()));
    let mut scores = Vec::new();
    for (k, &kind) in cfg.discriminators.iter().enumerate() {
        let d = fit(kind, &trx, &try_, &cfg.classifier, rng::derive_seed(cfg.seed, 100 + k as u64))?;
        scores.push(DiscriminatorScore { kind, metrics: d.evaluate(&tex, &tey)? });
    }
    let (emb, export) = embed_all(&[("human", human), (model.name, model.samples)], cfg)?;
    let report =
        panel(model.name, ProtocolKind::Independent, human, model.samples, &h, &m, &emb[0], &emb[1], scores, cfg)?;
    Ok(EvalOutcome { reports: alloc::vec![report], embedding: export })
}

/// One pooled dataset with the same number of items from every source
/// (the smallest corpus size; larger corpora are truncated), split 7:3 with
/// a shared permutation. One discriminator per kind is fitted on the pooled
/// training part (human = negative, every model = positive) and scored on
/// each model's test items together with the human test items.
pub fn protocol_unified(human: &[Sample], models: &[Corpus<'_>], cfg: &EvalConfig) -> Result<EvalOutcome> {
    check_kinds(cfg)?;
    if models.is_empty() {
        return Err(invalid("models", "need at least one model corpus"));
    }
    let n = models.iter().map(|c| c.samples.len()).min().unwrap().min(human.len());
    if n == 0 {
        return Err(invalid("corpora", "empty corpus"));
    }
    let split = unified_split(n, cfg.seed);
    let human = &human[..n];
    let h = prepare(human, cfg)?;
    let ms: Vec<Prepared> = models.iter().map(|c| prepare(&c.samples[..n], cfg)).collect::<Result<_>>()?;

    let mut trx = pick(&h.feats, &split.train);
    let mut try_ = alloc::vec![false; split.train.len()];
    for m in &ms {
        trx.extend(pick(&m.feats, &split.train));
        try_.extend(core::iter::repeat_n(true, split.train.len()));
    }
    let h_test = pick(&h.feats, &split.test);
    let mut per_model: Vec<Vec<DiscriminatorScore>> = alloc::vec![Vec::new(); models.len()];
    for (k, &kind) in cfg.discriminators.iter().enumerate() {
        let d = fit(kind, &trx, &try_, &cfg.classifier, rng::derive_seed(cfg.seed, 200 + k as u64))?;
        for (mi, m) in ms.iter().enumerate() {
            let mut tex = h_test.clone();
            tex.extend(pick(&m.feats, &split.test));
            let mut tey = alloc::vec![false; split.test.len()];
            tey.extend(core::iter::repeat_n(true, split.test.len()));
            per_model[mi].push(DiscriminatorScore { kind, metrics: d.evaluate(&tex, &tey)? });
        }
    }

    let mut named: Vec<(&str, &[Sample])> = alloc::vec![("human", human)];
    named.extend(models.iter().map(|c| (c.name, &c.samples[..n])));
    let (emb, export) = embed_all(&named, cfg)?;
    let mut reports = Vec::with_capacity(models.len());
    for (mi, c) in models.iter().enumerate() {
        reports.push(panel(
            c.name,
            ProtocolKind::Unified,
            human,
            &c.samples[..n],
            &h,
            &ms[mi],
            &emb[0],
            &emb[mi + 1],
            core::mem::take(&mut per_model[mi]),
            cfg,
        )?);
    }
    Ok(EvalOutcome { reports, embedding: export })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_linear;
    use crate::oracle::{synth_corpus, OracleProfile};

    fn human(n: usize, seed: u64) -> Vec<Sample> {
        synth_corpus(n, &OracleProfile::default(), 64, seed).unwrap()
    }

    fn relabel(s: &[Sample], src: &str) -> Vec<Sample> {
        s.iter().map(|x| Sample { source: src.into(), ..x.clone() }).collect()
    }

    fn linear(s: &[Sample]) -> Vec<Sample> {
        s.iter()
            .map(|x| Sample {
                traj: gen_linear(&x.task).with_uniform_timestamps(16.0).unwrap(),
                source: "linear".into(),
                ..x.clone()
            })
            .collect()
    }

    #[test]
    fn splits_are_disjoint_and_sized() {
        let (h, m) = independent_split(100, 100, 3).unwrap();
        assert_eq!(h, m);
        assert_eq!(h.train.len(), 70);
        assert_eq!(h.test.len(), 30);
        assert!(h.train.iter().all(|i| !h.test.contains(i)));
        let u = unified_split(50, 1);
        assert_eq!((u.train.len(), u.test.len()), (35, 15));
        assert!(independent_split(9, 100, 0).is_err());
        assert_eq!(independent_split(120, 100, 3).unwrap(), independent_split(120, 100, 3).unwrap());
    }

    #[test]
    fn copy_is_indistinguishable_and_linear_is_not() {
        let h = human(400, 1);
        let copy = relabel(&h, "copy");
        let cfg = EvalConfig::default();
        let a = protocol_independent(&h, Corpus { name: "copy", samples: &copy }, &cfg).unwrap();
        let r = &a.reports[0];
        assert!((0.4..=0.6).contains(&r.mean.accuracy), "{r:?}");
        assert_eq!(r.jsd, 0.0);
        assert_eq!(r.emd, 0.0);
        assert_eq!((r.mse, r.rmse), (0.0, 0.0));
        assert_eq!(r.cos_sim, Some(1.0));
        assert_eq!(a, protocol_independent(&h, Corpus { name: "copy", samples: &copy }, &cfg).unwrap());

        let lin = linear(&h);
        let b = protocol_independent(&h, Corpus { name: "linear", samples: &lin }, &cfg).unwrap();
        assert!(b.reports[0].mean.accuracy >= 0.95, "{:?}", b.reports[0]);
        assert!(b.reports[0].jsd > 0.1);
        assert!((b.reports[0].rmse.powi(2) - b.reports[0].mse).abs() <= 1e-9 * b.reports[0].mse);
    }

    #[test]
    fn unified_copies_at_chance() {
        let h = human(300, 2);
        let c1 = relabel(&h, "a");
        let c2 = relabel(&h, "b");
        let out = protocol_unified(
            &h,
            &[Corpus { name: "a", samples: &c1 }, Corpus { name: "b", samples: &c2 }],
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(out.reports.len(), 2);
        assert_eq!(out.embedding.len(), 900);
        for r in &out.reports {
            assert!((0.4..=0.6).contains(&r.mean.accuracy), "{r:?}");
        }
        assert!(protocol_unified(&h, &[], &EvalConfig::default()).is_err());
    }
}
