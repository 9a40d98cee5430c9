use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use super::features::{FeatureVec, FEATURE_DIM};
use crate::error::{invalid, Error, Result};
use crate::nn::{self, adam_step, kernels::sigmoid, AdamConfig, AdamState, LayerSpec, Tensor};
use crate::rng;

/// Fewest training samples per class a discriminator accepts.
pub const MIN_PER_CLASS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DiscriminatorKind {
    Tree,
    Logistic,
    Mlp,
}

impl DiscriminatorKind {
    pub const ALL: [DiscriminatorKind; 3] =
        [DiscriminatorKind::Tree, DiscriminatorKind::Logistic, DiscriminatorKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            DiscriminatorKind::Tree => "tree",
            DiscriminatorKind::Logistic => "logistic",
            DiscriminatorKind::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

/// Accuracy plus macro-averaged precision, recall and F1 over the two
/// classes. Undefined ratios count as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl BinaryMetrics {
    pub fn mean(ms: &[BinaryMetrics]) -> BinaryMetrics {
        let n = ms.len().max(1) as f64;
        let mut o = BinaryMetrics::default();
        for m in ms {
            o.accuracy += m.accuracy / n;
            o.precision += m.precision / n;
            o.recall += m.recall / n;
            o.f1 += m.f1 / n;
        }
        o
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

pub fn binary_metrics(truth: &[bool], pred: &[bool]) -> Result<BinaryMetrics> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch { left: truth.len(), right: pred.len() });
    }
    if truth.is_empty() {
        return Err(invalid("truth", "empty"));
    }
    let mut c = [[0.0f64; 2]; 2];
    for (&t, &p) in truth.iter().zip(pred) {
        c[t as usize][p as usize] += 1.0;
    }
    let n = truth.len() as f64;
    let mut prec = 0.0;
    let mut rec = 0.0;
    let mut f1 = 0.0;
    for k in 0..2 {
        let tp = c[k][k];
        let p = ratio(tp, c[0][k] + c[1][k]);
        let r = ratio(tp, c[k][0] + c[k][1]);
        prec += p / 2.0;
        rec += r / 2.0;
        f1 += ratio(2.0 * p * r, p + r) / 2.0;
    }
    Ok(BinaryMetrics { accuracy: (c[0][0] + c[1][1]) / n, precision: prec, recall: rec, f1 })
}

/// Per-feature z-scoring fitted on training data; constant features keep
/// unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl Standardizer {
    pub fn fit(x: &[FeatureVec]) -> Self {
        let n = x.len().max(1) as f64;
        let mut mean = [0.0; FEATURE_DIM];
        let mut std = [0.0; FEATURE_DIM];
        for f in x {
            for k in 0..FEATURE_DIM {
                mean[k] += f.0[k] / n;
            }
        }
        for f in x {
            for k in 0..FEATURE_DIM {
                std[k] += (f.0[k] - mean[k]) * (f.0[k] - mean[k]) / n;
            }
        }
        for s in std.iter_mut() {
            *s = sqrt(*s);
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Self { mean, std }
    }

    pub fn apply(&self, f: &FeatureVec) -> [f64; FEATURE_DIM] {
        let mut o = [0.0; FEATURE_DIM];
        for k in 0..FEATURE_DIM {
            o[k] = (f.0[k] - self.mean[k]) / self.std[k];
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf(p) => *p,
            Node::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiscriminatorConfig {
    pub tree_depth: usize,
    pub tree_min_leaf: usize,
    pub logistic_iters: usize,
    pub l2: f64,
    pub mlp_hidden: usize,
    pub mlp_epochs: usize,
    pub mlp_batch: usize,
    pub lr: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            tree_depth: 8,
            tree_min_leaf: 5,
            logistic_iters: 300,
            l2: 1e-4,
            mlp_hidden: 32,
            mlp_epochs: 40,
            mlp_batch: 64,
            lr: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Tree(Node),
    Logistic { w: [f64; FEATURE_DIM], b: f64 },
    Mlp { spec: LayerSpec, params: Vec<f64> },
}

/// A fitted binary classifier; `predict` returns P(positive).
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub kind: DiscriminatorKind,
    scale: Standardizer,
    model: Model,
}

impl Discriminator {
    pub fn predict(&self, f: &FeatureVec) -> f64 {
        let x = self.scale.apply(f);
        match &self.model {
            Model::Tree(n) => n.predict(&x),
            Model::Logistic { w, b } => sigmoid(w.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + b),
            Model::Mlp { spec, params } => {
                let t = Tensor::new(vec![1, FEATURE_DIM], x.to_vec()).expect("shape");
                let (o, _) = nn::forward(spec, params, &t).expect("mlp forward");
                sigmoid(o.data()[0])
            }
        }
    }

    pub fn classify(&self, f: &FeatureVec) -> bool {
        self.predict(f) > 0.5
    }

    pub fn evaluate(&self, x: &[FeatureVec], y: &[bool]) -> Result<BinaryMetrics> {
        let pred: Vec<bool> = x.iter().map(|f| self.classify(f)).collect();
        binary_metrics(y, &pred)
    }
}

fn gini(pos: f64, n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let p = pos / n;
    2.0 * p * (1.0 - p)
}

fn grow(x: &[[f64; FEATURE_DIM]], y: &[bool], idx: &mut [usize], depth: usize, cfg: &DiscriminatorConfig) -> Node {
    let n = idx.len();
    let pos = idx.iter().filter(|&&i| y[i]).count();
    let leaf = Node::Leaf(pos as f64 / n as f64);
    if depth == 0 || pos == 0 || pos == n || n < 2 * cfg.tree_min_leaf {
        return leaf;
    }
    let parent = gini(pos as f64, n as f64) * n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..FEATURE_DIM {
        idx.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut lp = 0usize;
        for k in 1..n {
            if y[idx[k - 1]] {
                lp += 1;
            }
            let (lo, hi) = (x[idx[k - 1]][f], x[idx[k]][f]);
            if lo == hi || k < cfg.tree_min_leaf || n - k < cfg.tree_min_leaf {
                continue;
            }
            let imp = gini(lp as f64, k as f64) * k as f64 + gini((pos - lp) as f64, (n - k) as f64) * (n - k) as f64;
            if imp < parent - 1e-12 && best.is_none_or(|b| imp < b.0) {
                best = Some((imp, f, 0.5 * (lo + hi)));
            }
        }
    }
    let Some((_, feature, threshold)) = best else {
        return leaf;
    };
    let mut l: Vec<usize> = idx.iter().copied().filter(|&i| x[i][feature] <= threshold).collect();
    let mut r: Vec<usize> = idx.iter().copied().filter(|&i| x[i][feature] > threshold).collect();
    Node::Split {
        feature,
        threshold,
        left: Box::new(grow(x, y, &mut l, depth - 1, cfg)),
        right: Box::new(grow(x, y, &mut r, depth - 1, cfg)),
    }
}

fn mlp_spec(h: usize) -> LayerSpec {
    LayerSpec::Sequential(vec![
        LayerSpec::dense(FEATURE_DIM, h),
        LayerSpec::Silu,
        LayerSpec::dense(h, h),
        LayerSpec::Silu,
        LayerSpec::dense(h, 1),
    ])
}

/// Fits a discriminator of `kind` on labelled features.
pub fn fit(
    kind: DiscriminatorKind,
    x: &[FeatureVec],
    y: &[bool],
    cfg: &DiscriminatorConfig,
    seed: u64,
) -> Result<Discriminator> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    let pos = y.iter().filter(|&&b| b).count();
    let fewest = pos.min(y.len() - pos);
    if fewest < MIN_PER_CLASS {
        return Err(Error::TooFewSamples { needed: MIN_PER_CLASS, got: fewest });
    }
    let scale = Standardizer::fit(x);
    let xs: Vec<[f64; FEATURE_DIM]> = x.iter().map(|f| scale.apply(f)).collect();
    let target: Vec<f64> = y.iter().map(|&b| b as u8 as f64).collect();
    let n = xs.len() as f64;
    let model = match kind {
        DiscriminatorKind::Tree => {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            Model::Tree(grow(&xs, y, &mut idx, cfg.tree_depth, cfg))
        }
        DiscriminatorKind::Logistic => {
            let mut params = vec![0.0; FEATURE_DIM + 1];
            let mut st = AdamState::new(params.len());
            let opt = AdamConfig { lr: cfg.lr * 5.0, ..AdamConfig::default() };
            for _ in 0..cfg.logistic_iters {
                let mut g = vec![0.0; FEATURE_DIM + 1];
                for (xi, ti) in xs.iter().zip(&target) {
                    let z: f64 =
                        params[..FEATURE_DIM].iter().zip(xi).map(|(a, v)| a * v).sum::<f64>() + params[FEATURE_DIM];
                    let e = (sigmoid(z) - ti) / n;
                    for k in 0..FEATURE_DIM {
                        g[k] += e * xi[k];
                    }
                    g[FEATURE_DIM] += e;
                }
                for k in 0..FEATURE_DIM {
                    g[k] += cfg.l2 * params[k];
                }
                adam_step(&mut params, &g, &mut st, &opt)?;
            }
            let mut w = [0.0; FEATURE_DIM];
            w.copy_from_slice(&params[..FEATURE_DIM]);
            Model::Logistic { w, b: params[FEATURE_DIM] }
        }
        DiscriminatorKind::Mlp => {
            let spec = mlp_spec(cfg.mlp_hidden);
            let mut params = spec.init_params(rng::derive_seed(seed, 0));
            let mut st = AdamState::new(params.len());
            let opt = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
            let mut r = rng::rng(rng::derive_seed(seed, 1));
            for _ in 0..cfg.mlp_epochs {
                let order = rng::permutation(&mut r, xs.len());
                for chunk in order.chunks(cfg.mlp_batch.max(1)) {
                    let data: Vec<f64> = chunk.iter().flat_map(|&i| xs[i]).collect();
                    let t = Tensor::new(vec![chunk.len(), FEATURE_DIM], data)?;
                    let (o, cache) = nn::forward(&spec, &params, &t)?;
                    let g: Vec<f64> = o
                        .data()
                        .iter()
                        .zip(chunk)
                        .map(|(z, &i)| (sigmoid(*z) - target[i]) / chunk.len() as f64)
                        .collect();
                    let (_, mut grads) = nn::backward(&spec, &params, &cache, &Tensor::new(vec![chunk.len(), 1], g)?)?;
                    for (gk, pk) in grads.iter_mut().zip(&params) {
                        *gk += cfg.l2 * pk;
                    }
                    adam_step(&mut params, &grads, &mut st, &opt)?;
                }
            }
            Model::Mlp { spec, params }
        }
    };
    Ok(Discriminator { kind, scale, model })
}

/// Stratified 70/30 split by seed, fit on the 70%, metrics on the 30%.
pub fn train_discriminator(
    pos: &[FeatureVec],
    neg: &[FeatureVec],
    kind: DiscriminatorKind,
    cfg: &DiscriminatorConfig,
    seed: u64,
) -> Result<(Discriminator, BinaryMetrics)> {
    let fewest = pos.len().min(neg.len());
    if fewest < MIN_PER_CLASS {
        return Err(Error::TooFewSamples { needed: MIN_PER_CLASS, got: fewest });
    }
    let mut r = rng::rng(rng::derive_seed(seed, 2));
    let (mut trx, mut try_, mut tex, mut tey) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (set, label) in [(pos, true), (neg, false)] {
        let order = rng::permutation(&mut r, set.len());
        let cut = set.len() * 7 / 10;
        for (k, &i) in order.iter().enumerate() {
            if k < cut {
                trx.push(set[i]);
                try_.push(label);
            } else {
                tex.push(set[i]);
                tey.push(label);
            }
        }
    }
    let d = fit(kind, &trx, &try_, cfg, seed)?;
    let m = d.evaluate(&tex, &tey)?;
    Ok((d, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(n: usize, shift: f64, seed: u64) -> Vec<FeatureVec> {
        let mut r = rng::rng(seed);
        (0..n)
            .map(|_| {
                let mut f = [0.0; FEATURE_DIM];
                for v in f.iter_mut() {
                    *v = rng::normal(&mut r);
                }
                f[3] += shift;
                FeatureVec(f)
            })
            .collect()
    }

    #[test]
    fn hand_worked_confusion() {
        // truth: 6 positives, 4 negatives
        // predictions: 4 TP, 2 FN, 1 FP, 3 TN
        let truth = [true, true, true, true, true, true, false, false, false, false];
        let pred = [true, true, true, true, false, false, true, false, false, false];
        let m = binary_metrics(&truth, &pred).unwrap();
        // positive: P = 4/5, R = 4/6, F1 = 8/11; negative: P = 3/5, R = 3/4, F1 = 2/3
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.precision - 0.7).abs() < 1e-12);
        assert!((m.recall - (4.0 / 6.0 + 0.75) / 2.0).abs() < 1e-12);
        assert!((m.f1 - (8.0 / 11.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        let all_pos = binary_metrics(&[true, false], &[true, true]).unwrap();
        assert!((all_pos.precision - 0.25).abs() < 1e-12);
    }

    #[test]
    fn separable_classes() {
        let (a, b) = (cloud(200, 10.0, 1), cloud(200, -10.0, 2));
        for k in DiscriminatorKind::ALL {
            let (_, m) = train_discriminator(&a, &b, k, &DiscriminatorConfig::default(), 3).unwrap();
            assert!(m.accuracy >= 0.99, "{k:?} {m:?}");
        }
    }

    #[test]
    fn identical_distributions_are_at_chance() {
        for k in DiscriminatorKind::ALL {
            let (a, b) = (cloud(300, 0.0, 4), cloud(300, 0.0, 5));
            let (_, m) = train_discriminator(&a, &b, k, &DiscriminatorConfig::default(), 6).unwrap();
            assert!((0.4..=0.6).contains(&m.accuracy), "{k:?} {m:?}");
        }
    }

    #[test]
    fn starved_class_is_rejected() {
        let r = train_discriminator(
            &cloud(49, 0.0, 1),
            &cloud(100, 0.0, 2),
            DiscriminatorKind::Tree,
            &DiscriminatorConfig::default(),
            0,
        );
        assert!(matches!(r, Err(Error::TooFewSamples { .. })));
    }
}
