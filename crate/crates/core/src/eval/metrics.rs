use alloc::vec;
use alloc::vec::Vec;

use libm::{cos, floor, log2, sin, sqrt};

use crate::error::{invalid, Error, Result};
use crate::geom::{resample_points, Point, Sample, Trajectory};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct JsdConfig {
    pub bins: usize,
    /// Added to every cell of both histograms; 0 gives the raw estimate.
    pub pseudocount: f64,
}

impl Default for JsdConfig {
    fn default() -> Self {
        Self { bins: 32, pseudocount: 1.0 }
    }
}

fn non_empty(name: &'static str, p: &[Point]) -> Result<()> {
    if p.is_empty() {
        return Err(invalid(name, "empty sample set"));
    }
    if p.iter().any(|q| !q.is_finite()) {
        return Err(invalid(name, "non-finite point"));
    }
    Ok(())
}

/// Base-2 Jensen–Shannon divergence of two point clouds histogrammed on a
/// shared `bins × bins` grid over their joint bounding box.
pub fn jsd(p: &[Point], q: &[Point], cfg: &JsdConfig) -> Result<f64> {
    non_empty("p", p)?;
    non_empty("q", q)?;
    if cfg.bins == 0 || !(cfg.pseudocount >= 0.0) {
        return Err(invalid("jsd", "bins must be positive and pseudocount non-negative"));
    }
    let all = p.iter().chain(q);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for pt in all {
        x0 = x0.min(pt.x);
        x1 = x1.max(pt.x);
        y0 = y0.min(pt.y);
        y1 = y1.max(pt.y);
    }
    let widen = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let ((x0, x1), (y0, y1)) = (widen(x0, x1), widen(y0, y1));
    let b = cfg.bins;
    let cell = |v: f64, lo: f64, hi: f64| ((floor((v - lo) / (hi - lo) * b as f64)) as usize).min(b - 1);
    let hist = |s: &[Point]| {
        let mut h = vec![cfg.pseudocount; b * b];
        for pt in s {
            h[cell(pt.y, y0, y1) * b + cell(pt.x, x0, x1)] += 1.0;
        }
        let total: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= total);
        h
    };
    let (hp, hq) = (hist(p), hist(q));
    let mut d = 0.0;
    for (&a, &c) in hp.iter().zip(&hq) {
        let m = 0.5 * (a + c);
        if a > 0.0 {
            d += 0.5 * a * log2(a / m);
        }
        if c > 0.0 {
            d += 0.5 * c * log2(c / m);
        }
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Exact Wasserstein-1 distance between two 1D empirical distributions,
/// `∫|F_a − F_b|`.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("wasserstein_1d", "empty sample set"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(invalid("wasserstein_1d", "non-finite value"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut area = 0.0;
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && a[i] <= b[j]);
        let x = if take_a { a[i] } else { b[j] };
        area += (i as f64 / na - j as f64 / nb).abs() * (x - prev);
        prev = x;
        if take_a {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(area)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmdConfig {
    pub directions: usize,
    pub seed: u64,
}

impl Default for EmdConfig {
    fn default() -> Self {
        Self { directions: 64, seed: 0 }
    }
}

/// Sliced Wasserstein-1: mean 1D distance over `directions` angles, one
/// drawn uniformly inside each of the equal strata of `[0, π)`.
pub fn emd(p: &[Point], q: &[Point], cfg: &EmdConfig) -> Result<f64> {
    non_empty("p", p)?;
    non_empty("q", q)?;
    if cfg.directions == 0 {
        return Err(invalid("directions", "must be positive"));
    }
    let mut r = rng::rng(cfg.seed);
    let k = cfg.directions as f64;
    let mut sum = 0.0;
    for i in 0..cfg.directions {
        let th = core::f64::consts::PI * (i as f64 + rng::uniform(&mut r)) / k;
        let (c, s) = (cos(th), sin(th));
        let pa: Vec<f64> = p.iter().map(|v| c * v.x + s * v.y).collect();
        let qa: Vec<f64> = q.iter().map(|v| c * v.x + s * v.y).collect();
        sum += wasserstein_1d(&pa, &qa)?;
    }
    Ok(sum / k)
}

/// Mean squared node distance between index-paired corpora after resampling
/// both to `m_common` moves, and its square root.
pub fn mse_rmse(a: &[Trajectory], b: &[Trajectory], m_common: usize) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(invalid("mse", "empty corpora"));
    }
    if m_common < 2 {
        return Err(invalid("m_common", "must be at least 2"));
    }
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b) {
        let rx = resample_points(x.nodes(), m_common)?;
        let ry = resample_points(y.nodes(), m_common)?;
        for (p, q) in rx.iter().zip(&ry) {
            let d = *p - *q;
            sum += d.dot(d);
        }
    }
    let mse = sum / (a.len() * (m_common + 1)) as f64;
    Ok((mse, sqrt(mse)))
}

/// For every `model` sample, the index of the `human` sample whose task is
/// closest in start, end and move count.
pub fn pair_by_task(human: &[Sample], model: &[Sample]) -> Result<Vec<usize>> {
    if human.is_empty() {
        return Err(invalid("human", "empty corpus"));
    }
    Ok(model
        .iter()
        .map(|s| {
            let cost = |h: &Sample| {
                h.task.start().dist(s.task.start())
                    + h.task.end().dist(s.task.end())
                    + (h.task.m() as f64 - s.task.m() as f64).abs()
            };
            let mut best = 0;
            let mut best_c = f64::INFINITY;
            for (i, h) in human.iter().enumerate() {
                let c = cost(h);
                if c < best_c {
                    best_c = c;
                    best = i;
                }
            }
            best
        })
        .collect())
}

pub fn cos_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if !(na > 0.0 && nb > 0.0) {
        return Err(invalid("cos_sim", "zero vector"));
    }
    Ok((dot / sqrt(na * nb)).clamp(-1.0, 1.0))
}
