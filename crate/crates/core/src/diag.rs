//! Diagnostic studies: entropy against MST length for the initialization
//! mixture, hard parameter control of generated samples, and metric panels
//! over a sweep of complexity targets.

use alloc::vec;
use alloc::vec::Vec;

use libm::{log, sqrt};

use crate::error::{invalid, Error, Result};
use crate::eval::{embed_2d, emd, jsd, EvalConfig};
use crate::geom::{
    complexity_ratio, gaussian_entropy, midpoint, mixture_cov, mst_length, Point, Sample, TaskSpec, Trajectory,
    DEFAULT_KC,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntropyMstConfig {
    pub a_grid: Vec<f64>,
    pub m_values: Vec<usize>,
    pub sets: usize,
    pub seed: u64,
    pub k_c: f64,
    /// Task displacement used to build the covariances.
    pub distance: f64,
}

impl Default for EntropyMstConfig {
    fn default() -> Self {
        Self {
            a_grid: (1..=20).map(|i| i as f64 * 0.05).collect(),
            m_values: vec![16, 32, 64, 128],
            sets: 200,
            seed: 0,
            k_c: DEFAULT_KC,
            distance: 600.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntropyMstRow {
    pub m: usize,
    pub a: f64,
    pub entropy: f64,
    pub mean_mst: f64,
    pub log_mean_mst: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation.
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EntropyMstFit {
    pub m: usize,
    pub fit: LinearFit,
}

/// Least-squares line `y = slope·x + intercept` with Pearson `r`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("constant abscissa"));
    }
    let slope = sxy / sxx;
    let r = if syy > 0.0 { sxy / sqrt(sxx * syy) } else { 0.0 };
    Ok(LinearFit { slope, intercept: my - slope * mx, r })
}

/// For every `(m, a)` cell, draws `sets` clouds of `m` points from the
/// initialization mixture at weight `a`, records the mean MST length and
/// the Gaussian entropy, then fits `log(mean MST)` against entropy per `m`.
pub fn entropy_mst_study(cfg: &EntropyMstConfig) -> Result<(Vec<EntropyMstRow>, Vec<EntropyMstFit>)> {
    if cfg.sets == 0 || cfg.a_grid.len() < 2 || cfg.m_values.is_empty() {
        return Err(invalid("entropy_mst", "need sets > 0, two or more weights and one m"));
    }
    if cfg.m_values.iter().any(|&m| m < 2) {
        return Err(invalid("m_values", "every m must be at least 2"));
    }
    let task = TaskSpec::new(Point::new(0.0, 0.0), Point::new(cfg.distance, 0.0), 1, 1.0, 1)?;
    let center = midpoint(&task);
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    let mut cell = 0u64;
    for &m in &cfg.m_values {
        let (mut hs, mut ls) = (Vec::new(), Vec::new());
        for &a in &cfg.a_grid {
            let cov = mixture_cov(&task, a, cfg.k_c)?;
            let h = gaussian_entropy(&cov)?;
            let root = cov.sqrt_psd();
            let mut r = rng::rng(rng::derive_seed(cfg.seed, cell));
            cell += 1;
            let mut total = 0.0;
            let mut pts = vec![Point::ORIGIN; m];
            for _ in 0..cfg.sets {
                for p in pts.iter_mut() {
                    *p = center + root.apply(Point::new(rng::normal(&mut r), rng::normal(&mut r)));
                }
                total += mst_length(&pts)?;
            }
            let mean = total / cfg.sets as f64;
            rows.push(EntropyMstRow { m, a, entropy: h, mean_mst: mean, log_mean_mst: log(mean) });
            hs.push(h);
            ls.push(log(mean));
        }
        fits.push(EntropyMstFit { m, fit: linear_fit(&hs, &ls)? });
    }
    Ok((rows, fits))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlRow {
    pub id: alloc::string::String,
    pub target: f64,
    pub achieved: f64,
    pub complexity_error: f64,
    /// Larger endpoint offset over the task distance.
    pub endpoint_error: f64,
    /// `|effective_len − (m + 1)|`.
    pub length_error: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlSummary {
    pub n: usize,
    pub max_endpoint_error: f64,
    pub max_length_error: usize,
    pub mean_complexity_error: f64,
}

/// How well each sample honours its task: endpoints, node count and the
/// complexity target stored in the task.
pub fn parameter_control(samples: &[Sample]) -> Result<(Vec<ControlRow>, ControlSummary)> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let t = &s.traj;
        let d = s.task.distance();
        let ep = t.start().dist(s.task.start()).max(t.end().dist(s.task.end())) / d;
        let achieved = complexity_ratio(t)?;
        rows.push(ControlRow {
            id: s.id.clone(),
            target: s.task.alpha_bar(),
            achieved,
            complexity_error: (achieved - s.task.alpha_bar()).abs(),
            endpoint_error: ep,
            length_error: t.effective_len().abs_diff(s.task.m() + 1),
        });
    }
    let n = rows.len();
    let summary = ControlSummary {
        n,
        max_endpoint_error: rows.iter().map(|r| r.endpoint_error).fold(0.0, f64::max),
        max_length_error: rows.iter().map(|r| r.length_error).max().unwrap_or(0),
        mean_complexity_error: rows.iter().map(|r| r.complexity_error).sum::<f64>() / n as f64,
    };
    Ok((rows, summary))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub target: f64,
    pub n: usize,
    pub mean_achieved: f64,
    pub mean_abs_error: f64,
    pub jsd: f64,
    pub emd: f64,
}

/// Metric panel per complexity bucket against the human corpus, all
/// buckets sharing one embedding.
pub fn sweep_panel(human: &[Sample], buckets: &[(f64, Vec<Sample>)], cfg: &EvalConfig) -> Result<Vec<SweepRow>> {
    if buckets.iter().any(|(_, b)| b.is_empty()) || human.is_empty() {
        return Err(invalid("sweep", "empty bucket or human corpus"));
    }
    let mut all: Vec<Trajectory> = human.iter().map(|s| s.traj.clone()).collect();
    for (_, b) in buckets {
        all.extend(b.iter().map(|s| s.traj.clone()));
    }
    let emb = embed_2d(&all, &cfg.embed)?;
    let he = &emb[..human.len()];
    let mut off = human.len();
    let mut rows = Vec::with_capacity(buckets.len());
    for (target, b) in buckets {
        let be = &emb[off..off + b.len()];
        off += b.len();
        let ach: Vec<f64> = b.iter().map(|s| complexity_ratio(&s.traj)).collect::<Result<_>>()?;
        let n = ach.len() as f64;
        rows.push(SweepRow {
            target: *target,
            n: b.len(),
            mean_achieved: ach.iter().sum::<f64>() / n,
            mean_abs_error: ach.iter().map(|a| (a - target).abs()).sum::<f64>() / n,
            jsd: jsd(he, be, &cfg.jsd)?,
            emd: emd(he, be, &cfg.emd)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_linear;

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12 && (f.r - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn mst_grows_with_entropy() {
        let cfg = EntropyMstConfig {
            m_values: vec![16],
            sets: 40,
            a_grid: vec![0.1, 0.4, 0.7, 1.0],
            ..EntropyMstConfig::default()
        };
        let (rows, fits) = entropy_mst_study(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.windows(2).all(|w| w[1].entropy > w[0].entropy && w[1].mean_mst > w[0].mean_mst));
        assert!(fits[0].fit.r > 0.95);
    }

    #[test]
    fn control_of_linear_is_exact() {
        let t = TaskSpec::new(Point::new(3., 4.), Point::new(300., 500.), 20, 1.0, 64).unwrap();
        let s = Sample { id: "a".into(), source: "linear".into(), task: t, traj: gen_linear(&t) };
        let (_, sum) = parameter_control(&[s]).unwrap();
        assert_eq!(sum.max_length_error, 0);
        assert_eq!(sum.max_endpoint_error, 0.0);
        assert!(sum.mean_complexity_error < 1e-12);
    }
}
