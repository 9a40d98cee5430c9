use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log};
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::geom::{canonicalize, resample_points, Point, Trajectory};
use crate::rng;

pub const MIN_EMBED: usize = 10;
pub const MAX_TSNE: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EmbedMethod {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EmbedConfig {
    pub method: EmbedMethod,
    /// Moves every trajectory is resampled to before flattening.
    pub m_common: usize,
    pub seed: u64,
    pub perplexity: f64,
    pub iterations: usize,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { method: EmbedMethod::Pca, m_common: 32, seed: 0, perplexity: 30.0, iterations: 500 }
    }
}

/// Flattened shape vector: canonical frame (start at the origin, end at
/// `(1,0)`), arc-length resampled, interior nodes only.
pub fn shape_vector(traj: &Trajectory, m_common: usize) -> Result<Vec<f64>> {
    let c = canonicalize(&resample_points(traj.nodes(), m_common)?)?;
    Ok(c[1..m_common].iter().flat_map(|p| [p.x, p.y]).collect())
}

/// One 2D point per trajectory.
pub fn embed_2d(trajs: &[Trajectory], cfg: &EmbedConfig) -> Result<Vec<Point>> {
    if trajs.len() < MIN_EMBED {
        return Err(Error::TooFewSamples { needed: MIN_EMBED, got: trajs.len() });
    }
    if cfg.m_common < 2 {
        return Err(invalid("m_common", "must be at least 2"));
    }
    let rows: Vec<Vec<f64>> = trajs.iter().map(|t| shape_vector(t, cfg.m_common)).collect::<Result<_>>()?;
    let pca = pca_2d(&rows);
    match cfg.method {
        EmbedMethod::Pca => Ok(pca),
        EmbedMethod::Tsne => tsne(&rows, &pca, cfg),
    }
}

/// Projection onto the two leading principal axes. Each axis is oriented so
/// that its largest-magnitude loading is positive.
pub fn pca_2d(rows: &[Vec<f64>]) -> Vec<Point> {
    let n = rows.len();
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    let cov = (x.transpose() * &x) / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let axis = |k: usize| -> Vec<f64> {
        if k >= d {
            return vec![0.0; d];
        }
        let col = eig.eigenvectors.column(order[k]);
        let mut big = 0;
        for j in 0..d {
            if col[j].abs() > col[big].abs() {
                big = j;
            }
        }
        let s = if col[big] < 0.0 { -1.0 } else { 1.0 };
        col.iter().map(|v| v * s).collect()
    };
    let (a0, a1) = (axis(0), axis(1));
    (0..n)
        .map(|i| {
            let r = x.row(i);
            let px: f64 = r.iter().zip(&a0).map(|(u, v)| u * v).sum();
            let py: f64 = r.iter().zip(&a1).map(|(u, v)| u * v).sum();
            Point::new(px, py)
        })
        .collect()
}

/// Exact t-SNE seeded from the scaled PCA layout plus a small seeded jitter.
fn tsne(rows: &[Vec<f64>], init: &[Point], cfg: &EmbedConfig) -> Result<Vec<Point>> {
    let n = rows.len();
    if n > MAX_TSNE {
        return Err(invalid("tsne", alloc::format!("at most {MAX_TSNE} points, got {n}")));
    }
    if !(cfg.perplexity > 1.0 && cfg.perplexity < n as f64) {
        return Err(invalid("perplexity", "must lie in (1, corpus size)"));
    }
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d2[i * n + j] = s;
            d2[j * n + i] = s;
        }
    }
    // conditional affinities by bisection on the precision
    let target = log(cfg.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
        let dmin = (0..n).filter(|&j| j != i).map(|j| d2[i * n + j]).fold(f64::INFINITY, f64::min);
        for _ in 0..64 {
            let mut sum = 0.0;
            let mut hsum = 0.0;
            for j in 0..n {
                if j != i {
                    let w = exp(-beta * (d2[i * n + j] - dmin));
                    p[i * n + j] = w;
                    sum += w;
                    hsum += w * (d2[i * n + j] - dmin);
                }
            }
            let h = log(sum) + beta * hsum / sum;
            for j in 0..n {
                p[i * n + j] /= sum;
            }
            if (h - target).abs() < 1e-5 {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let s = (p[i * n + j] + p[j * n + i]) / (2.0 * n as f64);
            p[i * n + j] = s.max(1e-12);
            p[j * n + i] = s.max(1e-12);
        }
    }

    let mut r = rng::rng(cfg.seed);
    let spread = init.iter().map(|q| q.x.abs().max(q.y.abs())).fold(0.0, f64::max).max(1e-12);
    let mut y: Vec<Point> = init
        .iter()
        .map(|q| *q * (1e-2 / spread) + Point::new(rng::normal(&mut r), rng::normal(&mut r)) * 1e-4)
        .collect();
    let mut vel = vec![Point::ORIGIN; n];
    let mut gains = vec![Point::new(1.0, 1.0); n];
    let lr = (n as f64 / 12.0).max(50.0);
    let mut q = vec![0.0; n * n];
    for it in 0..cfg.iterations {
        let exag = if it < 100 { 12.0 } else { 1.0 };
        let mom = if it < 250 { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let d = y[i] - y[j];
                let w = 1.0 / (1.0 + d.dot(d));
                q[i * n + j] = w;
                q[j * n + i] = w;
                z += 2.0 * w;
            }
        }
        for i in 0..n {
            let mut g = Point::ORIGIN;
            for j in 0..n {
                if j != i {
                    let w = q[i * n + j];
                    g = g + (y[i] - y[j]) * (4.0 * (exag * p[i * n + j] - w / z) * w);
                }
            }
            let upd = |gain: f64, gv: f64, vv: f64| {
                if (gv > 0.0) != (vv > 0.0) {
                    gain + 0.2
                } else {
                    (gain * 0.8).max(0.01)
                }
            };
            gains[i] = Point::new(upd(gains[i].x, g.x, vel[i].x), upd(gains[i].y, g.y, vel[i].y));
            vel[i] = Point::new(mom * vel[i].x - lr * gains[i].x * g.x, mom * vel[i].y - lr * gains[i].y * g.y);
        }
        for i in 0..n {
            y[i] = y[i] + vel[i];
        }
        let c = y.iter().fold(Point::ORIGIN, |a, b| a + *b) * (1.0 / n as f64);
        y.iter_mut().for_each(|v| *v = *v - c);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("t-SNE diverged"));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_linear;
    use crate::geom::TaskSpec;

    fn line(i: usize) -> Trajectory {
        let t = TaskSpec::new(Point::new(0., 0.), Point::new(100. + i as f64, 50.), 16, 1.0, 64).unwrap();
        gen_linear(&t)
    }

    // random walk around an arc bowing to one side
    fn walk(seed: u64) -> Trajectory {
        let mut r = rng::rng(seed);
        let mut drift = Point::ORIGIN;
        let mut nodes = vec![Point::ORIGIN];
        for i in 1..16 {
            drift = drift + Point::new(rng::normal(&mut r) * 2.0, rng::normal(&mut r) * 2.0);
            let s = i as f64 / 16.0;
            nodes.push(Point::new(100.0 * s, 40.0 * (std::f64::consts::PI * s).sin()) + drift);
        }
        nodes.push(Point::new(100.0, 0.0));
        Trajectory::from_nodes(nodes).unwrap()
    }

    fn spread(pts: &[Point]) -> (Point, f64) {
        let c = pts.iter().fold(Point::ORIGIN, |a, b| a + *b) * (1.0 / pts.len() as f64);
        (c, pts.iter().map(|p| p.dist(c)).sum::<f64>() / pts.len() as f64)
    }

    #[test]
    fn identical_corpus_collapses() {
        let c: Vec<Trajectory> = (0..12).map(|_| line(0)).collect();
        let e = embed_2d(&c, &EmbedConfig::default()).unwrap();
        assert!(e.iter().all(|p| p.dist(e[0]) < 1e-12));
        assert!(embed_2d(&c[..9], &EmbedConfig::default()).is_err());
    }

    #[test]
    fn clusters_separate_and_pca_is_deterministic() {
        let mut c: Vec<Trajectory> = (0..20).map(line).collect();
        c.extend((0..20).map(walk));
        let cfg = EmbedConfig::default();
        let e = embed_2d(&c, &cfg).unwrap();
        assert_eq!(e, embed_2d(&c, &cfg).unwrap());
        let (ca, sa) = spread(&e[..20]);
        let (cb, sb) = spread(&e[20..]);
        assert!(ca.dist(cb) > 3.0 * 0.5 * (sa + sb), "{} vs {} {}", ca.dist(cb), sa, sb);
    }

    #[test]
    fn tsne_runs_and_separates() {
        let mut c: Vec<Trajectory> = (0..20).map(line).collect();
        c.extend((0..20).map(walk));
        let cfg = EmbedConfig { method: EmbedMethod::Tsne, perplexity: 5.0, iterations: 300, ..EmbedConfig::default() };
        let e = embed_2d(&c, &cfg).unwrap();
        assert_eq!(e, embed_2d(&c, &cfg).unwrap());
        let (ca, sa) = spread(&e[..20]);
        let (cb, sb) = spread(&e[20..]);
        assert!(ca.dist(cb) > 3.0 * 0.5 * (sa + sb));
    }
}
