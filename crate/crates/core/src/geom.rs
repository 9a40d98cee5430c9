//! Geometry, Gaussian and complexity primitives shared by the generators,
//! the diffusion model and the evaluation panel.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

use libm::{log, sqrt};

use crate::error::{invalid, Error, Result};

/// Default scaling coefficient linking task displacement to noise spread.
pub const DEFAULT_KC: f64 = 1.0 / 6.0;
/// Default maximum node budget.
pub const DEFAULT_N_MAX: usize = 64;
/// Default polling interval used to synthesize timestamps (125 Hz).
pub const DEFAULT_POLL_MS: f64 = 8.0;

/// Relative slack under which a path is treated as exactly straight.
const STRAIGHT_REL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        sqrt(self.x * self.x + self.y * self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        self + (other - self) * t
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// A generation request: endpoints, node budget and complexity target.
///
/// `alpha_bar` is the normalized complexity `1 / (alpha + 1)` where `alpha`
/// is the excess path ratio `L/D - 1`; 1.0 is a straight line.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TaskSpec {
    start: Point,
    end: Point,
    m: usize,
    alpha_bar: f64,
    screen_w: f64,
    screen_h: f64,
    n_max: usize,
}

impl TaskSpec {
    pub fn new(start: Point, end: Point, m: usize, alpha_bar: f64, n_max: usize) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidTask("non-finite endpoint"));
        }
        if start == end {
            return Err(Error::InvalidTask("start and end coincide"));
        }
        if m == 0 || m > n_max {
            return Err(Error::InvalidTask("node count m must satisfy 1 <= m <= n_max"));
        }
        if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
            return Err(Error::InvalidTask("alpha_bar must lie in (0, 1]"));
        }
        Ok(Self { start, end, m, alpha_bar, screen_w: 1920.0, screen_h: 1080.0, n_max })
    }

    pub fn with_screen(mut self, w: f64, h: f64) -> Result<Self> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidTask("screen bounds must be positive"));
        }
        self.screen_w = w;
        self.screen_h = h;
        Ok(self)
    }

    pub fn with_alpha_bar(self, alpha_bar: f64) -> Result<Self> {
        Self::new(self.start, self.end, self.m, alpha_bar, self.n_max)?.with_screen(self.screen_w, self.screen_h)
    }

    pub fn start(&self) -> Point {
        self.start
    }
    pub fn end(&self) -> Point {
        self.end
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn alpha_bar(&self) -> f64 {
        self.alpha_bar
    }
    pub fn screen(&self) -> (f64, f64) {
        (self.screen_w, self.screen_h)
    }
    pub fn n_max(&self) -> usize {
        self.n_max
    }
    pub fn displacement(&self) -> Point {
        self.end - self.start
    }
    pub fn distance(&self) -> f64 {
        self.displacement().norm()
    }
}

/// Ordered 2D node sequence stored in a fixed `n_max + 1` buffer. Positions
/// past `effective_len` hold the `⟨0,0⟩` mask; which entries are real is
/// decided by `effective_len` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    buffer: Vec<Point>,
    effective_len: usize,
    timestamps: Option<Vec<f64>>,
}

impl Trajectory {
    /// Builds a trajectory from its real nodes, padding to `n_max + 1`.
    pub fn new(nodes: Vec<Point>, n_max: usize) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if nodes.len() > n_max + 1 {
            return Err(Error::LengthMismatch { left: nodes.len(), right: n_max + 1 });
        }
        if nodes.iter().any(|p| !p.is_finite()) {
            return Err(Error::Degenerate("non-finite coordinate"));
        }
        let effective_len = nodes.len();
        let mut buffer = nodes;
        buffer.resize(n_max + 1, Point::ORIGIN);
        Ok(Self { buffer, effective_len, timestamps: None })
    }

    /// Unpadded trajectory (`n_max = len - 1`).
    pub fn from_nodes(nodes: Vec<Point>) -> Result<Self> {
        let n = nodes.len().max(1) - 1;
        Self::new(nodes, n)
    }

    /// Attaches timestamps (ms), one per real node, strictly increasing.
    pub fn with_timestamps(mut self, ts: Vec<f64>) -> Result<Self> {
        if ts.len() != self.effective_len {
            return Err(Error::LengthMismatch { left: ts.len(), right: self.effective_len });
        }
        if ts.iter().any(|t| !t.is_finite()) || ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("timestamps", "must be finite and strictly increasing"));
        }
        self.timestamps = Some(ts);
        Ok(self)
    }

    pub fn with_uniform_timestamps(self, poll_ms: f64) -> Result<Self> {
        if !(poll_ms > 0.0) {
            return Err(invalid("poll_ms", "must be positive"));
        }
        let ts = (0..self.effective_len).map(|i| i as f64 * poll_ms).collect();
        self.with_timestamps(ts)
    }

    pub fn without_timestamps(mut self) -> Self {
        self.timestamps = None;
        self
    }

    /// Real nodes only.
    pub fn nodes(&self) -> &[Point] {
        &self.buffer[..self.effective_len]
    }

    /// Whole buffer including masks.
    pub fn buffer(&self) -> &[Point] {
        &self.buffer
    }

    pub fn effective_len(&self) -> usize {
        self.effective_len
    }

    /// Number of moves (`effective_len - 1`).
    pub fn m(&self) -> usize {
        self.effective_len - 1
    }

    pub fn n_max(&self) -> usize {
        self.buffer.len() - 1
    }

    pub fn start(&self) -> Point {
        self.buffer[0]
    }

    pub fn end(&self) -> Point {
        self.buffer[self.effective_len - 1]
    }

    pub fn timestamps(&self) -> Option<&[f64]> {
        self.timestamps.as_deref()
    }

    /// Endpoint pinning, node count and mask fill all agree with `task`.
    pub fn is_task_bound(&self, task: &TaskSpec) -> bool {
        self.effective_len == task.m() + 1
            && self.n_max() == task.n_max()
            && self.start() == task.start()
            && self.end() == task.end()
            && self.buffer[self.effective_len..].iter().all(|p| *p == Point::ORIGIN)
    }
}

/// A trajectory with provenance, as stored in corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub source: String,
    pub task: TaskSpec,
    pub traj: Trajectory,
}

impl Sample {
    /// Wraps a trajectory, deriving its task from the measured endpoints,
    /// node count and complexity. Rejects closed loops (start = end).
    pub fn from_trajectory(id: impl Into<String>, source: impl Into<String>, traj: Trajectory) -> Result<Self> {
        let alpha_bar = complexity_ratio(&traj)?;
        let task = TaskSpec::new(traj.start(), traj.end(), traj.m(), alpha_bar, traj.n_max())?;
        Ok(Self { id: id.into(), source: source.into(), task, traj })
    }
}

/// Symmetric 2×2 covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn diag(v: f64) -> Self {
        Self::new(v, 0.0, v)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * self.trace();
        let d = 0.5 * (self.xx - self.yy);
        let r = sqrt(d * d + self.xy * self.xy);
        (half_tr - r, half_tr + r)
    }

    pub fn is_psd(&self) -> bool {
        self.eigenvalues().0 >= -1e-9
    }

    pub fn scale(&self, k: f64) -> Cov2 {
        Cov2::new(self.xx * k, self.xy * k, self.yy * k)
    }

    pub fn add(&self, o: &Cov2) -> Cov2 {
        Cov2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    /// Symmetric square root `S` with `S·S = self`; valid for rank-deficient
    /// PSD matrices, which a Cholesky factor is not.
    pub fn sqrt_psd(&self) -> Cov2 {
        let (l0, l1) = self.eigenvalues();
        let (s0, s1) = (sqrt(l0.max(0.0)), sqrt(l1.max(0.0)));
        // eigenvector of l1
        let (vx, vy) = if self.xy.abs() > 1e-300 {
            let v = (l1 - self.yy, self.xy);
            let n = sqrt(v.0 * v.0 + v.1 * v.1);
            (v.0 / n, v.1 / n)
        } else if self.xx >= self.yy {
            (1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        // S = s1·v vᵀ + s0·w wᵀ with w ⟂ v
        let (wx, wy) = (-vy, vx);
        Cov2::new(s1 * vx * vx + s0 * wx * wx, s1 * vx * vy + s0 * wx * wy, s1 * vy * vy + s0 * wy * wy)
    }

    /// `self · v` for a point treated as a column vector.
    pub fn apply(&self, v: Point) -> Point {
        Point::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }
}

/// Midpoint `p_c` of the task endpoints.
pub fn midpoint(task: &TaskSpec) -> Point {
    Point::new((task.start().x + task.end().x) / 2.0, (task.start().y + task.end().y) / 2.0)
}

fn check_kc(k_c: f64) -> Result<()> {
    if k_c > 0.0 && k_c.is_finite() {
        Ok(())
    } else {
        Err(invalid("k_c", "must be positive and finite"))
    }
}

/// Isotropic initialization covariance `((k_c Δx)² + (k_c Δy)²)·I`.
pub fn noise_cov(task: &TaskSpec, k_c: f64) -> Result<Cov2> {
    check_kc(k_c)?;
    let d = task.displacement();
    if d == Point::ORIGIN {
        return Err(Error::Degenerate("zero task displacement"));
    }
    let v = (k_c * d.x) * (k_c * d.x) + (k_c * d.y) * (k_c * d.y);
    Ok(Cov2::diag(v))
}

/// Rank-1 covariance `k_c²·d·dᵀ` aligned with the straight path.
pub fn direction_cov(task: &TaskSpec, k_c: f64) -> Result<Cov2> {
    check_kc(k_c)?;
    let d = task.displacement();
    if d == Point::ORIGIN {
        return Err(Error::Degenerate("zero task displacement"));
    }
    let k2 = k_c * k_c;
    Ok(Cov2::new(k2 * d.x * d.x, k2 * d.x * d.y, k2 * d.y * d.y))
}

/// `a·Σ_ε + (1 − a)·Σ_dir`, exact at both ends of `[0, 1]`.
pub fn mixture_cov(task: &TaskSpec, a: f64, k_c: f64) -> Result<Cov2> {
    if !(0.0..=1.0).contains(&a) {
        return Err(invalid("a", "mixture weight must lie in [0, 1]"));
    }
    let noise = noise_cov(task, k_c)?;
    let dir = direction_cov(task, k_c)?;
    if a == 1.0 {
        return Ok(noise);
    }
    if a == 0.0 {
        return Ok(dir);
    }
    Ok(noise.scale(a).add(&dir.scale(1.0 - a)))
}

/// Differential entropy (nats) of a bivariate Gaussian:
/// `log(2πe) + ½·log|Σ|`.
pub fn gaussian_entropy(cov: &Cov2) -> Result<f64> {
    let det = cov.det();
    // relative test so that huge but rank-1 matrices are still caught
    let scale = cov.xx.abs().max(cov.yy.abs());
    if !(det > 1e-12 * scale * scale) || !det.is_finite() {
        return Err(Error::SingularCovariance { det });
    }
    Ok(log(2.0 * core::f64::consts::PI * core::f64::consts::E) + 0.5 * log(det))
}

/// Sum of consecutive segment lengths.
pub fn polyline_length(points: &[Point]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Path length over the real nodes of `traj`.
pub fn path_length(traj: &Trajectory) -> f64 {
    polyline_length(traj.nodes())
}

/// Total edge weight of the Euclidean minimum spanning tree (dense Prim).
pub fn mst_length(points: &[Point]) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    best[0] = 0.0;
    let mut total = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut du = f64::INFINITY;
        for (i, (&t, &b)) in in_tree.iter().zip(&best).enumerate() {
            if !t && b < du {
                du = b;
                u = i;
            }
        }
        in_tree[u] = true;
        total += du;
        for v in 0..n {
            if !in_tree[v] {
                let d = points[u].dist(points[v]);
                if d < best[v] {
                    best[v] = d;
                }
            }
        }
    }
    Ok(total)
}

/// Normalized complexity `‖p_0 − p_m‖ / L` in `(0, 1]`; 1 for a straight path.
pub fn complexity_ratio(traj: &Trajectory) -> Result<f64> {
    ratio_of(traj.nodes())
}

pub(crate) fn ratio_of(nodes: &[Point]) -> Result<f64> {
    let len = polyline_length(nodes);
    if !(len > 0.0) {
        return Err(Error::Degenerate("zero path length"));
    }
    let first = nodes[0];
    let last = nodes[nodes.len() - 1];
    let d = first.dist(last);
    if d == 0.0 {
        return Err(Error::Degenerate("start and end coincide"));
    }
    if len - d <= STRAIGHT_REL_EPS * len {
        return Ok(1.0);
    }
    Ok((d / len).min(1.0))
}

/// Excess path ratio `α̂ = L/D − 1` (0 for a straight path).
pub fn excess_path_ratio(traj: &Trajectory) -> Result<f64> {
    Ok(1.0 / complexity_ratio(traj)? - 1.0)
}

/// `ᾱ = 1 / (α + 1)`.
pub fn alpha_bar_from_alpha(alpha: f64) -> f64 {
    1.0 / (alpha + 1.0)
}

/// `α = 1/ᾱ − 1`.
pub fn alpha_from_alpha_bar(alpha_bar: f64) -> f64 {
    1.0 / alpha_bar - 1.0
}

/// Arc-length-uniform linear resampling to `m_new + 1` nodes. Endpoints
/// are copied exactly; timestamps are dropped.
pub fn resample(traj: &Trajectory, m_new: usize) -> Result<Trajectory> {
    if m_new < 2 {
        return Err(invalid("m_new", "must be at least 2"));
    }
    let nodes = resample_points(traj.nodes(), m_new)?;
    Trajectory::new(nodes, m_new)
}

pub(crate) fn resample_points(src: &[Point], m_new: usize) -> Result<Vec<Point>> {
    if src.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: src.len() });
    }
    let mut cum = Vec::with_capacity(src.len());
    cum.push(0.0);
    for w in src.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + w[0].dist(w[1]));
    }
    let total = *cum.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::Degenerate("zero path length"));
    }
    let mut out = Vec::with_capacity(m_new + 1);
    out.push(src[0]);
    let mut seg = 0;
    for k in 1..m_new {
        let s = total * k as f64 / m_new as f64;
        while seg + 1 < src.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { (s - cum[seg]) / span } else { 0.0 };
        out.push(src[seg].lerp(src[seg + 1], t.clamp(0.0, 1.0)));
    }
    out.push(src[src.len() - 1]);
    Ok(out)
}

/// Similarity transform taking the first node to `(0,0)` and the last to
/// `(1,0)`; keeps only the shape of the path.
pub fn canonicalize(nodes: &[Point]) -> Result<Vec<Point>> {
    let first = *nodes.first().ok_or(Error::TooFewSamples { needed: 2, got: 0 })?;
    let last = nodes[nodes.len() - 1];
    let d = last - first;
    let n2 = d.dot(d);
    if !(n2 > 0.0) {
        return Err(Error::Degenerate("start and end coincide"));
    }
    // rotate by -θ and scale by 1/|d|
    let (c, s) = (d.x / n2, d.y / n2);
    Ok(nodes
        .iter()
        .map(|&p| {
            let q = p - first;
            Point::new(c * q.x + s * q.y, -s * q.x + c * q.y)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    fn task(sx: f64, sy: f64, ex: f64, ey: f64) -> TaskSpec {
        TaskSpec::new(Point::new(sx, sy), Point::new(ex, ey), 8, 0.5, 64).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn midpoint_examples() {
        assert_eq!(midpoint(&task(0., 0., 600., 300.)), Point::new(300., 150.));
        assert_eq!(midpoint(&task(100., 100., 100., 500.)), Point::new(100., 300.));
        assert_eq!(midpoint(&task(-50., 20., 50., -20.)), Point::new(0., 0.));
    }

    #[test]
    fn task_validation() {
        let p = Point::new(1., 1.);
        assert!(TaskSpec::new(p, p, 4, 0.5, 64).is_err());
        assert!(TaskSpec::new(p, Point::ORIGIN, 0, 0.5, 64).is_err());
        assert!(TaskSpec::new(p, Point::ORIGIN, 65, 0.5, 64).is_err());
        assert!(TaskSpec::new(p, Point::ORIGIN, 4, 0.0, 64).is_err());
        assert!(TaskSpec::new(p, Point::ORIGIN, 4, 1.0001, 64).is_err());
        assert!(TaskSpec::new(p, Point::ORIGIN, 64, 1.0, 64).is_ok());
    }

    #[test]
    fn noise_cov_examples() {
        assert_eq!(noise_cov(&task(0., 0., 600., 0.), DEFAULT_KC).unwrap(), Cov2::diag(10000.0));
        let c = noise_cov(&task(0., 0., 6., 6.), DEFAULT_KC).unwrap();
        assert!(close(c.xx, 2.0, 1e-12) && close(c.yy, 2.0, 1e-12) && c.xy == 0.0);
        // (3/3)² + (4/3)² = 25/9
        let c = noise_cov(&task(0., 0., 3., 4.), 1.0 / 3.0).unwrap();
        assert!(close(c.xx, 25.0 / 9.0, 1e-12) && close(c.yy, 25.0 / 9.0, 1e-12));
        assert!(noise_cov(&task(0., 0., 3., 4.), 0.0).is_err());
    }

    #[test]
    fn direction_cov_examples() {
        assert_eq!(direction_cov(&task(0., 0., 1., 0.), 1.0).unwrap(), Cov2::new(1., 0., 0.));
        assert_eq!(direction_cov(&task(0., 0., 1., 1.), 1.0).unwrap(), Cov2::new(1., 1., 1.));
        let c = direction_cov(&task(0., 0., 600., 300.), DEFAULT_KC).unwrap();
        assert!(close(c.xx, 10000., 1e-9) && close(c.xy, 5000., 1e-9) && close(c.yy, 2500., 1e-9));
    }

    #[test]
    fn mixture_cov_examples() {
        let t = task(0., 0., 600., 300.);
        assert_eq!(mixture_cov(&t, 1.0, DEFAULT_KC).unwrap(), noise_cov(&t, DEFAULT_KC).unwrap());
        assert_eq!(mixture_cov(&t, 0.0, DEFAULT_KC).unwrap(), direction_cov(&t, DEFAULT_KC).unwrap());
        let c = mixture_cov(&task(0., 0., 6., 0.), 0.5, DEFAULT_KC).unwrap();
        assert!(close(c.xx, 1.0, 1e-12) && close(c.xy, 0.0, 1e-12) && close(c.yy, 0.5, 1e-12));
        assert!(mixture_cov(&t, -0.1, DEFAULT_KC).is_err());
        assert!(mixture_cov(&t, 1.1, DEFAULT_KC).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!(close(gaussian_entropy(&Cov2::diag(1.0)).unwrap(), 2.837877066, 1e-8));
        assert!(close(gaussian_entropy(&Cov2::diag(4.0)).unwrap(), 4.224171427, 1e-8));
        let t = task(0., 0., 600., 300.);
        let rank1 = mixture_cov(&t, 0.0, DEFAULT_KC).unwrap();
        assert!(matches!(gaussian_entropy(&rank1), Err(Error::SingularCovariance { .. })));
    }

    /// Entropy of the a=0.3 mixture against a Monte-Carlo estimate
    /// `-E[log f(X)]` over 10⁶ draws.
    #[test]
    fn entropy_matches_monte_carlo() {
        let t = task(0., 0., 600., 300.);
        let cov = mixture_cov(&t, 0.3, DEFAULT_KC).unwrap();
        let h = gaussian_entropy(&cov).unwrap();
        let root = cov.sqrt_psd();
        let det = cov.det();
        let inv = Cov2::new(cov.yy / det, -cov.xy / det, cov.xx / det);
        let mut r = rng::rng(11);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z = Point::new(rng::normal(&mut r), rng::normal(&mut r));
            let x = root.apply(z);
            let q = x.dot(inv.apply(x));
            acc += -(-0.5 * q - log(2.0 * core::f64::consts::PI) - 0.5 * log(det));
        }
        let est = acc / n as f64;
        assert!((est - h).abs() / h < 0.01, "mc {est} vs closed form {h}");
    }

    #[test]
    fn entropy_monotone_in_mixture_weight() {
        let t = task(10., 20., 700., 260.);
        let mut prev = f64::NEG_INFINITY;
        for k in 1..=20 {
            let a = k as f64 * 0.05;
            let h = gaussian_entropy(&mixture_cov(&t, a, DEFAULT_KC).unwrap()).unwrap();
            assert!(h >= prev);
            prev = h;
        }
    }

    #[test]
    fn path_length_examples() {
        let t = Trajectory::from_nodes(vec![Point::new(0., 0.), Point::new(3., 4.)]).unwrap();
        assert_eq!(path_length(&t), 5.0);
        let t = Trajectory::from_nodes(vec![Point::new(2., 2.)]).unwrap();
        assert_eq!(path_length(&t), 0.0);
        // masked tail does not count
        let t = Trajectory::new(vec![Point::new(1., 1.), Point::new(4., 5.)], 10).unwrap();
        assert_eq!(path_length(&t), 5.0);
    }

    #[test]
    fn path_length_matches_resummation() {
        let mut r = rng::rng(3);
        let pts: Vec<Point> =
            (0..10).map(|_| Point::new(rng::uniform(&mut r) * 100.0, rng::uniform(&mut r) * 100.0)).collect();
        let mut oracle = 0.0;
        for i in 0..9 {
            let dx = pts[i + 1].x - pts[i].x;
            let dy = pts[i + 1].y - pts[i].y;
            oracle += libm::hypot(dx, dy);
        }
        let t = Trajectory::from_nodes(pts).unwrap();
        assert!(close(path_length(&t), oracle, 1e-9));
    }

    #[test]
    fn mst_examples() {
        let line = [Point::new(0., 0.), Point::new(1., 0.), Point::new(2., 0.)];
        assert_eq!(mst_length(&line).unwrap(), 2.0);
        assert_eq!(mst_length(&line[..2]).unwrap(), 1.0);
        assert!(mst_length(&line[..1]).is_err());
    }

    /// Decodes a Prüfer sequence into the edge list of a labelled tree.
    pub(crate) fn prufer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
        let mut degree = vec![1usize; n];
        for &s in seq {
            degree[s] += 1;
        }
        let mut edges = Vec::new();
        for &s in seq {
            let leaf = (0..n).find(|&i| degree[i] == 1).unwrap();
            edges.push((leaf, s));
            degree[leaf] -= 1;
            degree[s] -= 1;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
        edges.push((rest[0], rest[1]));
        edges
    }

    /// Minimum over all n^(n-2) labelled spanning trees.
    pub(crate) fn brute_force_mst(points: &[Point]) -> f64 {
        let n = points.len();
        let k = n - 2;
        let total = n.pow(k as u32);
        let mut best = f64::INFINITY;
        let mut seq = vec![0usize; k];
        for code in 0..total {
            let mut c = code;
            for s in seq.iter_mut() {
                *s = c % n;
                c /= n;
            }
            let w: f64 = prufer_edges(&seq, n).iter().map(|&(a, b)| points[a].dist(points[b])).sum();
            best = best.min(w);
        }
        best
    }

    #[test]
    fn mst_matches_spanning_tree_enumeration() {
        let mut r = rng::rng(21);
        for n in [5usize, 6] {
            for _ in 0..10 {
                let pts: Vec<Point> =
                    (0..n).map(|_| Point::new(rng::uniform(&mut r) * 50.0, rng::uniform(&mut r) * 50.0)).collect();
                let fast = mst_length(&pts).unwrap();
                let slow = brute_force_mst(&pts);
                assert!(close(fast, slow, 1e-9), "{fast} vs {slow}");
            }
        }
    }

    #[test]
    fn complexity_examples() {
        let straight =
            Trajectory::from_nodes(vec![Point::new(0., 0.), Point::new(1., 1.), Point::new(2., 2.)]).unwrap();
        assert_eq!(complexity_ratio(&straight).unwrap(), 1.0);
        let bent = Trajectory::from_nodes(vec![Point::new(0., 0.), Point::new(0., 5.), Point::new(5., 5.)]).unwrap();
        assert!(close(complexity_ratio(&bent).unwrap(), sqrt(50.0) / 10.0, 1e-12));
        // detour of length 2D: out 1.5 along x, back 0.5
        let detour = Trajectory::from_nodes(vec![Point::new(0., 0.), Point::new(1.5, 0.), Point::new(1., 0.)]).unwrap();
        assert!(close(complexity_ratio(&detour).unwrap(), 0.5, 1e-12));
        let loop_ = Trajectory::from_nodes(vec![Point::new(1., 1.), Point::new(2., 2.), Point::new(1., 1.)]).unwrap();
        assert!(complexity_ratio(&loop_).is_err());
    }

    #[test]
    fn resample_examples() {
        let seg = Trajectory::from_nodes(vec![Point::new(0., 0.), Point::new(4., 0.)]).unwrap();
        let r = resample(&seg, 4).unwrap();
        for (i, p) in r.nodes().iter().enumerate() {
            assert!(close(p.x, i as f64, 1e-12) && p.y == 0.0);
        }
        let zig = Trajectory::from_nodes(vec![
            Point::new(0., 0.),
            Point::new(10., 3.),
            Point::new(20., 0.),
            Point::new(30., 3.),
            Point::new(40., 0.),
        ])
        .unwrap();
        let same = resample(&zig, zig.effective_len() - 1).unwrap();
        assert_eq!(same.start(), zig.start());
        assert_eq!(same.end(), zig.end());
        let up = resample(&zig, 50).unwrap();
        let (l0, l1) = (path_length(&zig), path_length(&up));
        assert!((l0 - l1).abs() / l0 < 0.01, "{l0} vs {l1}");
        assert!(resample(&zig, 1).is_err());
    }

    #[test]
    fn canonical_frame() {
        let c = canonicalize(&[Point::new(5., 5.), Point::new(5., 7.), Point::new(5., 9.)]).unwrap();
        assert!(close(c[0].x, 0., 1e-12) && close(c[2].x, 1., 1e-12) && close(c[2].y, 0., 1e-12));
        assert!(close(c[1].x, 0.5, 1e-12) && close(c[1].y, 0., 1e-12));
    }

    #[test]
    fn mask_fill_and_binding() {
        let t = TaskSpec::new(Point::new(1., 2.), Point::new(3., 4.), 2, 0.9, 5).unwrap();
        let tr = Trajectory::new(vec![Point::new(1., 2.), Point::new(9., 9.), Point::new(3., 4.)], 5).unwrap();
        assert_eq!(tr.buffer().len(), 6);
        assert!(tr.buffer()[3..].iter().all(|p| *p == Point::ORIGIN));
        assert!(tr.is_task_bound(&t));
        assert!(tr.clone().with_timestamps(vec![0., 1., 1.]).is_err());
        assert!(tr.with_timestamps(vec![0., 1., 2.]).is_ok());
    }

    #[test]
    fn sqrt_psd_squares_back() {
        for c in [Cov2::new(4., 1., 3.), Cov2::new(1., 1., 1.), Cov2::new(0., 0., 2.)] {
            let s = c.sqrt_psd();
            let sq = Cov2::new(s.xx * s.xx + s.xy * s.xy, s.xx * s.xy + s.xy * s.yy, s.xy * s.xy + s.yy * s.yy);
            assert!(close(sq.xx, c.xx, 1e-9) && close(sq.xy, c.xy, 1e-9) && close(sq.yy, c.yy, 1e-9));
        }
    }

    proptest! {
        #[test]
        fn mixture_is_psd(sx in -500.0..500.0f64, sy in -500.0..500.0f64,
                          dx in -800.0..800.0f64, dy in -800.0..800.0f64, a in 0.0..=1.0f64) {
            prop_assume!(dx.abs() + dy.abs() > 1e-3);
            let t = TaskSpec::new(Point::new(sx, sy), Point::new(sx + dx, sy + dy), 4, 0.5, 8).unwrap();
            let c = mixture_cov(&t, a, DEFAULT_KC).unwrap();
            let scale = c.trace().max(1.0);
            prop_assert!(c.eigenvalues().0 >= -1e-9 * scale);
        }

        #[test]
        fn mst_never_exceeds_path(pts in proptest::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 2..30)) {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y)| Point::new(x, y)).collect();
            prop_assert!(mst_length(&pts).unwrap() <= polyline_length(&pts) + 1e-9);
        }
    }
}
