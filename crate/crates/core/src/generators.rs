//! Baseline generators (linear, Bézier, Fitts) and the randomized
//! initialization the reverse diffusion starts from.

use alloc::vec::Vec;

use libm::log2;

use crate::error::{invalid, Error, Result};
use crate::geom::{midpoint, noise_cov, Point, TaskSpec, Trajectory, DEFAULT_KC, DEFAULT_POLL_MS};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum GeneratorKind {
    Linear,
    Bezier,
    Fitts,
    NoiseInit,
    Dmtg,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 5] = [
        GeneratorKind::Linear,
        GeneratorKind::Bezier,
        GeneratorKind::Fitts,
        GeneratorKind::NoiseInit,
        GeneratorKind::Dmtg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Linear => "linear",
            GeneratorKind::Bezier => "bezier",
            GeneratorKind::Fitts => "fitts",
            GeneratorKind::NoiseInit => "noise",
            GeneratorKind::Dmtg => "dmtg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl core::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Fitts-law timing constants (ms, ms/bit, screen units).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FittsParams {
    pub a_f: f64,
    pub b_f: f64,
    pub w_t: f64,
    /// Lateral bow std as a fraction of the task distance.
    pub bow: f64,
}

impl Default for FittsParams {
    fn default() -> Self {
        Self { a_f: 100.0, b_f: 150.0, w_t: 30.0, bow: 0.05 }
    }
}

impl FittsParams {
    /// Movement time `a_f + b_f·log₂(D/W_t + 1)` in ms.
    pub fn duration(&self, distance: f64) -> f64 {
        self.a_f + self.b_f * log2(distance / self.w_t + 1.0)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a_f >= 0.0 && self.b_f > 0.0 && self.w_t > 0.0 && self.bow >= 0.0) {
            return Err(invalid("fitts", "need a_f >= 0, b_f > 0, w_t > 0, bow >= 0"));
        }
        Ok(())
    }
}

/// Settings shared by the baseline dispatcher.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BaselineConfig {
    pub k_c: f64,
    pub n_ctrl: usize,
    pub poll_ms: f64,
    pub fitts: FittsParams,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { k_c: DEFAULT_KC, n_ctrl: 2, poll_ms: DEFAULT_POLL_MS, fitts: FittsParams::default() }
    }
}

/// Runs one of the non-learned generators. `Dmtg` needs a trained model and
/// is rejected here.
pub fn generate_baseline(kind: GeneratorKind, task: &TaskSpec, seed: u64, cfg: &BaselineConfig) -> Result<Trajectory> {
    let retime = |t: Trajectory| t.without_timestamps().with_uniform_timestamps(cfg.poll_ms);
    match kind {
        GeneratorKind::Linear => retime(gen_linear(task)),
        GeneratorKind::Bezier => retime(gen_bezier(task, seed, cfg.n_ctrl, cfg.k_c)?),
        GeneratorKind::Fitts => gen_fitts(task, seed, &cfg.fitts),
        GeneratorKind::NoiseInit => gen_noise_init(task, seed, cfg.k_c),
        GeneratorKind::Dmtg => Err(invalid("kind", "dmtg requires a trained checkpoint")),
    }
}

fn bind(task: &TaskSpec, mut nodes: Vec<Point>) -> Result<Trajectory> {
    let last = nodes.len() - 1;
    nodes[0] = task.start();
    nodes[last] = task.end();
    Trajectory::new(nodes, task.n_max())
}

/// `m + 1` equidistant collinear nodes, uniform 8 ms timestamps.
pub fn gen_linear(task: &TaskSpec) -> Trajectory {
    let m = task.m();
    let nodes = (0..=m).map(|i| task.start().lerp(task.end(), i as f64 / m as f64)).collect();
    bind(task, nodes)
        .and_then(|t| t.with_uniform_timestamps(DEFAULT_POLL_MS))
        .expect("a valid task always yields a valid straight path")
}

fn cubic(p: [Point; 4], t: f64) -> Point {
    let u = 1.0 - t;
    p[0] * (u * u * u) + p[1] * (3.0 * u * u * t) + p[2] * (3.0 * u * t * t) + p[3] * (t * t * t)
}

/// Composite cubic Bézier from `start` to `end` with `n_ctrl` random
/// interior control points drawn from `N(p_c, Σ_ε)`. Control points are
/// consumed in pairs; segment junctions sit halfway between neighbouring
/// pairs and an odd leftover is doubled. Nodes are placed at equal arc
/// length. `n_ctrl = 0` degrades to the straight path.
pub fn gen_bezier(task: &TaskSpec, seed: u64, n_ctrl: usize, k_c: f64) -> Result<Trajectory> {
    if n_ctrl > 4 {
        return Err(invalid("n_ctrl", "must lie in [0, 4]"));
    }
    if n_ctrl == 0 {
        return Ok(gen_linear(task));
    }
    let cov = noise_cov(task, k_c)?;
    let sd = libm::sqrt(cov.xx);
    let pc = midpoint(task);
    let mut r = rng::rng(seed);
    let ctrl: Vec<Point> =
        (0..n_ctrl).map(|_| pc + Point::new(sd * rng::normal(&mut r), sd * rng::normal(&mut r))).collect();

    let pairs: Vec<(Point, Point)> = ctrl.chunks(2).map(|c| (c[0], *c.get(1).unwrap_or(&c[0]))).collect();
    let mut segments = Vec::with_capacity(pairs.len());
    let mut from = task.start();
    for (i, &(c1, c2)) in pairs.iter().enumerate() {
        let to = match pairs.get(i + 1) {
            Some(&(n1, _)) => c2.lerp(n1, 0.5),
            None => task.end(),
        };
        segments.push([from, c1, c2, to]);
        from = to;
    }

    // dense lookup table of cumulative arc length over the global parameter
    const PER_SEG: usize = 512;
    let total_steps = PER_SEG * segments.len();
    let eval = |g: f64| {
        let s = g * segments.len() as f64;
        let k = (s as usize).min(segments.len() - 1);
        cubic(segments[k], s - k as f64)
    };
    let mut lut = Vec::with_capacity(total_steps + 1);
    let mut prev = eval(0.0);
    lut.push(0.0);
    for j in 1..=total_steps {
        let p = eval(j as f64 / total_steps as f64);
        lut.push(lut[j - 1] + prev.dist(p));
        prev = p;
    }
    let total = lut[total_steps];
    let m = task.m();
    let mut nodes = Vec::with_capacity(m + 1);
    let mut j = 0;
    for i in 0..=m {
        let target = total * i as f64 / m as f64;
        while j + 1 < total_steps && lut[j + 1] < target {
            j += 1;
        }
        let span = lut[j + 1] - lut[j];
        let frac = if span > 0.0 { ((target - lut[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
        nodes.push(eval((j as f64 + frac) / total_steps as f64));
    }
    let t = bind(task, nodes)?;
    t.with_uniform_timestamps(DEFAULT_POLL_MS)
}

/// Minimum-jerk position profile `10τ³ − 15τ⁴ + 6τ⁵`.
pub fn min_jerk(tau: f64) -> f64 {
    let t3 = tau * tau * tau;
    t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)
}

/// Fitts-timed movement with a minimum-jerk speed profile and a single
/// random lateral bow. Node `i` is reached at `T_mv·i/m`.
pub fn gen_fitts(task: &TaskSpec, seed: u64, params: &FittsParams) -> Result<Trajectory> {
    params.validate()?;
    let d = task.displacement();
    let dist = d.norm();
    let normal = Point::new(-d.y / dist, d.x / dist);
    let mut r = rng::rng(seed);
    let bow = rng::normal(&mut r) * params.bow * dist;
    let m = task.m();
    let nodes = (0..=m)
        .map(|i| {
            let tau = i as f64 / m as f64;
            let s = min_jerk(tau);
            task.start() + d * s + normal * (bow * 4.0 * s * (1.0 - s))
        })
        .collect();
    let t_mv = params.duration(dist);
    let ts = (0..=m).map(|i| t_mv * i as f64 / m as f64).collect();
    bind(task, nodes)?.with_timestamps(ts)
}

/// Starting state of reverse diffusion: start, `m − 1` i.i.d. draws from
/// `N(p_c, Σ_ε)`, end, then masks.
pub fn gen_noise_init(task: &TaskSpec, seed: u64, k_c: f64) -> Result<Trajectory> {
    let cov = noise_cov(task, k_c)?;
    let sd = libm::sqrt(cov.xx);
    let pc = midpoint(task);
    let mut r = rng::rng(seed);
    let m = task.m();
    let mut nodes = Vec::with_capacity(m + 1);
    nodes.push(task.start());
    for _ in 1..m {
        nodes.push(pc + Point::new(sd * rng::normal(&mut r), sd * rng::normal(&mut r)));
    }
    nodes.push(task.end());
    if nodes.iter().any(|p| !p.is_finite()) {
        return Err(Error::Degenerate("non-finite initialization"));
    }
    bind(task, nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{complexity_ratio, path_length};

    fn task(m: usize) -> TaskSpec {
        TaskSpec::new(Point::new(100., 200.), Point::new(700., 500.), m, 0.6, 64).unwrap()
    }

    #[test]
    fn linear_examples() {
        let t = TaskSpec::new(Point::new(0., 0.), Point::new(4., 0.), 4, 1.0, 8).unwrap();
        let l = gen_linear(&t);
        for (i, p) in l.nodes().iter().enumerate() {
            assert_eq!(*p, Point::new(i as f64, 0.));
        }
        for m in [1, 3, 17, 64] {
            let l = gen_linear(&task(m));
            assert_eq!(complexity_ratio(&l).unwrap(), 1.0);
            assert!((path_length(&l) - task(m).distance()).abs() < 1e-9);
            assert!(l.is_task_bound(&task(m)));
        }
    }

    #[test]
    fn bezier_properties() {
        let t = task(40);
        assert_eq!(gen_bezier(&t, 1, 0, DEFAULT_KC).unwrap(), gen_linear(&t));
        assert_eq!(gen_bezier(&t, 9, 3, DEFAULT_KC).unwrap(), gen_bezier(&t, 9, 3, DEFAULT_KC).unwrap());
        assert!(gen_bezier(&t, 9, 5, DEFAULT_KC).is_err());
        let mut curved = 0;
        for seed in 0..1000 {
            let b = gen_bezier(&t, seed, 2, DEFAULT_KC).unwrap();
            assert!(b.is_task_bound(&t));
            if complexity_ratio(&b).unwrap() < 1.0 {
                curved += 1;
            }
        }
        assert!(curved >= 990, "{curved}");
        // equal spacing along the curve
        let b = gen_bezier(&t, 4, 4, DEFAULT_KC).unwrap();
        let seg: Vec<f64> = b.nodes().windows(2).map(|w| w[0].dist(w[1])).collect();
        let mean = seg.iter().sum::<f64>() / seg.len() as f64;
        let mut sorted = seg.clone();
        sorted.sort_by(f64::total_cmp);
        assert!((sorted[sorted.len() / 2] - mean).abs() / mean < 0.05, "{seg:?}");
    }

    #[test]
    fn fitts_profile() {
        let p = FittsParams::default();
        for seed in 0..20 {
            let t = task(30);
            let f = gen_fitts(&t, seed, &p).unwrap();
            assert!(f.is_task_bound(&t));
            let ts = f.timestamps().unwrap();
            let speed: Vec<f64> =
                f.nodes().windows(2).zip(ts.windows(2)).map(|(w, tw)| w[0].dist(w[1]) / (tw[1] - tw[0])).collect();
            let peak = speed.iter().cloned().fold(0.0, f64::max);
            assert!(speed[0] < 0.2 * peak && speed[speed.len() - 1] < 0.2 * peak);
        }
        let d = 300.0;
        let delta = p.duration(2.0 * d) - p.duration(d);
        let expect = p.b_f * (log2(2.0 * d / p.w_t + 1.0) - log2(d / p.w_t + 1.0));
        assert!((delta - expect).abs() < 1e-9);
    }

    #[test]
    fn noise_init_moments() {
        let t = task(11);
        let cov = noise_cov(&t, DEFAULT_KC).unwrap();
        let pc = midpoint(&t);
        let draws = 100_000 / 10;
        let mut pts = Vec::new();
        for seed in 0..draws as u64 {
            let x = gen_noise_init(&t, seed, DEFAULT_KC).unwrap();
            assert_eq!(x.effective_len(), 12);
            assert!(x.buffer()[12..].iter().all(|p| *p == Point::ORIGIN));
            pts.extend_from_slice(&x.nodes()[1..11]);
        }
        let n = pts.len() as f64;
        let mean = pts.iter().fold(Point::ORIGIN, |a, &p| a + p) * (1.0 / n);
        let sd = libm::sqrt(cov.xx);
        assert!((mean.x - pc.x).abs() < 3.0 * sd / libm::sqrt(n));
        assert!((mean.y - pc.y).abs() < 3.0 * sd / libm::sqrt(n));
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &pts {
            let q = *p - mean;
            sxx += q.x * q.x;
            sxy += q.x * q.y;
            syy += q.y * q.y;
        }
        let (sxx, sxy, syy) = (sxx / (n - 1.0), sxy / (n - 1.0), syy / (n - 1.0));
        let diff = libm::sqrt((sxx - cov.xx).powi(2) + 2.0 * (sxy - cov.xy).powi(2) + (syy - cov.yy).powi(2));
        let norm = libm::sqrt(cov.xx.powi(2) + 2.0 * cov.xy.powi(2) + cov.yy.powi(2));
        assert!(diff / norm < 0.05, "{}", diff / norm);
    }

    #[test]
    fn noise_init_is_long() {
        let t = task(16);
        let short =
            (0..1000).filter(|&s| complexity_ratio(&gen_noise_init(&t, s, DEFAULT_KC).unwrap()).unwrap() < 0.5).count();
        assert!(short >= 990, "{short}");
    }

    #[test]
    fn dispatcher_rejects_dmtg() {
        let cfg = BaselineConfig::default();
        assert!(generate_baseline(GeneratorKind::Dmtg, &task(5), 0, &cfg).is_err());
        for k in [GeneratorKind::Linear, GeneratorKind::Bezier, GeneratorKind::Fitts] {
            let t = generate_baseline(k, &task(5), 3, &cfg).unwrap();
            assert!(t.timestamps().is_some());
            assert_eq!(GeneratorKind::parse(k.name()), Some(k));
        }
    }
}
