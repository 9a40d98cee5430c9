use alloc::vec::Vec;

use libm::{atan2, fabs, floor, sqrt};

use crate::error::{Error, Result};
use crate::geom::{polyline_length, Point, Trajectory};

pub const FEATURE_DIM: usize = 23;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "speed_mean",
    "speed_std",
    "speed_max",
    "accel_mean",
    "accel_std",
    "accel_absmax",
    "jerk_mean",
    "jerk_std",
    "jerk_absmax",
    "curv_mean",
    "curv_std",
    "curv_max",
    "dir_0",
    "dir_45",
    "dir_90",
    "dir_135",
    "dir_180",
    "dir_225",
    "dir_270",
    "dir_315",
    "pauses",
    "complexity_ratio",
    "effective_len",
];

/// Steps slower than this (units/ms) count towards a pause.
pub const PAUSE_SPEED: f64 = 0.01;
/// Steps with a longer interval count as a pause regardless of speed.
pub const PAUSE_GAP_MS: f64 = 100.0;

/// Fixed-order kinematic summary, see [`FEATURE_NAMES`]. Speed is step
/// length over the step interval, acceleration the difference of adjacent
/// speeds over the mean of their intervals, jerk the difference of adjacent
/// accelerations over the interval between them. Curvature is the turning
/// angle at a node over the mean length of its two steps. Direction bins are
/// 45° sectors centred on 0°, 45°, …, counting non-zero steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVec(pub [f64; FEATURE_DIM]);

impl FeatureVec {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Population mean, std and max. The max is taken over `|v|` when
/// `abs_max` is set. Empty input gives zeros.
fn stats(v: &[f64], abs_max: bool) -> [f64; 3] {
    if v.is_empty() {
        return [0.0; 3];
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let max = v.iter().map(|&x| if abs_max { fabs(x) } else { x }).fold(f64::NEG_INFINITY, f64::max);
    [mean, sqrt(var), max]
}

pub(crate) fn step_times(traj: &Trajectory, poll_ms: f64) -> Vec<f64> {
    match traj.timestamps() {
        Some(ts) => ts.windows(2).map(|w| w[1] - w[0]).collect(),
        None => alloc::vec![poll_ms; traj.m()],
    }
}

pub(crate) fn speeds(nodes: &[Point], dt: &[f64]) -> Vec<f64> {
    nodes.windows(2).zip(dt).map(|(w, &t)| w[0].dist(w[1]) / t).collect()
}

pub(crate) fn accels(v: &[f64], dt: &[f64]) -> Vec<f64> {
    (0..v.len().saturating_sub(1)).map(|k| (v[k + 1] - v[k]) / (0.5 * (dt[k] + dt[k + 1]))).collect()
}

pub fn direction_bin(d: Point) -> usize {
    let th = atan2(d.y, d.x);
    let b = floor((th + core::f64::consts::FRAC_PI_8) / core::f64::consts::FRAC_PI_4) as i64;
    b.rem_euclid(8) as usize
}

/// Features of one trajectory. Missing timestamps are replaced by a uniform
/// `poll_ms` spacing.
pub fn extract_features(traj: &Trajectory, poll_ms: f64) -> Result<FeatureVec> {
    if traj.effective_len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: traj.effective_len() });
    }
    if !(poll_ms > 0.0) {
        return Err(crate::error::invalid("poll_ms", "must be positive"));
    }
    let p = traj.nodes();
    let dt = step_times(traj, poll_ms);
    let v = speeds(p, &dt);
    let a = accels(&v, &dt);
    let j: Vec<f64> = (0..a.len().saturating_sub(1)).map(|k| (a[k + 1] - a[k]) / dt[k + 1]).collect();

    let steps: Vec<Point> = p.windows(2).map(|w| w[1] - w[0]).collect();
    let mut curv = Vec::with_capacity(steps.len());
    for w in steps.windows(2) {
        let (l0, l1) = (w[0].norm(), w[1].norm());
        if l0 > 0.0 && l1 > 0.0 {
            let cross = w[0].x * w[1].y - w[0].y * w[1].x;
            curv.push(fabs(atan2(cross, w[0].dot(w[1]))) / (0.5 * (l0 + l1)));
        } else {
            curv.push(0.0);
        }
    }

    let mut hist = [0.0; 8];
    let mut moving = 0usize;
    for s in &steps {
        if s.x != 0.0 || s.y != 0.0 {
            hist[direction_bin(*s)] += 1.0;
            moving += 1;
        }
    }
    if moving > 0 {
        hist.iter_mut().for_each(|h| *h /= moving as f64);
    }

    let mut pauses = 0usize;
    let mut in_pause = false;
    for (vk, tk) in v.iter().zip(&dt) {
        let still = *vk < PAUSE_SPEED || *tk > PAUSE_GAP_MS;
        if still && !in_pause {
            pauses += 1;
        }
        in_pause = still;
    }

    let len = polyline_length(p);
    let ratio = if len > 0.0 { traj.start().dist(traj.end()) / len } else { 1.0 };

    let mut f = [0.0; FEATURE_DIM];
    f[0..3].copy_from_slice(&stats(&v, false));
    f[3..6].copy_from_slice(&stats(&a, true));
    f[6..9].copy_from_slice(&stats(&j, true));
    f[9..12].copy_from_slice(&stats(&curv, false));
    f[12..20].copy_from_slice(&hist);
    f[20] = pauses as f64;
    f[21] = ratio.min(1.0);
    f[22] = traj.effective_len() as f64;
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::Degenerate("non-finite feature"));
    }
    Ok(FeatureVec(f))
}

pub fn extract_all(trajs: &[Trajectory], poll_ms: f64) -> Result<Vec<FeatureVec>> {
    trajs.iter().map(|t| extract_features(t, poll_ms)).collect()
}

/// Component-wise mean of a non-empty feature set.
pub fn mean_features(fs: &[FeatureVec]) -> Result<FeatureVec> {
    if fs.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut m = [0.0; FEATURE_DIM];
    for f in fs {
        for (a, b) in m.iter_mut().zip(f.0.iter()) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= fs.len() as f64);
    Ok(FeatureVec(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_linear;
    use crate::geom::TaskSpec;
    use crate::rng;

    #[test]
    fn linear_is_constant_velocity() {
        let t = TaskSpec::new(Point::new(10., 20.), Point::new(410., 320.), 20, 1.0, 64).unwrap();
        let f = extract_features(&gen_linear(&t), 8.0).unwrap();
        assert!(f.0[1] < 1e-9 * f.0[0]);
        assert!(f.0[9] < 1e-9 && f.0[11] < 1e-9);
        assert_eq!(f.0[22], 21.0);
        assert!((f.0[21] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pure_right_fills_first_bin() {
        let nodes = (0..6).map(|i| Point::new(i as f64 * 3.0, 5.0)).collect();
        let f = extract_features(&Trajectory::from_nodes(nodes).unwrap(), 8.0).unwrap();
        assert_eq!(f.0[12], 1.0);
        assert!(f.0[13..20].iter().all(|&v| v == 0.0));
        assert_eq!(direction_bin(Point::new(0.0, 1.0)), 2);
        assert_eq!(direction_bin(Point::new(-1.0, -0.01)), 4);
        assert_eq!(direction_bin(Point::new(1.0, -0.01)), 0);
    }

    #[test]
    fn speed_stats_match_recomputation() {
        let mut r = rng::rng(3);
        let nodes: Vec<Point> = (0..30)
            .map(|_| Point::new(rng::uniform_range(&mut r, 0., 100.), rng::uniform_range(&mut r, 0., 100.)))
            .collect();
        let mut t = 0.0;
        let ts: Vec<f64> = (0..30)
            .map(|_| {
                t += rng::uniform_range(&mut r, 5.0, 20.0);
                t
            })
            .collect();
        let tr = Trajectory::from_nodes(nodes.clone()).unwrap().with_timestamps(ts.clone()).unwrap();
        let f = extract_features(&tr, 8.0).unwrap();
        let mut sp = std::vec::Vec::new();
        for i in 0..29 {
            let dx = nodes[i + 1].x - nodes[i].x;
            let dy = nodes[i + 1].y - nodes[i].y;
            sp.push((dx * dx + dy * dy).sqrt() / (ts[i + 1] - ts[i]));
        }
        let mean = sp.iter().sum::<f64>() / 29.0;
        let var = sp.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 29.0;
        let max = sp.iter().cloned().fold(0.0, f64::max);
        assert!((f.0[0] - mean).abs() < 1e-12);
        assert!((f.0[1] - var.sqrt()).abs() < 1e-12);
        assert_eq!(f.0[2], max);
    }

    #[test]
    fn short_is_rejected() {
        let tr = Trajectory::from_nodes(alloc::vec![Point::new(0., 0.), Point::new(1., 0.)]).unwrap();
        assert!(extract_features(&tr, 8.0).is_err());
    }
}
