//! Synthetic human pointer movements used as ground truth when no recorded
//! data is available.
//!
//! Movements follow a minimum-jerk backbone with a lateral bow, node jitter
//! proportional to the local step length, a small tremor and optional
//! overshoot-and-correct. Duration follows Fitts' law and is shortened for
//! upward movements by `force_ratio^(s/4)`, `s` being the upward share of
//! the displacement. Node count is duration over the polling interval, so the
//! asymmetry shows up as larger accelerations on upward moves.
//!
//! Lateral offsets are drawn in a basis whose normal flips with the sign of
//! the vertical direction. Mirroring a task top-to-bottom therefore mirrors
//! the trajectory drawn from the same seed.

use alloc::vec::Vec;

use libm::{cos, exp, pow, round, sin};

use crate::error::{invalid, Result};
use crate::generators::min_jerk;
use crate::geom::{complexity_ratio, Point, Sample, TaskSpec, Trajectory};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleProfile {
    /// Node jitter std as a fraction of the local step length.
    pub jerk_noise: f64,
    /// Constant jitter std in screen units.
    pub tremor: f64,
    /// Push/pull force ratio; > 1 makes upward moves faster.
    pub force_ratio: f64,
    pub overshoot_prob: f64,
    pub poll_ms: f64,
    /// Lateral bow std as a fraction of distance.
    pub bow: f64,
    /// Fitts intercept (ms) and slope (ms/bit), target width.
    pub a_f: f64,
    pub b_f: f64,
    pub w_t: f64,
    /// Log-normal spread of movement duration.
    pub duration_jitter: f64,
    pub min_dist: f64,
    pub max_dist: f64,
    pub screen_w: f64,
    pub screen_h: f64,
}

impl Default for OracleProfile {
    fn default() -> Self {
        Self {
            jerk_noise: 0.08,
            tremor: 0.3,
            force_ratio: 1.2,
            overshoot_prob: 0.2,
            poll_ms: 16.0,
            bow: 0.06,
            a_f: 100.0,
            b_f: 150.0,
            w_t: 30.0,
            duration_jitter: 0.1,
            min_dist: 100.0,
            max_dist: 900.0,
            screen_w: 1920.0,
            screen_h: 1080.0,
        }
    }
}

impl OracleProfile {
    pub fn problems(&self) -> Vec<&'static str> {
        let mut p = Vec::new();
        if !(self.force_ratio > 0.0) {
            p.push("force_ratio must be positive");
        }
        if !(self.poll_ms >= 1.0) {
            p.push("poll_ms must be at least 1");
        }
        if !(self.jerk_noise >= 0.0 && self.tremor >= 0.0 && self.bow >= 0.0 && self.duration_jitter >= 0.0) {
            p.push("noise scales must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.overshoot_prob) {
            p.push("overshoot_prob must lie in [0, 1]");
        }
        if !(self.min_dist > 0.0 && self.max_dist >= self.min_dist) {
            p.push("need 0 < min_dist <= max_dist");
        }
        if !(self.max_dist < self.screen_w.min(self.screen_h)) {
            p.push("max_dist must fit on screen");
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(invalid("oracle", p.join("; ")))
        }
    }

    /// Movement duration (ms) before jitter. `up` is the upward share of the
    /// unit displacement (screen y grows downward).
    pub fn duration(&self, distance: f64, up: f64) -> f64 {
        let fitts = self.a_f + self.b_f * libm::log2(distance / self.w_t + 1.0);
        fitts * pow(self.force_ratio, -up / 4.0)
    }
}

/// Top-to-bottom mirror on a screen of height `h`.
pub fn mirror_point(p: Point, h: f64) -> Point {
    Point::new(p.x, h - p.y)
}

fn geometry(profile: &OracleProfile, r: &mut rng::Rng) -> (Point, Point) {
    loop {
        let s = Point::new(rng::uniform_range(r, 0.0, profile.screen_w), rng::uniform_range(r, 0.0, profile.screen_h));
        let d = rng::uniform_range(r, profile.min_dist, profile.max_dist);
        let th = rng::uniform_range(r, 0.0, 2.0 * core::f64::consts::PI);
        let e = s + Point::new(d * cos(th), d * sin(th));
        if e.x >= 0.0 && e.x <= profile.screen_w && e.y >= 0.0 && e.y <= profile.screen_h {
            return (s, e);
        }
    }
}

fn node_count(profile: &OracleProfile, s: Point, e: Point, jitter: f64, n_max: usize) -> usize {
    let d = e - s;
    let up = -d.y / d.norm();
    let t = profile.duration(d.norm(), up) * exp(profile.duration_jitter * jitter);
    (round(t / profile.poll_ms) as usize).clamp(4, n_max)
}

/// Draws a task whose node count follows the oracle's duration model.
/// `alpha_bar` is a placeholder of 1.
pub fn sample_task(profile: &OracleProfile, n_max: usize, seed: u64) -> Result<TaskSpec> {
    profile.validate()?;
    let mut r = rng::rng(seed);
    let (s, e) = geometry(profile, &mut r);
    let m = node_count(profile, s, e, rng::normal(&mut r), n_max);
    TaskSpec::new(s, e, m, 1.0, n_max)?.with_screen(profile.screen_w, profile.screen_h)
}

/// One synthetic human movement for `task`, timestamps at the polling
/// interval.
pub fn synth_human(task: &TaskSpec, profile: &OracleProfile, seed: u64) -> Result<Trajectory> {
    profile.validate()?;
    let mut r = rng::rng(seed);
    let (s, e) = (task.start(), task.end());
    let d = e - s;
    let dist = d.norm();
    let u = d * (1.0 / dist);
    let hand = if u.y < 0.0 { -1.0 } else { 1.0 };
    let n = Point::new(-u.y, u.x) * hand;
    let local = |a: f64, b: f64| u * a + n * b;
    let m = task.m();

    let bow = rng::normal(&mut r) * profile.bow * dist;
    let overshoot = rng::uniform(&mut r) < profile.overshoot_prob && m >= 8;
    let over_along = rng::uniform_range(&mut r, 0.03, 0.08) * dist;
    let over_lat = rng::normal(&mut r) * 0.02 * dist;

    let mut backbone = Vec::with_capacity(m + 1);
    if overshoot {
        let k = (round(0.8 * m as f64) as usize).clamp(1, m - 1);
        let turn = e + local(over_along, over_lat);
        for j in 0..=k {
            let sj = min_jerk(j as f64 / k as f64);
            backbone.push(s.lerp(turn, sj) + n * (bow * 4.0 * sj * (1.0 - sj)));
        }
        for j in k + 1..=m {
            let sj = min_jerk((j - k) as f64 / (m - k) as f64);
            backbone.push(turn.lerp(e, sj));
        }
    } else {
        for j in 0..=m {
            let sj = min_jerk(j as f64 / m as f64);
            backbone.push(s.lerp(e, sj) + n * (bow * 4.0 * sj * (1.0 - sj)));
        }
    }

    let mut nodes = backbone.clone();
    for j in 1..m {
        let step = 0.5 * (backbone[j].dist(backbone[j - 1]) + backbone[j + 1].dist(backbone[j]));
        let sd = profile.jerk_noise * step;
        let a = rng::normal(&mut r) * sd + rng::normal(&mut r) * profile.tremor;
        let b = rng::normal(&mut r) * sd + rng::normal(&mut r) * profile.tremor;
        nodes[j] = backbone[j] + local(a, b);
    }
    nodes[0] = s;
    nodes[m] = e;
    Trajectory::new(nodes, task.n_max())?.with_uniform_timestamps(profile.poll_ms)
}

/// `n` samples in mirrored pairs: every task is followed by its top-to-bottom
/// mirror, drawn with the same seed.
pub fn synth_corpus(n: usize, profile: &OracleProfile, n_max: usize, seed: u64) -> Result<Vec<Sample>> {
    profile.validate()?;
    let mut out = Vec::with_capacity(n);
    let mut k = 0u64;
    while out.len() < n {
        let pair_seed = rng::derive_seed(seed, k);
        k += 1;
        let mut r = rng::rng(pair_seed);
        let (s, e) = geometry(profile, &mut r);
        let jitter = rng::normal(&mut r);
        let traj_seed = rng::derive_seed(pair_seed, 1);
        let h = profile.screen_h;
        let (ms, me) = (mirror_point(s, h), mirror_point(e, h));
        for (a, b) in [(s, e), (ms, me)] {
            if out.len() == n {
                break;
            }
            let m = node_count(profile, a, b, jitter, n_max);
            let task = TaskSpec::new(a, b, m, 1.0, n_max)?.with_screen(profile.screen_w, h)?;
            let traj = synth_human(&task, profile, traj_seed)?;
            let task = task.with_alpha_bar(complexity_ratio(&traj)?)?;
            out.push(Sample { id: alloc::format!("human-{:06}", out.len()), source: "human".into(), task, traj });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bound() {
        let p = OracleProfile::default();
        let t = sample_task(&p, 64, 3).unwrap();
        let a = synth_human(&t, &p, 11).unwrap();
        assert_eq!(a, synth_human(&t, &p, 11).unwrap());
        assert!(a.is_task_bound(&t));
        assert!(a.timestamps().is_some());
    }

    #[test]
    fn mirror_equivariance() {
        let p = OracleProfile { overshoot_prob: 1.0, ..OracleProfile::default() };
        let t = TaskSpec::new(Point::new(300., 700.), Point::new(900., 200.), 30, 1.0, 64).unwrap();
        let mt = TaskSpec::new(mirror_point(t.start(), 1080.), mirror_point(t.end(), 1080.), 30, 1.0, 64).unwrap();
        let a = synth_human(&t, &p, 5).unwrap();
        let b = synth_human(&mt, &p, 5).unwrap();
        for (pa, pb) in a.nodes().iter().zip(b.nodes()) {
            let q = mirror_point(*pa, 1080.);
            assert!((q.x - pb.x).abs() < 1e-9 && (q.y - pb.y).abs() < 1e-9);
        }
    }

    #[test]
    fn upward_moves_are_shorter() {
        let p = OracleProfile::default();
        assert!(p.duration(500.0, 1.0) < p.duration(500.0, -1.0));
        let sym = OracleProfile { force_ratio: 1.0, ..p };
        assert_eq!(sym.duration(500.0, 1.0), sym.duration(500.0, -1.0));
    }

    #[test]
    fn corpus_pairs_and_validation() {
        let p = OracleProfile::default();
        let c = synth_corpus(21, &p, 64, 9).unwrap();
        assert_eq!(c.len(), 21);
        assert!(c.iter().all(|s| s.traj.is_task_bound(&s.task) && s.task.m() <= 64));
        assert_eq!(c[1].task.start(), mirror_point(c[0].task.start(), p.screen_h));
        let bad = OracleProfile { force_ratio: 0.0, poll_ms: 0.5, ..p };
        assert_eq!(bad.problems().len(), 2);
    }
}
