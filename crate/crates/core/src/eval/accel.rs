use alloc::format;
use alloc::vec::Vec;

use libm::{fabs, floor, sqrt};

use super::features::{accels, speeds, step_times};
use crate::error::{invalid, Error, Result};
use crate::geom::Trajectory;

/// Fewest classified segments `accel_direction_stats` accepts.
pub const MIN_SEGMENTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub up: usize,
    pub down: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccelStats {
    /// `|a|` at nodes whose two surrounding steps move up the screen.
    pub up: Vec<f64>,
    pub down: Vec<f64>,
    /// `(mean_up − mean_down) / pooled_std`; 0 when the pooled std vanishes.
    pub score: f64,
    pub histogram: Vec<HistBin>,
}

/// Tangential acceleration magnitudes split by vertical direction. A node
/// is "up" when the point after it lies above the point before it (screen y
/// grows downward). Nodes with no vertical displacement are skipped.
pub fn accel_direction_stats(trajs: &[Trajectory], bins: usize) -> Result<AccelStats> {
    if bins == 0 {
        return Err(invalid("bins", "must be positive"));
    }
    let mut up = Vec::new();
    let mut down = Vec::new();
    // speed over interval, the scale below which |a| is rounding residue
    let mut unit = 0.0f64;
    for (i, t) in trajs.iter().enumerate() {
        if t.timestamps().is_none() {
            return Err(invalid("trajs", format!("trajectory {i} has no timestamps")));
        }
        let p = t.nodes();
        let dt = step_times(t, 0.0);
        let v = speeds(p, &dt);
        let a = accels(&v, &dt);
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(*x));
        let dmin = dt.iter().fold(f64::INFINITY, |m, x| m.min(*x));
        unit = unit.max(vmax / dmin);
        for (k, ak) in a.iter().enumerate() {
            let dy = p[k + 2].y - p[k].y;
            if dy < 0.0 {
                up.push(fabs(*ak));
            } else if dy > 0.0 {
                down.push(fabs(*ak));
            }
        }
    }
    if up.len() + down.len() < MIN_SEGMENTS || up.len() < 2 || down.len() < 2 {
        return Err(Error::TooFewSamples { needed: MIN_SEGMENTS, got: up.len() + down.len() });
    }
    for v in up.iter_mut().chain(down.iter_mut()) {
        if *v <= 1e-9 * unit {
            *v = 0.0;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let (mu, md) = (mean(&up), mean(&down));
    let pooled = sqrt((ss(&up, mu) + ss(&down, md)) / (up.len() + down.len() - 2) as f64);
    let score = if pooled > 1e-9 * unit { (mu - md) / pooled } else { 0.0 };

    let top = up.iter().chain(&down).fold(0.0f64, |m, v| m.max(*v));
    let width = if top > 0.0 { top / bins as f64 } else { 1.0 / bins as f64 };
    let mut histogram: Vec<HistBin> =
        (0..bins).map(|b| HistBin { lo: b as f64 * width, hi: (b + 1) as f64 * width, up: 0, down: 0 }).collect();
    let idx = |v: f64| (floor(v / width) as usize).min(bins - 1);
    for v in &up {
        histogram[idx(*v)].up += 1;
    }
    for v in &down {
        histogram[idx(*v)].down += 1;
    }
    Ok(AccelStats { up, down, score, histogram })
}

/// Total `(up, down)` counts over all bins.
pub fn histogram_counts(h: &[HistBin]) -> (usize, usize) {
    h.iter().fold((0, 0), |(u, d), b| (u + b.up, d + b.down))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::gen_linear;
    use crate::geom::TaskSpec;
    use crate::oracle::{synth_corpus, OracleProfile};
    use crate::Point;

    fn oracle(ratio: f64, n: usize) -> Vec<Trajectory> {
        let p = OracleProfile { force_ratio: ratio, ..OracleProfile::default() };
        synth_corpus(n, &p, 64, 21).unwrap().into_iter().map(|s| s.traj).collect()
    }

    #[test]
    fn symmetric_oracle_scores_zero() {
        let s = accel_direction_stats(&oracle(1.0, 400), 20).unwrap();
        assert!(s.score.abs() <= 0.05, "{}", s.score);
    }

    #[test]
    fn injected_asymmetry_is_recovered_with_sign() {
        let a = accel_direction_stats(&oracle(1.2, 2000), 20).unwrap().score;
        let b = accel_direction_stats(&oracle(1.0 / 1.2, 2000), 20).unwrap().score;
        assert!(a > 0.0, "{a}");
        assert!(b < 0.0, "{b}");
        assert!((a + b).abs() <= 0.1 * a.abs(), "{a} {b}");
    }

    #[test]
    fn linear_scores_zero() {
        let trajs: Vec<Trajectory> = (0..20)
            .map(|i| {
                let t = TaskSpec::new(
                    Point::new(100.0, 100.0 + 40.0 * i as f64),
                    Point::new(900.0, 800.0 - 30.0 * i as f64),
                    30,
                    1.0,
                    64,
                )
                .unwrap();
                gen_linear(&t)
            })
            .collect();
        let s = accel_direction_stats(&trajs, 10).unwrap();
        assert_eq!(s.score, 0.0);
        let (u, d) = histogram_counts(&s.histogram);
        assert_eq!(u + d, s.up.len() + s.down.len());
    }

    #[test]
    fn too_few_or_untimed() {
        assert!(accel_direction_stats(&oracle(1.2, 2)[..1], 10).is_err());
        let bare: Vec<Trajectory> = oracle(1.2, 10).into_iter().map(|t| t.without_timestamps()).collect();
        assert!(accel_direction_stats(&bare, 10).is_err());
    }
}
