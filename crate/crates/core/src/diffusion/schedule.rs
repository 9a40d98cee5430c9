use alloc::vec::Vec;

use libm::{cos, pow, round};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl ScheduleKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Some(Self::Linear),
            "cosine" => Some(Self::Cosine),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Cosine => "cosine",
        }
    }
}

const MAX_BETA: f64 = 0.999;

/// Cumulative signal weights `a_t`; `a(0) = 1` and `a_1 > … > a_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    a: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(invalid("t_steps", "need at least 2 diffusion steps"));
        }
        let t_f = steps as f64;
        let betas: Vec<f64> = match kind {
            // DDPM endpoints 1e-4..0.02 rescaled so the chain length does not
            // change the total noise.
            ScheduleKind::Linear => {
                let scale = 1000.0 / t_f;
                let (b0, b1) = ((1e-4 * scale).min(MAX_BETA), (0.02 * scale).min(MAX_BETA));
                (1..=steps).map(|t| b0 + (b1 - b0) * (t - 1) as f64 / (t_f - 1.0)).collect()
            }
            ScheduleKind::Cosine => {
                let s = 0.008;
                let f = |t: f64| {
                    let c = cos((t / t_f + s) / (1.0 + s) * core::f64::consts::FRAC_PI_2);
                    c * c
                };
                (1..=steps).map(|t| (1.0 - f(t as f64) / f(t as f64 - 1.0)).clamp(1e-8, MAX_BETA)).collect()
            }
        };
        let mut a = Vec::with_capacity(steps + 1);
        a.push(1.0);
        let mut acc = 1.0;
        for b in betas {
            acc *= 1.0 - b;
            a.push(acc);
        }
        Ok(Self { kind, a })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn steps(&self) -> usize {
        self.a.len() - 1
    }

    /// Signal weight at step `t` (`t = 0` is the clean signal).
    pub fn a(&self, t: usize) -> f64 {
        self.a[t]
    }

    /// `a_1 … a_T`.
    pub fn weights(&self) -> &[f64] {
        &self.a[1..]
    }
}

/// How the reverse chain visits `T … 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Spacing {
    /// Evenly strided steps.
    Uniform,
    /// Log-spaced steps, dense near `t = 0`. The long early strides leave
    /// visible jitter in the final sample.
    Geometric,
}

impl Spacing {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Some(Self::Uniform),
            "geometric" => Some(Self::Geometric),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Uniform => "uniform",
            Self::Geometric => "geometric",
        }
    }
}

/// Strictly decreasing visit order starting at `T`, ending at 0.
pub fn timesteps(t_steps: usize, n: usize, spacing: Spacing) -> Result<Vec<usize>> {
    if n == 0 || n > t_steps {
        return Err(invalid("sample_steps", "must lie in [1, T]"));
    }
    let mut ts: Vec<usize> = match spacing {
        Spacing::Uniform => (0..n).map(|i| t_steps - (i * t_steps) / n).collect(),
        Spacing::Geometric => (0..n)
            .map(|i| {
                let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                round(pow(t_steps as f64, 1.0 - frac)) as usize
            })
            .collect(),
    };
    ts.dedup();
    ts.push(0);
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_invariants() {
        assert!(NoiseSchedule::build(ScheduleKind::Cosine, 1).is_err());
        for kind in [ScheduleKind::Linear, ScheduleKind::Cosine] {
            for steps in [2, 10, 50, 1000] {
                let s = NoiseSchedule::build(kind, steps).unwrap();
                let w = s.weights();
                assert_eq!(w.len(), steps);
                assert!(w.iter().all(|&a| a > 0.0 && a <= 1.0));
                assert!(w.windows(2).all(|p| p[1] < p[0]), "{kind:?} {steps}");
                assert!(w[steps - 1] <= 0.01, "{kind:?} {steps}: {}", w[steps - 1]);
            }
        }
        let c = NoiseSchedule::build(ScheduleKind::Cosine, 1000).unwrap();
        assert!(c.a(1) >= 0.999);
        let l = NoiseSchedule::build(ScheduleKind::Linear, 10).unwrap();
        assert!(l.a(1) > l.a(10));
    }

    #[test]
    fn visit_orders() {
        for sp in [Spacing::Uniform, Spacing::Geometric] {
            let ts = timesteps(1000, 50, sp).unwrap();
            assert_eq!(ts[0], 1000);
            assert_eq!(*ts.last().unwrap(), 0);
            assert!(ts.windows(2).all(|w| w[1] < w[0]));
        }
        assert_eq!(timesteps(1000, 50, Spacing::Uniform).unwrap().len(), 51);
        assert_eq!(timesteps(1000, 50, Spacing::Geometric).unwrap()[..].iter().rev().nth(1), Some(&1));
        assert!(timesteps(10, 11, Spacing::Uniform).is_err());
    }
}
