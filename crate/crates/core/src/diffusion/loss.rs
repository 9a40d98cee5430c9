use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{invalid, Error, Result};
use crate::geom::{excess_path_ratio, polyline_length, Point, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 0.5, w3: 0.5 }
    }
}

impl LossWeights {
    pub fn problems(&self) -> Vec<&'static str> {
        let mut p = Vec::new();
        if !(self.w1 >= 0.0 && self.w2 >= 0.0 && self.w3 >= 0.0) {
            p.push("loss weights must be non-negative");
        }
        if !(self.w1 + self.w2 + self.w3 > 0.0) {
            p.push("loss weights must not all be zero");
        }
        p
    }
}

/// Mean squared residual norm `‖ε̂ − ε‖²` over the given nodes.
pub fn loss_ddim(eps_true: &[Point], eps_pred: &[Point]) -> Result<f64> {
    if eps_true.len() != eps_pred.len() {
        return Err(Error::LengthMismatch { left: eps_true.len(), right: eps_pred.len() });
    }
    if eps_true.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = eps_true
        .iter()
        .zip(eps_pred)
        .map(|(&a, &b)| {
            let d = b - a;
            d.dot(d)
        })
        .sum();
    Ok(s / eps_true.len() as f64)
}

/// Mean squared node-wise distance over the real nodes.
pub fn loss_sim(generated: &Trajectory, human: &Trajectory) -> Result<f64> {
    if generated.effective_len() != human.effective_len() {
        return Err(Error::LengthMismatch { left: generated.effective_len(), right: human.effective_len() });
    }
    let s: f64 = generated
        .nodes()
        .iter()
        .zip(human.nodes())
        .map(|(&a, &b)| {
            let d = a - b;
            d.dot(d)
        })
        .sum();
    Ok(s / generated.effective_len() as f64)
}

/// `|α_target − α̂|` with `α̂ = L/D − 1`.
pub fn loss_style(generated: &Trajectory, alpha_target: f64) -> Result<f64> {
    if !(alpha_target >= 0.0 && alpha_target.is_finite()) {
        return Err(invalid("alpha_target", "must be finite and non-negative"));
    }
    Ok((alpha_target - excess_path_ratio(generated)?).abs())
}

pub fn total_loss(ddim: f64, sim: f64, style: f64, w: &LossWeights) -> f64 {
    w.w1 * ddim + w.w2 * sim + w.w3 * style
}

/// One training item in the task frame.
pub(crate) struct ItemLoss {
    pub ddim: f64,
    pub sim: f64,
    pub style: f64,
    /// `∂(w·losses)/∂ε̂` per real node (zero at endpoints).
    pub grad: Vec<Point>,
}

/// Losses and their gradient w.r.t. the predicted noise for one item.
/// `z0`, `zt`, `eps`, `eps_hat` cover the real nodes; only interior nodes
/// carry noise. The reconstruction terms are weighted by `a` because the
/// one-shot estimate `x̂₀` is dominated by amplified noise when `a → 0`.
pub(crate) fn item_loss(
    z0: &[Point],
    zt: &[Point],
    eps: &[Point],
    eps_hat: &[Point],
    a: f64,
    alpha_target: f64,
    w: &LossWeights,
) -> ItemLoss {
    let n = z0.len();
    let m = n - 1;
    let interior = (m - 1) as f64;
    let (sa, sb) = (sqrt(a), sqrt(1.0 - a));
    let mut grad = vec![Point::ORIGIN; n];

    let mut ddim = 0.0;
    for j in 1..m {
        let d = eps_hat[j] - eps[j];
        ddim += d.dot(d);
        grad[j] = grad[j] + d * (2.0 * w.w1 / interior);
    }
    ddim /= interior;

    let mut x0 = z0.to_vec();
    for j in 1..m {
        x0[j] = (zt[j] - eps_hat[j] * sb) * (1.0 / sa);
    }
    // ∂x̂₀/∂ε̂ = −√(1−a)/√a per coordinate
    let chain = -sb / sa;

    let mut sim = 0.0;
    for j in 1..m {
        let d = x0[j] - z0[j];
        sim += d.dot(d);
        grad[j] = grad[j] + d * (w.w2 * a * 2.0 / n as f64 * chain);
    }
    sim *= a / n as f64;

    let dist = z0[0].dist(z0[m]);
    let len = polyline_length(&x0);
    let resid = len / dist - 1.0 - alpha_target;
    let style = a * resid.abs();
    if resid != 0.0 && w.w3 != 0.0 {
        let sign = resid.signum();
        let unit = |p: Point, q: Point| {
            let d = q - p;
            let l = d.norm();
            if l > 0.0 {
                d * (1.0 / l)
            } else {
                Point::ORIGIN
            }
        };
        for j in 1..m {
            let dl = unit(x0[j - 1], x0[j]) - unit(x0[j], x0[j + 1]);
            grad[j] = grad[j] + dl * (w.w3 * a * sign / dist * chain);
        }
    }
    ItemLoss { ddim, sim, style, grad }
}
