use alloc::vec::Vec;

use libm::{cos, floor, pow, sin};

use crate::error::{invalid, Result};

/// Frequency base of the sinusoidal embedding.
pub const EMBED_BASE: f64 = 10_000.0;
/// Default number of complexity buckets.
pub const DEFAULT_STYLES: usize = 20;

/// Interleaved `[sin(x·ω₀), cos(x·ω₀), sin(x·ω₁), …]` with
/// `ω_j = base^(−2j/dim)`.
pub fn sinusoid_embed(index: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(invalid("dim", "embedding width must be even and positive"));
    }
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim / 2 {
        let w = pow(EMBED_BASE, -(2.0 * j as f64) / dim as f64);
        out.push(sin(index * w));
        out.push(cos(index * w));
    }
    Ok(out)
}

/// Bucket `min(⌊ᾱ·S⌋, S − 1)`.
pub fn style_bucket(alpha_bar: f64, n_styles: usize) -> Result<usize> {
    if !(alpha_bar > 0.0 && alpha_bar <= 1.0) {
        return Err(invalid("alpha_bar", "must lie in (0, 1]"));
    }
    if n_styles < 2 {
        return Err(invalid("n_styles", "need at least 2 buckets"));
    }
    Ok((floor(alpha_bar * n_styles as f64) as usize).min(n_styles - 1))
}

/// Sinusoidal embedding of the complexity bucket.
pub fn style_embed(alpha_bar: f64, n_styles: usize, dim: usize) -> Result<Vec<f64>> {
    sinusoid_embed(style_bucket(alpha_bar, n_styles)? as f64, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_zero() {
        let e = sinusoid_embed(0.0, 8).unwrap();
        for j in 0..4 {
            assert_eq!(e[2 * j], 0.0);
            assert_eq!(e[2 * j + 1], 1.0);
        }
    }

    #[test]
    fn closed_form_dim4() {
        let e = sinusoid_embed(1.0, 4).unwrap();
        let expect = [sin(1.0), cos(1.0), sin(0.01), cos(0.01)];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(sinusoid_embed(1.0, 5).is_err());
    }

    #[test]
    fn range() {
        for i in [0.0, 1.0, 17.0, 999.0, 12345.0] {
            assert!(sinusoid_embed(i, 32).unwrap().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn buckets() {
        assert_eq!(style_bucket(0.25, 20).unwrap(), 5);
        assert_eq!(style_bucket(1.0, 20).unwrap(), 19);
        assert_eq!(style_embed(0.3, 20, 16).unwrap(), style_embed(0.349, 20, 16).unwrap());
        assert_eq!(style_bucket(0.3, 20).unwrap(), 6);
        assert!(style_bucket(0.0, 20).is_err());
        assert!(style_bucket(1.2, 20).is_err());
    }
}
