//! Small probability helpers shared by every module: log-probability
//! clipping, row softmax, log-sum-exp and the KL / total-variation pair.
//!
//! Convention throughout the crate: `0 · log 0 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};

/// Tolerance used when checking that a probability vector sums to one.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Closed interval `[min, max]` that log-probabilities are clamped into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogClip {
    pub min: f64,
    pub max: f64,
}

impl Default for LogClip {
    fn default() -> Self {
        LogClip { min: -20.0, max: 0.0 }
    }
}

impl LogClip {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max || max > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "log clip bounds must satisfy min <= max <= 0, got [{min}, {max}]"
            )));
        }
        Ok(LogClip { min, max })
    }

    /// `log p` clamped into the interval. `p = 0` maps to `min`.
    #[inline]
    pub fn log(&self, p: f64) -> f64 {
        if p <= 0.0 {
            self.min
        } else {
            p.ln().clamp(self.min, self.max)
        }
    }

    /// Largest magnitude a clipped log-probability can take.
    pub fn c_max(&self) -> f64 {
        self.min.abs().max(self.max.abs())
    }
}

/// `p · log p` with the `0 · log 0 = 0` convention.
#[inline]
pub fn xlogx(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Numerically stable `log Σ exp(x_i)`; `-inf` entries are ignored.
pub fn logsumexp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Softmax of a row; `-inf` entries receive exactly zero mass.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Checks that `p` is elementwise non-negative and sums to one.
pub fn check_simplex(p: &[f64], tol: f64) -> std::result::Result<(), String> {
    if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(format!("entry {x} is negative or non-finite"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(format!("entries sum to {sum}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub kl: f64,
    pub tv: f64,
}

/// `KL(p‖q)` and `TV(p, q)`. Zero entries of `q` under positive `p` use the
/// default clipped log floor so the result stays finite.
pub fn divergences(p: &[f64], q: &[f64]) -> Result<Divergence> {
    if p.len() != q.len() {
        return Err(shape(p.len(), q.len()));
    }
    let clip = LogClip::default();
    let mut kl = 0.0;
    let mut tv = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            let log_q = if qi > 0.0 { qi.ln() } else { clip.min };
            kl += pi * (pi.ln() - log_q);
        }
        tv += (pi - qi).abs();
    }
    Ok(Divergence { kl, tv: 0.5 * tv })
}

/// Total variation distance alone.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
