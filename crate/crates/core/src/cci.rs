//! Constraint interpolation core.
//!
//! A single dual variable `λ ≥ 0` attached to the average log-density
//! constraint `E_{s,a∼π}[log π_β(a|s)] ≥ ε` produces the closed-form policy
//!
//! ```text
//! π*_λ(a|s) ∝ exp(A(s,a)/α) · π_β(a|s)^{λ/α}
//! ```
//!
//! and, after reverse-KL projection onto a parametric policy, the
//! weighted-likelihood objective `E_D[w_λ log π_θ]` with
//!
//! ```text
//! w_λ(s,a) = exp(A(s,a)/α + ((λ − α)/α) · log π_β(a|s)).
//! ```
//!
//! `λ = 0` recovers the support-constrained weights `exp(A/α − log π_β)`,
//! `λ = α` the KL-density weights `exp(A/α)`, and large `λ` drives the
//! weights towards pure behavior cloning `π_β^{(λ−α)/α}`.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::mdp::TabularPolicy;
use crate::prob::{logsumexp, softmax, LogClip};

/// Tolerance for treating `λ` as equal to `α` when classifying regimes.
pub const KL_DENSITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CciParams {
    pub alpha: f64,
    pub lambda: f64,
    pub log_clip: LogClip,
    /// Upper bound applied to every policy-improvement weight.
    pub weight_clip: f64,
}

impl Default for CciParams {
    fn default() -> Self {
        CciParams {
            alpha: 0.1,
            lambda: 0.1,
            log_clip: LogClip::default(),
            weight_clip: 100.0,
        }
    }
}

impl CciParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        let p = CciParams { alpha, lambda, ..Default::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        CciParams { lambda, ..self }
    }

    pub fn with_log_clip(self, log_clip: LogClip) -> Self {
        CciParams { log_clip, ..self }
    }

    pub fn with_weight_clip(self, weight_clip: f64) -> Self {
        CciParams { weight_clip, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.weight_clip > 0.0) {
            return Err(Error::InvalidArgument(format!("weight_clip must be > 0, got {}", self.weight_clip)));
        }
        LogClip::new(self.log_clip.min, self.log_clip.max)?;
        Ok(())
    }
}

/// Position of `λ` on the constraint spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegimeLabel {
    Support,
    SupportToDensity,
    KlDensity,
    DensityToWbc,
    PracticalWbc,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegimeLabel::Support => "Support",
            RegimeLabel::SupportToDensity => "SupportToDensity",
            RegimeLabel::KlDensity => "KlDensity",
            RegimeLabel::DensityToWbc => "DensityToWbc",
            RegimeLabel::PracticalWbc => "PracticalWbc",
        };
        f.write_str(s)
    }
}

/// Unclipped log-weight `A/α + ((λ − α)/α) · log π_β`.
#[inline]
pub fn cci_log_weight(adv: f64, log_pb: f64, params: &CciParams) -> f64 {
    adv / params.alpha + ((params.lambda - params.alpha) / params.alpha) * log_pb
}

/// Policy-improvement weight `min(weight_clip, exp(log w))`, kept strictly
/// positive. `log_pb` is expected to be clipped already.
#[inline]
pub fn cci_weight(adv: f64, log_pb: f64, params: &CciParams) -> f64 {
    cci_log_weight(adv, log_pb, params)
        .exp()
        .clamp(f64::MIN_POSITIVE, params.weight_clip)
}

/// Unnormalized log-mass `A/α + (λ/α) · log π_β` of one row; actions outside
/// the behavior support get `-inf`.
fn row_log_mass(adv: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>, params: &CciParams) -> Vec<f64> {
    adv.iter()
        .zip(beta.iter())
        .map(|(&a, &b)| {
            if b > 0.0 {
                a / params.alpha + (params.lambda / params.alpha) * params.log_clip.log(b)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn closed_form_row(adv: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>, params: &CciParams, state: usize) -> Result<Vec<f64>> {
    if adv.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite advantage at state {state}")));
    }
    let mass = row_log_mass(adv, beta, params);
    if mass.iter().all(|m| *m == f64::NEG_INFINITY) {
        return Err(Error::EmptySupport { state });
    }
    Ok(softmax(&mass))
}

/// Closed-form optimizer `π*_λ ∝ exp(A/α) π_β^{λ/α}`, normalized per state
/// in log space. Actions with `π_β = 0` receive zero mass for every `λ`,
/// including `λ = 0` (the `0 · ∞ = 0` support convention).
pub fn closed_form_policy(advantage: &Array2<f64>, behavior: &TabularPolicy, params: &CciParams) -> Result<TabularPolicy> {
    params.validate()?;
    if advantage.dim() != behavior.probs().dim() {
        return Err(shape(format!("{:?}", behavior.probs().dim()), format!("{:?}", advantage.dim())));
    }
    let mut logits = Array2::from_elem(advantage.dim(), f64::NEG_INFINITY);
    for s in 0..advantage.nrows() {
        // validates the row and reports empty support
        closed_form_row(advantage.row(s), behavior.row(s), params, s)?;
        let mass = row_log_mass(advantage.row(s), behavior.row(s), params);
        logits.row_mut(s).assign(&Array1::from(mass));
    }
    TabularPolicy::from_logits(logits)
}

/// Log-normalizer `Z_λ(s) = α log Σ_a exp(Q(a)/α) π_β(a)^{λ/α}`.
pub fn log_normalizer(q_row: ArrayView1<'_, f64>, behavior_row: ArrayView1<'_, f64>, params: &CciParams) -> Result<f64> {
    params.validate()?;
    if q_row.len() != behavior_row.len() {
        return Err(shape(behavior_row.len(), q_row.len()));
    }
    let mass = row_log_mass(q_row, behavior_row, params);
    let lse = logsumexp(mass.iter().copied());
    if lse == f64::NEG_INFINITY {
        return Err(Error::EmptySupport { state: 0 });
    }
    Ok(params.alpha * lse)
}

/// `g = Σ_s w(s) Σ_a π(a|s) · clip(log π_β(a|s))`.
pub fn constraint_value(
    state_weights: &Array1<f64>,
    policy: &TabularPolicy,
    behavior: &TabularPolicy,
    params: &CciParams,
) -> Result<f64> {
    if policy.probs().dim() != behavior.probs().dim() || state_weights.len() != policy.n_states() {
        return Err(shape(
            format!("weights {} and two policies of shape {:?}", policy.n_states(), policy.probs().dim()),
            format!("weights {} and behavior {:?}", state_weights.len(), behavior.probs().dim()),
        ));
    }
    let mut g = 0.0;
    for (s, &w) in state_weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let inner: f64 = (0..policy.n_actions())
            .map(|a| {
                let p = policy.prob(s, a);
                if p == 0.0 {
                    0.0
                } else {
                    p * params.log_clip.log(behavior.prob(s, a))
                }
            })
            .sum();
        g += w * inner;
    }
    Ok(g)
}

/// Mean and variance of clipped `log π_β` under the closed-form row.
fn closed_form_moments(adv: ArrayView1<'_, f64>, beta: ArrayView1<'_, f64>, params: &CciParams) -> Result<(f64, f64)> {
    let pi = closed_form_row(adv, beta, params, 0)?;
    let logs: Vec<f64> = beta.iter().map(|&b| params.log_clip.log(b)).collect();
    let mean: f64 = pi.iter().zip(&logs).filter(|(p, _)| **p > 0.0).map(|(p, l)| p * l).sum();
    let var: f64 = pi
        .iter()
        .zip(&logs)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, l)| p * (l - mean) * (l - mean))
        .sum();
    Ok((mean, var))
}

/// Per-state constraint `g_s(λ) = E_{a∼π*_λ}[log π_β(a|s)]`.
pub fn state_constraint(adv_row: ArrayView1<'_, f64>, behavior_row: ArrayView1<'_, f64>, params: &CciParams) -> Result<f64> {
    params.validate()?;
    Ok(closed_form_moments(adv_row, behavior_row, params)?.0)
}

/// `dg_s/dλ = Var_{π*_λ}(log π_β) / α`, always non-negative.
pub fn constraint_derivative(adv_row: ArrayView1<'_, f64>, behavior_row: ArrayView1<'_, f64>, params: &CciParams) -> Result<f64> {
    params.validate()?;
    if adv_row.len() != behavior_row.len() {
        return Err(shape(behavior_row.len(), adv_row.len()));
    }
    Ok(closed_form_moments(adv_row, behavior_row, params)?.1 / params.alpha)
}

/// Regime of `params.lambda` relative to `α` and the practical-wBC threshold.
pub fn classify_regime(params: &CciParams, wbc_threshold: f64) -> RegimeLabel {
    let (lambda, alpha) = (params.lambda, params.alpha);
    if lambda == 0.0 {
        RegimeLabel::Support
    } else if (lambda - alpha).abs() <= KL_DENSITY_TOL {
        RegimeLabel::KlDensity
    } else if lambda < alpha {
        RegimeLabel::SupportToDensity
    } else if lambda < wbc_threshold {
        RegimeLabel::DensityToWbc
    } else {
        RegimeLabel::PracticalWbc
    }
}

/// Inputs of the practical-wBC sufficient condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WbcBound {
    /// `max |r(s, a)|`.
    pub r_max: f64,
    pub alpha: f64,
    /// `max(|ℓ_min|, |ℓ_max|)` of the log-probability clip.
    pub c_max: f64,
    pub gamma: f64,
    /// `min |log π_β(a|s)|` over the data.
    pub c_beta_min: f64,
    /// Guard keeping the denominator away from zero.
    pub delta: f64,
}

impl WbcBound {
    /// Uniform bound `|A^π(s, a)| ≤ 2(R_max + α C_max)/(1 − γ)`.
    pub fn advantage_bound(&self) -> f64 {
        advantage_bound(self.r_max, self.alpha, self.c_max, self.gamma)
    }

    /// `α + 2(R_max + α C_max) / ((1 − γ)(C^β_min + δ))`.
    pub fn threshold(&self) -> Result<f64> {
        if !(self.gamma < 1.0) || !(self.delta > 0.0) || self.c_beta_min < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "threshold needs gamma < 1, delta > 0 and c_beta_min >= 0 (got gamma={}, delta={}, c_beta_min={})",
                self.gamma, self.delta, self.c_beta_min
            )));
        }
        Ok(self.alpha + self.advantage_bound() / (self.c_beta_min + self.delta))
    }
}

pub fn advantage_bound(r_max: f64, alpha: f64, c_max: f64, gamma: f64) -> f64 {
    2.0 * (r_max + alpha * c_max) / (1.0 - gamma)
}

pub fn wbc_threshold(r_max: f64, alpha: f64, c_max: f64, gamma: f64, c_beta_min: f64, delta: f64) -> Result<f64> {
    WbcBound { r_max, alpha, c_max, gamma, c_beta_min, delta }.threshold()
}

/// One row of a `λ` sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub lambda: f64,
    pub regime: RegimeLabel,
    /// `g(λ) = Σ_s w(s) g_s(λ)`.
    pub g: f64,
    pub dg_dlambda: f64,
    pub wbc_threshold: f64,
}

/// Evaluates `g(λ)` and `g'(λ)` of the closed-form policy over a grid of
/// `λ`, averaging states with `state_weights`. Grid points run in parallel
/// and come back in grid order.
pub fn spectrum(
    advantage: &Array2<f64>,
    behavior: &TabularPolicy,
    state_weights: &Array1<f64>,
    base: &CciParams,
    lambdas: &[f64],
    wbc_threshold: f64,
) -> Result<Vec<SpectrumRow>> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if state_weights.len() != advantage.nrows() || advantage.dim() != behavior.probs().dim() {
        return Err(shape(format!("{:?}", behavior.probs().dim()), format!("{:?}", advantage.dim())));
    }
    lambdas
        .par_iter()
        .map(|&lambda| {
            let params = base.with_lambda(lambda);
            params.validate()?;
            let mut g = 0.0;
            let mut dg = 0.0;
            for (s, &w) in state_weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let (mean, var) = closed_form_moments(advantage.row(s), behavior.row(s), &params)?;
                g += w * mean;
                dg += w * var / params.alpha;
            }
            Ok(SpectrumRow {
                lambda,
                regime: classify_regime(&params, wbc_threshold),
                g,
                dg_dlambda: dg,
                wbc_threshold,
            })
        })
        .collect()
}
