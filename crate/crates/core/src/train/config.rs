use serde::{Deserialize, Serialize};

use crate::cci::CciParams;
use crate::error::{Error, Result};
use crate::prob::LogClip;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine annealing from the base rate down to `lr_final`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintEstimator {
    /// One fresh action per batch state drawn from the current policy.
    Sampled,
    /// Exact per-state expectation `Σ_a π_θ(a|s) log π_β(a|s)`.
    Exact,
}

/// Hyperparameters of a training run. Missing keys take the defaults below;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcpoConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub lr_actor: f64,
    pub lr_critic: f64,
    /// Final rate of the cosine schedule.
    pub lr_final: f64,
    pub lr_schedule: LrSchedule,
    pub eta_lambda: f64,
    pub epsilon: f64,
    pub lambda_init: f64,
    /// Disable the dual update and train with `lambda_init` throughout.
    pub freeze_lambda: bool,
    pub constraint_estimator: ConstraintEstimator,
    /// Behavior pre-training passes; the count-based fit needs one.
    pub n_beta: usize,
    pub n_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub log_clip_min: f64,
    pub log_clip_max: f64,
    pub weight_clip: f64,
    pub behavior_smoothing: f64,
}

impl Default for AcpoConfig {
    fn default() -> Self {
        AcpoConfig {
            alpha: 0.1,
            gamma: 0.99,
            tau: 5e-3,
            lr_actor: 5e-4,
            lr_critic: 5e-4,
            lr_final: 1e-4,
            lr_schedule: LrSchedule::Constant,
            eta_lambda: 1e-5,
            epsilon: -1.0,
            lambda_init: 0.1,
            freeze_lambda: false,
            constraint_estimator: ConstraintEstimator::Sampled,
            n_beta: 1,
            n_steps: 20_000,
            batch_size: 256,
            seed: 0,
            eval_every: 1_000,
            log_clip_min: -20.0,
            log_clip_max: 0.0,
            weight_clip: 100.0,
            behavior_smoothing: 0.5,
        }
    }
}

impl AcpoConfig {
    pub fn log_clip(&self) -> LogClip {
        LogClip { min: self.log_clip_min, max: self.log_clip_max }
    }

    pub fn cci_params(&self, lambda: f64) -> CciParams {
        CciParams {
            alpha: self.alpha,
            lambda,
            log_clip: self.log_clip(),
            weight_clip: self.weight_clip,
        }
    }

    /// Checks every field and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be > 0 (got {v})"));
            }
        };
        positive("alpha", self.alpha);
        positive("lr_actor", self.lr_actor);
        positive("lr_critic", self.lr_critic);
        positive("lr_final", self.lr_final);
        positive("eta_lambda", self.eta_lambda);
        positive("weight_clip", self.weight_clip);
        if !(0.0..1.0).contains(&self.gamma) {
            problems.push(format!("gamma must lie in [0, 1) (got {})", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            problems.push(format!("tau must lie in (0, 1] (got {})", self.tau));
        }
        if !self.epsilon.is_finite() {
            problems.push(format!("epsilon must be finite (got {})", self.epsilon));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_init.is_finite()) {
            problems.push(format!("lambda_init must be >= 0 (got {})", self.lambda_init));
        }
        if !(self.behavior_smoothing >= 0.0) {
            problems.push(format!("behavior_smoothing must be >= 0 (got {})", self.behavior_smoothing));
        }
        for (name, v) in [("n_beta", self.n_beta), ("batch_size", self.batch_size), ("eval_every", self.eval_every)] {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if LogClip::new(self.log_clip_min, self.log_clip_max).is_err() {
            problems.push(format!(
                "log clip must satisfy log_clip_min <= log_clip_max <= 0 (got [{}, {}])",
                self.log_clip_min, self.log_clip_max
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }

    /// Critic and actor step size at `step` (1-based) of `n_steps`.
    pub fn learning_rates(&self, step: usize) -> (f64, f64) {
        match self.lr_schedule {
            LrSchedule::Constant => (self.lr_actor, self.lr_critic),
            LrSchedule::Cosine => {
                let frac = if self.n_steps == 0 { 0.0 } else { step as f64 / self.n_steps as f64 };
                let c = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
                let anneal = |base: f64| self.lr_final + (base - self.lr_final) * c;
                (anneal(self.lr_actor), anneal(self.lr_critic))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = AcpoConfig::default();
        assert_eq!((c.gamma, c.tau, c.eta_lambda, c.alpha, c.lambda_init, c.batch_size), (0.99, 5e-3, 1e-5, 0.1, 0.1, 256));
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected_missing_keys_defaulted() {
        let c: AcpoConfig = serde_json::from_str(r#"{"alpha": 0.5, "n_steps": 10}"#).unwrap();
        assert_eq!(c.alpha, 0.5);
        assert_eq!(c.tau, 5e-3);
        let err = serde_json::from_str::<AcpoConfig>(r#"{"alpah": 0.5}"#).unwrap_err();
        assert!(err.to_string().contains("alpah"));
    }

    #[test]
    fn validation_lists_every_bad_field() {
        let c = AcpoConfig { tau: 0.0, alpha: -1.0, batch_size: 0, ..Default::default() };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("tau") && msg.contains("alpha") && msg.contains("batch_size"));
    }

    #[test]
    fn cosine_schedule_endpoints() {
        let c = AcpoConfig { lr_schedule: LrSchedule::Cosine, n_steps: 100, ..Default::default() };
        assert_eq!(c.learning_rates(0), (5e-4, 5e-4));
        let (a, _) = c.learning_rates(100);
        assert!((a - 1e-4).abs() < 1e-18);
    }
}
