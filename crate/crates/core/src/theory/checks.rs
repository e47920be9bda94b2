use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CheckKind, InstanceInfo, TheoryReport};
use crate::cci::{closed_form_policy, constraint_derivative, state_constraint, CciParams};
use crate::error::{Error, Result};
use crate::mdp::{
    discounted_visitation, evaluate_policy, max_entropy_return, random_mdp_with, shape_reward, TabularMdp,
    TabularPolicy, DEFAULT_TOL,
};
use crate::prob::{divergences, logsumexp, softmax, LogClip};

/// Tolerance of the exact identities.
pub const EQUALITY_TOL: f64 = 1e-8;
/// Allowed negative slack of the inequalities.
pub const INEQUALITY_TOL: f64 = 1e-10;
/// Allowed decrease of `g` between consecutive grid points.
pub const MONOTONE_TOL: f64 = 1e-12;
/// Allowed gap between `Var/α` and the central difference.
pub const DERIVATIVE_TOL: f64 = 1e-5;
/// Step of the central difference in `λ`.
pub const FD_STEP: f64 = 1e-4;

/// A random MDP with a full-support behavior policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub seed: u64,
    pub mdp: TabularMdp,
    pub behavior: TabularPolicy,
    pub alpha: f64,
    pub lambda: f64,
}

impl Instance {
    pub fn info(&self) -> InstanceInfo {
        InstanceInfo {
            seed: self.seed,
            n_states: self.mdp.n_states(),
            n_actions: self.mdp.n_actions(),
            gamma: self.mdp.gamma(),
            alpha: self.alpha,
            lambda: Some(self.lambda),
            source: None,
        }
    }
}

/// Softmax of logits uniform in `[-spread, spread]`. With at most three
/// actions and `spread = 2` every probability is above `1e-3`.
pub fn random_policy<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, spread: f64) -> TabularPolicy {
    let logits = Array2::from_shape_fn((n_states, n_actions), |_| rng.random_range(-spread..=spread));
    TabularPolicy::from_logits(logits).expect("finite logits")
}

/// Seeded instance with 2–6 states and 2–3 actions.
pub fn random_instance(seed: u64, gamma: f64, alpha: f64, lambda: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = rng.random_range(2..=6);
    let n_actions = rng.random_range(2..=3);
    let mdp = random_mdp_with(&mut rng, n_states, n_actions, gamma);
    let behavior = random_policy(&mut rng, n_states, n_actions, 2.0);
    Instance { seed, mdp, behavior, alpha, lambda }
}

fn expectation(policy: &TabularPolicy, table: &Array2<f64>, s: usize) -> f64 {
    policy.row(s).dot(&table.row(s))
}

fn kl_row(policy: &TabularPolicy, behavior: &TabularPolicy, s: usize) -> f64 {
    divergences(policy.row(s).as_slice().unwrap(), behavior.row(s).as_slice().unwrap())
        .expect("rows of equal length")
        .kl
}

fn tv_row(policy: &TabularPolicy, behavior: &TabularPolicy, s: usize) -> f64 {
    divergences(policy.row(s).as_slice().unwrap(), behavior.row(s).as_slice().unwrap())
        .expect("rows of equal length")
        .tv
}

fn log_table(behavior: &TabularPolicy) -> Result<Array2<f64>> {
    let probs = behavior.probs();
    if let Some(((s, a), _)) = probs.indexed_iter().find(|(_, p)| **p <= 0.0) {
        return Err(Error::ZeroProbability { state: s, action: a });
    }
    Ok(probs.mapv(f64::ln))
}

/// Quantities of the behavior policy shared by all bound terms.
#[derive(Debug, Clone)]
pub struct BehaviorModel {
    pub alpha: f64,
    /// Standard advantage `A^{π_β}` under the original reward.
    pub advantage: Array2<f64>,
    /// `Ã^{π_β}`: standard advantage under `r − α log π_β`.
    pub shaped_advantage: Array2<f64>,
    pub visitation: Array1<f64>,
    pub log_behavior: Array2<f64>,
    pub j_beta: f64,
}

impl BehaviorModel {
    pub fn new(mdp: &TabularMdp, behavior: &TabularPolicy, alpha: f64) -> Result<Self> {
        let log_behavior = log_table(behavior)?;
        let advantage = evaluate_policy(mdp, behavior, 0.0, DEFAULT_TOL)?.advantage();
        let shaped = shape_reward(mdp, behavior, alpha, None)?;
        let shaped_advantage = evaluate_policy(&shaped, behavior, 0.0, DEFAULT_TOL)?.advantage();
        Ok(BehaviorModel {
            alpha,
            advantage,
            shaped_advantage,
            visitation: discounted_visitation(mdp, behavior)?,
            log_behavior,
            j_beta: max_entropy_return(mdp, behavior, alpha)?,
        })
    }

    /// `B = max |log π_β|`.
    pub fn log_bound(&self) -> f64 {
        self.log_behavior.iter().fold(0.0, |m, l| m.max(l.abs()))
    }

    pub fn table(&self, variant: FVariant) -> &Array2<f64> {
        match variant {
            FVariant::Shaped => &self.shaped_advantage,
            FVariant::Standard => &self.advantage,
        }
    }

    /// `F_λ(π) = E_{d_β}[E_π adv − α KL(π‖π_β) + (λ − α) E_π log π_β]`.
    pub fn f_lambda(&self, policy: &TabularPolicy, behavior: &TabularPolicy, lambda: f64, variant: FVariant) -> f64 {
        let adv = self.table(variant);
        self.visitation
            .iter()
            .enumerate()
            .map(|(s, d)| {
                d * (expectation(policy, adv, s) - self.alpha * kl_row(policy, behavior, s)
                    + (lambda - self.alpha) * expectation(policy, &self.log_behavior, s))
            })
            .sum()
    }

    /// Closed-form maximizer of `F_λ` for the given advantage variant.
    pub fn maximizer(&self, behavior: &TabularPolicy, lambda: f64, variant: FVariant) -> Result<TabularPolicy> {
        let params = CciParams { alpha: self.alpha, lambda, ..Default::default() };
        closed_form_policy(self.table(variant), behavior, &params)
    }
}

/// Which advantage enters `F_λ`: the shaped `Ã^{π_β}` or the standard
/// `A^{π_β}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FVariant {
    Shaped,
    Standard,
}

impl FVariant {
    pub const BOTH: [FVariant; 2] = [FVariant::Shaped, FVariant::Standard];

    pub fn name(self) -> &'static str {
        match self {
            FVariant::Shaped => "shaped",
            FVariant::Standard => "standard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTerms {
    pub f_lambda_star: f64,
    pub f_lambda_theta: f64,
    pub delta_sub: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub b: f64,
    pub eps_beta: f64,
    pub kappa_beta: f64,
    pub delta_tv: f64,
    pub shaped: FTerms,
    pub standard: FTerms,
}

impl BoundTerms {
    pub fn f_terms(&self, variant: FVariant) -> FTerms {
        match variant {
            FVariant::Shaped => self.shaped,
            FVariant::Standard => self.standard,
        }
    }
}

fn bound_terms_with(
    model: &BehaviorModel,
    policy: &TabularPolicy,
    behavior: &TabularPolicy,
    lambda: f64,
) -> Result<BoundTerms> {
    let n = policy.n_states();
    let eps_beta = (0..n).fold(0.0f64, |m, s| m.max(expectation(policy, &model.shaped_advantage, s).abs()));
    let kappa_beta = (0..n).fold(0.0f64, |m, s| m.max(kl_row(policy, behavior, s)));
    let delta_tv = (0..n).map(|s| model.visitation[s] * tv_row(policy, behavior, s)).sum();
    let f_terms = |variant| -> Result<FTerms> {
        let star = model.maximizer(behavior, lambda, variant)?;
        let f_lambda_star = model.f_lambda(&star, behavior, lambda, variant);
        let f_lambda_theta = model.f_lambda(policy, behavior, lambda, variant);
        Ok(FTerms { f_lambda_star, f_lambda_theta, delta_sub: f_lambda_star - f_lambda_theta })
    };
    Ok(BoundTerms {
        b: model.log_bound(),
        eps_beta,
        kappa_beta,
        delta_tv,
        shaped: f_terms(FVariant::Shaped)?,
        standard: f_terms(FVariant::Standard)?,
    })
}

/// Every term of the two lower bounds, evaluated at `policy`.
pub fn compute_bound_terms(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    behavior: &TabularPolicy,
    alpha: f64,
    lambda: f64,
) -> Result<BoundTerms> {
    mdp.check_policy(policy)?;
    let model = BehaviorModel::new(mdp, behavior, alpha)?;
    bound_terms_with(&model, policy, behavior, lambda)
}

fn equality(check: &str, lhs: f64, rhs: f64, instance: InstanceInfo) -> TheoryReport {
    let slack = (lhs - rhs).abs();
    TheoryReport {
        check: check.into(),
        kind: CheckKind::Equality,
        lhs,
        rhs,
        slack,
        tolerance: EQUALITY_TOL,
        pass: slack < EQUALITY_TOL,
        instance,
    }
}

/// `lhs ≥ rhs`, reported with slack `lhs − rhs`.
fn at_least(check: &str, lhs: f64, rhs: f64, tolerance: f64, instance: InstanceInfo) -> TheoryReport {
    let slack = lhs - rhs;
    TheoryReport {
        check: check.into(),
        kind: CheckKind::Inequality,
        lhs,
        rhs,
        slack,
        tolerance,
        pass: slack >= -tolerance,
        instance,
    }
}

/// `lhs ≤ rhs`, reported with slack `rhs − lhs`.
fn at_most(check: &str, lhs: f64, rhs: f64, instance: InstanceInfo) -> TheoryReport {
    let mut r = at_least(check, rhs, lhs, INEQUALITY_TOL, instance);
    (r.lhs, r.rhs) = (lhs, rhs);
    r
}

fn bare_info(mdp: &TabularMdp, alpha: f64) -> InstanceInfo {
    InstanceInfo {
        seed: 0,
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        gamma: mdp.gamma(),
        alpha,
        lambda: None,
        source: None,
    }
}

/// Standard performance difference: `η(π) − η(π_ref)` against
/// `(1/(1−γ)) E_{d_π} E_π A^{π_ref}`.
pub fn check_pdl_standard(mdp: &TabularMdp, pi: &TabularPolicy, pi_ref: &TabularPolicy) -> Result<TheoryReport> {
    let lhs = max_entropy_return(mdp, pi, 0.0)? - max_entropy_return(mdp, pi_ref, 0.0)?;
    let adv = evaluate_policy(mdp, pi_ref, 0.0, DEFAULT_TOL)?.advantage();
    let d = discounted_visitation(mdp, pi)?;
    let rhs = (0..mdp.n_states()).map(|s| d[s] * expectation(pi, &adv, s)).sum::<f64>() / (1.0 - mdp.gamma());
    Ok(equality("pdl_standard", lhs, rhs, bare_info(mdp, 0.0)))
}

/// Right-hand side of the max-entropy performance difference identity.
fn pdl_maxent_rhs(mdp: &TabularMdp, pi: &TabularPolicy, behavior: &TabularPolicy, alpha: f64) -> Result<f64> {
    let shaped = shape_reward(mdp, behavior, alpha, None)?;
    let adv = evaluate_policy(&shaped, behavior, 0.0, DEFAULT_TOL)?.advantage();
    let d = discounted_visitation(mdp, pi)?;
    let total: f64 = (0..mdp.n_states())
        .map(|s| d[s] * (expectation(pi, &adv, s) - alpha * kl_row(pi, behavior, s)))
        .sum();
    Ok(total / (1.0 - mdp.gamma()))
}

/// Max-entropy performance difference: `J(π) − J(π_β)` against
/// `(1/(1−γ)) E_{d_π}[E_π Ã^{π_β} − α KL(π‖π_β)]`.
pub fn check_pdl_maxent(mdp: &TabularMdp, pi: &TabularPolicy, behavior: &TabularPolicy, alpha: f64) -> Result<TheoryReport> {
    pdl_maxent_faulty(mdp, pi, behavior, alpha, None)
}

/// With `fault = Some(x)` the reward of `(0, 0)` is shifted by `x` after the
/// right-hand side has been computed, which must break the identity.
pub(crate) fn pdl_maxent_faulty(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    behavior: &TabularPolicy,
    alpha: f64,
    fault: Option<f64>,
) -> Result<TheoryReport> {
    let rhs = pdl_maxent_rhs(mdp, pi, behavior, alpha)?;
    let lhs_mdp = match fault {
        Some(shift) => {
            let mut reward = mdp.reward().clone();
            reward[[0, 0]] += shift;
            mdp.with_reward(reward)?
        }
        None => mdp.clone(),
    };
    let lhs = max_entropy_return(&lhs_mdp, pi, alpha)? - max_entropy_return(&lhs_mdp, behavior, alpha)?;
    Ok(equality("pdl_maxent", lhs, rhs, bare_info(mdp, alpha)))
}

/// Lower bound of `J(π)` shared by both theorems, without the `δ_sub` term.
fn base_bound(gamma: f64, alpha: f64, lambda: f64, j_beta: f64, t: &BoundTerms) -> f64 {
    let first = 2.0 * t.b * (lambda - alpha).abs() / (1.0 - gamma);
    let second = (4.0 * alpha * t.b + 2.0 * gamma * (t.eps_beta + alpha * t.kappa_beta)) / (1.0 - gamma).powi(2);
    j_beta - (first + second) * t.delta_tv
}

/// Lower bound on `J(π*_λ)` with `π*_λ` built from the standard advantage.
pub fn check_theorem1(mdp: &TabularMdp, behavior: &TabularPolicy, alpha: f64, lambda: f64) -> Result<TheoryReport> {
    let model = BehaviorModel::new(mdp, behavior, alpha)?;
    let star = model.maximizer(behavior, lambda, FVariant::Standard)?;
    let terms = bound_terms_with(&model, &star, behavior, lambda)?;
    let lhs = max_entropy_return(mdp, &star, alpha)?;
    let rhs = base_bound(mdp.gamma(), alpha, lambda, model.j_beta, &terms);
    let mut info = bare_info(mdp, alpha);
    info.lambda = Some(lambda);
    Ok(at_least("theorem1", lhs, rhs, INEQUALITY_TOL, info))
}

/// Lower bound on `J(π_θ)` including `−δ_sub/(1−γ)` from the chosen
/// `F_λ` variant.
pub fn check_theorem2(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    pi_theta: &TabularPolicy,
    alpha: f64,
    lambda: f64,
    variant: FVariant,
) -> Result<TheoryReport> {
    mdp.check_policy(pi_theta)?;
    let model = BehaviorModel::new(mdp, behavior, alpha)?;
    let terms = bound_terms_with(&model, pi_theta, behavior, lambda)?;
    let lhs = max_entropy_return(mdp, pi_theta, alpha)?;
    let delta_sub = terms.f_terms(variant).delta_sub;
    let rhs = base_bound(mdp.gamma(), alpha, lambda, model.j_beta, &terms) - delta_sub / (1.0 - mdp.gamma());
    let mut info = bare_info(mdp, alpha);
    info.lambda = Some(lambda);
    let name = match variant {
        FVariant::Shaped => "theorem2_shaped",
        FVariant::Standard => "theorem2_standard",
    };
    Ok(at_least(name, lhs, rhs, INEQUALITY_TOL, info))
}

/// `‖d_π − d_{π_β}‖₁ ≤ (2γ/(1−γ)) E_{d_{π_β}} TV(π, π_β)`.
pub fn check_occupancy_bound(mdp: &TabularMdp, pi: &TabularPolicy, behavior: &TabularPolicy) -> Result<TheoryReport> {
    mdp.check_policy(pi)?;
    let d_pi = discounted_visitation(mdp, pi)?;
    let d_beta = discounted_visitation(mdp, behavior)?;
    let lhs = (&d_pi - &d_beta).mapv(f64::abs).sum();
    let avg_tv: f64 = (0..mdp.n_states()).map(|s| d_beta[s] * tv_row(pi, behavior, s)).sum();
    let rhs = 2.0 * mdp.gamma() / (1.0 - mdp.gamma()) * avg_tv;
    Ok(at_most("occupancy_bound", lhs, rhs, bare_info(mdp, 0.0)))
}

/// `max |A^π_soft| ≤ 2(R_max + α C_max)/(1−γ)` for a policy whose
/// log-probabilities lie in `[l_min, l_max]`.
pub fn check_advantage_bound(mdp: &TabularMdp, pi: &TabularPolicy, alpha: f64, l_min: f64, l_max: f64) -> Result<TheoryReport> {
    LogClip::new(l_min, l_max)?;
    if let Some(((s, a), p)) = pi.probs().indexed_iter().find(|(_, p)| **p > 0.0 && !(l_min..=l_max).contains(&p.ln())) {
        return Err(Error::InvalidPolicy(format!(
            "log π({a}|{s}) = {} outside [{l_min}, {l_max}]",
            p.ln()
        )));
    }
    let adv = evaluate_policy(mdp, pi, alpha, DEFAULT_TOL)?.advantage();
    let lhs = adv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let c_max = l_min.abs().max(l_max.abs());
    let rhs = crate::cci::advantage_bound(mdp.r_max(), alpha, c_max, mdp.gamma());
    Ok(at_most("advantage_bound", lhs, rhs, bare_info(mdp, alpha)))
}

/// `g_s(λ)` from the raw closed form, defined for every real `λ` so the
/// central difference can straddle zero.
fn raw_state_constraint(adv: &Array2<f64>, log_beta: &Array2<f64>, s: usize, alpha: f64, lambda: f64) -> f64 {
    let mass: Vec<f64> = (0..adv.ncols())
        .map(|a| adv[[s, a]] / alpha + lambda / alpha * log_beta[[s, a]])
        .collect();
    debug_assert!(logsumexp(mass.iter().copied()).is_finite());
    softmax(&mass).iter().zip(log_beta.row(s)).map(|(p, l)| p * l).sum()
}

/// Monotonicity of `g(λ) = E_{d_β} g_s(λ)` over `lambdas` (ascending) and
/// agreement of `Var/α` with a central difference at every grid point.
pub fn check_prop1(mdp: &TabularMdp, behavior: &TabularPolicy, alpha: f64, lambdas: &[f64]) -> Result<Vec<TheoryReport>> {
    let model = BehaviorModel::new(mdp, behavior, alpha)?;
    let adv = &model.advantage;
    let d = &model.visitation;
    let n = mdp.n_states();
    let mut reports = Vec::with_capacity(lambdas.len() + 1);
    let mut values = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let params = CciParams { alpha, lambda, ..Default::default() };
        let mut g = 0.0;
        let mut dg = 0.0;
        let mut fd = 0.0;
        for s in 0..n {
            g += d[s] * state_constraint(adv.row(s), behavior.row(s), &params)?;
            dg += d[s] * constraint_derivative(adv.row(s), behavior.row(s), &params)?;
            let up = raw_state_constraint(adv, &model.log_behavior, s, alpha, lambda + FD_STEP);
            let down = raw_state_constraint(adv, &model.log_behavior, s, alpha, lambda - FD_STEP);
            fd += d[s] * (up - down) / (2.0 * FD_STEP);
        }
        values.push(g);
        let mut info = bare_info(mdp, alpha);
        info.lambda = Some(lambda);
        let slack = (dg - fd).abs();
        reports.push(TheoryReport {
            check: "prop1_derivative".into(),
            kind: CheckKind::Equality,
            lhs: dg,
            rhs: fd,
            slack,
            tolerance: DERIVATIVE_TOL,
            pass: slack <= DERIVATIVE_TOL,
            instance: info,
        });
    }
    let min_step = values.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let min_step = if min_step.is_finite() { min_step } else { 0.0 };
    reports.push(at_least("prop1_monotone", min_step, 0.0, MONOTONE_TOL, bare_info(mdp, alpha)));
    Ok(reports)
}
