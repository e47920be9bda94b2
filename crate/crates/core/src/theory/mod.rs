//! Exact numerical checks of the performance-difference identities, the
//! monotone constraint spectrum, and the lower bounds on the
//! entropy-regularized return.
//!
//! Every expectation is an exact sum over a small random MDP, so tolerances
//! only absorb floating-point error. Suites run instances in parallel and
//! return reports in instance order.

mod checks;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checks::{
    check_advantage_bound, check_occupancy_bound, check_pdl_maxent, check_pdl_standard, check_prop1,
    check_theorem1, check_theorem2, compute_bound_terms, random_instance, random_policy, BehaviorModel, BoundTerms,
    FTerms, FVariant, Instance, DERIVATIVE_TOL, EQUALITY_TOL, FD_STEP, INEQUALITY_TOL, MONOTONE_TOL,
};

use crate::data::generate_dataset;
use crate::error::{Error, Result};
use crate::mdp::TabularPolicy;
use crate::train::{AcpoConfig, AcpoTrainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Passes when `|lhs − rhs| ≤ tolerance`; `slack = |lhs − rhs|`.
    Equality,
    /// Passes when `slack ≥ −tolerance`, with slack oriented so that
    /// non-negative means the inequality holds.
    Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub lambda: Option<f64>,
    /// Origin of the evaluated policy, where relevant.
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub check: String,
    pub kind: CheckKind,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub instance: InstanceInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Pdl,
    Prop1,
    Thm1,
    Thm2,
    Bounds,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] = ["pdl", "prop1", "thm1", "thm2", "bounds", "all"];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "pdl" => Suite::Pdl,
            "prop1" => Suite::Prop1,
            "thm1" => Suite::Thm1,
            "thm2" => Suite::Thm2,
            "bounds" => Suite::Bounds,
            "all" => Suite::All,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown suite '{other}', expected one of {}",
                    Suite::NAMES.join(", ")
                )))
            }
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = [Suite::Pdl, Suite::Prop1, Suite::Thm1, Suite::Thm2, Suite::Bounds, Suite::All]
            .iter()
            .position(|s| s == self)
            .unwrap();
        f.write_str(Suite::NAMES[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    /// Instances per check family.
    pub n_instances: usize,
    pub seed: u64,
    /// Shift a reward after the right-hand side of the identity checks is
    /// computed. Exists to exercise the failure path.
    pub inject_fault: bool,
}

impl SuiteOptions {
    pub fn new(n_instances: usize, seed: u64) -> Self {
        SuiteOptions { n_instances, seed, inject_fault: false }
    }
}

/// Seed of instance `i` in a suite run.
pub fn instance_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64)
}

/// λ multipliers of `α` cycled by the theorem suites.
pub const LAMBDA_FACTORS: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 10.0];
/// λ grid (in units of `α`) of the monotonicity suite.
pub const PROP1_GRID: [f64; 7] = [0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0];

fn with_seed(mut r: TheoryReport, seed: u64, source: Option<&str>) -> TheoryReport {
    r.instance.seed = seed;
    r.instance.source = source.map(str::to_owned);
    r
}

fn par_collect<F>(n: usize, f: F) -> Result<Vec<TheoryReport>>
where
    F: Fn(usize) -> Result<Vec<TheoryReport>> + Sync + Send,
{
    let parts: Vec<Result<Vec<TheoryReport>>> = (0..n).into_par_iter().map(f).collect();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn pdl_suite(o: &SuiteOptions) -> Result<Vec<TheoryReport>> {
    par_collect(o.n_instances, |i| {
        let seed = instance_seed(o.seed, i);
        let alpha = [0.1, 0.5][i % 2];
        let inst = random_instance(seed, 0.9, alpha, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
        let pi = random_policy(&mut rng, inst.mdp.n_states(), inst.mdp.n_actions(), 2.0);
        let fault = o.inject_fault.then_some(0.1);
        Ok(vec![
            with_seed(check_pdl_standard(&inst.mdp, &pi, &inst.behavior)?, seed, None),
            with_seed(checks::pdl_maxent_faulty(&inst.mdp, &pi, &inst.behavior, alpha, fault)?, seed, None),
        ])
    })
}

fn prop1_suite(o: &SuiteOptions) -> Result<Vec<TheoryReport>> {
    par_collect(o.n_instances, |i| {
        let seed = instance_seed(o.seed, i);
        let alpha = [0.1, 1.0][i % 2];
        let inst = random_instance(seed, 0.9, alpha, alpha);
        let grid: Vec<f64> = PROP1_GRID.iter().map(|f| f * alpha).collect();
        Ok(check_prop1(&inst.mdp, &inst.behavior, alpha, &grid)?
            .into_iter()
            .map(|r| with_seed(r, seed, None))
            .collect())
    })
}

/// `(γ, α, λ)` of instance `i` in the theorem suites.
fn theorem_setting(i: usize) -> (f64, f64, f64) {
    let gamma = [0.5, 0.9][i % 2];
    let alpha = [0.1, 1.0][(i / 2) % 2];
    let lambda = LAMBDA_FACTORS[(i / 4) % LAMBDA_FACTORS.len()] * alpha;
    (gamma, alpha, lambda)
}

fn thm1_suite(o: &SuiteOptions) -> Result<Vec<TheoryReport>> {
    par_collect(o.n_instances, |i| {
        let seed = instance_seed(o.seed, i);
        let (gamma, alpha, lambda) = theorem_setting(i);
        let inst = random_instance(seed, gamma, alpha, lambda);
        Ok(vec![with_seed(check_theorem1(&inst.mdp, &inst.behavior, alpha, lambda)?, seed, None)])
    })
}

/// Policy under test for theorem-2 instance `i`: a briefly trained tabular
/// learner, a random perturbation of `π_β`, or the maximizer itself.
fn theta_policy(inst: &Instance, i: usize) -> Result<(TabularPolicy, &'static str)> {
    match i % 3 {
        0 => {
            let data = generate_dataset(&inst.mdp, &inst.behavior, 1000, 50, inst.seed)?;
            let config = AcpoConfig {
                alpha: inst.alpha,
                gamma: inst.mdp.gamma(),
                lambda_init: inst.lambda,
                lr_actor: 0.05,
                lr_critic: 0.1,
                eta_lambda: 1e-3,
                batch_size: 32,
                n_steps: 200,
                seed: inst.seed,
                ..Default::default()
            };
            let mut trainer = AcpoTrainer::new(config, &data)?;
            for _ in 0..200 {
                trainer.step();
            }
            Ok((trainer.policy(), "trained"))
        }
        1 => {
            let mut rng = ChaCha8Rng::seed_from_u64(inst.seed ^ 0xBEEF);
            let noise = random_policy(&mut rng, inst.mdp.n_states(), inst.mdp.n_actions(), 1.0);
            let logits = inst.behavior.probs().mapv(f64::ln) + noise.probs().mapv(f64::ln);
            Ok((TabularPolicy::from_logits(logits)?, "perturbed"))
        }
        _ => {
            let model = BehaviorModel::new(&inst.mdp, &inst.behavior, inst.alpha)?;
            Ok((model.maximizer(&inst.behavior, inst.lambda, FVariant::Standard)?, "maximizer"))
        }
    }
}

fn thm2_suite(o: &SuiteOptions) -> Result<Vec<TheoryReport>> {
    par_collect(o.n_instances, |i| {
        let seed = instance_seed(o.seed, i);
        let (gamma, alpha, lambda) = theorem_setting(i);
        let inst = random_instance(seed, gamma, alpha, lambda);
        let (theta, source) = theta_policy(&inst, i)?;
        FVariant::BOTH
            .iter()
            .map(|&v| {
                let r = check_theorem2(&inst.mdp, &inst.behavior, &theta, alpha, lambda, v)?;
                Ok(with_seed(r, seed, Some(source)))
            })
            .collect()
    })
}

fn bounds_suite(o: &SuiteOptions) -> Result<Vec<TheoryReport>> {
    par_collect(o.n_instances, |i| {
        let seed = instance_seed(o.seed, i);
        let gamma = [0.5, 0.9][i % 2];
        let alpha = [0.1, 1.0][(i / 2) % 2];
        let inst = random_instance(seed, gamma, alpha, alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB0B);
        let pi = random_policy(&mut rng, inst.mdp.n_states(), inst.mdp.n_actions(), 2.0);
        Ok(vec![
            with_seed(check_occupancy_bound(&inst.mdp, &pi, &inst.behavior)?, seed, None),
            with_seed(check_advantage_bound(&inst.mdp, &pi, alpha, -10.0, 0.0)?, seed, None),
        ])
    })
}

/// Runs one suite (or all of them, in the order pdl, prop1, thm1, thm2,
/// bounds). Output is identical for identical options.
pub fn run_suite(suite: Suite, options: &SuiteOptions) -> Result<Vec<TheoryReport>> {
    match suite {
        Suite::Pdl => pdl_suite(options),
        Suite::Prop1 => prop1_suite(options),
        Suite::Thm1 => thm1_suite(options),
        Suite::Thm2 => thm2_suite(options),
        Suite::Bounds => bounds_suite(options),
        Suite::All => {
            let mut all = Vec::new();
            for s in [Suite::Pdl, Suite::Prop1, Suite::Thm1, Suite::Thm2, Suite::Bounds] {
                all.extend(run_suite(s, options)?);
            }
            Ok(all)
        }
    }
}

/// Per-check aggregate of a report list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub check: String,
    pub count: usize,
    pub failures: usize,
    /// Largest error for equalities, smallest slack for inequalities.
    pub worst: f64,
    /// Median slack, for spotting trends.
    pub median_slack: f64,
}

/// Summaries in order of first appearance.
pub fn summarize(reports: &[TheoryReport]) -> Vec<CheckSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in reports {
        if !names.contains(&r.check.as_str()) {
            names.push(&r.check);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let group: Vec<&TheoryReport> = reports.iter().filter(|r| r.check == name).collect();
            let mut slacks: Vec<f64> = group.iter().map(|r| r.slack).collect();
            slacks.sort_by(f64::total_cmp);
            let worst = match group[0].kind {
                CheckKind::Equality => *slacks.last().unwrap(),
                CheckKind::Inequality => slacks[0],
            };
            CheckSummary {
                check: name.to_owned(),
                count: group.len(),
                failures: group.iter().filter(|r| !r.pass).count(),
                worst,
                median_slack: slacks[slacks.len() / 2],
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for name in Suite::NAMES {
            assert_eq!(name.parse::<Suite>().unwrap().to_string(), name);
        }
        assert!("pdll".parse::<Suite>().is_err());
    }

    #[test]
    fn small_suites_pass_and_repeat() {
        let o = SuiteOptions::new(6, 3);
        let a = run_suite(Suite::All, &o).unwrap();
        assert!(a.iter().all(|r| r.pass), "{:?}", a.iter().find(|r| !r.pass));
        assert_eq!(a, run_suite(Suite::All, &o).unwrap());
    }

    #[test]
    fn injected_fault_fails() {
        let o = SuiteOptions { inject_fault: true, ..SuiteOptions::new(4, 1) };
        assert!(run_suite(Suite::Pdl, &o).unwrap().iter().any(|r| !r.pass));
    }

    #[test]
    fn reports_serialize_losslessly() {
        let reports = run_suite(Suite::Thm1, &SuiteOptions::new(3, 9)).unwrap();
        let json = serde_json::to_string(&reports).unwrap();
        assert_eq!(serde_json::from_str::<Vec<TheoryReport>>(&json).unwrap(), reports);
    }

    #[test]
    fn summary_counts() {
        let reports = run_suite(Suite::Bounds, &SuiteOptions::new(5, 2)).unwrap();
        let s = summarize(&reports);
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|c| c.count == 5 && c.failures == 0 && c.worst >= 0.0));
    }
}
