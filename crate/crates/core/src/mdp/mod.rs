//! Finite MDPs, tabular policies and exact dynamic programming.
//!
//! Everything here is computed by dense linear solves rather than sampling,
//! so downstream identity checks only see floating-point error.

mod eval;
mod generators;

pub use eval::{
    discounted_visitation, evaluate_policy, evaluate_policy_iterative, greedy_actions, max_entropy_return,
    occupancy_return, optimal_q, shape_reward, SoftValues, DEFAULT_TOL,
};
pub use generators::{chain, gridworld, random_mdp, GridWorld};
pub(crate) use generators::random_mdp_with;

use ndarray::{Array1, Array2, Array3, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::prob::{check_simplex, softmax, SIMPLEX_TOL};

/// A finite discounted MDP `⟨S, A, T, r, γ, μ0⟩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// Indexed `(s, a, s')`.
    transition: Array3<f64>,
    /// Indexed `(s, a)`.
    reward: Array2<f64>,
    gamma: f64,
    initial_dist: Array1<f64>,
}

impl TabularMdp {
    pub fn new(
        transition: Array3<f64>,
        reward: Array2<f64>,
        gamma: f64,
        initial_dist: Array1<f64>,
    ) -> Result<Self> {
        let (n_states, n_actions, n_next) = transition.dim();
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("need at least one state and one action".into()));
        }
        if n_next != n_states {
            return Err(shape(format!("transition ({n_states}, {n_actions}, {n_states})"), format!("{:?}", transition.dim())));
        }
        if reward.dim() != (n_states, n_actions) {
            return Err(shape(format!("reward ({n_states}, {n_actions})"), format!("{:?}", reward.dim())));
        }
        if initial_dist.len() != n_states {
            return Err(shape(format!("initial_dist ({n_states})"), initial_dist.len()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidMdp(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = transition.slice(ndarray::s![s, a, ..]);
                check_simplex(row.as_slice().unwrap_or(&row.to_vec()), SIMPLEX_TOL)
                    .map_err(|e| Error::InvalidMdp(format!("transition row ({s}, {a}): {e}")))?;
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp("reward table has non-finite entries".into()));
        }
        check_simplex(&initial_dist.to_vec(), SIMPLEX_TOL)
            .map_err(|e| Error::InvalidMdp(format!("initial_dist: {e}")))?;
        Ok(TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            initial_dist,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn reward(&self) -> &Array2<f64> {
        &self.reward
    }

    pub fn initial_dist(&self) -> &Array1<f64> {
        &self.initial_dist
    }

    /// Next-state distribution `T(·|s, a)`.
    pub fn next_dist(&self, s: usize, a: usize) -> ArrayView1<'_, f64> {
        self.transition.slice(ndarray::s![s, a, ..])
    }

    /// Copy with a different reward table; transitions are shared by value.
    pub fn with_reward(&self, reward: Array2<f64>) -> Result<Self> {
        if reward.dim() != self.reward.dim() {
            return Err(shape(format!("{:?}", self.reward.dim()), format!("{:?}", reward.dim())));
        }
        let mut out = self.clone();
        out.reward = reward;
        Ok(out)
    }

    /// Copy with a different discount.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.transition.clone(), self.reward.clone(), gamma, self.initial_dist.clone())
    }

    /// A state that every action maps back to itself with probability one.
    pub fn is_absorbing(&self, s: usize) -> bool {
        (0..self.n_actions).all(|a| self.transition[[s, a, s]] == 1.0)
    }

    /// `max |r(s, a)|`.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// State-to-state kernel `P_π(s, s') = Σ_a π(a|s) T(s'|s, a)`.
    pub fn state_kernel(&self, policy: &TabularPolicy) -> Array2<f64> {
        let n = self.n_states;
        let mut p = Array2::zeros((n, n));
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = policy.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for s2 in 0..n {
                    p[[s, s2]] += w * self.transition[[s, a, s2]];
                }
            }
        }
        p
    }

    pub(crate) fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(shape(
                format!("policy ({}, {})", self.n_states, self.n_actions),
                format!("({}, {})", policy.n_states(), policy.n_actions()),
            ));
        }
        Ok(())
    }
}

/// On-disk JSON layout of an MDP.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub initial_dist: Vec<f64>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let (ns, na) = (doc.n_states, doc.n_actions);
        if doc.transition.len() != ns || doc.transition.iter().any(|r| r.len() != na || r.iter().any(|x| x.len() != ns)) {
            return Err(shape(format!("transition [{ns}][{na}][{ns}]"), "ragged or resized array"));
        }
        if doc.reward.len() != ns || doc.reward.iter().any(|r| r.len() != na) {
            return Err(shape(format!("reward [{ns}][{na}]"), "ragged or resized array"));
        }
        let flat: Vec<f64> = doc.transition.into_iter().flatten().flatten().collect();
        let transition = Array3::from_shape_vec((ns, na, ns), flat).map_err(|e| Error::InvalidMdp(e.to_string()))?;
        let reward = Array2::from_shape_vec((ns, na), doc.reward.into_iter().flatten().collect())
            .map_err(|e| Error::InvalidMdp(e.to_string()))?;
        TabularMdp::new(transition, reward, doc.gamma, Array1::from(doc.initial_dist))
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(m: TabularMdp) -> Self {
        MdpDocument {
            n_states: m.n_states,
            n_actions: m.n_actions,
            transition: (0..m.n_states)
                .map(|s| (0..m.n_actions).map(|a| m.next_dist(s, a).to_vec()).collect())
                .collect(),
            reward: rows(&m.reward),
            gamma: m.gamma,
            initial_dist: m.initial_dist.to_vec(),
        }
    }
}

/// Per-state action distribution, optionally backed by logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    probs: Array2<f64>,
    logits: Option<Array2<f64>>,
}

impl TabularPolicy {
    pub fn from_probs(probs: Array2<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(Error::InvalidPolicy("empty probability table".into()));
        }
        for (s, row) in probs.rows().into_iter().enumerate() {
            check_simplex(&row.to_vec(), SIMPLEX_TOL)
                .map_err(|e| Error::InvalidPolicy(format!("row {s}: {e}")))?;
        }
        Ok(TabularPolicy { probs, logits: None })
    }

    /// Row-softmax of `logits`; the logits are kept alongside.
    pub fn from_logits(logits: Array2<f64>) -> Result<Self> {
        if logits.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::InvalidPolicy("logits contain NaN or +inf".into()));
        }
        let mut probs = Array2::zeros(logits.dim());
        for (s, row) in logits.rows().into_iter().enumerate() {
            let p = softmax(&row.to_vec());
            if p.iter().any(|x| x.is_nan()) {
                return Err(Error::InvalidPolicy(format!("row {s} has no finite logit")));
            }
            probs.row_mut(s).assign(&Array1::from(p));
        }
        Ok(TabularPolicy { probs, logits: Some(logits) })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        TabularPolicy {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
            logits: None,
        }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidPolicy(format!("action {a} out of range at state {s}")));
            }
            probs[[s, a]] = 1.0;
        }
        Self::from_probs(probs)
    }

    /// `(1 − ε)` on `greedy[s]` plus `ε` spread uniformly over all actions.
    pub fn epsilon_greedy(greedy: &[usize], n_actions: usize, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        let mut probs = Array2::from_elem((greedy.len(), n_actions), epsilon / n_actions as f64);
        for (s, &a) in greedy.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidPolicy(format!("action {a} out of range at state {s}")));
            }
            probs[[s, a]] += 1.0 - epsilon;
        }
        Self::from_probs(probs)
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[[s, a]]
    }

    pub fn row(&self, s: usize) -> ArrayView1<'_, f64> {
        self.probs.row(s)
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn logits(&self) -> Option<&Array2<f64>> {
        self.logits.as_ref()
    }

    /// Maximum over states of the per-state total variation distance.
    pub fn max_tv(&self, other: &TabularPolicy) -> f64 {
        (0..self.n_states())
            .map(|s| crate::prob::total_variation(&self.row(s).to_vec(), &other.row(s).to_vec()))
            .fold(0.0, f64::max)
    }
}

/// Nested-`Vec` view of a table, used by the JSON writers.
pub fn rows(table: &Array2<f64>) -> Vec<Vec<f64>> {
    table.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Inverse of [`rows`].
pub fn from_rows(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(shape(format!("{n} rows of length {m}"), "ragged rows"));
    }
    Array2::from_shape_vec((n, m), rows.iter().flatten().copied().collect())
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_rows_and_discount() {
        let t = Array3::from_shape_vec((1, 1, 1), vec![0.9]).unwrap();
        assert!(TabularMdp::new(t, array![[0.0]], 0.5, array![1.0]).is_err());
        let t = Array3::from_shape_vec((1, 1, 1), vec![1.0]).unwrap();
        assert!(TabularMdp::new(t.clone(), array![[0.0]], 1.0, array![1.0]).is_err());
        assert!(TabularMdp::new(t.clone(), array![[0.0]], 0.5, array![0.5]).is_err());
        assert!(TabularMdp::new(t, array![[0.0]], 0.0, array![1.0]).is_ok());
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let mdp = random_mdp(3, 2, 0.9, 11);
        let text = serde_json::to_string(&mdp).unwrap();
        let back: TabularMdp = serde_json::from_str(&text).unwrap();
        assert_eq!(mdp, back);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<TabularMdp>(v).is_err());
    }

    #[test]
    fn policy_rows_validated() {
        assert!(TabularPolicy::from_probs(array![[0.5, 0.6]]).is_err());
        assert!(TabularPolicy::from_probs(array![[-0.1, 1.1]]).is_err());
        let p = TabularPolicy::from_logits(array![[0.0, f64::NEG_INFINITY], [1.0, 1.0]]).unwrap();
        assert_eq!(p.prob(0, 1), 0.0);
        assert_eq!(p.prob(1, 0), 0.5);
        assert!(TabularPolicy::from_logits(array![[f64::NEG_INFINITY, f64::NEG_INFINITY]]).is_err());
    }

    #[test]
    fn logits_and_probs_agree() {
        let logits = array![[0.3, -1.2, 2.0], [0.0, 0.0, 0.0]];
        let p = TabularPolicy::from_logits(logits.clone()).unwrap();
        for s in 0..2 {
            let z: f64 = logits.row(s).iter().map(|x| x.exp()).sum();
            for a in 0..3 {
                assert!((p.prob(s, a) - logits[[s, a]].exp() / z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn epsilon_greedy_rows() {
        let p = TabularPolicy::epsilon_greedy(&[1, 0], 4, 0.2).unwrap();
        assert!((p.prob(0, 1) - 0.85).abs() < 1e-15);
        assert!((p.prob(0, 0) - 0.05).abs() < 1e-15);
    }
}
