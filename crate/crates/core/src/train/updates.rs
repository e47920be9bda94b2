//! One-step updates of the tabular learner. Every update computes the full
//! batch gradient at the current parameters and then applies it, so a batch
//! entry contributes one per-sample SGD step.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cci::{cci_weight, CciParams};
use crate::data::{sample_index, Transition};
use crate::mdp::{from_rows, rows};
use crate::prob::{softmax, LogClip};
use crate::error::Result;

/// Twin critics, their targets and the state-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticSet {
    pub q1: Array2<f64>,
    pub q2: Array2<f64>,
    pub q1_target: Array2<f64>,
    pub q2_target: Array2<f64>,
    pub v: Array1<f64>,
}

impl CriticSet {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        let z = Array2::zeros((n_states, n_actions));
        CriticSet {
            q1: z.clone(),
            q2: z.clone(),
            q1_target: z.clone(),
            q2_target: z,
            v: Array1::zeros(n_states),
        }
    }

    #[inline]
    pub fn min_q(&self, s: usize, a: usize) -> f64 {
        self.q1[[s, a]].min(self.q2[[s, a]])
    }

    #[inline]
    pub fn min_q_target(&self, s: usize, a: usize) -> f64 {
        self.q1_target[[s, a]].min(self.q2_target[[s, a]])
    }

    /// `min(q1, q2)(s, a) − v(s)`.
    #[inline]
    pub fn advantage(&self, s: usize, a: usize) -> f64 {
        self.min_q(s, a) - self.v[s]
    }

    pub fn advantage_table(&self) -> Array2<f64> {
        Array2::from_shape_fn(self.q1.dim(), |(s, a)| self.advantage(s, a))
    }
}

/// JSON layout of a [`CriticSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticDocument {
    pub q1: Vec<Vec<f64>>,
    pub q2: Vec<Vec<f64>>,
    pub q1_target: Vec<Vec<f64>>,
    pub q2_target: Vec<Vec<f64>>,
    pub v: Vec<f64>,
}

impl From<&CriticSet> for CriticDocument {
    fn from(c: &CriticSet) -> Self {
        CriticDocument {
            q1: rows(&c.q1),
            q2: rows(&c.q2),
            q1_target: rows(&c.q1_target),
            q2_target: rows(&c.q2_target),
            v: c.v.to_vec(),
        }
    }
}

impl TryFrom<&CriticDocument> for CriticSet {
    type Error = crate::Error;

    fn try_from(d: &CriticDocument) -> Result<Self> {
        Ok(CriticSet {
            q1: from_rows(&d.q1)?,
            q2: from_rows(&d.q2)?,
            q1_target: from_rows(&d.q1_target)?,
            q2_target: from_rows(&d.q2_target)?,
            v: Array1::from(d.v.clone()),
        })
    }
}

/// Row-softmax of a logit table.
pub fn policy_probs(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = Array2::zeros(logits.dim());
    for (s, row) in logits.rows().into_iter().enumerate() {
        p.row_mut(s).assign(&Array1::from(softmax(&row.to_vec())));
    }
    p
}

/// Value regression towards `Y = min_i Q'_i(s, ã) − α log π_θ(ã|s)` with one
/// fresh `ã ∼ π_θ(·|s)` per batch entry, read from the target critics.
pub fn update_value<R: Rng>(
    critics: &mut CriticSet,
    policy: &Array2<f64>,
    batch: &[Transition],
    alpha: f64,
    lr: f64,
    log_clip: LogClip,
    rng: &mut R,
) {
    let mut grad = Array1::<f64>::zeros(critics.v.len());
    for t in batch {
        let a = sample_index(rng, policy.row(t.s).iter().copied());
        let target = critics.min_q_target(t.s, a) - alpha * log_clip.log(policy[[t.s, a]]);
        grad[t.s] += critics.v[t.s] - target;
    }
    critics.v.scaled_add(-lr, &grad);
}

fn td_step(q: &mut Array2<f64>, v: &Array1<f64>, batch: &[Transition], gamma: f64, lr: f64) {
    let mut grad = Array2::<f64>::zeros(q.dim());
    for t in batch {
        let bootstrap = if t.terminal { 0.0 } else { gamma * v[t.s_next] };
        grad[[t.s, t.a]] += q[[t.s, t.a]] - (t.r + bootstrap);
    }
    q.scaled_add(-lr, &grad);
}

/// TD regression of both critics towards `r + γ v(s')` on the whole batch.
pub fn update_q(critics: &mut CriticSet, batch: &[Transition], gamma: f64, lr: f64) {
    td_step(&mut critics.q1, &critics.v, batch, gamma, lr);
    td_step(&mut critics.q2, &critics.v, batch, gamma, lr);
}

/// Like [`update_q`], but `q1` sees the first half of the batch and `q2`
/// the second half.
pub fn update_q_halves(critics: &mut CriticSet, batch: &[Transition], gamma: f64, lr: f64) {
    let (first, second) = batch.split_at(batch.len().div_ceil(2));
    td_step(&mut critics.q1, &critics.v, first, gamma, lr);
    let second = if second.is_empty() { first } else { second };
    td_step(&mut critics.q2, &critics.v, second, gamma, lr);
}

/// Projected dual variable with its update history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: f64,
    pub eta_lambda: f64,
    pub epsilon: f64,
    /// `(step, lambda after the update, constraint estimate)`.
    pub trace: Vec<(usize, f64, f64)>,
}

impl DualState {
    pub fn new(lambda: f64, eta_lambda: f64, epsilon: f64) -> Self {
        DualState { lambda, eta_lambda, epsilon, trace: Vec::new() }
    }

    /// `λ ← max(0, λ − η (g − ε))`; returns the new `λ`.
    pub fn update(&mut self, step: usize, constraint: f64) -> f64 {
        self.lambda = (self.lambda - self.eta_lambda * (constraint - self.epsilon)).max(0.0);
        self.trace.push((step, self.lambda, constraint));
        self.lambda
    }
}

/// Functional form of [`DualState::update`].
pub fn update_dual(dual: &DualState, step: usize, constraint: f64) -> DualState {
    let mut next = dual.clone();
    next.update(step, constraint);
    next
}

/// Batch estimate of `E_{s∼D, a∼π_θ}[log π_β(a|s)]` from one sampled action
/// per batch state.
pub fn sampled_constraint<R: Rng>(policy: &Array2<f64>, log_pb: &Array2<f64>, batch: &[Transition], rng: &mut R) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|t| log_pb[[t.s, sample_index(rng, policy.row(t.s).iter().copied())]])
        .sum();
    total / batch.len() as f64
}

/// Exact inner expectation averaged over the batch states.
pub fn exact_constraint(policy: &Array2<f64>, log_pb: &Array2<f64>, batch: &[Transition]) -> f64 {
    let total: f64 = batch.iter().map(|t| policy.row(t.s).dot(&log_pb.row(t.s))).sum();
    total / batch.len() as f64
}

/// CCI weight of every batch entry under the current critics.
pub fn batch_weights(batch: &[Transition], critics: &CriticSet, log_pb: &Array2<f64>, params: &CciParams) -> Vec<f64> {
    batch
        .iter()
        .map(|t| cci_weight(critics.advantage(t.s, t.a), log_pb[[t.s, t.a]], params))
        .collect()
}

/// `Σ_i w_i log π_θ(a_i|s_i)`.
pub fn policy_objective(logits: &Array2<f64>, batch: &[Transition], weights: &[f64]) -> f64 {
    let probs = policy_probs(logits);
    batch
        .iter()
        .zip(weights)
        .map(|(t, w)| w * probs[[t.s, t.a]].ln())
        .sum()
}

/// Gradient of [`policy_objective`] with respect to the logits:
/// `Σ_i w_i (e_{a_i} − π_θ(·|s_i))` on row `s_i`.
pub fn policy_gradient(logits: &Array2<f64>, batch: &[Transition], weights: &[f64]) -> Array2<f64> {
    let probs = policy_probs(logits);
    let mut grad = Array2::<f64>::zeros(logits.dim());
    for (t, &w) in batch.iter().zip(weights) {
        let mut row = grad.row_mut(t.s);
        row.scaled_add(-w, &probs.row(t.s));
        row[t.a] += w;
    }
    grad
}

/// Weighted-likelihood ascent step on the logits.
pub fn update_policy(
    logits: &mut Array2<f64>,
    batch: &[Transition],
    critics: &CriticSet,
    log_pb: &Array2<f64>,
    params: &CciParams,
    lr: f64,
) {
    let weights = batch_weights(batch, critics, log_pb, params);
    let grad = policy_gradient(logits, batch, &weights);
    logits.scaled_add(lr, &grad);
}

/// `target ← (1 − τ) target + τ online` for both critics.
pub fn soft_update_targets(critics: &mut CriticSet, tau: f64) {
    critics.q1_target *= 1.0 - tau;
    critics.q1_target.scaled_add(tau, &critics.q1);
    critics.q2_target *= 1.0 - tau;
    critics.q2_target.scaled_add(tau, &critics.q2);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(s: usize, a: usize, r: f64, s_next: usize, terminal: bool) -> Transition {
        Transition { s, a, r, s_next, terminal }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn value_step_examples() {
        let det = array![[1.0, 0.0]];
        let mut c = CriticSet::zeros(1, 2);
        c.q1_target[[0, 0]] = 1.0;
        c.q2_target[[0, 0]] = 1.0;
        update_value(&mut c, &det, &[tr(0, 0, 0.0, 0, false)], 0.0, 0.1, LogClip::default(), &mut rng());
        assert_abs_diff_eq!(c.v[0], 0.1, epsilon = 1e-15);

        c.v[0] = 1.0;
        update_value(&mut c, &det, &[tr(0, 0, 0.0, 0, false)], 0.0, 0.1, LogClip::default(), &mut rng());
        assert_eq!(c.v[0], 1.0);

        // Clipped double Q: the smaller critic is the target.
        let mut c = CriticSet::zeros(1, 2);
        c.q1_target[[0, 0]] = 1.0;
        c.q2_target[[0, 0]] = 2.0;
        update_value(&mut c, &det, &[tr(0, 0, 0.0, 0, false)], 0.0, 1.0, LogClip::default(), &mut rng());
        assert_eq!(c.v[0], 1.0);
    }

    #[test]
    fn q_step_examples() {
        let mut c = CriticSet::zeros(2, 1);
        update_q(&mut c, &[tr(0, 0, 1.0, 1, true)], 0.5, 1.0);
        assert_eq!(c.q1[[0, 0]], 1.0);
        assert_eq!(c.q2[[0, 0]], 1.0);

        let mut c = CriticSet::zeros(2, 1);
        c.v[1] = 2.0;
        update_q(&mut c, &[tr(0, 0, 0.0, 1, false)], 0.5, 0.1);
        assert_abs_diff_eq!(c.q1[[0, 0]], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn td_recursion_converges_on_one_state() {
        // r = 1, γ = 0.5, v kept consistent with q: fixed point 2.
        let mut c = CriticSet::zeros(1, 1);
        let batch = [tr(0, 0, 1.0, 0, false)];
        for _ in 0..2000 {
            update_q(&mut c, &batch, 0.5, 0.5);
            c.v[0] = c.q1[[0, 0]];
        }
        assert_abs_diff_eq!(c.q1[[0, 0]], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn halves_update_distinct_critics() {
        let mut c = CriticSet::zeros(2, 2);
        update_q_halves(&mut c, &[tr(0, 0, 1.0, 0, true), tr(1, 1, 1.0, 1, true)], 0.9, 1.0);
        assert_eq!((c.q1[[0, 0]], c.q1[[1, 1]]), (1.0, 0.0));
        assert_eq!((c.q2[[0, 0]], c.q2[[1, 1]]), (0.0, 1.0));
    }

    #[test]
    fn dual_step_examples() {
        let mut d = DualState::new(0.1, 1e-5, -0.2);
        d.update(1, -5.0);
        assert!((d.lambda - 0.100048).abs() <= 1e-15);

        let mut d = DualState::new(0.0, 1e-5, -0.2);
        d.update(1, 0.0);
        assert_eq!(d.lambda, 0.0);

        let d = update_dual(&DualState::new(0.3, 1e-2, -1.0), 1, -1.0);
        assert_eq!(d.lambda, 0.3);
        assert_eq!(d.trace, vec![(1, 0.3, -1.0)]);
    }

    #[test]
    fn uniform_data_gives_zero_policy_gradient() {
        let batch: Vec<_> = (0..3).map(|a| tr(0, a, 0.0, 0, false)).collect();
        let grad = policy_gradient(&Array2::zeros((1, 3)), &batch, &[1.0; 3]);
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn positive_weight_raises_taken_action() {
        let mut logits = Array2::zeros((1, 3));
        let critics = CriticSet::zeros(1, 3);
        let log_pb = Array2::from_elem((1, 3), (1.0f64 / 3.0).ln());
        update_policy(&mut logits, &[tr(0, 2, 0.0, 0, false)], &critics, &log_pb, &CciParams::default(), 0.1);
        assert!(policy_probs(&logits)[[0, 2]] > 1.0 / 3.0);
    }

    #[test]
    fn soft_update_examples() {
        let mut c = CriticSet::zeros(1, 1);
        c.q1[[0, 0]] = 2.0;
        soft_update_targets(&mut c, 0.5);
        assert_eq!(c.q1_target[[0, 0]], 1.0);
        soft_update_targets(&mut c, 1.0);
        assert_eq!(c.q1_target[[0, 0]], 2.0);

        // Gap shrinks by (1 − τ) each call.
        let mut c = CriticSet::zeros(1, 1);
        c.q2[[0, 0]] = 1.0;
        let mut gap = 1.0;
        for _ in 0..10 {
            soft_update_targets(&mut c, 0.2);
            gap *= 0.8;
            assert_abs_diff_eq!(1.0 - c.q2_target[[0, 0]], gap, epsilon = 1e-14);
        }
    }

    #[test]
    fn critic_document_round_trip() {
        let mut c = CriticSet::zeros(2, 3);
        c.q1[[1, 2]] = 0.25;
        c.v[0] = -1.5;
        let doc = CriticDocument::from(&c);
        let back = CriticSet::try_from(&serde_json::from_str::<CriticDocument>(&serde_json::to_string(&doc).unwrap()).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
