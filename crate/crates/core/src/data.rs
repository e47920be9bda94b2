//! Offline datasets: seeded generation from a behavior policy, count-based
//! behavior estimation, and the JSON-lines file format.
//!
//! File layout: the first line is a [`DatasetMeta`] object, every following
//! line one [`Transition`] with keys `s`, `a`, `r`, `s_next`, `terminal`.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::mdp::{TabularMdp, TabularPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: u64,
    pub mdp_id: String,
    pub behavior_id: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_transitions: usize,
    pub n_trajectories: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub meta: DatasetMeta,
    pub transitions: Vec<Transition>,
}

impl OfflineDataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Overrides the free-form identifiers recorded in the metadata.
    pub fn with_ids(mut self, mdp_id: impl Into<String>, behavior_id: impl Into<String>) -> Self {
        self.meta.mdp_id = mdp_id.into();
        self.meta.behavior_id = behavior_id.into();
        self
    }

    /// Number of distinct states appearing as `s`.
    pub fn states_visited(&self) -> usize {
        let mut seen = vec![false; self.meta.n_states];
        for t in &self.transitions {
            seen[t.s] = true;
        }
        seen.into_iter().filter(|x| *x).count()
    }

    /// Per-`(s, a)` counts of the `s`, `a` fields.
    pub fn action_counts(&self) -> Array2<u64> {
        let mut counts = Array2::zeros((self.meta.n_states, self.meta.n_actions));
        for t in &self.transitions {
            counts[[t.s, t.a]] += 1;
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.meta.n_states, self.meta.n_actions);
        for (i, t) in self.transitions.iter().enumerate() {
            if t.s >= ns || t.s_next >= ns || t.a >= na || !t.r.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "transition {i} references ({}, {}, {}) outside a {ns}x{na} MDP or has a non-finite reward",
                    t.s, t.a, t.s_next
                )));
            }
        }
        if self.meta.n_transitions != self.transitions.len() {
            return Err(shape(self.meta.n_transitions, self.transitions.len()));
        }
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.meta)?;
        out.write_all(b"\n")?;
        for t in &self.transitions {
            serde_json::to_writer(&mut out, t)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("dataset file has no metadata line".into()))??;
        let meta: DatasetMeta = serde_json::from_str(&header)?;
        let mut transitions = Vec::with_capacity(meta.n_transitions);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            transitions.push(serde_json::from_str(&line)?);
        }
        let data = OfflineDataset { meta, transitions };
        data.validate()?;
        Ok(data)
    }
}

/// Inverse-CDF draw from a probability row.
pub(crate) fn sample_index<R: Rng>(rng: &mut R, probs: impl IntoIterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.into_iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Rolls out `behavior` from the initial distribution until `n_transitions`
/// are collected. Episodes end at `horizon` steps (`terminal = false`) or on
/// entering an absorbing state (`terminal = true`).
pub fn generate_dataset(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    n_transitions: usize,
    horizon: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    mdp.check_policy(behavior)?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_transitions);
    let mut n_trajectories = 0;
    while transitions.len() < n_transitions {
        n_trajectories += 1;
        let mut s = sample_index(&mut rng, mdp.initial_dist().iter().copied());
        for _ in 0..horizon {
            let a = sample_index(&mut rng, behavior.row(s).iter().copied());
            let s_next = sample_index(&mut rng, mdp.next_dist(s, a).iter().copied());
            let terminal = mdp.is_absorbing(s_next);
            transitions.push(Transition {
                s,
                a,
                r: mdp.reward()[[s, a]],
                s_next,
                terminal,
            });
            if terminal || transitions.len() == n_transitions {
                break;
            }
            s = s_next;
        }
    }
    Ok(OfflineDataset {
        meta: DatasetMeta {
            seed,
            mdp_id: "unnamed".into(),
            behavior_id: "unnamed".into(),
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            n_transitions,
            n_trajectories,
            horizon,
        },
        transitions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    /// Additive (Dirichlet) pseudo-count per action.
    pub smoothing: f64,
    /// Reject unvisited states when `smoothing == 0` instead of filling
    /// them with the uniform row.
    pub strict: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { smoothing: 0.5, strict: false }
    }
}

/// Maximum-likelihood tabular behavior policy:
/// `(count(s, a) + k) / (count(s) + k · |A|)`, uniform on unvisited states.
pub fn fit_behavior_mle(
    dataset: &OfflineDataset,
    n_states: usize,
    n_actions: usize,
    options: MleOptions,
) -> Result<TabularPolicy> {
    if !(options.smoothing >= 0.0 && options.smoothing.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing must be >= 0, got {}", options.smoothing)));
    }
    let mut counts = Array2::<u64>::zeros((n_states, n_actions));
    for t in &dataset.transitions {
        if t.s >= n_states || t.a >= n_actions {
            return Err(shape(format!("indices below ({n_states}, {n_actions})"), format!("({}, {})", t.s, t.a)));
        }
        counts[[t.s, t.a]] += 1;
    }
    let k = options.smoothing;
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let total: u64 = counts.row(s).sum();
        if total == 0 && k == 0.0 {
            if options.strict {
                return Err(Error::UnvisitedState { state: s });
            }
            probs.row_mut(s).fill(1.0 / n_actions as f64);
            continue;
        }
        let denom = total as f64 + k * n_actions as f64;
        for a in 0..n_actions {
            probs[[s, a]] = (counts[[s, a]] as f64 + k) / denom;
        }
    }
    TabularPolicy::from_probs(probs)
}

/// Empirical distribution of the `s` fields.
pub fn dataset_state_distribution(dataset: &OfflineDataset) -> Result<Array1<f64>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut d = Array1::zeros(dataset.meta.n_states);
    for t in &dataset.transitions {
        d[t.s] += 1.0;
    }
    d /= dataset.len() as f64;
    Ok(d)
}
