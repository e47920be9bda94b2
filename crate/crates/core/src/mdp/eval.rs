use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use super::{TabularMdp, TabularPolicy};
use crate::error::{Error, Result};
use crate::prob::{xlogx, LogClip};

/// Default residual tolerance for the solvers.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Soft action and state values of a policy at temperature `alpha`.
///
/// `alpha = 0` gives the ordinary `Q^π`, `V^π`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftValues {
    pub q: Array2<f64>,
    pub v: Array1<f64>,
    pub alpha: f64,
}

impl SoftValues {
    /// `A(s, a) = Q(s, a) − V(s)`.
    pub fn advantage(&self) -> Array2<f64> {
        let mut a = self.q.clone();
        for (mut row, v) in a.rows_mut().into_iter().zip(self.v.iter()) {
            row -= *v;
        }
        a
    }

    /// Largest violation of either the soft-consistency or the Bellman
    /// equation over all `(s, a)`.
    pub fn residual(&self, mdp: &TabularMdp, policy: &TabularPolicy) -> f64 {
        let mut worst: f64 = 0.0;
        for s in 0..mdp.n_states() {
            let mut v = 0.0;
            for a in 0..mdp.n_actions() {
                let p = policy.prob(s, a);
                v += p * self.q[[s, a]] - self.alpha * xlogx(p);
                let next = mdp.next_dist(s, a).dot(&self.v);
                let bellman = mdp.reward()[[s, a]] + mdp.gamma() * next;
                worst = worst.max((bellman - self.q[[s, a]]).abs());
            }
            worst = worst.max((v - self.v[s]).abs());
        }
        worst
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be finite and >= 0, got {alpha}")));
    }
    Ok(())
}

/// Expected one-step soft reward `Σ_a π(a|s)(r(s, a) − α log π(a|s))`.
fn soft_reward(mdp: &TabularMdp, policy: &TabularPolicy, alpha: f64) -> Array1<f64> {
    Array1::from_shape_fn(mdp.n_states(), |s| {
        (0..mdp.n_actions())
            .map(|a| {
                let p = policy.prob(s, a);
                p * mdp.reward()[[s, a]] - alpha * xlogx(p)
            })
            .sum()
    })
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Solves `M x = b` with LU and up to a few rounds of iterative refinement.
fn solve(m: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let lu = m.clone().lu();
    let mut x = lu.solve(b).ok_or_else(|| Error::Solver("singular system".into()))?;
    for _ in 0..4 {
        let r = b - m * &x;
        if r.amax() < tol * 1e-2 {
            break;
        }
        let dx = lu.solve(&r).ok_or_else(|| Error::Solver("singular system".into()))?;
        x += dx;
    }
    Ok(x)
}

fn q_from_v(mdp: &TabularMdp, v: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((mdp.n_states(), mdp.n_actions()), |(s, a)| {
        mdp.reward()[[s, a]] + mdp.gamma() * mdp.next_dist(s, a).dot(v)
    })
}

/// Exact soft policy evaluation by a dense solve of
/// `(I − γ P_π) V = Σ_a π (r − α log π)` followed by `Q = r + γ T V`.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    alpha: f64,
    tol: f64,
) -> Result<SoftValues> {
    mdp.check_policy(policy)?;
    check_alpha(alpha)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let n = mdp.n_states();
    let p = mdp.state_kernel(policy);
    let m = DMatrix::identity(n, n) - to_dmatrix(&p) * mdp.gamma();
    let c = soft_reward(mdp, policy, alpha);
    let x = solve(&m, &DVector::from_iterator(n, c.iter().copied()), tol)?;
    let v = Array1::from_iter(x.iter().copied());
    let q = q_from_v(mdp, &v);
    let values = SoftValues { q, v, alpha };
    let res = values.residual(mdp, policy);
    // Residuals scale with the magnitude of the values.
    let scale = values.v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    if res > tol * scale {
        return Err(Error::Solver(format!("residual {res:e} exceeds tolerance {tol:e}")));
    }
    Ok(values)
}

/// Fixed-point iteration on the soft Bellman operator, for instances too
/// large for a dense solve. Stops once the sup-norm update is below
/// `tol · (1 − γ)`, which bounds the distance to the fixed point by `tol`.
pub fn evaluate_policy_iterative(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SoftValues> {
    mdp.check_policy(policy)?;
    check_alpha(alpha)?;
    let c = soft_reward(mdp, policy, alpha);
    let p = mdp.state_kernel(policy);
    let mut v = Array1::zeros(mdp.n_states());
    let threshold = tol * (1.0 - mdp.gamma());
    for _ in 0..max_iter {
        let next = &c + &(p.dot(&v) * mdp.gamma());
        let delta = (&next - &v).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        v = next;
        if delta <= threshold {
            let q = q_from_v(mdp, &v);
            return Ok(SoftValues { q, v, alpha });
        }
    }
    Err(Error::Solver(format!("no convergence within {max_iter} iterations")))
}

/// Discounted state visitation `d_π = (1 − γ) Σ_t γ^t Pr(s_t = ·)`, solved
/// from `(I − γ P_πᵀ) d = (1 − γ) μ0`.
pub fn discounted_visitation(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Array1<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states();
    let p = to_dmatrix(&mdp.state_kernel(policy));
    let m = DMatrix::identity(n, n) - p.transpose() * mdp.gamma();
    let b = DVector::from_iterator(n, mdp.initial_dist().iter().map(|x| x * (1.0 - mdp.gamma())));
    let d = solve(&m, &b, DEFAULT_TOL)?;
    // Round-off can leave entries at -1e-18; clamp them.
    Ok(Array1::from_iter(d.iter().map(|x| x.max(0.0))))
}

/// Occupancy form of the max-entropy return:
/// `(1/(1−γ)) Σ_s d_π(s) Σ_a π(a|s)(r(s, a) − α log π(a|s))`.
pub fn occupancy_return(mdp: &TabularMdp, policy: &TabularPolicy, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let d = discounted_visitation(mdp, policy)?;
    let c = soft_reward(mdp, policy, alpha);
    Ok(d.dot(&c) / (1.0 - mdp.gamma()))
}

/// Max-entropy return `J(π) = E_{s0∼μ0}[V^π(s0)]`, cross-checked against
/// [`occupancy_return`].
pub fn max_entropy_return(mdp: &TabularMdp, policy: &TabularPolicy, alpha: f64) -> Result<f64> {
    let values = evaluate_policy(mdp, policy, alpha, DEFAULT_TOL)?;
    let j = mdp.initial_dist().dot(&values.v);
    let j_occ = occupancy_return(mdp, policy, alpha)?;
    if (j - j_occ).abs() > 1e-8 * j.abs().max(1.0) {
        return Err(Error::Inconsistent(format!(
            "value form {j} and occupancy form {j_occ} of the return disagree"
        )));
    }
    Ok(j)
}

/// Copy of `mdp` with reward `r(s, a) − α · log π_β(a|s)`.
///
/// With `clip = None` a zero behavior probability is an error; with a clip
/// the log-probability is clamped first.
pub fn shape_reward(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    alpha: f64,
    clip: Option<LogClip>,
) -> Result<TabularMdp> {
    mdp.check_policy(behavior)?;
    let mut reward = mdp.reward().clone();
    if alpha == 0.0 {
        return mdp.with_reward(reward);
    }
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let p = behavior.prob(s, a);
            let log_p = match clip {
                Some(c) => c.log(p),
                None if p > 0.0 => p.ln(),
                None => return Err(Error::ZeroProbability { state: s, action: a }),
            };
            reward[[s, a]] -= alpha * log_p;
        }
    }
    mdp.with_reward(reward)
}

/// Optimal standard action values by value iteration, to sup-norm error `tol`.
pub fn optimal_q(mdp: &TabularMdp, tol: f64) -> Array2<f64> {
    let mut v = Array1::<f64>::zeros(mdp.n_states());
    loop {
        let q = q_from_v(mdp, &v);
        let next = Array1::from_iter(q.rows().into_iter().map(|r| r.fold(f64::NEG_INFINITY, |m, x| m.max(*x))));
        let delta = (&next - &v).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        v = next;
        if delta <= tol * (1.0 - mdp.gamma()) {
            return q_from_v(mdp, &v);
        }
    }
}

/// Row-wise argmax of `q`, lowest index on ties.
pub fn greedy_actions(q: &Array2<f64>) -> Vec<usize> {
    q.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
                .0
        })
        .collect()
}
