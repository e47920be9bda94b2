use ndarray::{Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::TabularMdp;

fn dirichlet_ones<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Random MDP with Dirichlet(1) transition rows, rewards uniform in
/// `[-1, 1]` and a Dirichlet(1) initial distribution.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_mdp_with(&mut rng, n_states, n_actions, gamma)
}

pub(crate) fn random_mdp_with<R: Rng>(rng: &mut R, n_states: usize, n_actions: usize, gamma: f64) -> TabularMdp {
    let mut transition = Array3::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            for (s2, p) in dirichlet_ones(rng, n_states).into_iter().enumerate() {
                transition[[s, a, s2]] = p;
            }
        }
    }
    let reward = Array2::from_shape_fn((n_states, n_actions), |_| rng.random_range(-1.0..=1.0));
    let initial = Array1::from(dirichlet_ones(rng, n_states));
    renormalized(transition, reward, gamma, initial)
}

/// Dirichlet draws sum to one only up to round-off; fix the last entry so
/// every row passes the `1e-12` simplex check.
fn renormalized(mut transition: Array3<f64>, reward: Array2<f64>, gamma: f64, mut initial: Array1<f64>) -> TabularMdp {
    let (ns, na, _) = transition.dim();
    for s in 0..ns {
        for a in 0..na {
            let mut row = transition.slice_mut(ndarray::s![s, a, ..]);
            let total: f64 = row.sum();
            row /= total;
        }
    }
    let total = initial.sum();
    initial /= total;
    TabularMdp::new(transition, reward, gamma, initial).expect("generator produced an invalid MDP")
}

/// `n`-state chain. Action 0 steps left, action 1 steps right, the last
/// state is absorbing and entering it pays `+1`. Episodes start in state 0.
pub fn chain(n: usize, gamma: f64) -> TabularMdp {
    assert!(n >= 1, "chain needs at least one state");
    let last = n - 1;
    let mut transition = Array3::zeros((n, 2, n));
    let mut reward = Array2::zeros((n, 2));
    for s in 0..n {
        if s == last {
            transition[[s, 0, s]] = 1.0;
            transition[[s, 1, s]] = 1.0;
            continue;
        }
        transition[[s, 0, s.saturating_sub(1)]] = 1.0;
        transition[[s, 1, s + 1]] = 1.0;
        if s + 1 == last {
            reward[[s, 1]] = 1.0;
        }
    }
    let mut initial = Array1::zeros(n);
    initial[0] = 1.0;
    TabularMdp::new(transition, reward, gamma, initial).expect("chain is valid")
}

/// Rectangular gridworld with four moves (up, right, down, left).
///
/// The start is the top-left cell and the goal the bottom-right cell. Every
/// move costs `step_reward`, a move that lands on the goal pays
/// `goal_reward` instead, and the goal is absorbing with zero reward.
/// With probability `slip` the move is replaced by a uniformly random one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    pub gamma: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub slip: f64,
}

impl GridWorld {
    pub fn new(width: usize, height: usize, gamma: f64) -> Self {
        GridWorld {
            width,
            height,
            gamma,
            step_reward: -0.01,
            goal_reward: 1.0,
            slip: 0.0,
        }
    }

    pub fn with_slip(mut self, slip: f64) -> Self {
        self.slip = slip;
        self
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn goal(&self) -> usize {
        self.n_states() - 1
    }

    fn step(&self, s: usize, a: usize) -> usize {
        let (x, y) = (s % self.width, s / self.width);
        let (nx, ny) = match a {
            0 => (x, y.saturating_sub(1)),
            1 => ((x + 1).min(self.width - 1), y),
            2 => (x, (y + 1).min(self.height - 1)),
            _ => (x.saturating_sub(1), y),
        };
        ny * self.width + nx
    }

    pub fn build(&self) -> TabularMdp {
        assert!(self.width >= 1 && self.height >= 1 && self.n_states() >= 2, "gridworld needs two cells");
        let n = self.n_states();
        let goal = self.goal();
        let mut transition = Array3::zeros((n, 4, n));
        let mut reward = Array2::zeros((n, 4));
        for s in 0..n {
            for a in 0..4 {
                if s == goal {
                    transition[[s, a, s]] = 1.0;
                    continue;
                }
                for b in 0..4 {
                    let p = if a == b { 1.0 - self.slip } else { 0.0 } + self.slip / 4.0;
                    transition[[s, a, self.step(s, b)]] += p;
                }
                let p_goal = transition[[s, a, goal]];
                reward[[s, a]] = p_goal * self.goal_reward + (1.0 - p_goal) * self.step_reward;
            }
        }
        let mut initial = Array1::zeros(n);
        initial[0] = 1.0;
        TabularMdp::new(transition, reward, self.gamma, initial).expect("gridworld is valid")
    }
}

/// Deterministic `width × height` gridworld with the default rewards.
pub fn gridworld(width: usize, height: usize, gamma: f64) -> TabularMdp {
    GridWorld::new(width, height, gamma).build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_mdp_is_seeded() {
        assert_eq!(random_mdp(4, 3, 0.9, 5), random_mdp(4, 3, 0.9, 5));
        assert_ne!(random_mdp(4, 3, 0.9, 5), random_mdp(4, 3, 0.9, 6));
    }

    #[test]
    fn gridworld_layout() {
        let g = GridWorld::new(5, 5, 0.99);
        let mdp = g.build();
        assert_eq!(mdp.n_states(), 25);
        assert_eq!(mdp.n_actions(), 4);
        assert!(mdp.is_absorbing(24));
        assert!(!mdp.is_absorbing(0));
        // Right from the cell left of the goal lands on the goal.
        assert_eq!(mdp.transition()[[23, 1, 24]], 1.0);
        assert_eq!(mdp.reward()[[23, 1]], 1.0);
        assert_eq!(mdp.reward()[[0, 1]], -0.01);
        assert_eq!(mdp.reward()[[24, 0]], 0.0);
        // Bumping into the wall stays put.
        assert_eq!(mdp.transition()[[0, 0, 0]], 1.0);
    }

    #[test]
    fn slippery_rows_are_stochastic() {
        let mdp = GridWorld::new(3, 2, 0.9).with_slip(0.2).build();
        assert!(mdp.transition()[[0, 1, 1]] > 0.8);
    }
}
