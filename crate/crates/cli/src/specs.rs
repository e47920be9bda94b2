//! Parsing of the `--mdp` and `--behavior` spec strings.
//!
//! MDPs: `gridworld:WxH`, `chain:N`, `random:SxA`, or a path to a JSON
//! document. Generator specs take trailing `key=value` options separated by
//! colons, e.g. `random:6x3:seed=4:gamma=0.9` or `gridworld:5x5:slip=0.1`.
//!
//! Behaviors: `uniform`, `eps-greedy:E` (over the optimal actions) and
//! `random[:seed=K][:spread=X]` (softmax of uniform logits).

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use cci_lab::mdp::{chain, greedy_actions, optimal_q, random_mdp, GridWorld, MdpDocument, TabularMdp, TabularPolicy};
use cci_lab::theory::random_policy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub enum MdpKind {
    Gridworld { width: usize, height: usize, slip: f64 },
    Chain { n: usize },
    Random { n_states: usize, n_actions: usize, seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    pub kind: MdpKind,
    /// Overrides the default discount; ignored for files unless given.
    pub gamma: Option<f64>,
    raw: String,
}

fn dims(s: &str) -> anyhow::Result<(usize, usize)> {
    let (a, b) = s.split_once('x').with_context(|| format!("expected AxB, got '{s}'"))?;
    Ok((a.parse()?, b.parse()?))
}

/// Splits `key=value` options, rejecting keys outside `allowed`.
fn options<'a>(parts: &[&'a str], allowed: &[&str]) -> anyhow::Result<Vec<(&'a str, &'a str)>> {
    parts
        .iter()
        .map(|p| {
            let (k, v) = p.split_once('=').with_context(|| format!("expected key=value, got '{p}'"))?;
            if !allowed.contains(&k) {
                bail!("unknown option '{k}' (allowed: {})", allowed.join(", "));
            }
            Ok((k, v))
        })
        .collect()
}

impl FromStr for MdpSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let mut gamma = None;
        let mut seed = 0;
        let mut slip = 0.0;
        let head = parts[0];
        let kind = match head {
            "gridworld" | "chain" | "random" => {
                let shape = parts.get(1).with_context(|| format!("'{head}' needs a size, e.g. {head}:5x5"))?;
                for (k, v) in options(&parts[2..], &["gamma", "seed", "slip"])? {
                    match k {
                        "gamma" => gamma = Some(v.parse().with_context(|| format!("bad gamma '{v}'"))?),
                        "seed" => seed = v.parse().with_context(|| format!("bad seed '{v}'"))?,
                        _ => slip = v.parse().with_context(|| format!("bad slip '{v}'"))?,
                    }
                }
                match head {
                    "gridworld" => {
                        let (width, height) = dims(shape)?;
                        MdpKind::Gridworld { width, height, slip }
                    }
                    "chain" => MdpKind::Chain { n: shape.parse().with_context(|| format!("bad chain length '{shape}'"))? },
                    _ => {
                        let (n_states, n_actions) = dims(shape)?;
                        MdpKind::Random { n_states, n_actions, seed }
                    }
                }
            }
            _ if s.ends_with(".json") => MdpKind::File(PathBuf::from(s)),
            _ => bail!("unknown MDP spec '{s}' (expected gridworld:WxH, chain:N, random:SxA or a .json path)"),
        };
        if let MdpKind::Gridworld { width: 0, .. } | MdpKind::Gridworld { height: 0, .. } | MdpKind::Chain { n: 0 } = kind {
            bail!("MDP spec '{s}' has an empty dimension");
        }
        if let MdpKind::Random { n_states, n_actions, .. } = kind {
            if n_states == 0 || n_actions == 0 {
                bail!("MDP spec '{s}' has an empty dimension");
            }
        }
        Ok(MdpSpec { kind, gamma, raw: s.to_owned() })
    }
}

impl fmt::Display for MdpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.raw)
    }
}

impl MdpSpec {
    pub fn build(&self) -> anyhow::Result<TabularMdp> {
        let gamma = self.gamma.unwrap_or(DEFAULT_GAMMA);
        let mdp = match &self.kind {
            MdpKind::Gridworld { width, height, slip } => {
                GridWorld::new(*width, *height, gamma).with_slip(*slip).build()
            }
            MdpKind::Chain { n } => chain(*n, gamma),
            MdpKind::Random { n_states, n_actions, seed } => random_mdp(*n_states, *n_actions, gamma, *seed),
            MdpKind::File(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let doc: MdpDocument =
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                let mdp = TabularMdp::try_from(doc)?;
                match self.gamma {
                    Some(g) => mdp.with_gamma(g)?,
                    None => mdp,
                }
            }
        };
        Ok(mdp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BehaviorSpec {
    Uniform,
    EpsGreedy(f64),
    Random { seed: u64, spread: f64 },
}

impl FromStr for BehaviorSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts[0] {
            "uniform" if parts.len() == 1 => Ok(BehaviorSpec::Uniform),
            "eps-greedy" if parts.len() == 2 => {
                let eps: f64 = parts[1].parse().with_context(|| format!("bad epsilon '{}'", parts[1]))?;
                if !(0.0..=1.0).contains(&eps) {
                    bail!("epsilon must lie in [0, 1], got {eps}");
                }
                Ok(BehaviorSpec::EpsGreedy(eps))
            }
            "random" => {
                let (mut seed, mut spread) = (0, 2.0);
                for (k, v) in options(&parts[1..], &["seed", "spread"])? {
                    match k {
                        "seed" => seed = v.parse().with_context(|| format!("bad seed '{v}'"))?,
                        _ => spread = v.parse().with_context(|| format!("bad spread '{v}'"))?,
                    }
                }
                Ok(BehaviorSpec::Random { seed, spread })
            }
            _ => bail!("unknown behavior spec '{s}' (expected uniform, eps-greedy:E or random[:seed=K])"),
        }
    }
}

impl fmt::Display for BehaviorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BehaviorSpec::Uniform => f.write_str("uniform"),
            BehaviorSpec::EpsGreedy(e) => write!(f, "eps-greedy:{e}"),
            BehaviorSpec::Random { seed, spread } => write!(f, "random:seed={seed}:spread={spread}"),
        }
    }
}

impl BehaviorSpec {
    pub fn build(&self, mdp: &TabularMdp) -> anyhow::Result<TabularPolicy> {
        let (ns, na) = (mdp.n_states(), mdp.n_actions());
        Ok(match self {
            BehaviorSpec::Uniform => TabularPolicy::uniform(ns, na),
            BehaviorSpec::EpsGreedy(eps) => {
                TabularPolicy::epsilon_greedy(&greedy_actions(&optimal_q(mdp, 1e-10)), na, *eps)?
            }
            BehaviorSpec::Random { seed, spread } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                random_policy(&mut rng, ns, na, *spread)
            }
        })
    }
}
