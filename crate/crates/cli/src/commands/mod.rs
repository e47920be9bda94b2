pub mod gen;
pub mod spectrum;
pub mod sweep;
pub mod train;
pub mod verify;

use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use anyhow::Context;
use cci_lab::data::OfflineDataset;
use cci_lab::mdp::{TabularMdp, TabularPolicy};
use cci_lab::train::AcpoConfig;

use crate::specs::{BehaviorSpec, MdpSpec};

pub fn load_dataset(path: &Path) -> anyhow::Result<OfflineDataset> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    OfflineDataset::read_jsonl(BufReader::new(file)).with_context(|| format!("reading dataset {}", path.display()))
}

/// Reads a config file, reporting every invalid field at once.
pub fn load_config(path: Option<&Path>) -> anyhow::Result<AcpoConfig> {
    let config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => AcpoConfig::default(),
    };
    config.validate().context("invalid config")?;
    Ok(config)
}

/// The evaluation MDP: the explicit spec if given, else the dataset's own.
pub fn resolve_mdp(explicit: Option<&MdpSpec>, dataset: &OfflineDataset) -> anyhow::Result<(MdpSpec, TabularMdp)> {
    let spec = match explicit {
        Some(s) => s.clone(),
        None => dataset.meta.mdp_id.parse().with_context(|| {
            format!("dataset records MDP '{}'; pass --mdp to evaluate on another one", dataset.meta.mdp_id)
        })?,
    };
    let mdp = spec.build()?;
    Ok((spec, mdp))
}

/// The behavior that produced the dataset, when its id is a known spec.
pub fn resolve_behavior(dataset: &OfflineDataset, mdp: &TabularMdp) -> Option<TabularPolicy> {
    let spec: BehaviorSpec = dataset.meta.behavior_id.parse().ok()?;
    spec.build(mdp).ok()
}
