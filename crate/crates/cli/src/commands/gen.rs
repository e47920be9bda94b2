use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::Context;
use cci_lab::data::generate_dataset;
use serde::Serialize;

use crate::output::Manifest;
use crate::{GenArgs, Outcome};

#[derive(Debug, Serialize)]
struct GenConfig {
    mdp: String,
    behavior: String,
    n: usize,
    horizon: usize,
    seed: u64,
}

pub fn run(args: &GenArgs) -> anyhow::Result<Outcome> {
    let mdp = args.mdp.build()?;
    let behavior = args.behavior.build(&mdp)?;
    let data = generate_dataset(&mdp, &behavior, args.n, args.horizon, args.seed)?
        .with_ids(args.mdp.to_string(), args.behavior.to_string());

    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    data.write_jsonl(BufWriter::new(file))?;

    let config = GenConfig {
        mdp: args.mdp.to_string(),
        behavior: args.behavior.to_string(),
        n: args.n,
        horizon: args.horizon,
        seed: args.seed,
    };
    let mut manifest_path = args.out.clone().into_os_string();
    manifest_path.push(".manifest.json");
    Manifest::new("gen", args.seed, &config)?.output(&args.out).write(&PathBuf::from(manifest_path))?;

    println!(
        "wrote {} transitions ({} trajectories, {} of {} states visited) to {}",
        data.len(),
        data.meta.n_trajectories,
        data.states_visited(),
        mdp.n_states(),
        args.out.display()
    );
    Ok(Outcome::Success)
}
