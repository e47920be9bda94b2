use std::path::Path;

use cci_lab::data::OfflineDataset;
use cci_lab::mdp::{TabularMdp, TabularPolicy};
use cci_lab::train::{train, AcpoConfig, TrainResult};

use super::{load_config, load_dataset, resolve_behavior, resolve_mdp};
use crate::output::{create_dir, csv_writer, fmt_f64, write_json, Manifest};
use crate::{Outcome, TrainArgs};

pub const TRACE_HEADER: [&str; 5] = ["step", "lambda", "constraint", "J_pi", "J_beta"];

/// Everything a run needs besides its config.
pub struct RunInputs<'a> {
    pub dataset: &'a OfflineDataset,
    pub dataset_path: &'a Path,
    pub mdp_spec: String,
    pub mdp: &'a TabularMdp,
    pub reference: Option<&'a TabularPolicy>,
}

/// Trains one configuration and writes its trace, per-step dual trace,
/// checkpoint and manifest into `dir`.
pub fn run_into(dir: &Path, config: &AcpoConfig, inputs: &RunInputs<'_>) -> anyhow::Result<TrainResult> {
    create_dir(dir)?;
    let mdp = if inputs.mdp.gamma() == config.gamma {
        inputs.mdp.clone()
    } else {
        log::info!("evaluating with the config discount {} (MDP has {})", config.gamma, inputs.mdp.gamma());
        inputs.mdp.with_gamma(config.gamma)?
    };
    let result = train(config, inputs.dataset, &mdp, inputs.reference)?;

    let trace_path = dir.join("trace.csv");
    let mut trace = csv_writer(&trace_path, &TRACE_HEADER)?;
    for e in &result.evals {
        trace.write_record([e.step.to_string(), fmt_f64(e.lambda), fmt_f64(e.constraint), fmt_f64(e.j_pi), fmt_f64(e.j_beta)])?;
    }
    trace.flush()?;

    let dual_path = dir.join("dual.csv");
    let mut dual = csv_writer(&dual_path, &["step", "lambda", "constraint_estimate"])?;
    for (step, lambda, g) in &result.dual.trace {
        dual.write_record([step.to_string(), fmt_f64(*lambda), fmt_f64(*g)])?;
    }
    dual.flush()?;

    let checkpoint_path = dir.join("checkpoint.json");
    write_json(&checkpoint_path, &result.checkpoint(config))?;

    Manifest::new("train", config.seed, config)?
        .input("dataset", inputs.dataset_path.display())
        .input("mdp", &inputs.mdp_spec)
        .input("behavior", &inputs.dataset.meta.behavior_id)
        .output(&trace_path)
        .output(&dual_path)
        .output(&checkpoint_path)
        .write(&dir.join("manifest.json"))?;
    Ok(result)
}

pub fn run(args: &TrainArgs) -> anyhow::Result<Outcome> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let dataset = load_dataset(&args.dataset)?;
    let (spec, mdp) = resolve_mdp(args.mdp.as_ref(), &dataset)?;
    let reference = resolve_behavior(&dataset, &mdp);
    if reference.is_none() {
        log::warn!("unknown behavior '{}'; J_beta uses the fitted behavior", dataset.meta.behavior_id);
    }
    let inputs = RunInputs {
        dataset: &dataset,
        dataset_path: &args.dataset,
        mdp_spec: spec.to_string(),
        mdp: &mdp,
        reference: reference.as_ref(),
    };
    let result = run_into(&args.out, &config, &inputs)?;
    let last = result.evals.last().expect("step 0 is always evaluated");
    println!(
        "trained {} steps: lambda {:.6}, constraint {:.6}, J_pi {:.6}, J_beta {:.6}; wrote {}",
        result.steps,
        last.lambda,
        last.constraint,
        last.j_pi,
        last.j_beta,
        args.out.display()
    );
    Ok(Outcome::Success)
}
