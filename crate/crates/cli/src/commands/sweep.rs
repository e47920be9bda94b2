use rayon::prelude::*;
use serde::Serialize;

use super::train::{run_into, RunInputs};
use super::{load_config, load_dataset, resolve_behavior, resolve_mdp};
use crate::output::{config_hash, create_dir, csv_writer, fmt_f64, Manifest};
use crate::{Outcome, SweepArgs};

pub const HEADER: [&str; 12] = [
    "run",
    "seed",
    "alpha",
    "lambda_init",
    "final_lambda",
    "final_constraint",
    "final_J_pi",
    "J_beta",
    "final_return_pi",
    "return_beta",
    "slackness_gap",
    "config_hash",
];

#[derive(Debug, Serialize)]
struct SweepConfig<'a> {
    base: &'a cci_lab::train::AcpoConfig,
    seeds: &'a [u64],
    alphas: &'a [f64],
    lambda_inits: &'a [f64],
    freeze_lambda: bool,
}

/// Runs the grid `alphas × lambda_inits × seeds` in parallel. Run `i`
/// writes to `out/run-iii/`; the summary lists runs in grid order.
pub fn run(args: &SweepArgs) -> anyhow::Result<Outcome> {
    let base = load_config(args.config.as_deref())?;
    let dataset = load_dataset(&args.dataset)?;
    let (spec, mdp) = resolve_mdp(args.mdp.as_ref(), &dataset)?;
    let reference = resolve_behavior(&dataset, &mdp);
    let alphas = if args.alphas.is_empty() { vec![base.alpha] } else { args.alphas.clone() };
    let lambda_inits = if args.lambda_inits.is_empty() { vec![base.lambda_init] } else { args.lambda_inits.clone() };

    let mut grid = Vec::new();
    for &alpha in &alphas {
        for &lambda_init in &lambda_inits {
            for &seed in &args.seeds {
                let mut c = base.clone();
                c.alpha = alpha;
                c.lambda_init = lambda_init;
                c.seed = seed;
                c.freeze_lambda |= args.freeze_lambda;
                c.validate()?;
                grid.push(c);
            }
        }
    }

    create_dir(&args.out)?;
    let inputs = RunInputs {
        dataset: &dataset,
        dataset_path: &args.dataset,
        mdp_spec: spec.to_string(),
        mdp: &mdp,
        reference: reference.as_ref(),
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let results: Vec<_> = pool.install(|| {
        grid.par_iter()
            .enumerate()
            .map(|(i, config)| {
                log::info!("run {i}: alpha {} lambda_init {} seed {}", config.alpha, config.lambda_init, config.seed);
                run_into(&args.out.join(format!("run-{i:03}")), config, &inputs)
            })
            .collect::<anyhow::Result<_>>()
    })?;

    let summary_path = args.out.join("summary.csv");
    let mut w = csv_writer(&summary_path, &HEADER)?;
    for (i, (config, result)) in grid.iter().zip(&results).enumerate() {
        let last = result.evals.last().expect("step 0 is always evaluated");
        w.write_record([
            i.to_string(),
            config.seed.to_string(),
            fmt_f64(config.alpha),
            fmt_f64(config.lambda_init),
            fmt_f64(last.lambda),
            fmt_f64(last.constraint),
            fmt_f64(last.j_pi),
            fmt_f64(last.j_beta),
            fmt_f64(last.return_pi),
            fmt_f64(last.return_beta),
            fmt_f64(result.slackness_gap().unwrap_or(f64::NAN)),
            config_hash(config)?,
        ])?;
    }
    w.flush()?;

    let sweep = SweepConfig {
        base: &base,
        seeds: &args.seeds,
        alphas: &alphas,
        lambda_inits: &lambda_inits,
        freeze_lambda: args.freeze_lambda,
    };
    Manifest::new("sweep", base.seed, &sweep)?
        .input("dataset", args.dataset.display())
        .input("mdp", &spec)
        .output(&summary_path)
        .write(&args.out.join("manifest.json"))?;
    println!("{} runs; summary in {}", grid.len(), summary_path.display());
    Ok(Outcome::Success)
}
