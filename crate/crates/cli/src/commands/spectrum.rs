use std::path::PathBuf;

use anyhow::bail;
use cci_lab::cci::{spectrum, CciParams, WbcBound};
use cci_lab::data::{dataset_state_distribution, fit_behavior_mle, MleOptions};
use cci_lab::mdp::{evaluate_policy, DEFAULT_TOL};
use serde::Serialize;

use super::{load_dataset, resolve_mdp};
use crate::output::{csv_writer, fmt_f64, Manifest};
use crate::{Outcome, SpectrumArgs};

pub const HEADER: [&str; 5] = ["lambda", "regime", "g", "dg_dlambda", "wbc_threshold"];

#[derive(Debug, Serialize)]
struct SpectrumConfig<'a> {
    alpha: f64,
    lambdas: &'a [f64],
    smoothing: f64,
    delta: f64,
    mdp: String,
}

/// Uses the exact max-ent advantage of the fitted behavior on the MDP and
/// weights states by their frequency in the dataset.
pub fn run(args: &SpectrumArgs) -> anyhow::Result<Outcome> {
    if args.lambdas.is_empty() {
        bail!("lambda grid is empty");
    }
    let mut lambdas = args.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);

    let dataset = load_dataset(&args.dataset)?;
    let (spec, mdp) = resolve_mdp(args.mdp.as_ref(), &dataset)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let behavior = fit_behavior_mle(&dataset, ns, na, MleOptions { smoothing: args.smoothing, strict: false })?;
    let params = CciParams::new(args.alpha, 0.0)?;
    let advantage = evaluate_policy(&mdp, &behavior, args.alpha, DEFAULT_TOL)?.advantage();
    let weights = dataset_state_distribution(&dataset)?;

    let counts = dataset.action_counts();
    let c_beta_min = counts
        .indexed_iter()
        .filter(|(_, &c)| c > 0)
        .map(|((s, a), _)| params.log_clip.log(behavior.prob(s, a)).abs())
        .fold(f64::INFINITY, f64::min);
    let bound = WbcBound {
        r_max: mdp.r_max(),
        alpha: args.alpha,
        c_max: params.log_clip.c_max(),
        gamma: mdp.gamma(),
        c_beta_min,
        delta: args.delta,
    };
    let threshold = bound.threshold()?;
    let rows = spectrum(&advantage, &behavior, &weights, &params, &lambdas, threshold)?;

    let mut w = csv_writer(&args.out, &HEADER)?;
    for r in &rows {
        w.write_record([fmt_f64(r.lambda), r.regime.to_string(), fmt_f64(r.g), fmt_f64(r.dg_dlambda), fmt_f64(r.wbc_threshold)])?;
    }
    w.flush()?;

    let config = SpectrumConfig {
        alpha: args.alpha,
        lambdas: &lambdas,
        smoothing: args.smoothing,
        delta: args.delta,
        mdp: spec.to_string(),
    };
    let mut manifest_path = args.out.clone().into_os_string();
    manifest_path.push(".manifest.json");
    Manifest::new("spectrum", dataset.meta.seed, &config)?
        .input("dataset", args.dataset.display())
        .output(&args.out)
        .write(&PathBuf::from(manifest_path))?;

    println!("wrote {} rows to {} (wbc threshold {:.6})", rows.len(), args.out.display(), threshold);
    Ok(Outcome::Success)
}
