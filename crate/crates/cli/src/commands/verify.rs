use std::fs::File;
use std::io::{BufWriter, Write};

use anyhow::Context;
use cci_lab::theory::{run_suite, summarize, SuiteOptions};
use serde::Serialize;

use crate::output::{create_dir, write_json, Manifest};
use crate::{Outcome, VerifyArgs};

#[derive(Debug, Serialize)]
struct VerifyConfig {
    suite: String,
    n_instances: usize,
    seed: u64,
    inject_fault: bool,
}

/// Prints one JSON summary per check and a final tally; with `--out`, also
/// writes every instance report.
pub fn run(args: &VerifyArgs) -> anyhow::Result<Outcome> {
    let options = SuiteOptions { n_instances: args.n, seed: args.seed, inject_fault: args.inject_fault };
    let reports = run_suite(args.suite, &options)?;
    let summaries = summarize(&reports);
    let failures: usize = summaries.iter().map(|s| s.failures).sum();

    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for s in &summaries {
        serde_json::to_writer(&mut out, s)?;
        writeln!(out)?;
    }
    writeln!(out, "suite {}: {} reports, {} failures", args.suite, reports.len(), failures)?;

    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let reports_path = dir.join("reports.jsonl");
        let file = File::create(&reports_path).with_context(|| format!("creating {}", reports_path.display()))?;
        let mut w = BufWriter::new(file);
        for r in &reports {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        let summary_path = dir.join("summary.json");
        write_json(&summary_path, &summaries)?;
        let config = VerifyConfig {
            suite: args.suite.to_string(),
            n_instances: args.n,
            seed: args.seed,
            inject_fault: args.inject_fault,
        };
        Manifest::new("verify", args.seed, &config)?
            .output(&reports_path)
            .output(&summary_path)
            .write(&dir.join("manifest.json"))?;
    }

    for r in reports.iter().filter(|r| !r.pass) {
        log::warn!("{} failed on instance seed {}: slack {:e}", r.check, r.instance.seed, r.slack);
    }
    Ok(if failures == 0 { Outcome::Success } else { Outcome::ChecksFailed })
}
