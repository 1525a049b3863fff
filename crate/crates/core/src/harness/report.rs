//! Report files written by `run`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::harness::experiment::ExperimentResult;

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `state,method,top1,ece,mean_old,mean_new`, one row per (state, method).
pub fn states_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("state,method,top1,ece,mean_old,mean_new\n");
    for r in &result.reports {
        for m in &r.methods {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.state,
                m.method,
                m.top1,
                m.ece,
                opt(r.mean_score_old),
                opt(r.mean_score_new)
            );
        }
    }
    out
}

/// `state,mu_old,mu_new` for mean-score plots.
pub fn figdata_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("state,mu_old,mu_new\n");
    for r in &result.reports {
        let _ = writeln!(out, "{},{},{}", r.state, opt(r.mean_score_old), opt(r.mean_score_new));
    }
    out
}

/// `{method: {avg_top1, avg_ece}}`.
pub fn summary_json(result: &ExperimentResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(&result.summary)?)
}

/// Writes `states.csv`, `summary.json`, `figdata.csv` and, when asked,
/// per-state `model_<k>.json` / `memory_<k>.json` snapshots.
pub fn write_reports(result: &ExperimentResult, dir: &Path, snapshots: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("states.csv"), states_csv(result))?;
    fs::write(dir.join("summary.json"), summary_json(result)?)?;
    fs::write(dir.join("figdata.csv"), figdata_csv(result))?;
    if snapshots {
        for (k, a) in result.artifacts.iter().enumerate() {
            fs::write(dir.join(format!("model_{}.json", k + 1)), serde_json::to_string(&a.model)?)?;
            fs::write(dir.join(format!("memory_{}.json", k + 1)), a.memory.snapshot_json()?)?;
        }
    }
    Ok(())
}
