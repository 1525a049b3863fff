//! `cilcal` subcommands: `run`, `breaks`, `calibrate`, `gen`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::breaks::fisher_jenks;
use crate::calibration::{CalibContext, CalibInput, Calibrator, FitOptions, Method};
use crate::dataset::{generate_synthetic, write_features, SyntheticSpec};
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::experiment::run_experiment;
use crate::harness::report::write_reports;
use crate::matrix::Matrix;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cilcal", version, about = "Class-incremental learning with score calibration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full incremental protocol described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `output`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Natural breaks of a list of values, printed as JSON.
    Breaks {
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Number of clusters.
        #[arg(long)]
        k: usize,
    },
    /// Calibrate a score matrix read from CSV.
    Calibrate {
        #[arg(long)]
        method: String,
        /// CSV with columns `[label,]s0,...,s{c-1}`.
        #[arg(long)]
        scores: PathBuf,
        /// CSV with columns `class,count`.
        #[arg(long)]
        counts: PathBuf,
        /// Comma-separated old class ids.
        #[arg(long)]
        old: Option<String>,
        /// Comma-separated new class ids.
        #[arg(long)]
        new: Option<String>,
        /// Output CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic feature CSV and its manifest (`<out>` with a `.json` extension).
    Gen {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long = "per-class")]
        per_class: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "test-per-class", default_value_t = 20)]
        test_per_class: usize,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
    },
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Config(format!("not a number: {t:?}"))))
        .collect()
}

fn parse_id_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| Error::Config(format!("not a class id: {t:?}"))))
        .collect()
}

fn cmd_breaks(values: &str, k: usize, out: &mut dyn Write) -> Result<()> {
    let v = parse_f64_list(values)?;
    let res = fisher_jenks(&v, k).map_err(|e| Error::Config(e.to_string()))?;
    let body = json!({
        "boundaries": res.boundaries,
        "ssd": res.ssd,
        "assignments": res.assignments,
        "ranges": res.cluster_ranges(),
    });
    writeln!(out, "{}", serde_json::to_string(&body)?)?;
    Ok(())
}

/// Scores CSV: optional leading `label` column, then one column per class.
pub fn read_scores(path: &Path) -> Result<(Matrix<f64>, Option<Vec<usize>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::format(1, "empty scores file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let labelled = cols.first() == Some(&"label");
    let classes = cols.len() - usize::from(labelled);
    if classes == 0 {
        return Err(Error::format(1, "scores file has no class columns"));
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::format(i + 1, format!("expected {} cells, found {}", cols.len(), cells.len())));
        }
        let mut it = cells.into_iter();
        if labelled {
            let l = it.next().unwrap();
            let l: usize = l.parse().map_err(|_| Error::format(i + 1, format!("bad label {l:?}")))?;
            if l >= classes {
                return Err(Error::format(i + 1, format!("label {l} outside [0, {classes})")));
            }
            labels.push(l);
        }
        let row = it
            .map(|c| {
                c.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::format(i + 1, format!("non-numeric score {c:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((Matrix::from_rows(classes, rows)?, labelled.then_some(labels)))
}

/// Counts CSV with header `class,count`.
pub fn read_counts(path: &Path, classes: usize) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut counts = vec![None; classes];
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cells.as_slice() {
            [c, n] => c.parse::<usize>().ok().zip(n.parse::<usize>().ok()),
            _ => None,
        };
        let (c, n) = parsed.ok_or_else(|| Error::format(i + 1, "expected `class,count`"))?;
        if c >= classes {
            return Err(Error::format(i + 1, format!("class {c} outside [0, {classes})")));
        }
        counts[c] = Some(n);
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(c, n)| n.ok_or_else(|| Error::format(0, format!("no count for class {c}"))))
        .collect()
}

fn cmd_calibrate(
    method: &str,
    scores: &Path,
    counts: &Path,
    old: Option<&str>,
    new: Option<&str>,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let method: Method = method.parse()?;
    if matches!(method, Method::Nem | Method::Bal) {
        return Err(Error::Config(format!("{method} needs features and a model; use `run`")));
    }
    let (s, labels) = read_scores(scores)?;
    let n = s.cols();
    let class_counts = read_counts(counts, n)?;
    let mut is_old = vec![false; n];
    let old_ids = old.map(parse_id_list).transpose()?;
    let new_ids = new.map(parse_id_list).transpose()?;
    match (old_ids, new_ids) {
        (Some(o), _) => o.into_iter().filter(|&c| c < n).for_each(|c| is_old[c] = true),
        (None, Some(nw)) => {
            is_old = vec![true; n];
            nw.into_iter().filter(|&c| c < n).for_each(|c| is_old[c] = false);
        }
        (None, None) => {}
    }
    let needs_labels = matches!(method, Method::Iso | Method::Pl | Method::Mb | Method::Fj);
    let labels = match labels {
        Some(l) => l,
        None if needs_labels => return Err(Error::Config(format!("{method} needs a `label` column in the scores file"))),
        None => Vec::new(),
    };
    let (fit_scores, fit_labels) = if labels.is_empty() {
        (Matrix::filled(0, n, 0.0), Vec::new())
    } else {
        (s.clone(), labels)
    };
    // the same labelled scores serve as fitting and validation data
    let ctx = CalibContext {
        train_scores: fit_scores.clone(),
        train_labels: fit_labels.clone(),
        val_scores: fit_scores,
        val_labels: fit_labels,
        class_counts,
        old: is_old,
        exemplar_features: Vec::new(),
        model: None,
        balanced: None,
    };
    let cal = Calibrator::fit(method, &ctx, &FitOptions::default())?;
    let result = cal.apply(CalibInput {
        scores: &s,
        features: &s,
    })?;
    let mut text = String::from("pred");
    for c in 0..n {
        text.push_str(&format!(",c{c}"));
    }
    text.push('\n');
    for (row, p) in result.scores.iter_rows().zip(&result.predictions) {
        text.push_str(&p.to_string());
        for v in row {
            text.push_str(&format!(",{v}"));
        }
        text.push('\n');
    }
    match out_path {
        Some(p) => fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn cmd_run(config: &Path, out_dir: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let result = run_experiment(&cfg)?;
    write_reports(&result, &dir, cfg.snapshots)?;
    for (m, s) in &result.summary {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        writeln!(out, "{m:>5}  avg_top1 {:>8}  avg_ece {:>7}", fmt(s.avg_top1), fmt(s.avg_ece))?;
    }
    writeln!(out, "reports written to {}", dir.display())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    classes: usize,
    dim: usize,
    per_class: usize,
    test_per_class: usize,
    separation: f64,
    noise: f64,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let table = generate_synthetic(&SyntheticSpec {
        num_classes: classes,
        dim,
        count_per_class: per_class,
        test_per_class,
        class_separation: separation,
        noise_scale: noise,
        seed,
    })
    .map_err(|e| Error::Config(e.to_string()))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("synthetic").to_string();
    write_features(&table, path, &path.with_extension("json"), &name)
}

/// Executes one command and maps errors to exit codes.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Run { config, out: dir } => cmd_run(&config, dir.as_deref(), out),
        Command::Breaks { values, k } => cmd_breaks(&values, k, out),
        Command::Calibrate {
            method,
            scores,
            counts,
            old,
            new,
            out: path,
        } => cmd_calibrate(&method, &scores, &counts, old.as_deref(), new.as_deref(), path.as_deref(), out),
        Command::Gen {
            classes,
            dim,
            per_class,
            seed,
            out: path,
            test_per_class,
            separation,
            noise,
        } => cmd_gen(classes, dim, per_class, test_per_class, separation, noise, seed, &path),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_CONFIG
    }
}

/// Parses `args` (program name first) and runs; returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            if code == EXIT_OK {
                let _ = write!(out, "{e}");
            } else {
                let _ = write!(err, "{e}");
            }
            return code;
        }
    };
    match execute(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
