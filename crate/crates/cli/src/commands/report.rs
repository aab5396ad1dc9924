use std::path::{Path, PathBuf};

use anyhow::Result;
use meshfl::protocol::Mode;
use serde::Serialize;

use super::train::Summary;
use crate::output::{load_json, num, Output};
use crate::{Globals, UsageError};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Output directories of finished `train` runs.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Recompute epochs-to-threshold at this accuracy from `rounds.csv`.
    #[arg(long)]
    target: Option<f64>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Entry {
    dir: PathBuf,
    label: String,
    mode: Mode,
    rule: String,
    seed: u64,
    rounds_run: usize,
    final_accuracy: Option<f64>,
    epochs_to_threshold: Option<usize>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Comparison {
    target: Option<f64>,
    runs: Vec<Entry>,
    mean_epochs_cfl: Option<f64>,
    mean_epochs_dfl: Option<f64>,
    /// (DFL - CFL) / CFL over the mean epochs-to-threshold.
    dfl_relative_increase: Option<f64>,
}

/// First round whose `mean_acc` reaches `target`.
fn threshold_from_rounds(dir: &Path, target: f64) -> Result<Option<usize>> {
    let path = dir.join("rounds.csv");
    let mut rdr = csv::Reader::from_path(&path)
        .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let round = headers.iter().position(|h| h == "round");
    let acc = headers.iter().position(|h| h == "mean_acc");
    let (Some(round), Some(acc)) = (round, acc) else {
        return Err(UsageError(format!("{} lacks round/mean_acc columns", path.display())).into());
    };
    for rec in rdr.records() {
        let rec = rec?;
        if let Ok(a) = rec[acc].parse::<f64>() {
            if a >= target {
                return Ok(Some(rec[round].parse()?));
            }
        }
    }
    Ok(None)
}

fn mean(v: impl Iterator<Item = usize>) -> Option<f64> {
    let xs: Vec<f64> = v.map(|x| x as f64).collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn run(g: &Globals, args: Args) -> Result<()> {
    let mut entries = Vec::new();
    for dir in &args.runs {
        let s: Summary = load_json(&dir.join("summary.json"))?;
        let ett = match args.target {
            Some(t) => threshold_from_rounds(dir, t)?,
            None => s.epochs_to_threshold,
        };
        entries.push(Entry {
            dir: dir.clone(),
            label: s.label,
            mode: s.mode,
            rule: s.rule,
            seed: s.seed,
            rounds_run: s.rounds_run,
            final_accuracy: s.final_accuracy,
            epochs_to_threshold: ett,
        });
    }
    let by_mode = |m: Mode| mean(entries.iter().filter(|e| e.mode == m).filter_map(|e| e.epochs_to_threshold));
    let cfl = by_mode(Mode::Cfl);
    let dfl = by_mode(Mode::Dfl);
    let cmp = Comparison {
        target: args.target,
        mean_epochs_cfl: cfl,
        mean_epochs_dfl: dfl,
        dfl_relative_increase: match (cfl, dfl) {
            (Some(c), Some(d)) if c > 0.0 => Some((d - c) / c),
            _ => None,
        },
        runs: entries,
    };

    let mut out = Output::create(&g.out)?;
    let mut w = out.csv("comparison.csv")?;
    w.write_record(["dir", "label", "mode", "rule", "seed", "rounds_run", "final_accuracy", "epochs_to_threshold"])?;
    for e in &cmp.runs {
        w.write_record([
            e.dir.display().to_string(),
            e.label.clone(),
            e.mode.to_string(),
            e.rule.clone(),
            e.seed.to_string(),
            e.rounds_run.to_string(),
            num(e.final_accuracy),
            e.epochs_to_threshold.map_or_else(String::new, |x| x.to_string()),
        ])?;
    }
    w.flush()?;
    out.json("comparison.json", &cmp)?;
    out.finish(None, g.seed.unwrap_or(0))
}
