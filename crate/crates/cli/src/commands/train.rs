use std::path::Path;

use anyhow::Result;
use meshfl::aggregate::RuleKind;
use meshfl::protocol::{self, DatasetSpec, ExperimentConfig, Mode, RunOutcome};
use serde::{Deserialize, Serialize};

use crate::chart::{Chart, Series};
use crate::output::{load_json, num, resolve, Output};
use crate::{Globals, UsageError};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Aggregation rule: fedavg, krum or median.
    #[arg(long, value_parser = parse_rule)]
    rule: Option<RuleKind>,
    #[arg(long)]
    max_rounds: Option<usize>,
    /// Accuracy threshold for epochs-to-threshold.
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    no_svg: bool,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "cfl" => Ok(Mode::Cfl),
        "dfl" => Ok(Mode::Dfl),
        _ => Err(format!("unknown mode {s:?} (expected cfl or dfl)")),
    }
}

pub fn parse_rule(s: &str) -> Result<RuleKind, String> {
    match s {
        "fedavg" => Ok(RuleKind::Fedavg),
        "krum" => Ok(RuleKind::Krum),
        "median" => Ok(RuleKind::Median),
        _ => Err(format!("unknown aggregator {s:?} (expected fedavg, krum or median)")),
    }
}

/// Run summary written as `summary.json`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Summary {
    pub label: String,
    pub mode: Mode,
    pub rule: String,
    pub seed: u64,
    pub participants: usize,
    pub dim: usize,
    pub rounds_run: usize,
    pub converged_round: Option<usize>,
    pub target_accuracy: Option<f64>,
    pub epochs_to_threshold: Option<usize>,
    pub final_accuracy: Option<f64>,
    pub final_loss: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub messages_sent: u64,
    pub delivered: u64,
    pub config: ExperimentConfig,
}

/// Makes dataset and model paths relative to the config file's directory.
pub fn resolve_paths(cfg: &mut ExperimentConfig, config_path: Option<&Path>) {
    if let DatasetSpec::Idx { images, labels, .. } = &mut cfg.dataset {
        *images = resolve(images, config_path);
        *labels = resolve(labels, config_path);
    }
    if let Some(m) = &mut cfg.init_model {
        *m = resolve(m, config_path);
    }
}

pub fn run(g: &Globals, args: Args) -> Result<()> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| UsageError("train needs --config <experiment.json>".into()))?;
    let mut cfg: ExperimentConfig = load_json(path)?;
    resolve_paths(&mut cfg, Some(path));
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(r) = args.rule {
        cfg.rule.kind = r;
    }
    if let Some(n) = args.max_rounds {
        cfg.max_rounds = n;
    }
    if args.target.is_some() {
        cfg.target_accuracy = args.target;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let seed = cfg.seed;
    let mut out = Output::create(&g.out)?;
    execute(cfg, &mut out, !args.no_svg, "run")?;
    out.finish(Some(path), seed)
}

/// Runs one experiment and writes `rounds.csv`, `summary.json` and charts.
pub fn execute(cfg: ExperimentConfig, out: &mut Output, svg: bool, label: &str) -> Result<Summary> {
    let outcome = protocol::run(cfg.clone())?;
    write_rounds(out, &outcome)?;
    let last = outcome.final_metrics();
    let summary = Summary {
        label: label.to_string(),
        mode: outcome.mode,
        rule: outcome.rule.clone(),
        seed: cfg.seed,
        participants: outcome.participants,
        dim: outcome.dim,
        rounds_run: outcome.metrics.len(),
        converged_round: outcome.converged_round,
        target_accuracy: cfg.target_accuracy,
        epochs_to_threshold: outcome.epochs_to_threshold,
        final_accuracy: last.and_then(|m| m.mean_accuracy),
        final_loss: last.and_then(|m| m.mean_loss),
        final_grad_norm: last.and_then(|m| m.mean_grad_norm),
        messages_sent: outcome.metrics.iter().map(|m| m.messages_sent).sum(),
        delivered: outcome.metrics.iter().map(|m| m.delivered).sum(),
        config: cfg,
    };
    out.json("summary.json", &summary)?;
    if svg {
        let pick = |f: fn(&meshfl::protocol::RoundMetrics) -> Option<f64>| -> Vec<(f64, f64)> {
            outcome
                .metrics
                .iter()
                .filter_map(|m| f(m).map(|v| (m.round as f64, v)))
                .collect()
        };
        let name = format!("{} {}", summary.mode, summary.rule);
        let acc = pick(|m| m.mean_accuracy);
        if !acc.is_empty() {
            let chart = Chart {
                title: "Validation accuracy".into(),
                x_label: "round".into(),
                y_label: "accuracy".into(),
                series: vec![Series {
                    name: name.clone(),
                    points: acc,
                    dashed: false,
                }],
            };
            out.text("accuracy.svg", &chart.render())?;
        }
        let chart = Chart {
            title: "Validation loss".into(),
            x_label: "round".into(),
            y_label: "loss".into(),
            series: vec![Series {
                name,
                points: pick(|m| m.mean_loss),
                dashed: false,
            }],
        };
        out.text("loss.svg", &chart.render())?;
    }
    Ok(summary)
}

fn write_rounds(out: &mut Output, outcome: &RunOutcome) -> Result<()> {
    let mut w = out.csv("rounds.csv")?;
    w.write_record([
        "round",
        "mean_acc",
        "mean_loss",
        "mean_grad_norm",
        "msgs",
        "delivered",
        "bytes",
        "isolated",
    ])?;
    for m in &outcome.metrics {
        w.write_record([
            m.round.to_string(),
            num(m.mean_accuracy),
            num(m.mean_loss),
            num(m.mean_grad_norm),
            m.messages_sent.to_string(),
            m.delivered.to_string(),
            m.bytes_modelled.to_string(),
            m.isolated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
