use std::path::PathBuf;

use anyhow::Result;
use meshfl::compress::{evolve, GaConfig};
use meshfl::flcore::{train_local, ModelSpec, ParamVector, TrainConfig};
use meshfl::protocol::{load_dataset, split_dataset, DatasetSpec};
use meshfl::seed::{self, domain};
use serde::{Deserialize, Serialize};

use crate::output::{load_json, resolve, Output};
use crate::{Globals, UsageError};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    /// Weight of the kept-unit fraction in the fitness.
    #[arg(long)]
    size_penalty: Option<f64>,
    /// Skip pretraining even when no initial model is given.
    #[arg(long)]
    no_pretrain: bool,
}

fn default_pretrain() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.1,
        ..TrainConfig::default()
    }
}

fn default_fine_tune() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        ..TrainConfig::default()
    }
}

fn default_epochs() -> usize {
    20
}

fn default_val() -> f64 {
    1.0 / 6.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CompressFile {
    pub dataset: DatasetSpec,
    #[serde(default = "default_val")]
    pub val_fraction: f64,
    pub model: ModelSpec,
    #[serde(default = "default_pretrain")]
    pub pretrain: TrainConfig,
    #[serde(default = "default_epochs")]
    pub pretrain_epochs: usize,
    /// JSON array of parameters; skips pretraining.
    #[serde(default)]
    pub init_model: Option<PathBuf>,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default = "default_fine_tune")]
    pub fine_tune: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

pub fn run(g: &Globals, args: Args) -> Result<()> {
    let path = g
        .config
        .as_deref()
        .ok_or_else(|| UsageError("compress needs --config <compress.json>".into()))?;
    let mut f: CompressFile = load_json(path)?;
    if let DatasetSpec::Idx { images, labels, .. } = &mut f.dataset {
        *images = resolve(images, Some(path));
        *labels = resolve(labels, Some(path));
    }
    if let Some(m) = &mut f.init_model {
        *m = resolve(m, Some(path));
    }
    if let Some(s) = g.seed {
        f.seed = s;
    }
    if let Some(n) = args.generations {
        f.ga.generations = n;
    }
    if let Some(n) = args.population {
        f.ga.population = n;
    }
    if let Some(k) = args.size_penalty {
        f.ga.size_penalty = k;
    }
    f.ga.seed = f.seed;
    f.ga.validate()?;
    f.pretrain.validate()?;
    f.fine_tune.validate()?;
    f.model.validate()?;
    if !matches!(f.model, ModelSpec::MlpClassifier { .. }) {
        return Err(UsageError("compress needs an mlp-classifier model".into()).into());
    }

    let data = load_dataset(&f.dataset, f.seed)?;
    f.model.check_data(&data)?;
    let (train, val) = split_dataset(&data, f.val_fraction, f.seed)?;
    let params = match &f.init_model {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| UsageError(format!("cannot read {}: {e}", p.display())))?;
            let w = ParamVector::new(serde_json::from_str(&text)?)?;
            if w.dim() != f.model.dim() {
                return Err(meshfl::Error::DimensionMismatch {
                    expected: f.model.dim(),
                    got: w.dim(),
                }
                .into());
            }
            w
        }
        None => {
            let mut w = f.model.init_params(&mut seed::stream(f.seed, &[domain::INIT]));
            if !args.no_pretrain && f.pretrain_epochs > 0 {
                let steps = (train.len() / f.pretrain.batch_size).max(1) * f.pretrain_epochs;
                let cfg = TrainConfig {
                    local_steps: Some(steps),
                    ..f.pretrain
                };
                train_local(&mut w, &f.model, &train, &cfg, &mut seed::stream(f.seed, &[domain::TRAIN]))?;
            }
            w
        }
    };

    let (genome, pruned, report) = evolve(&f.ga, &f.model, &params, &train, &val, &f.fine_tune)?;

    let mut out = Output::create(&g.out)?;
    out.json("compress_report.json", &report)?;
    out.text("mask.hex", &format!("{}\n", genome.to_hex()))?;
    let mut w = out.csv("generations.csv")?;
    w.write_record(["generation", "best_fitness", "mean_fitness", "best_kept_units"])?;
    for h in &report.history {
        w.write_record([
            h.generation.to_string(),
            format!("{}", h.best_fitness),
            format!("{}", h.mean_fitness),
            h.best_kept_units.to_string(),
        ])?;
    }
    w.flush()?;
    out.json("model.json", &params)?;
    out.json("pruned_model.json", &pruned)?;
    out.finish(Some(path), f.seed)
}
