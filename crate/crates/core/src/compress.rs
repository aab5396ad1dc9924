//! Hidden-unit pruning of the MLP classifier by genetic search over binary
//! keep-masks.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flcore::{train_local, LabeledDataset, ModelSpec, ParamVector, TrainConfig};
use crate::seed::{self, domain};
use crate::topology::check_probability;
use crate::{Error, Result};

/// Keep-mask over the hidden units; `true` keeps the unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Genome {
    pub mask: Vec<bool>,
}

impl Genome {
    pub fn full(units: usize) -> Self {
        Genome {
            mask: vec![true; units],
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn kept(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn density(&self) -> f64 {
        if self.mask.is_empty() {
            0.0
        } else {
            self.kept() as f64 / self.mask.len() as f64
        }
    }

    /// Bits packed MSB-first, zero padded to whole bytes.
    pub fn to_hex(&self) -> String {
        let mut bytes = vec![0u8; self.mask.len().div_ceil(8)];
        for (i, &b) in self.mask.iter().enumerate() {
            if b {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        hex::encode(bytes)
    }

    pub fn from_hex(text: &str, units: usize) -> Result<Self> {
        let bytes = hex::decode(text.trim())
            .map_err(|e| Error::param(format!("mask is not valid hex: {e}")))?;
        if bytes.len() != units.div_ceil(8) {
            return Err(Error::DimensionMismatch {
                expected: units.div_ceil(8),
                got: bytes.len(),
            });
        }
        let mask: Vec<bool> = (0..units).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
        if (units..bytes.len() * 8).any(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0) {
            return Err(Error::param("mask has bits set past the unit count"));
        }
        Ok(Genome { mask })
    }
}

fn mlp_layout(spec: &ModelSpec) -> Result<(usize, usize, usize)> {
    match *spec {
        ModelSpec::MlpClassifier {
            inputs,
            hidden,
            classes,
        } => Ok((inputs, hidden, classes)),
        _ => Err(Error::param("only the MLP classifier has prunable hidden units")),
    }
}

/// Number of parameters left after pruning with `genome`.
pub fn kept_params(spec: &ModelSpec, genome: &Genome) -> Result<usize> {
    let (inputs, _, classes) = mlp_layout(spec)?;
    Ok(genome.kept() * (inputs + 1 + classes) + classes)
}

/// Removes the masked-out hidden units: their input weights, bias and
/// output weights.
pub fn apply_mask(spec: &ModelSpec, params: &ParamVector, genome: &Genome) -> Result<(ModelSpec, ParamVector)> {
    let (inputs, hidden, classes) = mlp_layout(spec)?;
    params.check_dim(spec.dim())?;
    if genome.len() != hidden {
        return Err(Error::DimensionMismatch {
            expected: hidden,
            got: genome.len(),
        });
    }
    let keep: Vec<usize> = (0..hidden).filter(|&j| genome.mask[j]).collect();
    if keep.is_empty() {
        return Err(Error::param("mask keeps no hidden units"));
    }
    let w = params.as_slice();
    let k = keep.len();
    let mut out = Vec::with_capacity(inputs * k + k + k * classes + classes);
    for i in 0..inputs {
        out.extend(keep.iter().map(|&j| w[i * hidden + j]));
    }
    let b1 = inputs * hidden;
    out.extend(keep.iter().map(|&j| w[b1 + j]));
    let w2 = b1 + hidden;
    for &j in &keep {
        out.extend_from_slice(&w[w2 + j * classes..w2 + (j + 1) * classes]);
    }
    let b2 = w2 + hidden * classes;
    out.extend_from_slice(&w[b2..b2 + classes]);
    let pruned = ModelSpec::MlpClassifier {
        inputs,
        hidden: k,
        classes,
    };
    Ok((pruned, ParamVector::new(out)?))
}

/// Validation accuracy of the pruned model minus `size_penalty * density`.
/// An empty mask scores negative infinity.
pub fn fitness(
    genome: &Genome,
    spec: &ModelSpec,
    params: &ParamVector,
    val: &LabeledDataset,
    size_penalty: f64,
) -> Result<f64> {
    if genome.kept() == 0 {
        let (_, hidden, _) = mlp_layout(spec)?;
        if genome.len() != hidden {
            return Err(Error::DimensionMismatch {
                expected: hidden,
                got: genome.len(),
            });
        }
        return Ok(f64::NEG_INFINITY);
    }
    let (pruned, w) = apply_mask(spec, params, genome)?;
    let acc = pruned.evaluate(&w, val)?.accuracy.unwrap_or(0.0);
    Ok(acc - size_penalty * genome.density())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub elitism: usize,
    pub size_penalty: f64,
    pub fine_tune_steps: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 24,
            generations: 30,
            mutation_rate: 0.02,
            crossover_rate: 0.7,
            elitism: 2,
            size_penalty: 0.5,
            fine_tune_steps: 200,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::param("population must be at least 2"));
        }
        if self.elitism >= self.population {
            return Err(Error::param("elitism must be below the population size"));
        }
        check_probability(self.mutation_rate, "mutation rate")?;
        check_probability(self.crossover_rate, "crossover rate")?;
        if !(self.size_penalty.is_finite() && self.size_penalty >= 0.0) {
            return Err(Error::param("size penalty must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_kept_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CompressionReport {
    pub original_params: usize,
    pub kept_params: usize,
    pub ratio: f64,
    pub acc_before: f64,
    pub acc_after: f64,
    pub generations_run: usize,
    pub kept_units: usize,
    pub mask: String,
    pub history: Vec<GenerationStats>,
}

fn random_genome<R: Rng + ?Sized>(units: usize, rng: &mut R) -> Genome {
    let mut mask: Vec<bool> = (0..units).map(|_| rng.random_bool(0.5)).collect();
    if !mask.iter().any(|&b| b) {
        mask[rng.random_range(0..units)] = true;
    }
    Genome { mask }
}

fn tournament<'a, R: Rng + ?Sized>(pop: &'a [(Genome, f64)], rng: &mut R) -> &'a Genome {
    let mut best = pop.choose(rng).expect("population is nonempty");
    for _ in 1..3 {
        let c = pop.choose(rng).expect("population is nonempty");
        if c.1 > best.1 {
            best = c;
        }
    }
    &best.0
}

/// Genetic search starting from a random population. See [`evolve_from`].
pub fn evolve(
    cfg: &GaConfig,
    spec: &ModelSpec,
    params: &ParamVector,
    train: &LabeledDataset,
    val: &LabeledDataset,
    fine_tune: &TrainConfig,
) -> Result<(Genome, ParamVector, CompressionReport)> {
    let (_, hidden, _) = mlp_layout(spec)?;
    let mut rng = seed::stream(cfg.seed, &[domain::GA, 0]);
    let initial: Vec<Genome> = (0..cfg.population).map(|_| random_genome(hidden, &mut rng)).collect();
    evolve_from(cfg, spec, params, train, val, fine_tune, initial)
}

/// Tournament selection (size 3), uniform crossover, per-bit mutation and
/// elitism over `initial`. The best mask is applied and the pruned model is
/// fine-tuned on `train` for `cfg.fine_tune_steps` steps. Returns the mask,
/// the pruned parameters and the report.
pub fn evolve_from(
    cfg: &GaConfig,
    spec: &ModelSpec,
    params: &ParamVector,
    train: &LabeledDataset,
    val: &LabeledDataset,
    fine_tune: &TrainConfig,
    initial: Vec<Genome>,
) -> Result<(Genome, ParamVector, CompressionReport)> {
    cfg.validate()?;
    let (_, hidden, _) = mlp_layout(spec)?;
    if initial.len() != cfg.population {
        return Err(Error::param(format!(
            "initial population has {} genomes, expected {}",
            initial.len(),
            cfg.population
        )));
    }
    if let Some(g) = initial.iter().find(|g| g.len() != hidden) {
        return Err(Error::DimensionMismatch {
            expected: hidden,
            got: g.len(),
        });
    }
    let acc_before = spec.evaluate(params, val)?.accuracy.unwrap_or(0.0);

    let mut cache: HashMap<Genome, f64> = HashMap::new();
    let mut score = |genomes: Vec<Genome>| -> Result<Vec<(Genome, f64)>> {
        let missing: Vec<Genome> = {
            let mut seen = std::collections::HashSet::new();
            genomes
                .iter()
                .filter(|g| !cache.contains_key(*g) && seen.insert((*g).clone()))
                .cloned()
                .collect()
        };
        let fits: Vec<Result<f64>> = missing
            .par_iter()
            .map(|g| fitness(g, spec, params, val, cfg.size_penalty))
            .collect();
        for (g, f) in missing.into_iter().zip(fits) {
            cache.insert(g, f?);
        }
        Ok(genomes
            .into_iter()
            .map(|g| {
                let f = cache[&g];
                (g, f)
            })
            .collect())
    };
    let rank = |pop: &mut Vec<(Genome, f64)>| pop.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut pop = score(initial)?;
    rank(&mut pop);
    let stats = |generation: usize, pop: &[(Genome, f64)]| {
        let finite: Vec<f64> = pop.iter().map(|p| p.1).filter(|f| f.is_finite()).collect();
        GenerationStats {
            generation,
            best_fitness: pop[0].1,
            mean_fitness: finite.iter().sum::<f64>() / finite.len().max(1) as f64,
            best_kept_units: pop[0].0.kept(),
        }
    };
    let mut history = vec![stats(0, &pop)];

    for generation in 1..=cfg.generations {
        let mut rng = seed::stream(cfg.seed, &[domain::GA, generation as u64]);
        let mut next: Vec<Genome> = pop[..cfg.elitism].iter().map(|p| p.0.clone()).collect();
        while next.len() < cfg.population {
            let a = tournament(&pop, &mut rng);
            let b = tournament(&pop, &mut rng);
            let mut child = if rng.random_bool(cfg.crossover_rate) {
                Genome {
                    mask: a
                        .mask
                        .iter()
                        .zip(&b.mask)
                        .map(|(&x, &y)| if rng.random_bool(0.5) { x } else { y })
                        .collect(),
                }
            } else {
                a.clone()
            };
            for bit in &mut child.mask {
                if rng.random_bool(cfg.mutation_rate) {
                    *bit = !*bit;
                }
            }
            next.push(child);
        }
        pop = score(next)?;
        rank(&mut pop);
        history.push(stats(generation, &pop));
    }

    let best = pop[0].0.clone();
    if best.kept() == 0 {
        return Err(Error::Numeric("no genome keeps any unit".into()));
    }
    let (pruned, mut w) = apply_mask(spec, params, &best)?;
    let tune = TrainConfig {
        local_steps: Some(cfg.fine_tune_steps),
        ..*fine_tune
    };
    train_local(&mut w, &pruned, train, &tune, &mut seed::stream(cfg.seed, &[domain::GA, u64::MAX]))?;
    let acc_after = pruned.evaluate(&w, val)?.accuracy.unwrap_or(0.0);
    let original = spec.dim();
    let kept = kept_params(spec, &best)?;
    let report = CompressionReport {
        original_params: original,
        kept_params: kept,
        ratio: kept as f64 / original as f64,
        acc_before,
        acc_after,
        generations_run: cfg.generations,
        kept_units: best.kept(),
        mask: best.to_hex(),
        history,
    };
    Ok((best, w, report))
}
