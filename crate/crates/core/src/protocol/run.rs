use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    device_stream, epochs_to_threshold, link_probability, link_stream, DatasetSpec, ExperimentConfig,
    LinkModel, Mode, RoundMetrics, TopologyKind,
};
use crate::aggregate::{AggregationRule, RuleKind, UpdateSet};
use crate::compress::{apply_mask, Genome};
use crate::flcore::{
    data_weights, load_idx, local_epoch, partition, synth_blobs, synth_linear, DeviceState, LabeledDataset,
    ModelSpec, ParamVector,
};
use crate::geometry::{distance, poisson_count, Deployment, DiskRegion, Point2D};
use crate::seed::{self, domain};
use crate::topology::{connectivity_graph, ConnectivityGraph};
use crate::{Error, Result};

/// A prepared run: participants with their data and starting models.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ExperimentConfig,
    spec: ModelSpec,
    devices: Vec<DeviceState>,
    val: Arc<LabeledDataset>,
    positions: Vec<Point2D>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunOutcome {
    pub mode: Mode,
    pub rule: String,
    pub participants: usize,
    pub dim: usize,
    pub metrics: Vec<RoundMetrics>,
    /// Round at which the gradient criterion was met.
    pub converged_round: Option<usize>,
    pub epochs_to_threshold: Option<usize>,
    /// Server model (CFL only).
    #[serde(skip)]
    pub global: Option<ParamVector>,
    #[serde(skip)]
    pub devices: Vec<ParamVector>,
}

impl RunOutcome {
    /// Last evaluated metrics.
    pub fn final_metrics(&self) -> Option<&RoundMetrics> {
        self.metrics.iter().rev().find(|m| m.mean_loss.is_some())
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.final_metrics().and_then(|m| m.mean_accuracy)
    }
}

/// Materializes a dataset; synthetic sets are drawn from `seed`.
pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> Result<LabeledDataset> {
    let mut rng = seed::stream(seed, &[domain::DATA]);
    match spec {
        DatasetSpec::Idx { images, labels, limit } => {
            let data = load_idx(images, labels)?;
            match limit {
                Some(n) if *n < data.len() => data.subset(&(0..*n).collect::<Vec<_>>()),
                _ => Ok(data),
            }
        }
        DatasetSpec::Blobs {
            classes,
            per_class,
            dim,
            spread,
        } => synth_blobs(*classes, *per_class, *dim, *spread, &mut rng),
        DatasetSpec::Linear { samples, dim, noise } => Ok(synth_linear(*samples, *dim, *noise, &mut rng)?.0),
    }
}

/// The `(train, validation)` split every run with `seed` uses.
pub fn split_dataset(data: &LabeledDataset, val_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    data.split(val_fraction, &mut seed::stream(seed, &[domain::DATA, 1]))
}

fn place(cfg: &ExperimentConfig, round: usize, count: Option<usize>) -> Result<Vec<Point2D>> {
    let region = DiskRegion::new(cfg.deployment.placement_radius())?;
    let mut rng = seed::stream(cfg.seed, &[domain::DEPLOYMENT, round as u64]);
    let n = match count {
        Some(n) => n,
        None => poisson_count(cfg.deployment.intensity * region.area(), &mut rng) as usize,
    };
    if n == 0 {
        return Err(Error::InsufficientClients { required: 1, got: 0 });
    }
    Ok((0..n).map(|_| region.sample_uniform(&mut rng)).collect())
}

impl Experiment {
    /// Loads data, places devices, partitions and initializes models.
    pub fn prepare(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (train, val) = split_dataset(&load_dataset(&cfg.dataset, cfg.seed)?, cfg.val_fraction, cfg.seed)?;
        let positions = place(&cfg, 0, cfg.deployment.devices)?;
        let parts = partition(
            &train,
            positions.len(),
            cfg.partition_scheme(),
            &mut seed::stream(cfg.seed, &[domain::PARTITION]),
        )?;

        let mut spec = cfg.model;
        spec.check_data(&train)?;
        let mut init = match &cfg.init_model {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                let w: Vec<f64> = serde_json::from_str(&text)?;
                let w = ParamVector::new(w)?;
                w.check_dim(spec.dim())?;
                w
            }
            None => spec.init_params(&mut seed::stream(cfg.seed, &[domain::INIT])),
        };
        if let Some(hex) = &cfg.compression_mask {
            let ModelSpec::MlpClassifier { hidden, .. } = spec else {
                return Err(Error::param("compression masks apply to the MLP classifier only"));
            };
            let genome = Genome::from_hex(hex, hidden)?;
            (spec, init) = apply_mask(&spec, &init, &genome)?;
        }

        let sizes: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        let weights = data_weights(&sizes);
        let devices = parts
            .into_iter()
            .zip(weights)
            .enumerate()
            .map(|(id, (data, weight))| DeviceState {
                id,
                params: init.clone(),
                data: Arc::new(data),
                weight,
            })
            .collect();
        Self::from_parts(cfg, spec, devices, Arc::new(val), positions)
    }

    /// Assembles a run from explicit parts.
    pub fn from_parts(
        cfg: ExperimentConfig,
        spec: ModelSpec,
        devices: Vec<DeviceState>,
        val: Arc<LabeledDataset>,
        positions: Vec<Point2D>,
    ) -> Result<Self> {
        cfg.validate()?;
        if devices.is_empty() {
            return Err(Error::InsufficientClients { required: 1, got: 0 });
        }
        if positions.len() != devices.len() {
            return Err(Error::DimensionMismatch {
                expected: devices.len(),
                got: positions.len(),
            });
        }
        for d in &devices {
            spec.check_data(&d.data)?;
            d.params.check_dim(spec.dim())?;
        }
        spec.check_data(&val)?;
        Ok(Experiment {
            cfg,
            spec,
            devices,
            val,
            positions,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn devices(&self) -> &[DeviceState] {
        &self.devices
    }

    pub fn validation(&self) -> &LabeledDataset {
        &self.val
    }

    pub fn positions(&self) -> &[Point2D] {
        &self.positions
    }

    pub fn run(self) -> Result<RunOutcome> {
        match self.cfg.mode {
            Mode::Cfl => self.run_cfl(),
            Mode::Dfl => self.run_dfl(),
        }
    }

    fn link_p(&self, a: Point2D, b: Point2D) -> Result<f64> {
        match self.cfg.link {
            LinkModel::Perfect => Ok(1.0),
            _ => {
                let d = distance(a, b);
                if d == 0.0 {
                    // closed forms tend to one as the link shrinks
                    return Ok(1.0);
                }
                link_probability(&self.cfg.link, &self.cfg.deployment, d)
            }
        }
    }

    fn reposition(&mut self, round: usize) -> Result<()> {
        if self.cfg.deployment.resample && round > 0 {
            self.positions = place(&self.cfg, round, Some(self.devices.len()))?;
        }
        Ok(())
    }

    fn graph(&self) -> Result<ConnectivityGraph> {
        match self.cfg.deployment.topology {
            TopologyKind::Complete => Ok(ConnectivityGraph::complete(self.devices.len())),
            TopologyKind::Geometric => {
                let region = DiskRegion::new(self.cfg.deployment.placement_radius())?;
                let dep = Deployment::from_nodes(self.positions.clone(), region, self.cfg.deployment.intensity)?;
                Ok(connectivity_graph(&dep, self.cfg.deployment.one_hop_radius))
            }
        }
    }

    fn train(&mut self, round: usize, which: &[bool]) -> Result<()> {
        let spec = self.spec;
        let tc = self.cfg.train;
        let seed = self.cfg.seed;
        self.devices
            .par_iter_mut()
            .zip(which.par_iter())
            .filter(|(_, &active)| active)
            .map(|(d, _)| {
                let mut rng = device_stream(seed, round, d.id);
                local_epoch(d, &spec, &tc, &mut rng).map(|_| ())
            })
            .collect::<Vec<Result<()>>>()
            .into_iter()
            .collect()
    }

    /// Mean validation loss/accuracy over `models`.
    fn evaluate(&self, models: &[&ParamVector]) -> Result<(Option<f64>, f64)> {
        let evals: Vec<_> = models
            .par_iter()
            .map(|w| self.spec.evaluate(w, &self.val))
            .collect::<Result<_>>()?;
        let n = evals.len() as f64;
        let loss = evals.iter().map(|e| e.loss).sum::<f64>() / n;
        let acc = evals
            .iter()
            .map(|e| e.accuracy)
            .sum::<Option<f64>>()
            .map(|s| s / n);
        Ok((acc, loss))
    }

    /// Mean local gradient norm, each device at `at(device)`.
    fn grad_norm<'a>(&'a self, idx: &[usize], at: impl Fn(usize) -> &'a ParamVector + Sync) -> Result<f64> {
        let norms: Vec<f64> = idx
            .par_iter()
            .map(|&i| Ok(self.spec.gradient(at(i), &self.devices[i].data)?.norm()))
            .collect::<Result<_>>()?;
        Ok(norms.iter().sum::<f64>() / norms.len().max(1) as f64)
    }

    fn is_eval_round(&self, t: usize) -> bool {
        t.is_multiple_of(self.cfg.eval_every) || t == self.cfg.max_rounds
    }

    fn should_stop(&self, m: &RoundMetrics) -> (bool, bool) {
        let grad = self.cfg.stop_on_gradient && m.mean_grad_norm.is_some_and(|g| g <= self.cfg.epsilon0);
        let target = self.cfg.stop_on_target
            && matches!((m.mean_accuracy, self.cfg.target_accuracy), (Some(a), Some(t)) if a >= t);
        (grad || target, grad)
    }

    fn run_cfl(mut self) -> Result<RunOutcome> {
        let n = self.devices.len();
        let dim = self.spec.dim();
        let mut global = self.devices[0].params.clone();
        let rule = self.cfg.rule;
        let mut metrics = Vec::new();
        let mut converged_round = None;

        for t in 1..=self.cfg.max_rounds {
            self.reposition(t - 1)?;
            let r_oh = self.cfg.deployment.one_hop_radius;
            let active: Vec<bool> = self.positions.iter().map(|p| p.norm_sq() < r_oh * r_oh).collect();
            let probs: Vec<f64> = self
                .positions
                .iter()
                .map(|&p| self.link_p(Point2D::ORIGIN, p))
                .collect::<Result<_>>()?;
            let mut rng = link_stream(self.cfg.seed, t);
            let (mut sent, mut delivered) = (0u64, 0u64);

            for i in (0..n).filter(|&i| active[i]) {
                sent += 1;
                if draw(&mut rng, probs[i]) {
                    delivered += 1;
                    self.devices[i].params = global.clone();
                }
            }
            self.train(t, &active)?;
            let mut set = UpdateSet::new();
            for i in (0..n).filter(|&i| active[i]) {
                sent += 1;
                if draw(&mut rng, probs[i]) {
                    delivered += 1;
                    let d = &self.devices[i];
                    set.push(d.id, d.params.clone(), d.weight);
                }
            }
            if !set.is_empty() {
                global = rule.apply_lenient(&set)?;
            }

            let mut m = RoundMetrics {
                round: t,
                mean_accuracy: None,
                mean_loss: None,
                mean_grad_norm: None,
                messages_sent: sent,
                delivered,
                bytes_modelled: delivered * dim as u64 * 8,
                isolated: active.iter().filter(|&&a| !a).count(),
            };
            if self.is_eval_round(t) {
                let (acc, loss) = self.evaluate(&[&global])?;
                let idx: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
                m.mean_accuracy = acc;
                m.mean_loss = Some(loss);
                m.mean_grad_norm = Some(self.grad_norm(&idx, |_| &global)?);
            }
            let (stop, by_grad) = self.should_stop(&m);
            metrics.push(m);
            if by_grad {
                converged_round = Some(t);
            }
            if stop {
                break;
            }
        }

        Ok(self.finish(metrics, converged_round, Some(global), rule))
    }

    fn run_dfl(mut self) -> Result<RunOutcome> {
        let n = self.devices.len();
        let dim = self.spec.dim();
        let mut rule = self.cfg.rule;
        if rule.kind == RuleKind::Krum && rule.krum_f.is_none() {
            rule.krum_f = Some(0);
        }
        let mut metrics = Vec::new();
        let mut converged_round = None;
        let everyone = vec![true; n];
        let mut graph = self.graph()?;

        for t in 1..=self.cfg.max_rounds {
            if self.cfg.deployment.resample && t > 1 {
                self.reposition(t - 1)?;
                graph = self.graph()?;
            }
            self.train(t, &everyone)?;
            let snapshot: Vec<ParamVector> = self.devices.iter().map(|d| d.params.clone()).collect();
            let mut rng = link_stream(self.cfg.seed, t);
            let (mut sent, mut delivered) = (0u64, 0u64);
            let mut sets = Vec::with_capacity(n);
            for i in 0..n {
                let mut set = UpdateSet::new();
                set.push(i, snapshot[i].clone(), self.devices[i].weight);
                for &j in graph.neighbors(i) {
                    sent += 1;
                    if draw(&mut rng, self.link_p(self.positions[j], self.positions[i])?) {
                        delivered += 1;
                        set.push(j, snapshot[j].clone(), self.devices[j].weight);
                    }
                }
                sets.push(set);
            }
            let next: Vec<ParamVector> = sets
                .par_iter()
                .map(|s| rule.apply_lenient(s))
                .collect::<Result<_>>()?;
            for (d, w) in self.devices.iter_mut().zip(next) {
                d.params = w;
            }

            let mut m = RoundMetrics {
                round: t,
                mean_accuracy: None,
                mean_loss: None,
                mean_grad_norm: None,
                messages_sent: sent,
                delivered,
                bytes_modelled: delivered * dim as u64 * 8,
                isolated: graph.isolated(),
            };
            if self.is_eval_round(t) {
                let models: Vec<&ParamVector> = self.devices.iter().map(|d| &d.params).collect();
                let (acc, loss) = self.evaluate(&models)?;
                m.mean_accuracy = acc;
                m.mean_loss = Some(loss);
                let idx: Vec<usize> = (0..n).collect();
                m.mean_grad_norm = Some(self.grad_norm(&idx, |i| &self.devices[i].params)?);
            }
            let (stop, by_grad) = self.should_stop(&m);
            metrics.push(m);
            if by_grad {
                converged_round = Some(t);
            }
            if stop {
                break;
            }
        }

        Ok(self.finish(metrics, converged_round, None, rule))
    }

    fn finish(
        self,
        metrics: Vec<RoundMetrics>,
        converged_round: Option<usize>,
        global: Option<ParamVector>,
        rule: AggregationRule,
    ) -> RunOutcome {
        let ett = self.cfg.target_accuracy.and_then(|t| epochs_to_threshold(&metrics, t));
        RunOutcome {
            mode: self.cfg.mode,
            rule: rule.name().to_string(),
            participants: self.devices.len(),
            dim: self.spec.dim(),
            metrics,
            converged_round,
            epochs_to_threshold: ett,
            global,
            devices: self.devices.into_iter().map(|d| d.params).collect(),
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    p >= 1.0 || (p > 0.0 && rng.random_bool(p))
}

/// Prepares and runs `cfg` in whichever mode it names.
pub fn run(cfg: ExperimentConfig) -> Result<RunOutcome> {
    Experiment::prepare(cfg)?.run()
}

pub fn run_cfl(cfg: ExperimentConfig) -> Result<RunOutcome> {
    if cfg.mode != Mode::Cfl {
        return Err(Error::param("run_cfl needs mode cfl"));
    }
    run(cfg)
}

pub fn run_dfl(cfg: ExperimentConfig) -> Result<RunOutcome> {
    if cfg.mode != Mode::Dfl {
        return Err(Error::param("run_dfl needs mode dfl"));
    }
    run(cfg)
}
