//! Centralized and decentralized federated learning rounds over the lossy
//! mesh: experiment configuration, link models, the convergence test and
//! per-round metrics.

mod run;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregationRule;
use crate::analysis::{p_succ_verbatim, p_succ_reference, ClosedFormInputs};
use crate::channel::db_to_linear;
use crate::flcore::{DeviceState, ModelSpec, PartitionScheme, TrainConfig};
use crate::seed::{self, domain, SimRng};
use crate::topology::check_probability;
use crate::{Error, Result};

pub use run::{load_dataset, run, run_cfl, run_dfl, split_dataset, Experiment, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Cfl,
    Dfl,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Cfl => "cfl",
            Mode::Dfl => "dfl",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClosedForm {
    Verbatim,
    Reference,
}

/// Per-transmission delivery probability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LinkModel {
    #[default]
    Perfect,
    /// One probability for every link, typically a network-simulation mean.
    Scalar {
        #[serde(rename = "scalarP")]
        p: f64,
    },
    /// Closed-form success probability at the link's length, with the
    /// deployment's intensity, Aloha probability and disk radius.
    Distance {
        #[serde(rename = "closedForm", default = "default_closed_form")]
        closed_form: ClosedForm,
        #[serde(rename = "thetaDb", default = "default_theta_db")]
        theta_db: f64,
        #[serde(rename = "pathLossExponent", default = "default_alpha")]
        path_loss_exponent: f64,
    },
}

fn default_closed_form() -> ClosedForm {
    ClosedForm::Reference
}

fn default_theta_db() -> f64 {
    -16.0
}

fn default_alpha() -> f64 {
    4.0
}


impl LinkModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LinkModel::Perfect => Ok(()),
            LinkModel::Scalar { p } => check_probability(p, "scalar link probability"),
            LinkModel::Distance { theta_db, .. } if !theta_db.is_finite() => {
                Err(Error::param("link SIR threshold must be finite"))
            }
            LinkModel::Distance { path_loss_exponent, .. } => {
                crate::analysis::alpha_kernel(path_loss_exponent).map(|_| ())
            }
        }
    }
}

/// Delivery probability of one transmission over `distance` meters.
pub fn link_probability(link: &LinkModel, deployment: &DeploymentSpec, distance: f64) -> Result<f64> {
    match *link {
        LinkModel::Perfect => Ok(1.0),
        LinkModel::Scalar { p } => {
            check_probability(p, "scalar link probability")?;
            Ok(p)
        }
        LinkModel::Distance {
            closed_form,
            theta_db,
            path_loss_exponent,
        } => {
            if !(distance.is_finite() && distance > 0.0) {
                return Err(Error::param(format!("link distance must be > 0, got {distance}")));
            }
            let theta = db_to_linear(theta_db);
            match closed_form {
                ClosedForm::Reference => p_succ_reference(
                    deployment.intensity,
                    deployment.tx_prob,
                    distance,
                    theta,
                    path_loss_exponent,
                ),
                ClosedForm::Verbatim => p_succ_verbatim(&ClosedFormInputs {
                    intensity: deployment.intensity,
                    tx_prob: deployment.tx_prob,
                    disk_radius: deployment.disk_radius,
                    link_distance: distance,
                    theta,
                    path_loss_exponent,
                }),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    /// Neighbors are the devices closer than the one-hop radius.
    Geometric,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct DeploymentSpec {
    pub intensity: f64,
    pub disk_radius: f64,
    pub one_hop_radius: f64,
    pub tx_prob: f64,
    /// Fixed participant count placed uniformly in the placement disk. When
    /// absent the count is Poisson with mean `intensity * area`.
    pub devices: Option<usize>,
    /// Radius of the disk holding the participants; defaults to the one-hop
    /// radius so that every participant hears the server at the origin.
    pub placement_radius: Option<f64>,
    pub topology: TopologyKind,
    /// Redraw positions (and the neighbor graph) every round.
    pub resample: bool,
}

impl Default for DeploymentSpec {
    fn default() -> Self {
        DeploymentSpec {
            intensity: 0.01,
            disk_radius: 500.0,
            one_hop_radius: 200.0,
            tx_prob: 0.3,
            devices: Some(20),
            placement_radius: None,
            topology: TopologyKind::Geometric,
            resample: false,
        }
    }
}

impl DeploymentSpec {
    pub fn placement_radius(&self) -> f64 {
        self.placement_radius.unwrap_or(self.one_hop_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(Error::param("intensity must be >= 0"));
        }
        for (v, what) in [
            (self.disk_radius, "disk radius"),
            (self.one_hop_radius, "one-hop radius"),
            (self.placement_radius(), "placement radius"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{what} must be > 0")));
            }
        }
        check_probability(self.tx_prob, "tx probability")?;
        if self.devices == Some(0) {
            return Err(Error::param("at least one device is required"));
        }
        Ok(())
    }
}

/// Where the training data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        /// Use only the first `limit` rows.
        #[serde(default)]
        limit: Option<usize>,
    },
    /// Gaussian class clusters.
    Blobs {
        classes: usize,
        #[serde(rename = "perClass")]
        per_class: usize,
        dim: usize,
        spread: f64,
    },
    /// Noisy linear targets.
    Linear {
        samples: usize,
        dim: usize,
        noise: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub deployment: DeploymentSpec,
    pub dataset: DatasetSpec,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Defaults to random sizes for CFL and equal sizes for DFL.
    #[serde(default)]
    pub partition: Option<PartitionScheme>,
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub rule: AggregationRule,
    #[serde(default)]
    pub link: LinkModel,
    #[serde(default = "default_epsilon0")]
    pub epsilon0: f64,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default)]
    pub target_accuracy: Option<f64>,
    /// Stop once the mean gradient norm is at most `epsilon0`.
    #[serde(default = "default_true")]
    pub stop_on_gradient: bool,
    /// Stop once mean accuracy reaches `target_accuracy`.
    #[serde(default)]
    pub stop_on_target: bool,
    /// Hex keep-mask over MLP hidden units; training runs on the pruned model.
    #[serde(default)]
    pub compression_mask: Option<String>,
    /// JSON parameter vector to start from instead of a random init.
    #[serde(default)]
    pub init_model: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_val_fraction() -> f64 {
    1.0 / 6.0
}

fn default_epsilon0() -> f64 {
    0.05
}

fn default_max_rounds() -> usize {
    200
}

fn default_eval_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.deployment.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        self.link.validate()?;
        if self.epsilon0.is_nan() || self.epsilon0 <= 0.0 {
            return Err(Error::param(format!("epsilon0 must be > 0, got {}", self.epsilon0)));
        }
        if self.max_rounds == 0 {
            return Err(Error::param("maxRounds must be at least 1"));
        }
        if self.eval_every == 0 {
            return Err(Error::param("evalEvery must be at least 1"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::param("valFraction must be in (0, 1)"));
        }
        if let Some(t) = self.target_accuracy {
            if !t.is_finite() {
                return Err(Error::param("target accuracy must be finite"));
            }
        }
        if self.stop_on_target && self.target_accuracy.is_none() {
            return Err(Error::param("stopOnTarget needs targetAccuracy"));
        }
        Ok(())
    }

    pub fn partition_scheme(&self) -> PartitionScheme {
        self.partition.unwrap_or(match self.mode {
            Mode::Cfl => PartitionScheme::RandomSized,
            Mode::Dfl => PartitionScheme::Uniform,
        })
    }
}

/// Metrics of one round. Evaluation fields are only filled on evaluation
/// rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundMetrics {
    pub round: usize,
    pub mean_accuracy: Option<f64>,
    pub mean_loss: Option<f64>,
    pub mean_grad_norm: Option<f64>,
    pub messages_sent: u64,
    pub delivered: u64,
    pub bytes_modelled: u64,
    pub isolated: usize,
}

/// Mean over devices of the local-loss gradient norm at each device's
/// parameters, compared against `epsilon0` (inclusive).
pub fn has_converged(devices: &[DeviceState], spec: &ModelSpec, epsilon0: f64) -> Result<bool> {
    Ok(mean_grad_norm(devices, spec)? <= epsilon0)
}

pub fn mean_grad_norm(devices: &[DeviceState], spec: &ModelSpec) -> Result<f64> {
    if devices.is_empty() {
        return Err(Error::InsufficientClients {
            required: 1,
            got: 0,
        });
    }
    let mut total = 0.0;
    for d in devices {
        total += spec.gradient(&d.params, &d.data)?.norm();
    }
    Ok(total / devices.len() as f64)
}

/// First round whose mean accuracy reaches `target`.
pub fn epochs_to_threshold(metrics: &[RoundMetrics], target: f64) -> Option<usize> {
    metrics
        .iter()
        .find(|m| m.mean_accuracy.is_some_and(|a| a >= target))
        .map(|m| m.round)
}

/// Training randomness of `device` in `round`.
pub fn device_stream(seed: u64, round: usize, device: usize) -> SimRng {
    seed::stream(seed, &[domain::TRAIN, round as u64, device as u64])
}

/// Link draws of `round`, consumed in a fixed device/edge order.
pub fn link_stream(seed: u64, round: usize) -> SimRng {
    seed::stream(seed, &[domain::LINK, round as u64])
}
