use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::LabeledDataset;
use super::model::ModelSpec;
use super::ParamVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Rows per minibatch. A device with fewer rows uses all of them.
    pub batch_size: usize,
    /// SGD steps per local epoch; one pass over the local data when unset.
    pub local_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.015,
            batch_size: 32,
            local_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        Ok(())
    }

    /// Steps taken on a device holding `rows` samples.
    pub fn steps_for(&self, rows: usize) -> usize {
        self.local_steps
            .unwrap_or_else(|| rows.div_ceil(self.batch_size.max(1)).max(1))
    }
}

/// One learner: its current model, local data and aggregation weight.
#[derive(Debug, Clone)]
pub struct DeviceState {
    pub id: usize,
    pub params: ParamVector,
    pub data: Arc<LabeledDataset>,
    pub weight: f64,
}

/// `w - lr * g`.
pub fn sgd_step(w: &ParamVector, g: &ParamVector, learning_rate: f64) -> Result<ParamVector> {
    g.check_dim(w.dim())?;
    let out: Vec<f64> = w
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .map(|(a, b)| a - learning_rate * b)
        .collect();
    let out = ParamVector(out);
    if !out.is_finite() {
        return Err(Error::Numeric("SGD step diverged".into()));
    }
    Ok(out)
}

/// Runs [`TrainConfig::steps_for`] minibatch SGD steps in place. Batches are drawn
/// without replacement from a shuffled order; the order is reshuffled when
/// fewer than a batch of rows remain. Returns the mean batch loss.
pub fn train_local<R: Rng + ?Sized>(
    params: &mut ParamVector,
    spec: &ModelSpec,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::param("device has no training data"));
    }
    let n = data.len();
    let steps = cfg.steps_for(n);
    if steps == 0 {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.batch_size >= n {
        let mut total = 0.0;
        for _ in 0..steps {
            total += spec.loss_on(params, data, &order)?;
            let g = spec.gradient_on(params, data, &order)?;
            *params = sgd_step(params, &g, cfg.learning_rate)?;
        }
        return Ok(total / steps as f64);
    }
    order.shuffle(rng);
    let mut cursor = 0;
    let mut total = 0.0;
    for _ in 0..steps {
        if cursor + cfg.batch_size > n {
            order.shuffle(rng);
            cursor = 0;
        }
        let batch = &order[cursor..cursor + cfg.batch_size];
        cursor += cfg.batch_size;
        total += spec.loss_on(params, data, batch)?;
        let g = spec.gradient_on(params, data, batch)?;
        *params = sgd_step(params, &g, cfg.learning_rate)?;
    }
    Ok(total / steps as f64)
}

/// Local training for one device.
pub fn local_epoch<R: Rng + ?Sized>(
    device: &mut DeviceState,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let data = Arc::clone(&device.data);
    train_local(&mut device.params, spec, &data, cfg, rng)
}

/// `(1/N) sum_i weight_i * L_i(W_i)` over each device's own parameters.
pub fn global_objective(spec: &ModelSpec, devices: &[DeviceState]) -> Result<f64> {
    if devices.is_empty() {
        return Err(Error::InsufficientClients {
            required: 1,
            got: 0,
        });
    }
    let mut total = 0.0;
    for d in devices {
        total += d.weight * spec.loss(&d.params, &d.data)?;
    }
    Ok(total / devices.len() as f64)
}

/// Same objective with every device evaluated at the common point `w`.
pub fn global_objective_at(spec: &ModelSpec, devices: &[DeviceState], w: &ParamVector) -> Result<f64> {
    if devices.is_empty() {
        return Err(Error::InsufficientClients {
            required: 1,
            got: 0,
        });
    }
    let mut total = 0.0;
    for d in devices {
        total += d.weight * spec.loss(w, &d.data)?;
    }
    Ok(total / devices.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flcore::{synth_linear, Targets};
    use crate::seed;

    #[test]
    fn sgd_step_example() {
        let w = ParamVector(vec![1.0, 2.0]);
        let g = ParamVector(vec![10.0, -10.0]);
        assert_eq!(sgd_step(&w, &g, 0.1).unwrap().as_slice(), &[0.0, 3.0]);
        assert!(sgd_step(&w, &ParamVector(vec![1.0]), 0.1).is_err());
    }

    #[test]
    fn full_batch_descent_reduces_loss() {
        let mut rng = seed::stream(3, &[]);
        let (data, _) = synth_linear(200, 3, 0.1, &mut rng).unwrap();
        let spec = ModelSpec::LinearRegression { inputs: 3 };
        let mut w = ParamVector::zeros(4);
        let before = spec.loss(&w, &data).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 1000,
            local_steps: Some(50),
        };
        train_local(&mut w, &spec, &data, &cfg, &mut rng).unwrap();
        assert!(spec.loss(&w, &data).unwrap() < 0.1 * before);
    }

    #[test]
    fn minibatch_training_is_reproducible() {
        let mut rng = seed::stream(4, &[]);
        let (data, _) = synth_linear(100, 2, 0.1, &mut rng).unwrap();
        let spec = ModelSpec::LinearRegression { inputs: 2 };
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 7,
            local_steps: Some(40),
        };
        let run = |s| {
            let mut w = ParamVector::zeros(3);
            train_local(&mut w, &spec, &data, &cfg, &mut seed::stream(s, &[])).unwrap();
            w
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn default_is_one_pass() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.steps_for(417), 14);
        assert_eq!(cfg.steps_for(5), 1);
        assert_eq!(TrainConfig { local_steps: Some(3), ..cfg }.steps_for(417), 3);
    }

    #[test]
    fn objective_weights_devices() {
        let spec = ModelSpec::LinearRegression { inputs: 1 };
        let mk = |y: f64, weight| DeviceState {
            id: 0,
            params: ParamVector::zeros(2),
            data: Arc::new(LabeledDataset::new("d", vec![0.0], 1, Targets::Real(vec![y])).unwrap()),
            weight,
        };
        // losses 0.5 and 2.0
        let devs = vec![mk(1.0, 1.0), mk(2.0, 0.5)];
        assert!((global_objective(&spec, &devs).unwrap() - 0.75).abs() < 1e-12);
        let w = ParamVector(vec![0.0, 1.0]);
        assert!((global_objective_at(&spec, &devs, &w).unwrap() - 0.125).abs() < 1e-12);
        assert!(global_objective(&spec, &[]).is_err());
    }
}
