//! Monte Carlo estimate of the successful transmission probability.
//!
//! `Procedure` mode follows the mesh construction: a PPP of devices on the
//! disk, Aloha thinning, a typical receiver at the origin whose desired
//! transmitters are the ones inside the one-hop radius, and interference from
//! every transmitter outside it. `Matched` mode puts one extra transmitter at
//! a fixed distance from the receiver and treats every Aloha transmitter on
//! the disk as an interferer, which is the setting of the closed form
//! [`crate::analysis::p_succ_reference`].
//!
//! Only the distance of each transmitter to the receiver at the origin
//! enters the SIR, so rounds draw the squared radius `R^2 u` directly and
//! never materialize angles. The transmitter count is Poisson(lambda |D|)
//! thinned by Binomial(n, p), which is exactly the thinned process.
//!
//! Each round owns a random stream keyed by `(seed, round)` and rounds are
//! reduced in fixed-size chunks, in order, so results do not depend on the
//! number of worker threads.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, path_gain_from_sq, ChannelParams};
use crate::geometry::poisson_count;
use crate::seed::{self, domain};
use crate::topology::{channel_count, MacParams};
use crate::{Error, Result};

const CHUNK_ROUNDS: u64 = 512;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    Procedure,
    Matched,
}

impl std::fmt::Display for SimMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SimMode::Procedure => "procedure",
            SimMode::Matched => "matched",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct NetSimConfig {
    pub disk_radius: f64,
    pub intensity: f64,
    #[serde(flatten)]
    pub mac: MacParams,
    pub theta_grid_db: Vec<f64>,
    pub rounds: u64,
    #[serde(flatten)]
    pub channel: ChannelParams,
    /// Distance of the designated transmitter in matched mode.
    pub link_distance: f64,
    pub seed: u64,
    pub mode: SimMode,
}

impl Default for NetSimConfig {
    fn default() -> Self {
        NetSimConfig {
            disk_radius: 500.0,
            intensity: 1e-3,
            mac: MacParams::default(),
            theta_grid_db: (-20..=20).map(f64::from).collect(),
            rounds: 100_000,
            channel: ChannelParams::default(),
            link_distance: 50.0,
            seed: 0,
            mode: SimMode::Procedure,
        }
    }
}

impl NetSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.disk_radius.is_finite() && self.disk_radius > 0.0) {
            return Err(Error::param(format!("disk radius must be > 0, got {}", self.disk_radius)));
        }
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(Error::param(format!("intensity must be >= 0, got {}", self.intensity)));
        }
        self.mac.validate()?;
        self.channel.validate()?;
        if self.rounds == 0 {
            return Err(Error::param("rounds must be >= 1"));
        }
        if self.theta_grid_db.is_empty() {
            return Err(Error::param("theta grid is empty"));
        }
        if let Some(t) = self.theta_grid_db.iter().find(|t| !t.is_finite()) {
            return Err(Error::param(format!("non-finite threshold {t} dB")));
        }
        if self.mode == SimMode::Matched
            && !(self.link_distance.is_finite() && self.link_distance > 0.0)
        {
            return Err(Error::param("matched mode needs a link distance > 0"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ThetaPoint {
    pub theta_db: f64,
    pub attempts: u64,
    pub successes: u64,
    /// `None` when no transmission was attempted.
    pub p_hat: Option<f64>,
    /// Wilson score interval at 95%.
    pub ci95: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NetSimResult {
    pub intensity: f64,
    pub tx_prob: f64,
    pub one_hop_radius: f64,
    pub path_loss_exponent: f64,
    pub mode: SimMode,
    pub rounds: u64,
    /// Orthogonal channel count k of the one-hop disk.
    pub channels: u64,
    pub points: Vec<ThetaPoint>,
    pub mean_interference: f64,
    /// Rounds whose one-hop transmitter count exceeded `channels`.
    pub occupancy_overflows: u64,
    pub diagnostics: Vec<String>,
}

impl NetSimResult {
    pub fn point(&self, theta_db: f64) -> Option<&ThetaPoint> {
        self.points.iter().find(|p| p.theta_db == theta_db)
    }
}

pub fn wilson_interval(successes: u64, attempts: u64) -> (f64, f64) {
    let n = attempts as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// One round: desired signal powers in `desired`, returns the SINR
/// denominator `N + I` and the interference `I`.
struct RoundKernel<'a> {
    cfg: &'a NetSimConfig,
    mean_nodes: f64,
    r_sq_max: f64,
    r_oh_sq: f64,
    matched_gain: f64,
}

impl<'a> RoundKernel<'a> {
    fn new(cfg: &'a NetSimConfig) -> Self {
        let alpha = cfg.channel.path_loss_exponent;
        RoundKernel {
            cfg,
            mean_nodes: cfg.intensity * PI * cfg.disk_radius * cfg.disk_radius,
            r_sq_max: cfg.disk_radius * cfg.disk_radius,
            r_oh_sq: cfg.mac.one_hop_radius * cfg.mac.one_hop_radius,
            matched_gain: path_gain_from_sq(cfg.link_distance * cfg.link_distance, alpha),
        }
    }

    fn run(&self, round: u64, desired: &mut Vec<f64>) -> (f64, f64) {
        let mut rng = seed::stream(self.cfg.seed, &[domain::NETSIM_ROUND, round]);
        let alpha = self.cfg.channel.path_loss_exponent;
        let power = self.cfg.channel.tx_power;
        desired.clear();

        if self.cfg.mode == SimMode::Matched {
            let h: f64 = Exp1.sample(&mut rng);
            desired.push(power * h * self.matched_gain);
        }

        let nodes = poisson_count(self.mean_nodes, &mut rng);
        let transmitters = if nodes == 0 || self.cfg.mac.tx_prob == 0.0 {
            0
        } else {
            Binomial::new(nodes, self.cfg.mac.tx_prob)
                .expect("validated probability")
                .sample(&mut rng)
        };

        let mut interference = 0.0;
        for _ in 0..transmitters {
            // (0, 1] keeps r^2 away from zero
            let u: f64 = 1.0 - rng.random::<f64>();
            let r_sq = self.r_sq_max * u;
            let h: f64 = Exp1.sample(&mut rng);
            let rx = power * h * path_gain_from_sq(r_sq, alpha);
            if self.cfg.mode == SimMode::Procedure && r_sq < self.r_oh_sq {
                desired.push(rx);
            } else {
                interference += rx;
            }
        }
        (self.cfg.channel.noise_power + interference, interference)
    }
}

#[derive(Debug, Clone)]
struct Tally {
    attempts: u64,
    /// `hist[k]`: transmissions meeting exactly the `k` smallest thresholds.
    hist: Vec<u64>,
    interference: f64,
    overflows: u64,
}

impl Tally {
    fn new(levels: usize) -> Self {
        Tally {
            attempts: 0,
            hist: vec![0; levels + 1],
            interference: 0.0,
            overflows: 0,
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.attempts += other.attempts;
        for (a, b) in self.hist.iter_mut().zip(&other.hist) {
            *a += b;
        }
        self.interference += other.interference;
        self.overflows += other.overflows;
    }
}

fn chunk_ranges(rounds: u64) -> Vec<(u64, u64)> {
    (0..rounds.div_ceil(CHUNK_ROUNDS))
        .map(|c| (c * CHUNK_ROUNDS, ((c + 1) * CHUNK_ROUNDS).min(rounds)))
        .collect()
}

/// Estimates `p_succ` for every threshold in the grid, sharing each round's
/// realization across the grid.
pub fn estimate_p_succ(cfg: &NetSimConfig) -> Result<NetSimResult> {
    cfg.validate()?;
    let kernel = RoundKernel::new(cfg);
    let channels = channel_count(cfg.intensity, cfg.mac.tx_prob, cfg.mac.one_hop_radius);

    let mut sorted: Vec<f64> = cfg.theta_grid_db.iter().map(|&t| db_to_linear(t)).collect();
    sorted.sort_by(f64::total_cmp);
    let levels = sorted.len();

    let tallies: Vec<Tally> = chunk_ranges(cfg.rounds)
        .into_par_iter()
        .map(|(start, end)| {
            let mut tally = Tally::new(levels);
            let mut desired = Vec::new();
            for round in start..end {
                let (denom, interference) = kernel.run(round, &mut desired);
                tally.interference += interference;
                tally.attempts += desired.len() as u64;
                if cfg.mode == SimMode::Procedure && desired.len() as u64 > channels {
                    tally.overflows += 1;
                }
                for &s in &desired {
                    let met = if denom == 0.0 {
                        levels
                    } else {
                        let sir = s / denom;
                        sorted.partition_point(|&t| t <= sir)
                    };
                    tally.hist[met] += 1;
                }
            }
            tally
        })
        .collect();

    let mut total = Tally::new(levels);
    for t in &tallies {
        total.merge(t);
    }

    // successes at the k-th smallest threshold = transmissions meeting > k of them
    let mut at_least = vec![0u64; levels + 1];
    let mut acc = 0;
    for k in (0..=levels).rev() {
        acc += total.hist[k];
        at_least[k] = acc;
    }

    let mut diagnostics = Vec::new();
    if total.attempts == 0 {
        diagnostics.push(format!(
            "no transmissions attempted in {} rounds (intensity {}); p_hat undefined",
            cfg.rounds, cfg.intensity
        ));
    }

    let points = cfg
        .theta_grid_db
        .iter()
        .map(|&theta_db| {
            let lin = db_to_linear(theta_db);
            let rank = sorted.partition_point(|&t| t < lin);
            let successes = at_least[rank + 1];
            let (p_hat, ci95) = if total.attempts == 0 {
                (None, None)
            } else {
                (
                    Some(successes as f64 / total.attempts as f64),
                    Some(wilson_interval(successes, total.attempts)),
                )
            };
            ThetaPoint {
                theta_db,
                attempts: total.attempts,
                successes,
                p_hat,
                ci95,
            }
        })
        .collect();

    Ok(NetSimResult {
        intensity: cfg.intensity,
        tx_prob: cfg.mac.tx_prob,
        one_hop_radius: cfg.mac.one_hop_radius,
        path_loss_exponent: cfg.channel.path_loss_exponent,
        mode: cfg.mode,
        rounds: cfg.rounds,
        channels,
        points,
        mean_interference: total.interference / cfg.rounds as f64,
        occupancy_overflows: total.overflows,
        diagnostics,
    })
}

/// Per-round number of successful transmissions at one threshold.
pub fn success_counts(cfg: &NetSimConfig, theta_db: f64) -> Result<Vec<u64>> {
    cfg.validate()?;
    let kernel = RoundKernel::new(cfg);
    let theta = db_to_linear(theta_db);
    let chunks: Vec<Vec<u64>> = chunk_ranges(cfg.rounds)
        .into_par_iter()
        .map(|(start, end)| {
            let mut desired = Vec::new();
            (start..end)
                .map(|round| {
                    let (denom, _) = kernel.run(round, &mut desired);
                    desired
                        .iter()
                        .filter(|&&s| denom == 0.0 || s / denom >= theta)
                        .count() as u64
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// Seed used for the config at `index` of a sweep.
pub fn sweep_seed(master_seed: u64, index: usize) -> u64 {
    seed::derive(master_seed, &[domain::SWEEP, index as u64])
}

/// Runs every config with a seed derived from `master_seed` and its index.
/// A failing config does not abort the others.
pub fn sweep(master_seed: u64, cfgs: &[NetSimConfig]) -> Vec<Result<NetSimResult>> {
    cfgs.iter()
        .enumerate()
        .map(|(i, cfg)| estimate_p_succ(&cfg.clone().with_seed(sweep_seed(master_seed, i))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_uses_flat_camel_case() {
        let cfg: NetSimConfig = serde_json::from_str(
            r#"{"intensity":0.01,"txProb":0.5,"oneHopRadius":100,"pathLossExponent":3,"rounds":10,"mode":"matched"}"#,
        )
        .unwrap();
        assert_eq!(cfg.mac.tx_prob, 0.5);
        assert_eq!(cfg.channel.path_loss_exponent, 3.0);
        assert_eq!(cfg.mode, SimMode::Matched);
        let back: NetSimConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    fn cfg(intensity: f64, mode: SimMode, rounds: u64) -> NetSimConfig {
        NetSimConfig {
            intensity,
            mode,
            rounds,
            seed: 17,
            ..NetSimConfig::default()
        }
    }

    #[test]
    fn zero_intensity_is_undefined_not_error() {
        let r = estimate_p_succ(&cfg(0.0, SimMode::Procedure, 100)).unwrap();
        assert!(r.points.iter().all(|p| p.attempts == 0 && p.p_hat.is_none()));
        assert_eq!(r.diagnostics.len(), 1);
    }

    #[test]
    fn zero_rounds_rejected() {
        assert!(estimate_p_succ(&cfg(1e-3, SimMode::Procedure, 0)).is_err());
        let mut c = cfg(1e-3, SimMode::Procedure, 10);
        c.theta_grid_db.clear();
        assert!(estimate_p_succ(&c).is_err());
    }

    #[test]
    fn tiny_threshold_always_succeeds_in_matched_mode() {
        let mut c = cfg(1e-3, SimMode::Matched, 5_000);
        c.theta_grid_db = vec![-90.0];
        let r = estimate_p_succ(&c).unwrap();
        let p = r.points[0].p_hat.unwrap();
        assert!(p > 0.99, "{p}");
        assert_eq!(r.points[0].attempts, 5_000);
    }

    #[test]
    fn monotone_in_theta_and_ci_contains_estimate() {
        let mut c = cfg(5e-3, SimMode::Procedure, 400);
        c.theta_grid_db = vec![5.0, -20.0, 0.0, -10.0, 20.0];
        let r = estimate_p_succ(&c).unwrap();
        let mut by_theta: Vec<_> = r.points.clone();
        by_theta.sort_by(|a, b| a.theta_db.total_cmp(&b.theta_db));
        for w in by_theta.windows(2) {
            assert!(w[0].successes >= w[1].successes);
        }
        for p in &r.points {
            let (lo, hi) = p.ci95.unwrap();
            let ph = p.p_hat.unwrap();
            assert!(lo <= ph && ph <= hi);
            assert!(p.successes <= p.attempts);
        }
        // grid order is preserved in the output
        assert_eq!(r.points[0].theta_db, 5.0);
    }

    #[test]
    fn replay_is_identical() {
        let c = cfg(1e-3, SimMode::Procedure, 1_500);
        assert_eq!(estimate_p_succ(&c).unwrap(), estimate_p_succ(&c).unwrap());
    }

    #[test]
    fn thread_count_does_not_matter() {
        let c = cfg(2e-3, SimMode::Procedure, 3_000);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| estimate_p_succ(&c).unwrap());
        let b = four.install(|| estimate_p_succ(&c).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.mean_interference.to_bits(), b.mean_interference.to_bits());
    }

    #[test]
    fn success_counts_agree_with_estimate() {
        let mut c = cfg(1e-3, SimMode::Procedure, 700);
        c.theta_grid_db = vec![-16.0];
        let r = estimate_p_succ(&c).unwrap();
        let counts = success_counts(&c, -16.0).unwrap();
        assert_eq!(counts.len(), 700);
        assert_eq!(counts.iter().sum::<u64>(), r.points[0].successes);
    }

    #[test]
    fn sweep_matches_direct_calls() {
        assert!(sweep(1, &[]).is_empty());
        let c = cfg(1e-3, SimMode::Procedure, 200);
        let s = sweep(5, std::slice::from_ref(&c));
        assert_eq!(s.len(), 1);
        let direct = estimate_p_succ(&c.clone().with_seed(sweep_seed(5, 0))).unwrap();
        assert_eq!(s[0].as_ref().unwrap(), &direct);

        let mut bad = c.clone();
        bad.rounds = 0;
        let mixed = sweep(5, &[bad, c]);
        assert!(mixed[0].is_err() && mixed[1].is_ok());
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 10);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.35);
        let (lo, hi) = wilson_interval(10, 10);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.65);
    }
}
