//! Rayleigh fading, path loss and the physical interference success rule.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct ChannelParams {
    /// Path-loss exponent alpha.
    pub path_loss_exponent: f64,
    /// Transmit power in watts.
    pub tx_power: f64,
    /// Noise power in watts; zero means SIR mode.
    pub noise_power: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            path_loss_exponent: 4.0,
            tx_power: 1.0,
            noise_power: 0.0,
        }
    }
}

impl ChannelParams {
    pub fn new(path_loss_exponent: f64, tx_power: f64, noise_power: f64) -> Result<Self> {
        let p = ChannelParams {
            path_loss_exponent,
            tx_power,
            noise_power,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent.is_finite() && self.path_loss_exponent > 0.0) {
            return Err(Error::param(format!(
                "path-loss exponent must be > 0, got {}",
                self.path_loss_exponent
            )));
        }
        if !(self.tx_power.is_finite() && self.tx_power > 0.0) {
            return Err(Error::param(format!("tx power must be > 0, got {}", self.tx_power)));
        }
        if !(self.noise_power.is_finite() && self.noise_power >= 0.0) {
            return Err(Error::param(format!(
                "noise power must be >= 0, got {}",
                self.noise_power
            )));
        }
        Ok(())
    }
}

/// Power gain of a Rayleigh-faded link: exponential with unit mean.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FadingSample(f64);

impl FadingSample {
    pub fn new(h: f64) -> Result<Self> {
        if !(h.is_finite() && h >= 0.0) {
            return Err(Error::param(format!("fading gain must be finite and >= 0, got {h}")));
        }
        Ok(FadingSample(h))
    }

    pub fn gain(self) -> f64 {
        self.0
    }
}

pub fn sample_rayleigh_power<R: Rng + ?Sized>(rng: &mut R) -> FadingSample {
    FadingSample(Exp1.sample(rng))
}

/// `P * h * r^-alpha`.
pub fn received_power(params: &ChannelParams, h: FadingSample, r: f64) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::param(format!("link distance must be > 0, got {r}")));
    }
    Ok(params.tx_power * h.0 * r.powf(-params.path_loss_exponent))
}

/// `r^-alpha` given `r^2`, with fast paths for the common even exponents.
#[inline]
pub(crate) fn path_gain_from_sq(dist_sq: f64, alpha: f64) -> f64 {
    if alpha == 4.0 {
        1.0 / (dist_sq * dist_sq)
    } else if alpha == 2.0 {
        1.0 / dist_sq
    } else if alpha == 6.0 {
        1.0 / (dist_sq * dist_sq * dist_sq)
    } else if alpha == 3.0 {
        1.0 / (dist_sq * dist_sq.sqrt())
    } else {
        dist_sq.powf(-0.5 * alpha)
    }
}

/// `S / (N + I)`.
pub fn sinr(signal: f64, interference: f64, noise: f64) -> Result<f64> {
    if interference < 0.0 || noise < 0.0 {
        return Err(Error::param("interference and noise must be >= 0"));
    }
    let denom = noise + interference;
    if denom == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    Ok(signal / denom)
}

/// Success iff the ratio meets the threshold (inclusive).
pub fn is_success(sir: f64, theta: f64) -> bool {
    sir >= theta
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::param(format!("cannot express {x} in dB")));
    }
    Ok(10.0 * x.log10())
}
