//! Closed-form success probability and the Poisson law of successful
//! transmitter counts.
//!
//! Two success-probability forms are provided. [`p_succ_verbatim`] keeps the
//! disk-area factor `pi R^2` in front of `r^2`, as the analysis of a finite
//! disk is usually written in the source material; [`p_succ_reference`] is
//! the standard unbounded-plane Rayleigh/PPP coverage expression. Only the
//! latter is dimensionally consistent and it is what the matched Monte Carlo
//! mode in [`crate::netsim`] converges to (up to the finite-disk edge effect).
//! Both require `alpha > 2`, since `sin(2 pi / alpha)` vanishes at 2.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::topology::check_probability;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ClosedFormInputs {
    /// Device intensity lambda (per m^2).
    pub intensity: f64,
    /// Aloha transmit probability p.
    pub tx_prob: f64,
    /// Disk radius R in meters.
    pub disk_radius: f64,
    /// Link distance r in meters.
    pub link_distance: f64,
    /// Linear SIR threshold theta.
    pub theta: f64,
    pub path_loss_exponent: f64,
}

impl ClosedFormInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity.is_finite() && self.intensity >= 0.0) {
            return Err(Error::param(format!("intensity must be >= 0, got {}", self.intensity)));
        }
        check_probability(self.tx_prob, "tx probability")?;
        if !(self.disk_radius.is_finite() && self.disk_radius > 0.0) {
            return Err(Error::param("disk radius must be > 0"));
        }
        if !(self.link_distance.is_finite() && self.link_distance > 0.0) {
            return Err(Error::param("link distance must be > 0"));
        }
        if !(self.theta.is_finite() && self.theta > 0.0) {
            return Err(Error::param("SIR threshold must be > 0"));
        }
        alpha_kernel(self.path_loss_exponent).map(|_| ())
    }
}

/// `(2 pi / alpha) / sin(2 pi / alpha)`, defined for `alpha > 2`.
pub fn alpha_kernel(alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 2.0) {
        return Err(Error::Domain(format!(
            "closed form needs alpha > 2 (sin(2 pi / alpha) = {:.3e} at alpha = {alpha})",
            (2.0 * PI / alpha).sin()
        )));
    }
    let x = 2.0 * PI / alpha;
    Ok(x / x.sin())
}

/// `exp(-lambda p pi R^2 r^2 theta^(2/alpha) K(alpha))`.
pub fn p_succ_verbatim(inputs: &ClosedFormInputs) -> Result<f64> {
    inputs.validate()?;
    let ClosedFormInputs {
        intensity,
        tx_prob,
        disk_radius,
        link_distance,
        theta,
        path_loss_exponent: alpha,
    } = *inputs;
    let k = alpha_kernel(alpha)?;
    let exponent = intensity
        * tx_prob
        * PI
        * disk_radius.powi(2)
        * link_distance.powi(2)
        * theta.powf(2.0 / alpha)
        * k;
    Ok((-exponent).exp())
}

/// `exp(-lambda p pi r^2 theta^(2/alpha) K(alpha))`.
pub fn p_succ_reference(
    intensity: f64,
    tx_prob: f64,
    link_distance: f64,
    theta: f64,
    alpha: f64,
) -> Result<f64> {
    let inputs = ClosedFormInputs {
        intensity,
        tx_prob,
        disk_radius: 1.0,
        link_distance,
        theta,
        path_loss_exponent: alpha,
    };
    inputs.validate()?;
    let k = alpha_kernel(alpha)?;
    let exponent = intensity * tx_prob * PI * link_distance.powi(2) * theta.powf(2.0 / alpha) * k;
    Ok((-exponent).exp())
}

/// Mean number of successful transmitters `pi R^2 lambda p_succ`.
pub fn expected_success_count(intensity: f64, p_succ: f64, disk_radius: f64) -> Result<f64> {
    check_probability(p_succ, "success probability")?;
    Ok(PI * disk_radius * disk_radius * intensity * p_succ)
}

/// Poisson pmf `exp(-n) n^l / l!`, evaluated in log space.
pub fn success_count_pmf(l: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return if l == 0 { 1.0 } else { 0.0 };
    }
    let l = l as f64;
    (l * mean.ln() - mean - libm::lgamma(l + 1.0)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::db_to_linear;

    fn inputs(intensity: f64, theta: f64) -> ClosedFormInputs {
        ClosedFormInputs {
            intensity,
            tx_prob: 0.3,
            disk_radius: 500.0,
            link_distance: 1.0,
            theta,
            path_loss_exponent: 4.0,
        }
    }

    #[test]
    fn verbatim_form_examples() {
        assert_eq!(p_succ_verbatim(&inputs(0.0, 0.1)).unwrap(), 1.0);
        assert!((p_succ_verbatim(&inputs(1e-3, 1e-300)).unwrap() - 1.0).abs() < 1e-12);
        // 40-digit evaluation: 3.344704278296659304713685791032505713363e-26
        let v = p_succ_verbatim(&inputs(1e-3, 0.02512)).unwrap();
        assert!((v / 3.344_704_278_296_659e-26 - 1.0).abs() < 1e-12, "{v:e}");
    }

    #[test]
    fn alpha_two_is_domain_error() {
        let mut i = inputs(1e-3, 1.0);
        i.path_loss_exponent = 2.0;
        assert!(matches!(p_succ_verbatim(&i), Err(Error::Domain(_))));
        assert!(matches!(
            p_succ_reference(1e-3, 0.3, 10.0, 1.0, 1.5),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn reference_form_examples() {
        assert_eq!(p_succ_reference(0.0, 0.3, 50.0, 1.0, 4.0).unwrap(), 1.0);
        let theta = db_to_linear(-16.0);
        // 40-digit evaluations
        let v = p_succ_reference(1e-3, 0.3, 50.0, theta, 4.0).unwrap();
        assert!((v - 0.556_223_503_366_300_1).abs() < 1e-13);
        let v3 = p_succ_reference(1e-2, 0.3, 25.0, theta, 3.0).unwrap();
        assert!((v3 - 0.294_689_000_464_864_4).abs() < 1e-13);
        let v6 = p_succ_reference(1e-2, 0.3, 25.0, theta, 6.0).unwrap();
        assert!((v6 - 0.124_181_984_278_633_3).abs() < 1e-13);
    }

    #[test]
    fn doubling_distance_quadruples_log() {
        let a = p_succ_reference(1e-3, 0.3, 20.0, 0.5, 4.0).unwrap().ln();
        let b = p_succ_reference(1e-3, 0.3, 40.0, 0.5, 4.0).unwrap().ln();
        assert!((b / a - 4.0).abs() < 1e-12);
    }

    #[test]
    fn verbatim_over_reference_log_ratio_is_radius_squared() {
        let i = ClosedFormInputs {
            intensity: 2e-4,
            tx_prob: 0.3,
            disk_radius: 0.4,
            link_distance: 3.0,
            theta: 0.7,
            path_loss_exponent: 3.5,
        };
        let lp = p_succ_verbatim(&i).unwrap().ln();
        let lr = p_succ_reference(2e-4, 0.3, 3.0, 0.7, 3.5).unwrap().ln();
        assert!((lp / lr - 0.16).abs() < 1e-12);
    }

    #[test]
    fn expected_count_examples() {
        assert!((expected_success_count(0.01, 1.0, 500.0).unwrap() - 0.01 * PI * 250_000.0).abs() < 1e-9);
        assert_eq!(expected_success_count(0.01, 0.0, 500.0).unwrap(), 0.0);
        let v = expected_success_count(0.01, 0.5, 500.0).unwrap();
        assert!((v - 3_926.990_816_987_241_5).abs() < 1e-9);
        assert!(expected_success_count(0.01, 1.5, 500.0).is_err());
    }

    #[test]
    fn pmf_examples() {
        assert!((success_count_pmf(0, 3.0) - (-3f64).exp()).abs() < 1e-15);
        assert_eq!(success_count_pmf(0, 0.0), 1.0);
        assert_eq!(success_count_pmf(4, 0.0), 0.0);
        let total: f64 = (0..=200).map(|l| success_count_pmf(l, 10.0)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        // beyond 170! the direct formula overflows
        let big = success_count_pmf(1000, 1000.0);
        assert!(big.is_finite() && big > 0.01 && big < 0.02);
    }
}
