//! Mean-photon-number estimation from click counts with equal inputs.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::SystemParams;

/// Click totals of one calibration train of `pulses` pulses with identical inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationRound {
    pub clicks_d0: u64,
    pub clicks_d1: u64,
    pub pulses: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    /// Detected mean photon number per party per train (mean over rounds).
    pub mu_det: f64,
    /// Spread of the per-round estimates (counting noise for a single round).
    pub std_dev: f64,
    pub std_error: f64,
    pub rounds: usize,
}

/// Expected clicks per pulse on both detectors together when the inputs
/// agree, at `y` detected photons per party per pulse:
/// `2 - (1 - p_dark) (exp(-2 nu y) + exp(-2 (1 - nu) y))`.
pub fn total_click_rate(visibility: f64, p_dark: f64, y: f64) -> f64 {
    2.0 - (1.0 - p_dark) * ((-2.0 * visibility * y).exp() + (-2.0 * (1.0 - visibility) * y).exp())
}

fn rate_slope(visibility: f64, p_dark: f64, y: f64) -> f64 {
    let (a, b) = (2.0 * visibility, 2.0 * (1.0 - visibility));
    (1.0 - p_dark) * (a * (-a * y).exp() + b * (-b * y).exp())
}

fn rate_sup(visibility: f64, p_dark: f64) -> f64 {
    if visibility == 0.0 || visibility == 1.0 {
        1.0 + p_dark
    } else {
        2.0
    }
}

/// Per-pulse photon number `y` reproducing the observed rate.
fn invert(visibility: f64, p_dark: f64, rate: f64) -> Result<f64, SimError> {
    let max = rate_sup(visibility, p_dark);
    if rate >= max {
        return Err(SimError::RateAboveModel { rate, max });
    }
    if rate <= total_click_rate(visibility, p_dark, 0.0) {
        return Ok(0.0);
    }
    let mut hi = 1e-12;
    while total_click_rate(visibility, p_dark, hi) < rate {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(SimError::RateAboveModel { rate, max });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if total_click_rate(visibility, p_dark, mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inverts the equal-input click-rate model for each round. With several
/// rounds the spread is their sample standard deviation; with one it is the
/// counting noise propagated through the model.
pub fn calibrate_mu(rounds: &[CalibrationRound], params: &SystemParams<f64>) -> Result<MuEstimate, SimError> {
    if rounds.is_empty() {
        return Err(SimError::NoRounds);
    }
    let (nu, pd) = (params.visibility, params.p_dark);
    let mut est = Vec::with_capacity(rounds.len());
    for r in rounds {
        if r.pulses == 0 || r.clicks_d0 > r.pulses || r.clicks_d1 > r.pulses {
            return Err(SimError::Domain { name: "pulses", value: r.pulses as f64, range: "[max clicks, inf)" });
        }
        let rate = (r.clicks_d0 + r.clicks_d1) as f64 / r.pulses as f64;
        est.push(invert(nu, pd, rate)? * r.pulses as f64);
    }
    let k = est.len() as f64;
    let mean = est.iter().sum::<f64>() / k;
    if est.len() > 1 {
        let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let sd = var.sqrt();
        return Ok(MuEstimate { mu_det: mean, std_dev: sd, std_error: sd / k.sqrt(), rounds: est.len() });
    }
    let r = rounds[0];
    let pulses = r.pulses as f64;
    let y = mean / pulses;
    // per-pulse click variance summed over both detectors
    let p1 = 1.0 - (1.0 - pd) * (-2.0 * (1.0 - nu) * y).exp();
    let p0 = 1.0 - (1.0 - pd) * (-2.0 * nu * y).exp();
    let count_sd = (pulses * (p0 * (1.0 - p0) + p1 * (1.0 - p1))).sqrt();
    let slope = rate_slope(nu, pd, y);
    let sd = if slope > 0.0 { count_sd / slope } else { f64::INFINITY };
    Ok(MuEstimate { mu_det: mean, std_dev: sd, std_error: sd, rounds: 1 })
}
