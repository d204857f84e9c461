//! Analytic model of the interferometric referee.
//!
//! All click probabilities take the *detected* mean photon number per party,
//! i.e. the source mean attenuated by the channel and the detector efficiency
//! (`mu_det = mu_A * eta_AR * eta_det`). Loss is therefore compensated by
//! scaling the source intensity, `mu -> mu / eta`.
//!
//! Dark counts compose with signal clicks as independent events,
//! `p = 1 - (1 - p_signal)(1 - p_dark)`, which agrees with the additive form
//! to first order when both are small.

mod config;

pub use config::{ConfigError, ParamsFile};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{name} = {value} outside {range}")]
    Domain { name: &'static str, value: f64, range: &'static str },
    #[error("transmittance must be positive")]
    ZeroTransmittance,
}

fn check<T: Real>(name: &'static str, value: T, ok: bool, range: &'static str) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::Domain { name, value: value.f64(), range })
    }
}

/// Linear power transmittance in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transmittance<T = f64>(T);

impl<T: Real> Transmittance<T> {
    pub fn linear(value: T) -> Result<Self, ModelError> {
        if value == T::zero() {
            return Err(ModelError::ZeroTransmittance);
        }
        check("transmittance", value, value > T::zero() && value <= T::one(), "(0, 1]")?;
        Ok(Self(value))
    }

    /// From a loss in dB: `eta = 10^(-dB/10)`.
    pub fn from_db(loss_db: T) -> Result<Self, ModelError> {
        check("loss_db", loss_db, loss_db >= T::zero() && loss_db.is_finite(), "[0, inf)")?;
        Self::linear(T::of(10.0).powf(-loss_db / T::of(10.0)))
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn loss_db(self) -> T {
        -T::of(10.0) * self.0.log10()
    }
}

/// Device model of the optical system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams<T = f64> {
    /// Interference visibility in `[0, 1]`.
    pub visibility: T,
    /// Dark-count probability per pulse per detector.
    pub p_dark: T,
    /// Alice to referee detectors.
    pub eta_ar: Transmittance<T>,
    /// Bob to referee detectors.
    pub eta_br: Transmittance<T>,
    /// Detector quantum efficiency in `(0, 1]`.
    pub eta_det: T,
    /// Pulses per second.
    pub rep_rate: T,
    /// Pulses blocked after each click.
    pub dead_pulses: u32,
}

impl<T: Real> SystemParams<T> {
    /// The long-fiber plug&play system: 3 dB / 1.5 dB channel losses.
    pub fn id500() -> Self {
        Self::preset(3.0, 1.5)
    }

    /// The second plug&play system: 2.36 dB / 1 dB channel losses.
    pub fn clavis2() -> Self {
        Self::preset(2.36, 1.0)
    }

    fn preset(ar_db: f64, br_db: f64) -> Self {
        Self {
            visibility: T::of(0.99),
            p_dark: T::of(3.5e-6),
            eta_ar: Transmittance::from_db(T::of(ar_db)).expect("preset loss"),
            eta_br: Transmittance::from_db(T::of(br_db)).expect("preset loss"),
            eta_det: T::of(0.20),
            rep_rate: T::of(5.0e6),
            dead_pulses: 50,
        }
    }

    /// Lossless, noiseless device with perfect visibility.
    pub fn ideal() -> Self {
        Self {
            visibility: T::one(),
            p_dark: T::zero(),
            eta_ar: Transmittance(T::one()),
            eta_br: Transmittance(T::one()),
            eta_det: T::one(),
            rep_rate: T::of(5.0e6),
            dead_pulses: 0,
        }
    }

    pub fn preset_by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "id500" | "id-500" => Some(Self::id500()),
            "clavis2" => Some(Self::clavis2()),
            "ideal" => Some(Self::ideal()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let unit = |v: T| v >= T::zero() && v <= T::one();
        check("visibility", self.visibility, unit(self.visibility), "[0, 1]")?;
        check("p_dark", self.p_dark, unit(self.p_dark), "[0, 1]")?;
        Transmittance::linear(self.eta_ar.0)?;
        Transmittance::linear(self.eta_br.0)?;
        check("eta_det", self.eta_det, self.eta_det > T::zero() && self.eta_det <= T::one(), "(0, 1]")?;
        check("rep_rate", self.rep_rate, self.rep_rate > T::zero() && self.rep_rate.is_finite(), "(0, inf)")?;
        Ok(())
    }

    /// Mean photons Alice's pulses deliver to the detectors.
    pub fn detected_mean(&self, mu_a: T) -> T {
        mu_a * self.eta_ar.0 * self.eta_det
    }

    /// Source mean Alice must emit for a given detected mean.
    pub fn source_mean(&self, mu_det: T) -> T {
        mu_det / (self.eta_ar.0 * self.eta_det)
    }
}

#[inline]
fn one_minus_exp_neg<T: Real>(x: T) -> T {
    -(-x).exp_m1()
}

#[inline]
fn with_dark<T: Real>(signal: T, dark: T) -> T {
    signal + dark - signal * dark
}

fn check_intensity<T: Real>(mu_det: T, m: u64) -> Result<(), ModelError> {
    check("mu_det", mu_det, mu_det >= T::zero() && mu_det.is_finite(), "[0, inf)")?;
    check("m", T::of_u64(m), m >= 1, "[1, inf)")
}

/// Per-pulse probability of a `D1` click when the inputs are equal.
pub fn p_equal<T: Real>(params: &SystemParams<T>, mu_det: T, m: u64) -> Result<T, ModelError> {
    check_intensity(mu_det, m)?;
    let per_pulse = T::of(2.0) * mu_det / T::of_u64(m);
    let leak = one_minus_exp_neg((T::one() - params.visibility) * per_pulse);
    Ok(with_dark(leak, params.p_dark))
}

/// Per-pulse probability of a `D1` click for codewords at relative distance `delta`.
pub fn p_diff<T: Real>(params: &SystemParams<T>, mu_det: T, m: u64, delta: T) -> Result<T, ModelError> {
    check_intensity(mu_det, m)?;
    check("delta", delta, delta >= T::zero() && delta <= T::one(), "[0, 1]")?;
    let per_pulse = T::of(2.0) * mu_det / T::of_u64(m);
    let bright = one_minus_exp_neg(params.visibility * per_pulse);
    let leak = one_minus_exp_neg((T::one() - params.visibility) * per_pulse);
    let signal = delta * bright + (T::one() - delta) * leak;
    Ok(with_dark(signal, params.p_dark))
}

/// `mu / eta`: the source intensity that survives a transmittance `eta` as `mu`.
pub fn adjust_for_loss<T: Real>(mu: T, eta: T) -> Result<T, ModelError> {
    if eta == T::zero() {
        return Err(ModelError::ZeroTransmittance);
    }
    check("eta", eta, eta > T::zero() && eta <= T::one(), "(0, 1]")?;
    check("mu", mu, mu >= T::zero(), "[0, inf)")?;
    Ok(mu / eta)
}

/// Bob's source mean so that both pulses arrive at the beam splitter with
/// equal amplitude: `mu_B = mu_A * eta_AR / eta_BR`.
pub fn balance_sources<T: Real>(mu_a: T, eta_ar: T, eta_br: T) -> Result<T, ModelError> {
    if eta_ar == T::zero() || eta_br == T::zero() {
        return Err(ModelError::ZeroTransmittance);
    }
    let unit = |v: T| v > T::zero() && v <= T::one();
    check("eta_ar", eta_ar, unit(eta_ar), "(0, 1]")?;
    check("eta_br", eta_br, unit(eta_br), "(0, 1]")?;
    check("mu_a", mu_a, mu_a >= T::zero(), "[0, inf)")?;
    Ok(mu_a * eta_ar / eta_br)
}

/// Photon-number cutoff `ceil(mu + 3 sqrt(mu))` used for the information bound.
pub fn photon_cutoff<T: Real>(mu: T) -> T {
    (mu + T::of(3.0) * mu.sqrt()).ceil()
}

/// Upper bound on the quantum information carried by both pulse trains:
/// `sum_i log2 C(m + k_i, k_i)` with `k_i = ceil(mu_i + 3 sqrt(mu_i))`, the
/// dimension of the `m`-mode subspace holding at most `k_i` photons.
pub fn quantum_info_bound<T: Real>(mu_a: T, mu_b: T, m: u64) -> Result<T, ModelError> {
    check("mu_a", mu_a, mu_a >= T::zero() && mu_a.is_finite(), "[0, inf)")?;
    check("mu_b", mu_b, mu_b >= T::zero() && mu_b.is_finite(), "[0, inf)")?;
    check("m", T::of_u64(m), m >= 1, "[1, inf)")?;
    let modes = T::of_u64(m);
    let party = |mu: T| {
        let k = photon_cutoff(mu);
        T::ln_choose(modes + k, k) / T::LN_2()
    };
    Ok(party(mu_a) + party(mu_b))
}

/// Best known classical protocol, both messages: `2 * 16 sqrt(n)` bits.
pub fn classical_baseline<T: Real>(n: u64) -> T {
    T::of(32.0) * T::of_u64(n).sqrt()
}

/// Lower bound for any classical protocol at error below 0.01: `sqrt(n) / 20`.
pub fn classical_lower_bound<T: Real>(n: u64) -> T {
    T::of_u64(n).sqrt() / T::of(20.0)
}

/// Transmitted-information account for one protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoAccount<T = f64> {
    /// Quantum information upper bound, bits.
    pub q: T,
    /// Classical baseline, bits.
    pub c: T,
    /// Classical lower bound, bits.
    pub c_lb: T,
    /// `c / q`.
    pub gamma: T,
}

impl<T: Real> InfoAccount<T> {
    pub fn new(n: u64, q: T) -> Self {
        let c = classical_baseline(n);
        Self { q, c, c_lb: classical_lower_bound(n), gamma: c / q }
    }

    pub fn compute(n: u64, mu_a: T, mu_b: T, m: u64) -> Result<Self, ModelError> {
        Ok(Self::new(n, quantum_info_bound(mu_a, mu_b, m)?))
    }
}
