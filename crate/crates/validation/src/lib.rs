//! Helpers for the acceptance suite: the published reference values, oracles
//! that do not share code with the library under test, and a small
//! pass/fail report.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use qfp::codec::Seed;
use qfp::model::Transmittance;
use qfp::SystemParams;

const PUBLISHED: &str = include_str!("../../cli/data/published.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct Published {
    pub delta: f64,
    pub rate: f64,
    pub devices: std::collections::BTreeMap<String, Device>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Device {
    pub eta_ar_db: f64,
    pub eta_br_db: f64,
    pub eta_det: f64,
    pub p_dark: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Row {
    pub n: f64,
    pub device: String,
    pub mu_a: f64,
    pub q: f64,
    pub q_err: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl Published {
    pub fn load() -> Self {
        toml::from_str(PUBLISHED).expect("bundled published data parses")
    }

    /// Device table entry on top of the matching preset (rep rate, dead time).
    pub fn params(&self, device: &str) -> SystemParams {
        let d = &self.devices[device];
        SystemParams {
            visibility: d.visibility,
            p_dark: d.p_dark,
            eta_ar: Transmittance::from_db(d.eta_ar_db).unwrap(),
            eta_br: Transmittance::from_db(d.eta_br_db).unwrap(),
            eta_det: d.eta_det,
            ..SystemParams::preset_by_name(device).unwrap()
        }
    }
}

/// Central interval holding at least `coverage` of a `Binomial(trials, p)`.
pub fn binomial_band(trials: u64, p: f64, coverage: f64) -> (u64, u64) {
    let b = Binomial::new(p.clamp(0.0, 1.0), trials).unwrap();
    let tail = (1.0 - coverage) / 2.0;
    (b.inverse_cdf(tail), b.inverse_cdf(1.0 - tail))
}

/// `Pr(X <= k)` for `X ~ Binomial(trials, p)`.
pub fn binomial_cdf(trials: u64, p: f64, k: u64) -> f64 {
    Binomial::new(p.clamp(0.0, 1.0), trials).unwrap().cdf(k)
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, std_error: (var / n).sqrt() }
    }

    /// Distance from `target` in standard errors.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target) / self.std_error
    }
}

/// `ceil(num * m / den)` in integers.
pub fn ceil_ratio(num: u64, den: u64, m: u64) -> u64 {
    (u128::from(num) * u128::from(m)).div_ceil(u128::from(den)) as u64
}

/// `E(x)_j = XOR_i x_i t[i + m - 1 - j]` with `t` read straight from the
/// ChaCha20 keystream of the code seed, one bit at a time.
pub fn naive_encode(n: usize, m: usize, seed: &Seed, x: &[bool]) -> Vec<bool> {
    let mut rng = ChaCha20Rng::from_seed(seed.0);
    let words: Vec<u64> = (0..(n + m - 1).div_ceil(64)).map(|_| rng.next_u64()).collect();
    let t = |k: usize| (words[k / 64] >> (k % 64)) & 1 == 1;
    (0..m).map(|j| (0..n).fold(false, |acc, i| acc ^ (x[i] & t(i + m - 1 - j)))).collect()
}

/// Outcome of one acceptance criterion.
pub struct Criterion {
    pub number: u32,
    pub title: &'static str,
    pub pass: bool,
    pub details: Vec<String>,
    started: Instant,
    pub seconds: f64,
}

impl Criterion {
    pub fn start(number: u32, title: &'static str) -> Self {
        Self { number, title, pass: true, details: Vec::new(), started: Instant::now(), seconds: 0.0 }
    }

    /// Records a sub-check; any failing sub-check fails the criterion.
    pub fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.pass &= ok;
        self.details.push(format!("[{}] {}", if ok { "ok" } else { "MISS" }, detail.into()));
    }

    /// Context that does not decide the outcome.
    pub fn note(&mut self, detail: impl Into<String>) {
        self.details.push(format!("[info] {}", detail.into()));
    }

    pub fn finish(mut self) -> Self {
        self.seconds = self.started.elapsed().as_secs_f64();
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for d in &self.details {
            let _ = writeln!(s, "    {d}");
        }
        let _ = writeln!(
            s,
            "{} criterion {}: {} ({:.1} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.number,
            self.title,
            self.seconds
        );
        s
    }
}
