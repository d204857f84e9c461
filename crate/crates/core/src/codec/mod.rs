//! Random Toeplitz codes over GF(2).
//!
//! A code maps `n` input bits to `m >= n` output bits through an `n x m`
//! Toeplitz generator matrix `G[i][j] = t[i - j + m - 1]`, so the whole
//! matrix is described by the `n + m - 1` bits of `t`. Encoding is the binary
//! correlation
//!
//! ```text
//! E(x)_j = XOR_{i<n} x_i * t[i + (m - 1 - j)]
//! ```
//!
//! which [`encode`] evaluates in `O(m log m)` with an exact integer transform
//! followed by a parity reduction.
//!
//! The defining sequence `t` is expanded from a 32-byte seed with the ChaCha20
//! stream cipher (`rand_chacha::ChaCha20Rng::from_seed`, 64-bit block counter
//! and zero nonce). Output words are consumed little-endian, least significant
//! bit first; with the all-zero seed the first word is `0x903df1a0ade0b876`.

mod format;
pub mod ntt;

pub use format::{decode_code_file, encode_code_file, CodeFile, CODE_FILE_VERSION, CODE_MAGIC};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityDomain(f64),
    #[error("relative distance {0} outside (0, 1/2)")]
    DistanceDomain(f64),
    #[error("rate margin {margin} must lie in (0, {max})")]
    MarginDomain { margin: f64, max: f64 },
    #[error("rate {0} outside (0, 1)")]
    RateDomain(f64),
    #[error("code shape n={n}, m={m} invalid: {reason}")]
    Shape { n: u64, m: u64, reason: &'static str },
    #[error("input has {got} bits, code expects {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("transform length 2^{log2} cannot hold an input of {n} bits")]
    TransformTooSmall { log2: u32, n: usize },
    #[error("malformed code file: {0}")]
    Format(&'static str),
}

/// 32 bytes of entropy identifying a code (or any other seeded object).
/// Serialized as 64 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Seed(pub [u8; 32]);

impl Serialize for Seed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Seed::from_hex(&text).ok_or_else(|| serde::de::Error::custom("seed must be 64 hex digits"))
    }
}

impl Seed {
    /// Expands a 64-bit seed with `ChaCha20Rng::seed_from_u64`.
    pub fn from_u64(v: u64) -> Self {
        Seed(ChaCha20Rng::seed_from_u64(v).get_seed())
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        if s.len() != 64 || !s.is_ascii() {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, o) in out.iter_mut().enumerate() {
            *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Seed(out))
    }

    /// Independent child seed for `label`, e.g. one per trial. Drawn from a
    /// keystream region that code expansion never reaches.
    pub fn derive(&self, label: u64) -> Seed {
        let mut rng = ChaCha20Rng::from_seed(self.0);
        rng.set_stream(label);
        rng.set_word_pos(1u128 << 67);
        let mut out = [0u8; 32];
        rng.fill_bytes(&mut out);
        Seed(out)
    }

    /// Child seed keyed by an arbitrary 16-byte identifier.
    pub fn mix(&self, id: &[u8; 16]) -> Seed {
        let mut key = self.0;
        for (k, b) in key.iter_mut().zip(id) {
            *k ^= b;
        }
        Seed(key).derive(u64::MAX)
    }
}

/// Binary entropy `H2(p)` in bits, with `0 log 0 = 0`.
pub fn binary_entropy<T: Real>(p: T) -> Result<T, CodecError> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(CodecError::ProbabilityDomain(p.f64()));
    }
    let term = |q: T| if q == T::zero() { T::zero() } else { -q * q.log2() };
    Ok(term(p) + term(T::one() - p))
}

/// Largest rate `1 - H2(delta)` admitted by the Gilbert-Varshamov bound.
pub fn gv_rate<T: Real>(delta: T) -> Result<T, CodecError> {
    if !(delta > T::zero() && delta < T::of(0.5)) {
        return Err(CodecError::DistanceDomain(delta.f64()));
    }
    Ok(T::one() - binary_entropy(delta)?)
}

/// Inverse of [`gv_rate`]: the largest `delta` in `(0, 1/2)` whose GV rate is
/// still at least `rate`.
pub fn gv_distance(rate: f64) -> Result<f64, CodecError> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(CodecError::RateDomain(rate));
    }
    let (mut lo, mut hi) = (0.0_f64, 0.5_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= 0.0 || mid >= 0.5 {
            break;
        }
        if 1.0 - binary_entropy(mid)? >= rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// A base-2 exponent bound `Pr <= 2^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Log2Bound<T = f64> {
    pub exponent: T,
    /// Set when the bound is vacuous or the setting has no matrix at all.
    pub degenerate: bool,
}

/// Bound on drawing a code whose minimum distance falls short of the target
/// when the rate sits `margin` below the GV rate: `2^(-margin * m)`.
pub fn prob_bad_distance<T: Real>(m: u64, margin: T) -> Result<Log2Bound<T>, CodecError> {
    if m == 0 {
        return Err(CodecError::Shape { n: 0, m, reason: "m must be at least 1" });
    }
    if margin.is_nan() || margin < T::zero() {
        return Err(CodecError::MarginDomain { margin: margin.f64(), max: 1.0 });
    }
    let exponent = -margin * T::of_u64(m);
    Ok(Log2Bound { exponent, degenerate: margin == T::zero() })
}

/// Probability that a uniformly random `n x m` Toeplitz matrix of rate `R`
/// is rank deficient: `2^-1 * 2^(-m (1 - R))`.
pub fn prob_not_full_rank<T: Real>(m: u64, rate: T) -> Result<Log2Bound<T>, CodecError> {
    if !(rate > T::zero() && rate < T::one()) {
        return Err(CodecError::RateDomain(rate.f64()));
    }
    let exponent = -T::one() - T::of_u64(m) * (T::one() - rate);
    Ok(Log2Bound { exponent, degenerate: m == 0 })
}

/// `ceil(n / rate)`, snapping to the nearest integer when `n / rate` is within
/// rounding noise of it (so `rate = 0.2` gives exactly `m = 5n`).
pub fn output_length(n: u64, rate: f64) -> u64 {
    let x = n as f64 / rate;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// A random Toeplitz code, fully reproducible from `(n, m, seed)`.
#[derive(Clone, PartialEq)]
pub struct ToeplitzCode {
    n: usize,
    m: usize,
    seed: Seed,
    delta_target: f64,
    t: BitString,
}

impl std::fmt::Debug for ToeplitzCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzCode")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("seed", &self.seed.to_hex())
            .field("delta_target", &self.delta_target)
            .finish()
    }
}

/// Draws the `len`-bit defining sequence for `seed`.
pub fn expand_sequence(seed: &Seed, len: usize) -> BitString {
    let mut rng = ChaCha20Rng::from_seed(seed.0);
    let words = (0..len.div_ceil(64)).map(|_| rng.next_u64()).collect();
    BitString::from_words(words, len)
}

/// Plans a code at `margin` below the GV rate for `delta` and draws it from `seed`.
pub fn build_code(n: u64, delta: f64, margin: f64, seed: Seed) -> Result<ToeplitzCode, CodecError> {
    let gv = gv_rate(delta)?;
    if !(margin > 0.0 && margin < gv) {
        return Err(CodecError::MarginDomain { margin, max: gv });
    }
    let rate = gv - margin;
    let m = output_length(n, rate);
    ToeplitzCode::with_output_len(n, m, delta, seed)
}

impl ToeplitzCode {
    /// A code with an explicit output length, e.g. `m = 5n`. The implied rate
    /// must not exceed the GV rate for `delta_target`.
    pub fn with_output_len(n: u64, m: u64, delta_target: f64, seed: Seed) -> Result<Self, CodecError> {
        if n == 0 {
            return Err(CodecError::Shape { n, m, reason: "n must be at least 1" });
        }
        if m < n {
            return Err(CodecError::Shape { n, m, reason: "m must be at least n" });
        }
        if n >= ntt::MODULUS as u64 {
            return Err(CodecError::Shape { n, m, reason: "n exceeds the exact-transform bound" });
        }
        let rate = n as f64 / m as f64;
        let gv = gv_rate(delta_target)?;
        if rate > gv * (1.0 + 1e-12) {
            return Err(CodecError::Shape { n, m, reason: "rate exceeds the GV rate for the target distance" });
        }
        Ok(Self::from_parts(n as usize, m as usize, seed, delta_target))
    }

    /// Rebuilds a code from a stored header; the distance target is taken as
    /// the largest one the rate admits.
    pub fn from_header(n: u64, m: u64, seed: Seed) -> Result<Self, CodecError> {
        if n == 0 || m < n {
            return Err(CodecError::Shape { n, m, reason: "need 1 <= n <= m" });
        }
        let rate = n as f64 / m as f64;
        let delta = if rate < 1.0 { gv_distance(rate)? } else { 0.0 };
        Ok(Self::from_parts(n as usize, m as usize, seed, delta))
    }

    fn from_parts(n: usize, m: usize, seed: Seed, delta_target: f64) -> Self {
        let t = expand_sequence(&seed, n + m - 1);
        Self { n, m, seed, delta_target, t }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> &Seed {
        &self.seed
    }

    pub fn delta_target(&self) -> f64 {
        self.delta_target
    }

    pub fn rate(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    /// The `n + m - 1` defining bits.
    pub fn sequence(&self) -> &BitString {
        &self.t
    }

    /// Generator entry `G[i][j]`.
    pub fn entry(&self, i: usize, j: usize) -> bool {
        assert!(i < self.n && j < self.m);
        self.t.get(i + self.m - 1 - j)
    }
}

/// Tuning for [`encode_with`]. Results never depend on it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Transform length as a power of two. `None` picks one automatically.
    pub transform_log2: Option<u32>,
}

const AUTO_MAX_LOG2: u32 = 26;

fn auto_log2(n: usize, m: usize) -> u32 {
    let need_single = (n + m - 1).next_power_of_two().trailing_zeros();
    let floor = (2 * n).next_power_of_two().trailing_zeros();
    need_single.min(AUTO_MAX_LOG2.max(floor)).max(floor).min(ntt::MAX_LOG2)
}

pub fn encode(code: &ToeplitzCode, x: &BitString) -> Result<BitString, CodecError> {
    encode_with(code, x, EncoderConfig::default())
}

/// Encodes by overlap-save correlation. With `xr` the reversed input, the
/// correlation `c_k = sum_i x_i t[i + k]` equals `(xr * t)[n - 1 + k]`; each
/// segment of the transform yields `N - n + 1` consecutive `c_k`, and
/// `E(x)_j = c_{m-1-j} mod 2`.
pub fn encode_with(code: &ToeplitzCode, x: &BitString, cfg: EncoderConfig) -> Result<BitString, CodecError> {
    let (n, m) = (code.n, code.m);
    if x.len() != n {
        return Err(CodecError::LengthMismatch { got: x.len(), want: n });
    }
    let log2 = cfg.transform_log2.unwrap_or_else(|| auto_log2(n, m));
    if log2 > ntt::MAX_LOG2 || (1usize << log2) < n {
        return Err(CodecError::TransformTooSmall { log2, n });
    }
    let mut out = BitString::zeros(m);
    if x.count_ones() == 0 {
        return Ok(out);
    }

    let plan = ntt::Plan::new(log2);
    let size = plan.len();
    let one = ntt::to_mont(1);

    let mut xr = vec![0u32; size];
    for i in 0..n {
        if x.get(i) {
            xr[n - 1 - i] = one;
        }
    }
    plan.forward(&mut xr);

    let per_segment = size - n + 1;
    let mut work = vec![0u32; size];
    let t = &code.t;
    let mut k0 = 0usize;
    while k0 < m {
        let outputs = per_segment.min(m - k0);
        let span = outputs + n - 1;
        fill_01(&mut work[..span], t, k0, one);
        work[span..].fill(0);
        plan.forward(&mut work);
        ntt::pointwise_mul(&mut work, &xr);
        plan.inverse_to_plain(&mut work);
        for r in 0..outputs {
            if work[n - 1 + r] & 1 == 1 {
                out.set(m - 1 - (k0 + r), true);
            }
        }
        k0 += outputs;
    }
    Ok(out)
}

fn fill_01(dst: &mut [u32], t: &BitString, start: usize, one: u32) {
    let mut pos = 0;
    while pos < dst.len() {
        let take = (dst.len() - pos).min(64);
        let w = t.extract_word(start + pos, take);
        for (b, d) in dst[pos..pos + take].iter_mut().enumerate() {
            *d = if (w >> b) & 1 == 1 { one } else { 0 };
        }
        pos += take;
    }
}

/// Direct `O(n m / 64)` evaluation: each output bit is the parity of the
/// input AND-ed with a window of the defining sequence. Used as a reference
/// by the command-line tools.
pub fn encode_reference(code: &ToeplitzCode, x: &BitString) -> Result<BitString, CodecError> {
    let (n, m) = (code.n, code.m);
    if x.len() != n {
        return Err(CodecError::LengthMismatch { got: x.len(), want: n });
    }
    let mut out = BitString::zeros(m);
    for j in 0..m {
        let k = m - 1 - j;
        let mut acc = 0u64;
        let mut pos = 0;
        while pos < n {
            let take = (n - pos).min(64);
            acc ^= x.extract_word(pos, take) & code.t.extract_word(k + pos, take);
            pos += take;
        }
        if acc.count_ones() & 1 == 1 {
            out.set(j, true);
        }
    }
    Ok(out)
}
