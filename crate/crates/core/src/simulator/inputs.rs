//! Input pairs at a prescribed Hamming distance.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::bits::BitString;
use crate::codec::Seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairMode {
    /// Distance exactly `ceil(delta m)`.
    Exact,
    /// One random frame and its partner at distance `ceil(delta frame_len)`,
    /// both repeated to length `m`.
    Framed(usize),
}

/// `ceil(delta m)`, treating products within rounding noise of an integer
/// as that integer (so `delta = 0.22`, `m = 100` gives 22).
pub fn distance_target(m: u64, delta: f64) -> u64 {
    let x = delta * m as f64;
    let r = x.round();
    let k = if (x - r).abs() <= 1e-12 * x.max(1.0) { r } else { x.ceil() };
    (k.max(0.0) as u64).min(m)
}

fn flip_random(bits: &mut BitString, count: u64, rng: &mut ChaCha20Rng) {
    let len = bits.len();
    for i in index::sample(rng, len, count as usize) {
        bits.flip(i);
    }
}

/// Two `m`-bit strings: a uniformly random one and a copy with a random set
/// of positions flipped.
pub fn worst_case_pair(m: u64, delta: f64, mode: PairMode, seed: Seed) -> Result<(BitString, BitString), SimError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(SimError::Domain { name: "delta", value: delta, range: "[0, 1]" });
    }
    let mut rng = ChaCha20Rng::from_seed(seed.0);
    match mode {
        PairMode::Exact => {
            let a = BitString::random(m as usize, &mut rng);
            let mut b = a.clone();
            flip_random(&mut b, distance_target(m, delta), &mut rng);
            Ok((a, b))
        }
        PairMode::Framed(frame_len) => {
            if frame_len == 0 {
                return Err(SimError::Domain { name: "frame_len", value: 0.0, range: "[1, inf)" });
            }
            let fa = BitString::random(frame_len, &mut rng);
            let mut fb = fa.clone();
            flip_random(&mut fb, distance_target(frame_len as u64, delta), &mut rng);
            Ok((repeat(&fa, m), repeat(&fb, m)))
        }
    }
}

fn repeat(frame: &BitString, m: u64) -> BitString {
    let mut out = BitString::zeros(0);
    let f = frame.len();
    let mut left = m as usize;
    while left > 0 {
        let mut off = 0;
        let take = left.min(f);
        while off < take {
            let c = (take - off).min(64);
            out.push_word(frame.extract_word(off, c), c);
            off += c;
        }
        left -= take;
    }
    out
}
