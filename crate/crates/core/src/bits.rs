//! Packed bit strings.
//!
//! Bit `i` lives in word `i / 64` at position `i % 64`. Serialized as bytes
//! this is byte `i / 8`, bit `i % 8` (least significant first), the packing
//! used by every file and wire format in this crate.

use std::fmt;

use rand::RngCore;

#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self { words: vec![0; words_for(len)], len }
    }

    pub fn ones(len: usize) -> Self {
        let mut s = Self { words: vec![u64::MAX; words_for(len)], len };
        s.clear_padding();
        s
    }

    /// Uniform random bits drawn from `rng`.
    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut s = Self::zeros(len);
        for w in &mut s.words {
            *w = rng.next_u64();
        }
        s.clear_padding();
        s
    }

    /// Takes ownership of packed words; bits past `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize) -> Self {
        words.resize(words_for(len), 0);
        let mut s = Self { words, len };
        s.clear_padding();
        s
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.set(i, true);
            }
        }
        s
    }

    /// Parses a string of `'0'`/`'1'` characters (other characters are rejected).
    pub fn parse01(text: &str) -> Option<Self> {
        let bits: Option<Vec<bool>> = text
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect();
        bits.map(|b| Self::from_bools(&b))
    }

    /// Unpacks `len` bits from little-endian packed bytes. Returns `None` if
    /// `bytes` is not exactly `ceil(len / 8)` long or a padding bit is set.
    pub fn from_packed_bytes(bytes: &[u8], len: usize) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        if !len.is_multiple_of(8) {
            let last = bytes[bytes.len() - 1];
            if last >> (len % 8) != 0 {
                return None;
            }
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            words[i] = u64::from_le_bytes(buf);
        }
        Some(Self { words, len })
    }

    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8));
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.truncate(self.len.div_ceil(8));
        out
    }

    /// Packed bytes of the sub-range `[start, start + count)`.
    pub fn range_to_packed_bytes(&self, start: usize, count: usize) -> Vec<u8> {
        assert!(start + count <= self.len, "range out of bounds");
        let mut out = vec![0u8; count.div_ceil(8)];
        if start.is_multiple_of(8) {
            let mut pos = 0;
            while pos < count {
                let take = (count - pos).min(64);
                let w = self.extract_word(start + pos, take);
                let bytes = w.to_le_bytes();
                let nb = take.div_ceil(8);
                out[pos / 8..pos / 8 + nb].copy_from_slice(&bytes[..nb]);
                pos += take;
            }
        } else {
            for i in 0..count {
                if self.get(start + i) {
                    out[i / 8] |= 1 << (i % 8);
                }
            }
        }
        out
    }

    /// Appends `count` bits taken from packed little-endian `bytes`.
    pub fn extend_from_packed(&mut self, bytes: &[u8], count: usize) {
        assert!(bytes.len() * 8 >= count, "not enough payload bytes");
        let mut pos = 0;
        while pos < count {
            let take = (count - pos).min(64);
            let mut buf = [0u8; 8];
            let nb = take.div_ceil(8);
            buf[..nb].copy_from_slice(&bytes[pos / 8..pos / 8 + nb]);
            let mut w = u64::from_le_bytes(buf);
            if take < 64 {
                w &= (1u64 << take) - 1;
            }
            self.push_word(w, take);
            pos += take;
        }
    }

    /// Appends the low `count` bits of `w`.
    pub fn push_word(&mut self, w: u64, count: usize) {
        debug_assert!(count <= 64);
        if count == 0 {
            return;
        }
        let w = if count < 64 { w & ((1u64 << count) - 1) } else { w };
        let off = self.len % 64;
        if off == 0 {
            self.words.push(w);
        } else {
            let last = self.words.len() - 1;
            self.words[last] |= w << off;
            if off + count > 64 {
                self.words.push(w >> (64 - off));
            }
        }
        self.len += count;
    }

    /// Reads `count <= 64` bits starting at `start` into the low bits of a word.
    #[inline]
    pub fn extract_word(&self, start: usize, count: usize) -> u64 {
        debug_assert!(count <= 64 && start + count <= self.len);
        if count == 0 {
            return 0;
        }
        let wi = start / 64;
        let off = start % 64;
        let mut w = self.words[wi] >> off;
        if off != 0 && off + count > 64 {
            w |= self.words[wi + 1] << (64 - off);
        }
        if count < 64 {
            w &= (1u64 << count) - 1;
        }
        w
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % 64);
        if v {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn flip(&mut self, i: usize) {
        let v = self.get(i);
        self.set(i, !v);
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &Self) -> Self {
        assert_eq!(self.len, other.len, "xor of unequal lengths");
        let words = self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect();
        Self { words, len: self.len }
    }

    pub fn hamming_distance(&self, other: &Self) -> usize {
        assert_eq!(self.len, other.len, "distance of unequal lengths");
        self.words.iter().zip(&other.words).map(|(a, b)| (a ^ b).count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    fn clear_padding(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
            write!(f, "BitString({s})")
        } else {
            write!(f, "BitString(len={}, ones={})", self.len, self.count_ones())
        }
    }
}
