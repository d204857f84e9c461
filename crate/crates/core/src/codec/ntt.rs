//! Number-theoretic transform over the prime field `p = 15 * 2^27 + 1`.
//!
//! Used to compute integer correlations of 0/1 sequences exactly: every
//! output coefficient is a count bounded by the input length, so it is
//! recovered without loss as long as that length is below `p`.
//!
//! Elements are kept in Montgomery form (`R = 2^32`). The forward transform
//! is decimation-in-frequency and leaves its output in bit-reversed order; the
//! inverse is decimation-in-time and consumes bit-reversed input, so the
//! permutation is never materialized. Both recurse until a block fits in
//! cache, then finish iteratively.

pub const MODULUS: u32 = 2_013_265_921;
const GENERATOR: u32 = 31;
/// Largest supported transform length is `2^MAX_LOG2`.
pub const MAX_LOG2: u32 = 27;

// -p^{-1} mod 2^32
const P_NEG_INV: u32 = {
    let mut inv: u32 = 1;
    let mut i = 0;
    while i < 5 {
        inv = inv.wrapping_mul(2u32.wrapping_sub(MODULUS.wrapping_mul(inv)));
        i += 1;
    }
    inv.wrapping_neg()
};
// R^2 mod p, for entering Montgomery form.
const R2: u32 = {
    let r = (1u64 << 32) % MODULUS as u64;
    ((r * r) % MODULUS as u64) as u32
};

const ITERATIVE_CUTOFF: usize = 1 << 12;

#[inline(always)]
fn reduce(t: u64) -> u32 {
    let m = (t as u32).wrapping_mul(P_NEG_INV);
    let u = ((t + m as u64 * MODULUS as u64) >> 32) as u32;
    if u >= MODULUS {
        u - MODULUS
    } else {
        u
    }
}

#[inline(always)]
pub fn mont_mul(a: u32, b: u32) -> u32 {
    reduce(a as u64 * b as u64)
}

#[inline(always)]
fn add(a: u32, b: u32) -> u32 {
    let s = a + b;
    if s >= MODULUS {
        s - MODULUS
    } else {
        s
    }
}

#[inline(always)]
fn sub(a: u32, b: u32) -> u32 {
    if a >= b {
        a - b
    } else {
        a + MODULUS - b
    }
}

#[inline]
pub fn to_mont(a: u32) -> u32 {
    mont_mul(a % MODULUS, R2)
}

#[inline]
pub fn from_mont(a: u32) -> u32 {
    reduce(a as u64)
}

fn pow_plain(mut base: u64, mut exp: u64) -> u64 {
    let p = MODULUS as u64;
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * base % p;
        }
        base = base * base % p;
        exp >>= 1;
    }
    acc
}

/// Precomputed twiddles for one transform length.
pub struct Plan {
    log2: u32,
    /// `forward[k][j] = w_{2^(k+1)}^j` in Montgomery form, `j < 2^k`.
    forward: Vec<Vec<u32>>,
    inverse: Vec<Vec<u32>>,
    /// `N^{-1}` in plain form; `mont_mul(x_mont, n_inv)` both scales and leaves Montgomery form.
    n_inv_plain: u32,
}

impl Plan {
    pub fn new(log2: u32) -> Self {
        assert!(log2 <= MAX_LOG2, "transform length 2^{log2} exceeds 2^{MAX_LOG2}");
        let p = MODULUS as u64;
        let mut forward = Vec::with_capacity(log2 as usize);
        let mut inverse = Vec::with_capacity(log2 as usize);
        for k in 0..log2 {
            let half = 1usize << k;
            let order = 2 * half as u64;
            let w = pow_plain(GENERATOR as u64, (p - 1) / order);
            let w_inv = pow_plain(w, p - 2);
            let (wm, wim) = (to_mont(w as u32), to_mont(w_inv as u32));
            let mut f = Vec::with_capacity(half);
            let mut g = Vec::with_capacity(half);
            let (mut cf, mut cg) = (to_mont(1), to_mont(1));
            for _ in 0..half {
                f.push(cf);
                g.push(cg);
                cf = mont_mul(cf, wm);
                cg = mont_mul(cg, wim);
            }
            forward.push(f);
            inverse.push(g);
        }
        let n_inv = pow_plain(1u64 << log2, p - 2) as u32;
        Self { log2, forward, inverse, n_inv_plain: n_inv }
    }

    pub fn len(&self) -> usize {
        1usize << self.log2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place forward transform; output in bit-reversed order.
    pub fn forward(&self, a: &mut [u32]) {
        assert_eq!(a.len(), self.len());
        self.dif(a);
    }

    /// In-place inverse transform of bit-reversed input, scaled by `1/N` and
    /// converted out of Montgomery form.
    pub fn inverse_to_plain(&self, a: &mut [u32]) {
        assert_eq!(a.len(), self.len());
        self.dit(a);
        let s = self.n_inv_plain;
        for v in a.iter_mut() {
            *v = mont_mul(*v, s);
        }
    }

    fn dif(&self, a: &mut [u32]) {
        let n = a.len();
        if n <= ITERATIVE_CUTOFF {
            self.dif_iterative(a);
            return;
        }
        let h = n / 2;
        let tw = &self.forward[h.trailing_zeros() as usize];
        let (lo, hi) = a.split_at_mut(h);
        for ((u, v), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
            let (x, y) = (*u, *v);
            *u = add(x, y);
            *v = mont_mul(sub(x, y), w);
        }
        self.dif(lo);
        self.dif(hi);
    }

    fn dif_iterative(&self, a: &mut [u32]) {
        let n = a.len();
        let mut h = n / 2;
        while h >= 1 {
            let tw = &self.forward[h.trailing_zeros() as usize];
            for block in a.chunks_exact_mut(2 * h) {
                let (lo, hi) = block.split_at_mut(h);
                for ((u, v), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let (x, y) = (*u, *v);
                    *u = add(x, y);
                    *v = mont_mul(sub(x, y), w);
                }
            }
            h /= 2;
        }
    }

    fn dit(&self, a: &mut [u32]) {
        let n = a.len();
        if n <= ITERATIVE_CUTOFF {
            self.dit_iterative(a);
            return;
        }
        let h = n / 2;
        {
            let (lo, hi) = a.split_at_mut(h);
            self.dit(lo);
            self.dit(hi);
        }
        let tw = &self.inverse[h.trailing_zeros() as usize];
        let (lo, hi) = a.split_at_mut(h);
        for ((u, v), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
            let x = *u;
            let y = mont_mul(*v, w);
            *u = add(x, y);
            *v = sub(x, y);
        }
    }

    fn dit_iterative(&self, a: &mut [u32]) {
        let n = a.len();
        let mut h = 1;
        while h < n {
            let tw = &self.inverse[h.trailing_zeros() as usize];
            for block in a.chunks_exact_mut(2 * h) {
                let (lo, hi) = block.split_at_mut(h);
                for ((u, v), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let x = *u;
                    let y = mont_mul(*v, w);
                    *u = add(x, y);
                    *v = sub(x, y);
                }
            }
            h *= 2;
        }
    }
}

/// Pointwise product `a[i] <- a[i] * b[i]` in Montgomery form.
pub fn pointwise_mul(a: &mut [u32], b: &[u32]) {
    for (x, &y) in a.iter_mut().zip(b) {
        *x = mont_mul(*x, y);
    }
}
