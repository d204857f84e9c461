//! Referee statistics: click-count tails, threshold choice and error rates.
//!
//! The number of `D1` clicks is binomial in the number of pulses. Exact tails
//! are evaluated in log space with a saddle-point form of the probability mass
//! (Loader's `stirlerr`/`bd0` decomposition), which keeps full relative
//! precision at `m ~ 10^9`. Only the side of the distribution that does not
//! contain the mode is summed; the other side is its complement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Largest per-pulse probability for which the Poisson form is accepted.
pub const POISSON_MAX_P: f64 = 1e-3;
/// `Auto` picks the Poisson form at or below this probability.
pub const AUTO_POISSON_P: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityDomain(f64),
    #[error("Poisson form requires p <= {POISSON_MAX_P}, got {0}")]
    PoissonNotPermitted(f64),
    #[error("expected pE <= pD, got pE = {p_equal}, pD = {p_diff}")]
    Order { p_equal: f64, p_diff: f64 },
    #[error("no parameter corners given")]
    NoCorners,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Poisson when `p <= AUTO_POISSON_P`, exact otherwise.
    #[default]
    Auto,
    ExactBinomial,
    PoissonApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Equal,
    Different,
}

/// `Pr(X = k)`, `X ~ Bin(m, p)` or `Poisson(m p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickDistribution<T = f64> {
    pub m: u64,
    pub p: T,
    pub representation: Representation,
}

impl<T: Real> ClickDistribution<T> {
    pub fn new(m: u64, p: T, representation: Representation) -> Result<Self, DecisionError> {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(DecisionError::ProbabilityDomain(p.f64()));
        }
        let representation = match representation {
            Representation::Auto if p <= T::of(AUTO_POISSON_P) => Representation::PoissonApprox,
            Representation::Auto => Representation::ExactBinomial,
            Representation::PoissonApprox if p > T::of(POISSON_MAX_P) => {
                return Err(DecisionError::PoissonNotPermitted(p.f64()))
            }
            r => r,
        };
        Ok(Self { m, p, representation })
    }

    pub fn exact(m: u64, p: T) -> Result<Self, DecisionError> {
        Self::new(m, p, Representation::ExactBinomial)
    }

    pub fn poisson(m: u64, p: T) -> Result<Self, DecisionError> {
        Self::new(m, p, Representation::PoissonApprox)
    }

    pub fn mean(&self) -> T {
        T::of_u64(self.m) * self.p
    }

    /// `(Pr(X <= th), Pr(X > th))`.
    pub fn tails(&self, th: i64) -> (T, T) {
        if th < 0 {
            return (T::zero(), T::one());
        }
        match self.representation {
            Representation::PoissonApprox => poisson_tails(self.mean(), th as u64),
            _ => {
                if th as u64 >= self.m {
                    (T::one(), T::zero())
                } else {
                    binomial_tails(self.m, self.p, th as u64)
                }
            }
        }
    }

    /// `Pr(X > th)`, with `th >= -1`.
    pub fn tail_above(&self, th: i64) -> T {
        self.tails(th).1
    }

    /// `Pr(X <= th)`.
    pub fn cdf(&self, th: i64) -> T {
        self.tails(th).0
    }
}

// Loader's saddle-point pieces for the binomial mass.

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `ln(n!) - (n + 1/2) ln n + n - ln sqrt(2 pi)`.
fn stirlerr<T: Real>(n: T) -> T {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let nf = n.f64();
    if nf <= 15.0 {
        let v = statrs::function::gamma::ln_gamma(nf + 1.0) - (nf + 0.5) * nf.ln() + nf - LN_SQRT_2PI;
        return T::of(v);
    }
    let nn = nf * nf;
    let v = if nf > 500.0 {
        (S0 - S1 / nn) / nf
    } else if nf > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / nf
    } else if nf > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nf
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    };
    T::of(v)
}

/// Deviance term `x ln(x / np) + np - x`, stable when `x ~ np`.
fn bd0<T: Real>(x: T, np: T) -> T {
    let (xf, npf) = (x.f64(), np.f64());
    if (xf - npf).abs() < 0.1 * (xf + npf) {
        let mut v = (xf - npf) / (xf + npf);
        let mut s = (xf - npf) * v;
        let mut ej = 2.0 * xf * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return T::of(s1);
            }
            s = s1;
        }
        return T::of(s);
    }
    T::of(xf * (xf / npf).ln() + npf - xf)
}

/// `ln Pr(X = k)` for `X ~ Bin(m, p)`, `0 < p < 1`.
pub fn ln_binomial_pmf<T: Real>(m: u64, p: T, k: u64) -> T {
    let q = T::one() - p;
    if k == 0 {
        return T::of_u64(m) * (-p).ln_1p();
    }
    if k == m {
        return T::of_u64(m) * p.ln();
    }
    let (mf, kf) = (T::of_u64(m), T::of_u64(k));
    let rest = T::of_u64(m - k);
    let lc = stirlerr(mf) - stirlerr(kf) - stirlerr(rest) - bd0(kf, mf * p) - bd0(rest, mf * q);
    let lf = T::of(2.0 * LN_SQRT_2PI) + kf.ln() + (-kf / mf).ln_1p();
    lc - lf / T::of(2.0)
}

/// Sum of `Pr(X = k)` for `k` walking away from the mode starting at `start`.
fn walk_sum<T: Real>(m: u64, p: T, start: u64, upward: bool) -> T {
    let log_first = ln_binomial_pmf(m, p, start);
    if log_first == T::neg_infinity() {
        return T::zero();
    }
    let odds = p / (T::one() - p);
    let cutoff = T::of(1e-18);
    let (mut sum, mut term, mut k) = (T::one(), T::one(), start);
    loop {
        if upward {
            if k >= m {
                break;
            }
            term = term * T::of_u64(m - k) / T::of_u64(k + 1) * odds;
            k += 1;
        } else {
            if k == 0 {
                break;
            }
            term = term * T::of_u64(k) / (T::of_u64(m - k + 1) * odds);
            k -= 1;
        }
        sum = sum + term;
        if term < cutoff * sum {
            break;
        }
    }
    (log_first + sum.ln()).exp()
}

fn binomial_tails<T: Real>(m: u64, p: T, th: u64) -> (T, T) {
    if p == T::zero() {
        return (T::one(), T::zero());
    }
    if p == T::one() {
        return (T::zero(), T::one());
    }
    let mode = ((T::of_u64(m) + T::one()) * p).floor().f64().min(m as f64) as u64;
    if th < mode {
        let lower = walk_sum(m, p, th, false).min(T::one());
        (lower, T::one() - lower)
    } else {
        let upper = walk_sum(m, p, th + 1, true).min(T::one());
        (T::one() - upper, upper)
    }
}

fn poisson_tails<T: Real>(lambda: T, th: u64) -> (T, T) {
    if lambda == T::zero() {
        return (T::one(), T::zero());
    }
    let a = T::of_u64(th + 1);
    (T::gamma_upper_reg(a, lambda), T::gamma_lower_reg(a, lambda))
}

/// Threshold rule: equal iff at most `threshold` clicks on `D1`.
pub fn decide(clicks_d1: u64, threshold: u64) -> Outcome {
    if clicks_d1 <= threshold {
        Outcome::Equal
    } else {
        Outcome::Different
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict<T = f64> {
    pub threshold: u64,
    /// Worst of the two one-sided error probabilities at `threshold`.
    pub epsilon: T,
    /// The two hypotheses are indistinguishable (`epsilon >= 1/2`).
    pub degenerate: bool,
    /// Set once a click count has been ruled on.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decided: Option<Outcome>,
}

impl<T: Real> Verdict<T> {
    pub fn rule(mut self, clicks_d1: u64) -> Self {
        self.decided = Some(decide(clicks_d1, self.threshold));
        self
    }
}

/// Click-probability pair for equal and worst-case different inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hypotheses<T = f64> {
    pub p_equal: T,
    pub p_diff: T,
}

struct Envelope<T> {
    equal: Vec<ClickDistribution<T>>,
    diff: Vec<ClickDistribution<T>>,
}

impl<T: Real> Envelope<T> {
    fn new(m: u64, corners: &[Hypotheses<T>], repr: Representation) -> Result<Self, DecisionError> {
        if corners.is_empty() {
            return Err(DecisionError::NoCorners);
        }
        let mut equal = Vec::with_capacity(corners.len());
        let mut diff = Vec::with_capacity(corners.len());
        for h in corners {
            let e = ClickDistribution::new(m, h.p_equal, repr)?;
            let d = ClickDistribution::new(m, h.p_diff, repr)?;
            if h.p_equal > h.p_diff {
                return Err(DecisionError::Order { p_equal: h.p_equal.f64(), p_diff: h.p_diff.f64() });
            }
            equal.push(e);
            diff.push(d);
        }
        Ok(Self { equal, diff })
    }

    /// Worst false "different" over the corners; non-increasing in `th`.
    fn false_different(&self, th: i64) -> T {
        self.equal.iter().map(|d| d.tail_above(th)).fold(T::zero(), T::max)
    }

    /// Worst false "equal" over the corners; non-decreasing in `th`.
    fn false_equal(&self, th: i64) -> T {
        self.diff.iter().map(|d| d.cdf(th)).fold(T::zero(), T::max)
    }

    fn error(&self, th: i64) -> T {
        self.false_different(th).max(self.false_equal(th))
    }
}

/// Minimax threshold: the integer `th >= 0` minimizing
/// `max(Pr(D1_E > th), Pr(D1_D <= th))`, ties to the smaller `th`.
pub fn choose_threshold<T: Real>(m: u64, p_equal: T, p_diff: T) -> Result<Verdict<T>, DecisionError> {
    choose_threshold_with(m, &[Hypotheses { p_equal, p_diff }], Representation::ExactBinomial)
}

/// Minimax threshold over several parameter corners at once: each error side
/// is the maximum over the corners.
pub fn choose_threshold_with<T: Real>(
    m: u64,
    corners: &[Hypotheses<T>],
    repr: Representation,
) -> Result<Verdict<T>, DecisionError> {
    let env = Envelope::new(m, corners, repr)?;
    // smallest th with false_different(th) <= false_equal(th); exists since at
    // th = m the left side is 0
    let (mut lo, mut hi) = (0u64, m);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if env.false_different(mid as i64) <= env.false_equal(mid as i64) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let at = env.false_equal(lo as i64);
    let (threshold, epsilon) = if lo > 0 {
        let before = env.false_different(lo as i64 - 1);
        if before <= at {
            (lo - 1, before)
        } else {
            (lo, at)
        }
    } else {
        (lo, env.error(0))
    };
    Ok(Verdict { threshold, epsilon, degenerate: epsilon >= T::of(0.5), decided: None })
}

/// `max(Pr(D1_E > th), Pr(D1_D <= th))`.
pub fn error_probability<T: Real>(m: u64, p_equal: T, p_diff: T, th: u64) -> Result<T, DecisionError> {
    error_probability_with(m, &[Hypotheses { p_equal, p_diff }], th, Representation::ExactBinomial)
}

pub fn error_probability_with<T: Real>(
    m: u64,
    corners: &[Hypotheses<T>],
    th: u64,
    repr: Representation,
) -> Result<T, DecisionError> {
    Ok(Envelope::new(m, corners, repr)?.error(th as i64))
}
