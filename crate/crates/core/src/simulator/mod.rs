//! Pulse-level Monte Carlo of the interference experiment.
//!
//! Each pulse pair meets at a balanced beam splitter. With per-party detected
//! mean `mu` spread over `m` pulses, the total intensity per pulse is
//! `2 mu / m`; the `D1` port receives the fraction `nu` when the two phase
//! bits differ and `1 - nu` when they agree, and `D0` receives the rest. A
//! detector clicks with probability `1 - exp(-lambda)` composed with its
//! dark-count probability.
//!
//! Clicks are rare, so each detector's click train is drawn by thinning:
//! geometric gaps at the larger of its two per-pulse probabilities, each
//! candidate kept with the ratio of the actual probability to that bound. The
//! randomness for detector `d` in pulse block `b` (`2^16` pulses) comes from a
//! ChaCha8 keystream keyed by the run seed, with stream id `d` and word
//! position `b << 32`. Blocks can therefore be proposed in any order or in
//! parallel; dead time is applied afterwards, in pulse order per detector.

mod calibrate;
mod inputs;

pub use calibrate::{calibrate_mu, total_click_rate, CalibrationRound, MuEstimate};
pub use inputs::{distance_target, worst_case_pair, PairMode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitString;
use crate::codec::Seed;
use crate::decision::{decide, Outcome};
use crate::model::SystemParams;
use crate::planner::ProtocolPlan;

pub const BLOCK_LOG2: u32 = 16;
pub const BLOCK_PULSES: u64 = 1 << BLOCK_LOG2;
pub const TRACE_HEADER: &str = "pulse,detector,click";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("codewords differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("plan is for m = {plan} pulses, codewords have {got}")]
    PlanMismatch { plan: u64, got: u64 },
    #[error("{name} = {value} outside {range}")]
    Domain { name: &'static str, value: f64, range: &'static str },
    #[error("click rate {rate} per pulse is above the model maximum {max}")]
    RateAboveModel { rate: f64, max: f64 },
    #[error("no calibration rounds given")]
    NoRounds,
}

/// Which pulses carry different phase bits.
pub trait PhasePattern: Sync {
    fn len(&self) -> u64;
    fn differs(&self, pulse: u64) -> bool;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Bitwise XOR of the two codewords.
pub struct DiffBits(pub BitString);

impl PhasePattern for DiffBits {
    fn len(&self) -> u64 {
        self.0.len() as u64
    }
    fn differs(&self, pulse: u64) -> bool {
        self.0.get(pulse as usize)
    }
}

/// Identical inputs on every pulse.
pub struct AllEqual(pub u64);

impl PhasePattern for AllEqual {
    fn len(&self) -> u64 {
        self.0
    }
    fn differs(&self, _: u64) -> bool {
        false
    }
}

/// A short difference pattern repeated over `len` pulses.
pub struct Repeated {
    pub frame: BitString,
    pub len: u64,
}

impl PhasePattern for Repeated {
    fn len(&self) -> u64 {
        self.len
    }
    fn differs(&self, pulse: u64) -> bool {
        self.frame.get((pulse % self.frame.len() as u64) as usize)
    }
}

/// Difference bits for pulses `start..start + bits.len()` only.
pub struct Window<'a> {
    pub start: u64,
    pub bits: &'a BitString,
}

impl PhasePattern for Window<'_> {
    fn len(&self) -> u64 {
        self.start + self.bits.len() as u64
    }
    fn differs(&self, pulse: u64) -> bool {
        self.bits.get((pulse - self.start) as usize)
    }
}

/// Physical inputs of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub m: u64,
    /// Detected mean photon number of each party's train.
    pub mu_det: f64,
    pub visibility: f64,
    pub p_dark: f64,
    pub dead_pulses: u32,
    /// Whether a click with no signal photon also starts a dead window.
    pub dark_triggers_dead_time: bool,
}

impl Physics {
    pub fn new(params: &SystemParams<f64>, mu_det: f64, m: u64) -> Self {
        Self {
            m,
            mu_det,
            visibility: params.visibility,
            p_dark: params.p_dark,
            dead_pulses: params.dead_pulses,
            dark_triggers_dead_time: true,
        }
    }

    pub fn from_plan(plan: &ProtocolPlan<f64>) -> Self {
        Self::new(&plan.params, plan.mu_det, plan.m)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let unit = |name, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SimError::Domain { name, value: v, range: "[0, 1]" })
            }
        };
        unit("visibility", self.visibility)?;
        unit("p_dark", self.p_dark)?;
        if !(self.mu_det >= 0.0 && self.mu_det.is_finite()) {
            return Err(SimError::Domain { name: "mu_det", value: self.mu_det, range: "[0, inf)" });
        }
        Ok(())
    }

    /// `D1` intensity for agreeing / differing bits; `D0` gets the remainder.
    fn intensities(&self, detector: usize) -> [f64; 2] {
        if self.m == 0 {
            return [0.0; 2];
        }
        let total = 2.0 * self.mu_det / self.m as f64;
        let d1 = [total * (1.0 - self.visibility), total * self.visibility];
        if detector == 1 {
            d1
        } else {
            [total - d1[0], total - d1[1]]
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Channel {
    /// Click probability for agreeing / differing bits.
    p: [f64; 2],
    /// `Pr(signal photon | click)`.
    signal_share: [f64; 2],
    p_max: f64,
    ln_miss: f64,
}

impl Channel {
    fn new(physics: &Physics, detector: usize) -> Self {
        let lambda = physics.intensities(detector);
        let mut p = [0.0; 2];
        let mut signal_share = [0.0; 2];
        for k in 0..2 {
            let s = -(-lambda[k]).exp_m1();
            p[k] = s + physics.p_dark - s * physics.p_dark;
            signal_share[k] = if p[k] > 0.0 { s / p[k] } else { 0.0 };
        }
        let p_max = p[0].max(p[1]);
        Self { p, signal_share, p_max, ln_miss: (-p_max).ln_1p() }
    }
}

/// A candidate click before dead time is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proposal {
    pub pulse: u64,
    /// No signal photon was involved.
    pub dark_only: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockClicks {
    pub block: u64,
    pub detectors: [Vec<Proposal>; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub pulse: u64,
    pub detector: u8,
    /// `false` when the click fell into a dead window.
    pub registered: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct DetectorState {
    next_free: u64,
    clicks: u64,
    blocked: u64,
    suppressed: u64,
}

/// Incremental detection state for one run. Blocks may be proposed in any
/// order but must be absorbed in increasing block order.
pub struct PulseEngine {
    physics: Physics,
    seed: Seed,
    channels: [Channel; 2],
    state: [DetectorState; 2],
    next_block: u64,
    trace: Option<Vec<TraceEvent>>,
}

impl PulseEngine {
    pub fn new(physics: Physics, seed: Seed) -> Result<Self, SimError> {
        physics.validate()?;
        Ok(Self {
            physics,
            seed,
            channels: [Channel::new(&physics, 0), Channel::new(&physics, 1)],
            state: [DetectorState::default(); 2],
            next_block: 0,
            trace: None,
        })
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn block_count(&self) -> u64 {
        self.physics.m.div_ceil(BLOCK_PULSES)
    }

    pub fn blocks_absorbed(&self) -> u64 {
        self.next_block
    }

    /// Candidate clicks of both detectors in one block; `pattern` must cover it.
    pub fn propose_block<P: PhasePattern + ?Sized>(&self, block: u64, pattern: &P) -> BlockClicks {
        let start = block << BLOCK_LOG2;
        let end = (start + BLOCK_PULSES).min(self.physics.m);
        let detectors = [0usize, 1].map(|d| {
            let ch = &self.channels[d];
            let mut out = Vec::new();
            if ch.p_max <= 0.0 || start >= end {
                return out;
            }
            let mut rng = ChaCha8Rng::from_seed(self.seed.0);
            rng.set_stream(d as u64);
            rng.set_word_pos(u128::from(block) << 32);
            let mut pos = start;
            while pos < end {
                if ch.p_max < 1.0 {
                    let u = 1.0 - rng.gen::<f64>();
                    let gap = (u.ln() / ch.ln_miss).floor();
                    if gap >= (end - pos) as f64 {
                        break;
                    }
                    pos += gap as u64;
                }
                let k = usize::from(pattern.differs(pos));
                let keep: f64 = rng.gen();
                let origin: f64 = rng.gen();
                if keep * ch.p_max < ch.p[k] {
                    out.push(Proposal { pulse: pos, dark_only: origin >= ch.signal_share[k] });
                }
                pos += 1;
            }
            out
        });
        BlockClicks { block, detectors }
    }

    /// Applies dead time to the next block in order.
    pub fn absorb(&mut self, clicks: &BlockClicks) {
        assert_eq!(clicks.block, self.next_block, "blocks must be absorbed in order");
        let dead = u64::from(self.physics.dead_pulses);
        let m = self.physics.m;
        for (d, props) in clicks.detectors.iter().enumerate() {
            let st = &mut self.state[d];
            for p in props {
                let registered = p.pulse >= st.next_free;
                if registered {
                    st.clicks += 1;
                    if !(p.dark_only && !self.physics.dark_triggers_dead_time) && dead > 0 {
                        st.blocked += dead.min(m - p.pulse - 1);
                        st.next_free = p.pulse + 1 + dead;
                    }
                } else {
                    st.suppressed += 1;
                }
                if let Some(t) = &mut self.trace {
                    t.push(TraceEvent { pulse: p.pulse, detector: d as u8, registered });
                }
            }
        }
        self.next_block += 1;
    }

    /// Click counts so far: `(D0, D1)`.
    pub fn clicks(&self) -> (u64, u64) {
        (self.state[0].clicks, self.state[1].clicks)
    }

    pub fn finish(self, threshold: u64) -> (TrialResult, Option<Vec<TraceEvent>>) {
        let [s0, s1] = self.state;
        let result = TrialResult {
            clicks_d0: s0.clicks,
            clicks_d1: s1.clicks,
            blocked_pulses: s0.blocked + s1.blocked,
            suppressed_clicks: s0.suppressed + s1.suppressed,
            verdict: decide(s1.clicks, threshold),
            seed: self.seed,
        };
        (result, self.trace)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialResult {
    pub clicks_d0: u64,
    pub clicks_d1: u64,
    /// Pulses that fell inside a dead window, both detectors.
    pub blocked_pulses: u64,
    /// Clicks lost to dead time, both detectors.
    pub suppressed_clicks: u64,
    pub verdict: Outcome,
    pub seed: Seed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    pub dark_triggers_dead_time: bool,
    pub trace: bool,
    /// Worker threads for block proposals; 0 picks the machine's parallelism.
    pub threads: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { dark_triggers_dead_time: true, trace: false, threads: 1 }
    }
}

/// One run over an arbitrary phase pattern.
pub fn simulate_pattern<P: PhasePattern + ?Sized>(
    pattern: &P,
    physics: Physics,
    threshold: u64,
    seed: Seed,
    options: &SimOptions,
) -> Result<(TrialResult, Option<Vec<TraceEvent>>), SimError> {
    if pattern.len() != physics.m {
        return Err(SimError::PlanMismatch { plan: physics.m, got: pattern.len() });
    }
    let physics = Physics { dark_triggers_dead_time: options.dark_triggers_dead_time, ..physics };
    let mut engine = PulseEngine::new(physics, seed)?;
    if options.trace {
        engine = engine.with_trace();
    }
    let blocks = engine.block_count();
    let threads = match options.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    };
    if threads <= 1 || blocks < 8 {
        for b in 0..blocks {
            let c = engine.propose_block(b, pattern);
            engine.absorb(&c);
        }
    } else {
        let batch = (threads as u64) * 4;
        let mut b0 = 0;
        while b0 < blocks {
            let b1 = (b0 + batch).min(blocks);
            let eng = &engine;
            let proposed: Vec<BlockClicks> = std::thread::scope(|s| {
                let per = (b1 - b0).div_ceil(threads as u64);
                let handles: Vec<_> = (0..threads as u64)
                    .map(|t| {
                        let lo = b0 + t * per;
                        let hi = (lo + per).min(b1);
                        s.spawn(move || (lo..hi).map(|b| eng.propose_block(b, pattern)).collect::<Vec<_>>())
                    })
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("proposal worker panicked")).collect()
            });
            for c in &proposed {
                engine.absorb(c);
            }
            b0 = b1;
        }
    }
    Ok(engine.finish(threshold))
}

/// One run for a pair of codewords under a plan.
pub fn simulate_run(
    codeword_a: &BitString,
    codeword_b: &BitString,
    plan: &ProtocolPlan<f64>,
    seed: Seed,
) -> Result<TrialResult, SimError> {
    simulate_run_with(codeword_a, codeword_b, plan, seed, &SimOptions::default()).map(|r| r.0)
}

pub fn simulate_run_with(
    codeword_a: &BitString,
    codeword_b: &BitString,
    plan: &ProtocolPlan<f64>,
    seed: Seed,
    options: &SimOptions,
) -> Result<(TrialResult, Option<Vec<TraceEvent>>), SimError> {
    if codeword_a.len() != codeword_b.len() {
        return Err(SimError::LengthMismatch { a: codeword_a.len(), b: codeword_b.len() });
    }
    let pattern = DiffBits(codeword_a.xor(codeword_b));
    simulate_pattern(&pattern, Physics::from_plan(plan), plan.threshold, seed, options)
}

/// `trials` independent runs; run `t` uses `seed.derive(t)`. Runs are spread
/// over `threads` workers (0 for all cores) and returned in trial order.
pub fn run_trials<P: PhasePattern + ?Sized>(
    pattern: &P,
    physics: Physics,
    threshold: u64,
    seed: Seed,
    trials: u64,
    threads: usize,
) -> Result<Vec<TrialResult>, SimError> {
    physics.validate()?;
    let threads = match threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    }
    .max(1) as u64;
    let opts = SimOptions { dark_triggers_dead_time: physics.dark_triggers_dead_time, ..SimOptions::default() };
    let one = |t: u64| simulate_pattern(pattern, physics, threshold, seed.derive(t), &opts).map(|r| r.0);
    if threads == 1 {
        return (0..trials).map(one).collect();
    }
    let per = trials.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let (lo, hi) = ((w * per).min(trials), ((w + 1) * per).min(trials));
                s.spawn(move || (lo..hi).map(one).collect::<Result<Vec<_>, _>>())
            })
            .collect();
        let mut out = Vec::with_capacity(trials as usize);
        for h in handles {
            out.extend(h.join().expect("trial worker panicked")?);
        }
        Ok(out)
    })
}

/// Probability that a window of `dead_pulses` pulses would have held at
/// least one click: `1 - (1 - p)^dead_pulses`.
pub fn dead_time_loss(p_click: f64, dead_pulses: u32) -> Result<f64, SimError> {
    if !(0.0..=1.0).contains(&p_click) {
        return Err(SimError::Domain { name: "p_click", value: p_click, range: "[0, 1]" });
    }
    Ok(-(f64::from(dead_pulses) * (-p_click).ln_1p()).exp_m1())
}

pub fn trace_csv(events: &[TraceEvent]) -> String {
    use std::fmt::Write as _;
    let mut out = String::with_capacity(16 * events.len() + 32);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for e in events {
        let _ = writeln!(out, "{},{},{}", e.pulse, e.detector, u8::from(e.registered));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{p_diff, p_equal};

    fn physics(mu_det: f64, m: u64, visibility: f64, p_dark: f64, dead: u32) -> Physics {
        Physics { m, mu_det, visibility, p_dark, dead_pulses: dead, dark_triggers_dead_time: true }
    }

    #[test]
    fn ideal_equal_inputs_never_fire_d1() {
        let ph = physics(500.0, 100_000, 1.0, 0.0, 0);
        for t in 0..20 {
            let (r, _) =
                simulate_pattern(&AllEqual(100_000), ph, 0, Seed::from_u64(t), &SimOptions::default()).unwrap();
            assert_eq!(r.clicks_d1, 0);
            assert!(r.clicks_d0 > 0);
            assert_eq!(r.verdict, Outcome::Equal);
        }
    }

    #[test]
    fn vacuum_is_silent() {
        let ph = physics(0.0, 10_000, 0.99, 0.0, 50);
        let (r, _) = simulate_pattern(&AllEqual(10_000), ph, 0, Seed::from_u64(1), &SimOptions::default()).unwrap();
        assert_eq!((r.clicks_d0, r.clicks_d1, r.blocked_pulses, r.suppressed_clicks), (0, 0, 0, 0));
    }

    #[test]
    fn saturated_detectors_click_every_pulse() {
        let ph = physics(1e6, 1000, 0.5, 1.0, 0);
        let (r, _) = simulate_pattern(&AllEqual(1000), ph, 0, Seed::from_u64(2), &SimOptions::default()).unwrap();
        assert_eq!((r.clicks_d0, r.clicks_d1), (1000, 1000));
        let ph = Physics { dead_pulses: 9, ..ph };
        let (r, _) = simulate_pattern(&AllEqual(1000), ph, 0, Seed::from_u64(2), &SimOptions::default()).unwrap();
        assert_eq!((r.clicks_d0, r.clicks_d1), (100, 100));
        assert_eq!(r.suppressed_clicks, 1800);
        assert!(r.blocked_pulses <= 9 * 200);
    }

    #[test]
    fn means_follow_the_model() {
        let params = SystemParams { p_dark: 2e-4, ..SystemParams::<f64>::clavis2() };
        let (m, mu) = (20_000u64, 300.0);
        let ph = Physics { dead_pulses: 0, ..Physics::new(&params, mu, m) };
        let pe = p_equal(&params, mu, m).unwrap();
        let trials = 2000;
        let rs = run_trials(&AllEqual(m), ph, 0, Seed::from_u64(3), trials, 1).unwrap();
        let mean = rs.iter().map(|r| r.clicks_d1 as f64).sum::<f64>() / trials as f64;
        let se = (m as f64 * pe * (1.0 - pe) / trials as f64).sqrt();
        assert!((mean - m as f64 * pe).abs() < 4.0 * se, "{mean} vs {}", m as f64 * pe);

        let half = Repeated { frame: BitString::parse01("10").unwrap(), len: m };
        let pd = p_diff(&params, mu, m, 0.5).unwrap();
        let rs = run_trials(&half, ph, 0, Seed::from_u64(4), trials, 1).unwrap();
        let mean = rs.iter().map(|r| r.clicks_d1 as f64).sum::<f64>() / trials as f64;
        let se = (m as f64 * pd / trials as f64).sqrt();
        assert!((mean - m as f64 * pd).abs() < 4.0 * se, "{mean} vs {}", m as f64 * pd);
    }

    #[test]
    fn block_parallelism_does_not_change_results() {
        let m = 40 * BLOCK_PULSES + 123;
        let ph = physics(2000.0, m, 0.99, 1e-4, 50);
        let pat = Repeated { frame: BitString::parse01("0010110").unwrap(), len: m };
        let seq = simulate_pattern(&pat, ph, 10, Seed::from_u64(5), &SimOptions { trace: true, ..Default::default() })
            .unwrap();
        let par = simulate_pattern(
            &pat,
            ph,
            10,
            Seed::from_u64(5),
            &SimOptions { trace: true, threads: 3, ..Default::default() },
        )
        .unwrap();
        assert_eq!(seq, par);
        let other = simulate_pattern(&pat, ph, 10, Seed::from_u64(6), &SimOptions::default()).unwrap();
        assert_ne!(seq.0.clicks_d0, other.0.clicks_d0);
    }

    #[test]
    fn dead_time_accounting() {
        let m = 5 * BLOCK_PULSES;
        let ph = physics(3000.0, m, 0.9, 1e-3, 50);
        let (r, trace) =
            simulate_pattern(&AllEqual(m), ph, 0, Seed::from_u64(7), &SimOptions { trace: true, ..Default::default() })
                .unwrap();
        let trace = trace.unwrap();
        assert!(r.blocked_pulses <= 50 * (r.clicks_d0 + r.clicks_d1));
        let registered = trace.iter().filter(|e| e.registered).count() as u64;
        assert_eq!(registered, r.clicks_d0 + r.clicks_d1);
        assert_eq!(trace.len() as u64 - registered, r.suppressed_clicks);
        for d in 0..2u8 {
            let clicks: Vec<u64> = trace.iter().filter(|e| e.detector == d && e.registered).map(|e| e.pulse).collect();
            assert!(clicks.windows(2).all(|w| w[1] - w[0] > 50));
        }
        // common random numbers: removing dead time only adds clicks back
        let (r0, _) = simulate_pattern(
            &AllEqual(m),
            Physics { dead_pulses: 0, ..ph },
            0,
            Seed::from_u64(7),
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(r0.clicks_d0 + r0.clicks_d1, r.clicks_d0 + r.clicks_d1 + r.suppressed_clicks);
        assert_eq!(r0.blocked_pulses, 0);
    }

    #[test]
    fn dark_clicks_can_skip_dead_time() {
        let m = 2 * BLOCK_PULSES;
        let ph = physics(0.0, m, 0.99, 0.01, 50);
        let on = simulate_pattern(&AllEqual(m), ph, 0, Seed::from_u64(8), &SimOptions::default()).unwrap().0;
        let off = simulate_pattern(
            &AllEqual(m),
            ph,
            0,
            Seed::from_u64(8),
            &SimOptions { dark_triggers_dead_time: false, ..Default::default() },
        )
        .unwrap()
        .0;
        assert!(on.suppressed_clicks > 0);
        assert_eq!(off.suppressed_clicks, 0);
        assert_eq!(off.blocked_pulses, 0);
        assert!(off.clicks_d0 > on.clicks_d0);
    }

    #[test]
    fn run_errors() {
        let plan = crate::planner::plan(16, 0.22, &SystemParams::<f64>::ideal(), 0.1).unwrap();
        let a = BitString::zeros(plan.m as usize);
        assert!(matches!(
            simulate_run(&a, &BitString::zeros(3), &plan, Seed::default()),
            Err(SimError::LengthMismatch { .. })
        ));
        let short = BitString::zeros(plan.m as usize - 1);
        assert!(matches!(simulate_run(&short, &short, &plan, Seed::default()), Err(SimError::PlanMismatch { .. })));
        let r = simulate_run(&a, &a, &plan, Seed::from_u64(1)).unwrap();
        assert_eq!(r, simulate_run(&a, &a, &plan, Seed::from_u64(1)).unwrap());
    }

    #[test]
    fn dead_time_loss_values() {
        assert_eq!(dead_time_loss(0.0, 50).unwrap(), 0.0);
        let l = dead_time_loss(1e-6, 50).unwrap();
        assert!((l - 4.999_877_501_96e-5).abs() < 1e-15, "{l}");
        assert!(dead_time_loss(1.5, 50).is_err());
        assert_eq!(dead_time_loss(1.0, 1).unwrap(), 1.0);
    }

    #[test]
    fn trace_format() {
        let ev = [
            TraceEvent { pulse: 3, detector: 1, registered: true },
            TraceEvent { pulse: 9, detector: 0, registered: false },
        ];
        assert_eq!(trace_csv(&ev), "pulse,detector,click\n3,1,1\n9,0,0\n");
    }
}
