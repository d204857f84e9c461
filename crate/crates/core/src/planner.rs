//! Protocol parameter selection.
//!
//! For a given input size and device, the planner fixes the code shape, then
//! searches the source intensity `mu_A` for the smallest value whose minimax
//! error meets the target. The error is non-increasing in `mu_A`, so the
//! search brackets by doubling and bisects on `ln mu_A` to 1% relative.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{gv_rate, output_length, CodecError};
use crate::decision::{choose_threshold_with, error_probability_with, DecisionError, Hypotheses, Representation};
use crate::model::{balance_sources, p_diff, p_equal, InfoAccount, ModelError, SystemParams};
use crate::scalar::Real;

pub const PLAN_SCHEMA: &str = "qfp-plan/1";
pub const SWEEP_CSV_HEADER: &str = "n,m,delta,mu_A,mu_B,threshold,epsilon,Q,C,gamma,status";
/// Intensities beyond this many photons are treated as unreachable.
pub const MU_LIMIT: f64 = 1e12;
pub const DEFAULT_MARGIN: f64 = 1e-3;
pub const DEFAULT_DELTA: f64 = 0.22;
const SEARCH_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("target error {0} outside (0, 0.5)")]
    TargetDomain(f64),
    #[error("n must be at least 1")]
    EmptyInput,
    #[error("no intensity up to {MU_LIMIT:e} photons reaches the target (best epsilon {best_epsilon:e})")]
    Infeasible { best_epsilon: f64 },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

/// How the output length `m` is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum CodeShape {
    /// Rate this far below the GV rate for the target distance.
    GvMargin(f64),
    /// Explicit rate `n / m`.
    Rate(f64),
    /// Explicit `m`.
    OutputLen(u64),
}

impl Default for CodeShape {
    fn default() -> Self {
        CodeShape::GvMargin(DEFAULT_MARGIN)
    }
}

impl CodeShape {
    /// `(m, margin below the GV rate)`.
    pub fn resolve(self, n: u64, delta: f64) -> Result<(u64, f64), CodecError> {
        let gv = gv_rate(delta)?;
        let m = match self {
            CodeShape::GvMargin(margin) => {
                if !(margin > 0.0 && margin < gv) {
                    return Err(CodecError::MarginDomain { margin, max: gv });
                }
                output_length(n, gv - margin)
            }
            CodeShape::Rate(r) => {
                if !(r > 0.0 && r < 1.0) {
                    return Err(CodecError::RateDomain(r));
                }
                output_length(n, r)
            }
            CodeShape::OutputLen(m) => m,
        };
        if m < n {
            return Err(CodecError::Shape { n, m, reason: "m must be at least n" });
        }
        let margin = gv - n as f64 / m as f64;
        if margin < -1e-12 {
            return Err(CodecError::Shape { n, m, reason: "rate exceeds the GV rate for the target distance" });
        }
        Ok((m, margin.max(0.0)))
    }
}

/// Symmetric parameter uncertainties; the reported error is the worst over
/// all sign combinations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Uncertainty<T = f64> {
    /// Relative uncertainty of the mean photon number.
    pub mu_rel: T,
    /// Absolute uncertainty of the visibility.
    pub visibility: T,
    /// Absolute uncertainty of the dark-count probability.
    pub p_dark: T,
}

impl<T: Real> Uncertainty<T> {
    /// 4% on the mean photon number, 0.005 on visibility, 2e-7 on dark counts.
    pub fn experimental() -> Self {
        Self { mu_rel: T::of(0.04), visibility: T::of(0.005), p_dark: T::of(2e-7) }
    }

    pub fn is_zero(&self) -> bool {
        self.mu_rel == T::zero() && self.visibility == T::zero() && self.p_dark == T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanOptions<T = f64> {
    pub shape: CodeShape,
    pub uncertainty: Uncertainty<T>,
    pub representation: Representation,
}

impl<T: Real> Default for PlanOptions<T> {
    fn default() -> Self {
        Self {
            shape: CodeShape::default(),
            uncertainty: Uncertainty::default(),
            representation: Representation::ExactBinomial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolPlan<T = f64> {
    pub n: u64,
    pub delta: T,
    /// Distance of the rate below the GV rate.
    pub margin: T,
    pub m: u64,
    pub mu_a: T,
    pub mu_b: T,
    /// Mean photons of Alice's train at the detectors (nominal).
    pub mu_det: T,
    pub threshold: u64,
    pub epsilon_pred: T,
    pub account: InfoAccount<T>,
    pub params: SystemParams<T>,
    pub uncertainty: Uncertainty<T>,
    pub representation: Representation,
}

/// Plan with a schema tag, as written to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDocument<T = f64> {
    pub schema: String,
    #[serde(flatten)]
    pub plan: ProtocolPlan<T>,
}

impl<T: Real + Serialize> ProtocolPlan<T> {
    pub fn to_json(&self) -> String {
        let doc = PlanDocument { schema: PLAN_SCHEMA.to_string(), plan: self.clone() };
        serde_json::to_string_pretty(&doc).expect("plan serializes")
    }
}

/// Click-probability pairs at every uncertainty corner for source mean `mu_a`.
pub fn corners<T: Real>(
    params: &SystemParams<T>,
    uncertainty: &Uncertainty<T>,
    mu_a: T,
    m: u64,
    delta: T,
) -> Result<Vec<Hypotheses<T>>, ModelError> {
    let signs: &[T] = if uncertainty.is_zero() { &[T::zero()] } else { &[-T::one(), T::one()] };
    let mut out = Vec::with_capacity(8);
    for &sm in signs {
        for &sv in signs {
            for &sd in signs {
                let mut p = *params;
                p.visibility = (p.visibility + sv * uncertainty.visibility).max(T::zero()).min(T::one());
                p.p_dark = (p.p_dark + sd * uncertainty.p_dark).max(T::zero()).min(T::one());
                let mu = params.detected_mean(mu_a) * (T::one() + sm * uncertainty.mu_rel).max(T::zero());
                out.push(Hypotheses { p_equal: p_equal(&p, mu, m)?, p_diff: p_diff(&p, mu, m, delta)? });
            }
        }
    }
    Ok(out)
}

struct Problem<T> {
    n: u64,
    m: u64,
    delta: T,
    margin: T,
    params: SystemParams<T>,
    options: PlanOptions<T>,
}

impl<T: Real> Problem<T> {
    /// `(threshold, epsilon)` at source mean `mu_a`; an inverted ordering
    /// (visibility below one half) counts as total failure.
    fn evaluate(&self, mu_a: T) -> Result<(u64, T), PlanError> {
        let cs = corners(&self.params, &self.options.uncertainty, mu_a, self.m, self.delta)?;
        match choose_threshold_with(self.m, &cs, self.options.representation) {
            Ok(v) => Ok((v.threshold, v.epsilon)),
            Err(DecisionError::Order { .. }) => Ok((0, T::one())),
            Err(e) => Err(e.into()),
        }
    }

    fn finish(&self, mu_a: T, threshold: u64, epsilon: T) -> Result<ProtocolPlan<T>, PlanError> {
        let mu_b = balance_sources(mu_a, self.params.eta_ar.value(), self.params.eta_br.value())?;
        let account = InfoAccount::compute(self.n, mu_a, mu_b, self.m)?;
        Ok(ProtocolPlan {
            n: self.n,
            delta: self.delta,
            margin: self.margin,
            m: self.m,
            mu_a,
            mu_b,
            mu_det: self.params.detected_mean(mu_a),
            threshold,
            epsilon_pred: epsilon,
            account,
            params: self.params,
            uncertainty: self.options.uncertainty,
            representation: self.options.representation,
        })
    }
}

fn problem<T: Real>(
    n: u64,
    delta: T,
    params: &SystemParams<T>,
    options: &PlanOptions<T>,
) -> Result<Problem<T>, PlanError> {
    if n == 0 {
        return Err(PlanError::EmptyInput);
    }
    params.validate()?;
    let (m, margin) = options.shape.resolve(n, delta.f64())?;
    Ok(Problem { n, m, delta, margin: T::of(margin), params: *params, options: *options })
}

/// Plan with default options: `m` at the default margin below the GV rate,
/// nominal parameters, exact binomial tails.
pub fn plan<T: Real>(n: u64, delta: T, params: &SystemParams<T>, target_eps: T) -> Result<ProtocolPlan<T>, PlanError> {
    plan_with(n, delta, params, target_eps, &PlanOptions::default())
}

pub fn plan_with<T: Real>(
    n: u64,
    delta: T,
    params: &SystemParams<T>,
    target_eps: T,
    options: &PlanOptions<T>,
) -> Result<ProtocolPlan<T>, PlanError> {
    if !(target_eps > T::zero() && target_eps < T::of(0.5)) {
        return Err(PlanError::TargetDomain(target_eps.f64()));
    }
    let pr = problem(n, delta, params, options)?;
    let limit = T::of(MU_LIMIT);

    let mut hi = T::one();
    let mut at_hi = pr.evaluate(hi)?;
    let mut lo;
    if at_hi.1 <= target_eps {
        // walk down until the target is missed
        lo = hi;
        loop {
            lo = lo / T::of(2.0);
            let at = pr.evaluate(lo)?;
            if at.1 > target_eps {
                break;
            }
            hi = lo;
            at_hi = at;
            if lo < T::of(1e-9) {
                return pr.finish(hi, at_hi.0, at_hi.1);
            }
        }
    } else {
        let mut best = at_hi.1;
        loop {
            lo = hi;
            hi = hi * T::of(2.0);
            if hi > limit {
                return Err(PlanError::Infeasible { best_epsilon: best.f64() });
            }
            at_hi = pr.evaluate(hi)?;
            best = best.min(at_hi.1);
            if at_hi.1 <= target_eps {
                break;
            }
        }
    }
    while hi / lo > T::one() + T::of(SEARCH_TOLERANCE) {
        let mid = (lo * hi).sqrt();
        let at = pr.evaluate(mid)?;
        if at.1 <= target_eps {
            hi = mid;
            at_hi = at;
        } else {
            lo = mid;
        }
    }
    pr.finish(hi, at_hi.0, at_hi.1)
}

/// Evaluates a fixed intensity without searching.
pub fn evaluate_at<T: Real>(
    n: u64,
    delta: T,
    params: &SystemParams<T>,
    mu_a: T,
    options: &PlanOptions<T>,
) -> Result<ProtocolPlan<T>, PlanError> {
    let pr = problem(n, delta, params, options)?;
    let (th, eps) = pr.evaluate(mu_a)?;
    pr.finish(mu_a, th, eps)
}

/// Error probability of a plan's own threshold at its own parameters.
pub fn evaluate<T: Real>(plan: &ProtocolPlan<T>) -> Result<T, PlanError> {
    let cs = corners(&plan.params, &plan.uncertainty, plan.mu_a, plan.m, plan.delta)?;
    Ok(error_probability_with(plan.m, &cs, plan.threshold, plan.representation)?)
}

/// Grid search over `delta` for the plan with the least quantum information.
/// Grid points whose plan fails are skipped; the error is returned only if
/// all fail.
pub fn optimize_delta<T: Real>(
    n: u64,
    grid: &[T],
    params: &SystemParams<T>,
    target_eps: T,
    options: &PlanOptions<T>,
) -> Result<ProtocolPlan<T>, PlanError> {
    let mut best: Option<ProtocolPlan<T>> = None;
    let mut last_err = PlanError::EmptyInput;
    for &delta in grid {
        match plan_with(n, delta, params, target_eps, options) {
            Ok(p) => {
                if best.as_ref().is_none_or(|b| p.account.q < b.account.q) {
                    best = Some(p);
                }
            }
            Err(e) => last_err = e,
        }
    }
    best.ok_or(last_err)
}

/// One input row of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepInput<T = f64> {
    pub n: u64,
    pub params: SystemParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T = f64> {
    pub n: u64,
    pub result: Result<ProtocolPlan<T>, PlanError>,
}

/// One plan per row, evaluated concurrently and returned in input order.
/// Failed rows are kept with their error.
pub fn sweep<T: Real>(rows: &[SweepInput<T>], delta: T, target_eps: T, options: &PlanOptions<T>) -> Vec<SweepRow<T>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = rows
            .iter()
            .map(|r| {
                s.spawn(move || SweepRow { n: r.n, result: plan_with(r.n, delta, &r.params, target_eps, options) })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    })
}

/// Same device for every `n`.
pub fn sweep_uniform<T: Real>(
    n_list: &[u64],
    params: &SystemParams<T>,
    delta: T,
    target_eps: T,
    options: &PlanOptions<T>,
) -> Vec<SweepRow<T>> {
    let rows: Vec<_> = n_list.iter().map(|&n| SweepInput { n, params: *params }).collect();
    sweep(&rows, delta, target_eps, options)
}

pub fn sweep_csv<T: Real>(rows: &[SweepRow<T>]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        match &row.result {
            Ok(p) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{:e},{},{},{},ok",
                    p.n,
                    p.m,
                    p.delta,
                    p.mu_a,
                    p.mu_b,
                    p.threshold,
                    p.epsilon_pred.f64(),
                    p.account.q,
                    p.account.c,
                    p.account.gamma
                );
            }
            Err(e) => {
                let reason = e.to_string().replace([',', '\n'], ";");
                let _ = writeln!(out, "{},,,,,,,,,,infeasible: {reason}", row.n);
            }
        }
    }
    out
}
