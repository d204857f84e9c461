//! Argument parsing shared by several subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use qfp::codec::Seed;
use qfp::decision::Representation;
use qfp::planner::{CodeShape, PlanDocument, PlanOptions, Uncertainty, PLAN_SCHEMA};
use qfp::{ProtocolPlan, SystemParams};

/// Integer that may be written in scientific notation (`1.42e8`).
pub fn parse_count(s: &str) -> Result<u64, String> {
    let s = s.trim().replace('_', "");
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let x: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if !(x.is_finite() && x >= 0.0) || x.fract() != 0.0 {
        return Err(format!("{s} is not a non-negative integer"));
    }
    if x > 9_007_199_254_740_992.0 {
        return Err(format!("{s} is too large to be exact; write it out in full"));
    }
    Ok(x as u64)
}

pub fn parse_eps(s: &str) -> Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    if x > 0.0 && x < 0.5 {
        Ok(x)
    } else {
        Err(format!("target error must lie in (0, 0.5), got {s}"))
    }
}

pub fn parse_unit(s: &str) -> Result<f64, String> {
    let x: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("must lie in [0, 1], got {s}"))
    }
}

/// Seed as a decimal integer or 64 hex digits.
pub fn parse_seed(s: &str) -> Result<Seed, String> {
    let s = s.trim();
    if s.len() == 64 {
        if let Some(seed) = Seed::from_hex(s) {
            return Ok(seed);
        }
    }
    parse_count(s).map(Seed::from_u64).map_err(|_| format!("seed must be an integer or 64 hex digits, got {s}"))
}

pub fn parse_session(s: &str) -> Result<[u8; 16], String> {
    qfp::netparty::parse_session_hex(s.trim()).ok_or_else(|| format!("session id must be 32 hex digits, got {s:?}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UncertaintyArg {
    None,
    Experimental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReprArg {
    Exact,
    Poisson,
    Auto,
}

impl From<ReprArg> for Representation {
    fn from(r: ReprArg) -> Self {
        match r {
            ReprArg::Exact => Representation::ExactBinomial,
            ReprArg::Poisson => Representation::PoissonApprox,
            ReprArg::Auto => Representation::Auto,
        }
    }
}

/// Everything needed to compute a plan from scratch.
#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    /// Input length in bits.
    #[arg(long, value_parser = parse_count)]
    pub n: Option<u64>,
    /// Target relative minimum distance of the code.
    #[arg(long, default_value_t = 0.22, value_parser = parse_unit)]
    pub delta: f64,
    /// Device preset (id500, clavis2, ideal) or TOML file.
    #[arg(long, default_value = "ideal")]
    pub params: String,
    /// Largest acceptable error probability, in (0, 0.5).
    #[arg(long, default_value_t = 0.05, value_parser = parse_eps)]
    pub target_eps: f64,
    /// Code rate this far below the GV rate [default: 1e-3].
    #[arg(long, conflicts_with_all = ["rate", "m"])]
    pub margin: Option<f64>,
    /// Explicit code rate n/m.
    #[arg(long, conflicts_with = "m")]
    pub rate: Option<f64>,
    /// Explicit codeword length.
    #[arg(long, value_parser = parse_count)]
    pub m: Option<u64>,
    /// Parameter uncertainties the error bound must cover.
    #[arg(long, value_enum, default_value_t = UncertaintyArg::None)]
    pub uncertainty: UncertaintyArg,
    /// Click-count distribution used for thresholds.
    #[arg(long, value_enum, default_value_t = ReprArg::Exact)]
    pub repr: ReprArg,
}

impl PlanArgs {
    pub fn options(&self) -> PlanOptions<f64> {
        let shape = match (self.margin, self.rate, self.m) {
            (_, _, Some(m)) => CodeShape::OutputLen(m),
            (_, Some(r), _) => CodeShape::Rate(r),
            (Some(g), _, _) => CodeShape::GvMargin(g),
            _ => CodeShape::default(),
        };
        let uncertainty = match self.uncertainty {
            UncertaintyArg::None => Uncertainty::default(),
            UncertaintyArg::Experimental => Uncertainty::experimental(),
        };
        PlanOptions { shape, uncertainty, representation: self.repr.into() }
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        SystemParams::load(&self.params).with_context(|| format!("loading --params {}", self.params))
    }

    pub fn plan(&self) -> Result<ProtocolPlan> {
        let Some(n) = self.n else { bail!("--n is required unless --plan is given") };
        let params = self.system_params()?;
        Ok(qfp::planner::plan_with(n, self.delta, &params, self.target_eps, &self.options())?)
    }
}

pub fn read_plan(path: &Path) -> Result<ProtocolPlan> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: PlanDocument<f64> =
        serde_json::from_str(&text).with_context(|| format!("parsing plan {}", path.display()))?;
    if doc.schema != PLAN_SCHEMA {
        bail!("{}: schema {:?}, expected {PLAN_SCHEMA:?}", path.display(), doc.schema);
    }
    Ok(doc.plan)
}

/// A stored plan or one computed from the flags.
#[derive(Debug, Clone, Args)]
pub struct PlanSource {
    /// Plan JSON written by `qfp plan --out`.
    #[arg(long, conflicts_with = "n")]
    pub plan: Option<PathBuf>,
    #[command(flatten)]
    pub args: PlanArgs,
}

impl PlanSource {
    pub fn resolve(&self) -> Result<ProtocolPlan> {
        match &self.plan {
            Some(path) => read_plan(path),
            None => self.args.plan(),
        }
    }

    /// Config files this plan was read from, for the run manifest.
    pub fn config_paths(&self) -> Vec<String> {
        match &self.plan {
            Some(p) => vec![p.display().to_string()],
            None => param_paths(&self.args.params),
        }
    }
}

pub fn param_paths(spec: &str) -> Vec<String> {
    if SystemParams::preset_by_name(spec).is_some() {
        vec![format!("preset:{spec}")]
    } else {
        vec![spec.to_string()]
    }
}
