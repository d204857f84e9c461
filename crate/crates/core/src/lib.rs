//! Coherent-state quantum fingerprinting laboratory.
//!
//! The analytic layers (`model`, `decision`, `planner`) are generic over the
//! scalar type; the aliases below fix it to `f64` (and `f32` where useful).
//! The codec, simulator and network harness work in `f64` only.

pub mod bits;
pub mod codec;
pub mod decision;
pub mod model;
pub mod netparty;
pub mod planner;
pub mod scalar;
pub mod simulator;

pub use bits::BitString;
pub use codec::{Seed, ToeplitzCode};
pub use decision::Outcome;
pub use scalar::Real;
pub use simulator::TrialResult;

pub type SystemParams = model::SystemParams<f64>;
pub type InfoAccount = model::InfoAccount<f64>;
pub type ClickDistribution = decision::ClickDistribution<f64>;
pub type Verdict = decision::Verdict<f64>;
pub type ProtocolPlan = planner::ProtocolPlan<f64>;
pub type PlanOptions = planner::PlanOptions<f64>;
pub type Uncertainty = planner::Uncertainty<f64>;

pub type SystemParams32 = model::SystemParams<f32>;
pub type InfoAccount32 = model::InfoAccount<f32>;
pub type ClickDistribution32 = decision::ClickDistribution<f32>;
pub type Verdict32 = decision::Verdict<f32>;
pub type ProtocolPlan32 = planner::ProtocolPlan<f32>;
