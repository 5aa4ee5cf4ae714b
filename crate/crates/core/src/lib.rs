//! Optimal endogenous bankruptcy barriers in the Leland-Toft capital
//! structure model when log-assets follow a spectrally positive Levy process,
//! under continuous and Poisson-periodic observation.

// Negated comparisons double as NaN checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fluctuation;
pub mod levy_model;
pub mod optimizer;
pub mod scale_fn;
pub mod simulate;
pub mod valuation;

pub use error::{Error, Result};
pub use fluctuation::{FluctuationContext, Side};
pub use levy_model::{LevyModel, PhaseType, Variation};
pub use optimizer::{BarrierSolution, Regime, TaxThresholdRule, TwoStageSolution};
pub use scale_fn::ScaleFunction;
pub use simulate::{McEstimate, SimConfig};
pub use valuation::{MarketParams, Observation, Valuation};
