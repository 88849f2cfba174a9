//! Profit-optimal credit limits for transactor credit-card customers.
//!
//! A transactor pays the full statement balance every period, so the issuer's
//! profit is interchange on spend minus the cost of funding the limit. This
//! crate computes the limit that maximizes expected profit by numerically
//! inverting closed-form Laplace transforms of the expected outstanding
//! balance under a balance-freeze control policy, brackets the optimum for a
//! purchase-retrial policy with a newsvendor bound, cross-validates every
//! analytic quantity against a Monte-Carlo policy simulator, and calibrates
//! the purchase process from raw transaction data.

pub mod cli;
pub mod ingest;
pub mod inversion;
pub mod model;
pub mod optimizer;
pub mod simulator;
pub mod transforms;

pub use inversion::{invert, invert_batch, EulerConfig, InversionError};
pub use model::{BalanceQuery, ModelError, PolicyKind};
pub use optimizer::{
    BoundsResult, LimitReport, OptimizationResult, OptimizerError, SolveMethod,
};
pub use simulator::{SimError, SimReport};
pub use transforms::{DistributionSpec, ModelParams, TransformError, TransformFn};
