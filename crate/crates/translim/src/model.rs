//! Real-domain model quantities recovered by transform inversion.
//!
//! Each operation inverts one of the closed-form transforms over the credit
//! limit: expected frozen balance, its limit-derivative, the decline
//! probability `P(A(T) > ℓ)`, the truncated expectation `E[min(A(T), ℓ)]`,
//! and the per-period expected profit `γ·E[balance] − ν·ℓ`.

use crate::inversion::{invert, EulerConfig, InversionError};
use crate::transforms::{
    aggregate_tail_transform_fn, expectation_derivative_transform_fn, expectation_transform_fn,
    min_expectation_transform_fn, ModelParams, TransformError,
};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Inversion(#[from] InversionError),
    #[error("invalid balance query: {0}")]
    InvalidQuery(String),
    #[error("the {0:?} policy has no analytic expectation; use the simulator")]
    UnsupportedPolicyForAnalytic(PolicyKind),
}

/// Balance-control policy applied when a purchase would breach the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PolicyKind {
    /// First over-limit attempt is declined and all later purchases barred.
    Freeze,
    /// Over-limit attempts are declined but later fitting purchases accepted.
    Retrial,
    /// Balance is capped at exactly the limit: min(A(T), ℓ).
    NewsvendorTruncation,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyKind::Freeze => write!(f, "freeze"),
            PolicyKind::Retrial => write!(f, "retrial"),
            PolicyKind::NewsvendorTruncation => write!(f, "truncation"),
        }
    }
}

/// A model evaluation point: parameters, limit, and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceQuery {
    params: ModelParams,
    limit: f64,
    horizon: f64,
}

impl BalanceQuery {
    /// Query at the parameter set's own effective horizon.
    pub fn new(params: ModelParams, limit: f64) -> Result<Self, ModelError> {
        Self::with_horizon(params, limit, params.horizon())
    }

    pub fn with_horizon(params: ModelParams, limit: f64, horizon: f64) -> Result<Self, ModelError> {
        if !(limit > 0.0 && limit.is_finite()) {
            return Err(ModelError::InvalidQuery(format!(
                "limit must be positive, got {limit}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ModelError::InvalidQuery(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self {
            params,
            limit,
            horizon,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Inversion settings for model quantities. The generous node budget keeps
/// the Euler average past the oscillatory transient of the compound-Poisson
/// exponent at high arrival rates.
pub(crate) fn model_euler_config() -> EulerConfig {
    EulerConfig::new(18.4, 55, 11)
}

/// Expected end-of-period balance under the freeze policy, `E[B_ℓ(T)]`.
pub fn expected_balance(q: &BalanceQuery) -> Result<f64, ModelError> {
    let transform = expectation_transform_fn(q.params(), q.horizon())?;
    let v = invert(&transform, q.limit(), &model_euler_config())?;
    // the exact value lies in [0, limit]; clip inversion noise
    Ok(v.clamp(0.0, q.limit()))
}

/// Derivative of the expected frozen balance in the limit, `∂E[B_ℓ(T)]/∂ℓ`.
pub fn balance_derivative(q: &BalanceQuery) -> Result<f64, ModelError> {
    let transform = expectation_derivative_transform_fn(q.params(), q.horizon())?;
    let v = invert(&transform, q.limit(), &model_euler_config())?;
    Ok(v.clamp(0.0, 1.0))
}

/// Probability that cumulative attempted spend exceeds the limit,
/// `P(A(T) > ℓ)`.
pub fn decline_probability(q: &BalanceQuery) -> Result<f64, ModelError> {
    let params = reclocked(q)?;
    let transform = aggregate_tail_transform_fn(&params)?;
    let v = invert(&transform, q.limit(), &model_euler_config())?;
    Ok(v.clamp(0.0, 1.0))
}

/// Expected spend under the truncation policy, `E[min(A(T), ℓ)]`.
pub fn expected_min(q: &BalanceQuery) -> Result<f64, ModelError> {
    let params = reclocked(q)?;
    let transform = min_expectation_transform_fn(&params)?;
    let v = invert(&transform, q.limit(), &model_euler_config())?;
    Ok(v.max(0.0))
}

/// Single-period expected profit `γ·E[balance] − ν·ℓ` under an analytically
/// tractable policy. The retrial policy is rejected: its expectation exists
/// only as a simulator estimate.
pub fn expected_profit(q: &BalanceQuery, policy: PolicyKind) -> Result<f64, ModelError> {
    let balance = match policy {
        PolicyKind::Freeze => expected_balance(q)?,
        PolicyKind::NewsvendorTruncation => expected_min(q)?,
        PolicyKind::Retrial => {
            return Err(ModelError::UnsupportedPolicyForAnalytic(PolicyKind::Retrial))
        }
    };
    Ok(q.params().gamma_interchange() * balance - q.params().nu_funding() * q.limit())
}

/// Tail quantities use the query's horizon, which may differ from the one
/// stored in the parameter set.
fn reclocked(q: &BalanceQuery) -> Result<ModelParams, ModelError> {
    if q.horizon() == q.params().horizon() {
        return Ok(*q.params());
    }
    Ok(ModelParams::new(
        q.params().gamma_interchange(),
        q.params().nu_funding(),
        q.horizon(),
        0.0,
        q.params().mark(),
        q.params().arrivals(),
    )?)
}
