//! Distribution specifications and closed-form Laplace transforms.
//!
//! Purchases form a marked point process: marks (purchase values) follow a
//! distribution `F`, inter-purchase times follow `G`. Everything downstream
//! works on the Laplace transforms `f(θ) = ∫ e^{-θz} F(dz)` and
//! `g(ω) = ∫ e^{-ωu} G(du)`, which this module evaluates as complex-valued
//! functions, together with the compound-Poisson transforms of the expected
//! frozen balance, its limit-derivative, and the tail of aggregate spend.

use num_complex::Complex64;
use serde::Serialize;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("invalid distribution or parameter set: {0}")]
    InvalidSpec(String),
    #[error("argument real part {re} outside region of convergence (requires Re > {sigma})")]
    ArgumentOutsideRegion { re: f64, sigma: f64 },
    #[error("geometric term has modulus {modulus} >= 1; triple transform diverges")]
    DivergentGeometricTerm { modulus: f64 },
    #[error("transform has a pole at the origin; argument must be nonzero")]
    PoleAtOrigin,
    #[error("arrival law must be exponential for the analytic time inversion")]
    UnsupportedArrivalLaw,
    #[error("mark law must be exponential or gamma for this transform")]
    UnsupportedMarkLaw,
}

/// Parametric law of purchase sizes or inter-purchase times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DistributionKind {
    /// Rate parameter in 1/dollars (marks) or 1/days (inter-arrivals).
    Exponential { rate: f64 },
    /// Shape/rate parameterization: mean = shape/rate.
    Gamma { shape: f64, rate: f64 },
    /// Point mass; its transform is entire.
    Deterministic { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DistributionRole {
    Mark,
    InterArrival,
}

/// A distribution together with the role it plays in the purchase process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionSpec {
    kind: DistributionKind,
    role: DistributionRole,
}

impl fmt::Display for DistributionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DistributionKind::Exponential { rate } => write!(f, "Exponential(rate={rate})"),
            DistributionKind::Gamma { shape, rate } => {
                write!(f, "Gamma(shape={shape}, rate={rate})")
            }
            DistributionKind::Deterministic { value } => write!(f, "Deterministic({value})"),
        }
    }
}

impl DistributionSpec {
    fn new(kind: DistributionKind, role: DistributionRole) -> Result<Self, TransformError> {
        let ok = match kind {
            DistributionKind::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            DistributionKind::Gamma { shape, rate } => {
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()
            }
            DistributionKind::Deterministic { value } => value > 0.0 && value.is_finite(),
        };
        if !ok {
            return Err(TransformError::InvalidSpec(format!(
                "parameters must be strictly positive and finite, got {kind:?}"
            )));
        }
        Ok(Self { kind, role })
    }

    pub fn exponential_mark(rate: f64) -> Result<Self, TransformError> {
        Self::new(DistributionKind::Exponential { rate }, DistributionRole::Mark)
    }

    pub fn gamma_mark(shape: f64, rate: f64) -> Result<Self, TransformError> {
        Self::new(DistributionKind::Gamma { shape, rate }, DistributionRole::Mark)
    }

    pub fn deterministic_mark(value: f64) -> Result<Self, TransformError> {
        Self::new(DistributionKind::Deterministic { value }, DistributionRole::Mark)
    }

    pub fn exponential_arrivals(rate: f64) -> Result<Self, TransformError> {
        Self::new(
            DistributionKind::Exponential { rate },
            DistributionRole::InterArrival,
        )
    }

    pub fn gamma_arrivals(shape: f64, rate: f64) -> Result<Self, TransformError> {
        Self::new(
            DistributionKind::Gamma { shape, rate },
            DistributionRole::InterArrival,
        )
    }

    pub fn deterministic_arrivals(value: f64) -> Result<Self, TransformError> {
        Self::new(
            DistributionKind::Deterministic { value },
            DistributionRole::InterArrival,
        )
    }

    pub fn kind(&self) -> DistributionKind {
        self.kind
    }

    pub fn role(&self) -> DistributionRole {
        self.role
    }

    /// Abscissa of convergence of the transform (−rate for exponential and
    /// gamma laws, −∞ for a point mass).
    pub fn sigma(&self) -> f64 {
        match self.kind {
            DistributionKind::Exponential { rate } | DistributionKind::Gamma { rate, .. } => -rate,
            DistributionKind::Deterministic { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            DistributionKind::Exponential { rate } => 1.0 / rate,
            DistributionKind::Gamma { shape, rate } => shape / rate,
            DistributionKind::Deterministic { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match self.kind {
            DistributionKind::Exponential { rate } => 1.0 / (rate * rate),
            DistributionKind::Gamma { shape, rate } => shape / (rate * rate),
            DistributionKind::Deterministic { .. } => 0.0,
        }
    }

    /// Distribution function, used by the goodness-of-fit test and oracles.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self.kind {
            DistributionKind::Exponential { rate } => -(-rate * x).exp_m1(),
            DistributionKind::Gamma { shape, rate } => {
                statrs::function::gamma::gamma_lr(shape, rate * x)
            }
            DistributionKind::Deterministic { value } => {
                if x >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn check_region(&self, z: Complex64) -> Result<(), TransformError> {
        if z.re <= self.sigma() {
            return Err(TransformError::ArgumentOutsideRegion {
                re: z.re,
                sigma: self.sigma(),
            });
        }
        Ok(())
    }

    /// Laplace transform evaluated on the principal branch.
    pub fn transform(&self, z: Complex64) -> Result<Complex64, TransformError> {
        self.check_region(z)?;
        Ok(match self.kind {
            DistributionKind::Exponential { rate } => rate / (rate + z),
            DistributionKind::Gamma { shape, rate } => {
                ((Complex64::from(rate) / (rate + z)).ln() * shape).exp()
            }
            DistributionKind::Deterministic { value } => (-z * value).exp(),
        })
    }

    /// Derivative of the transform in its argument.
    pub fn transform_derivative(&self, z: Complex64) -> Result<Complex64, TransformError> {
        self.check_region(z)?;
        Ok(match self.kind {
            DistributionKind::Exponential { rate } => {
                let d = rate + z;
                -rate / (d * d)
            }
            DistributionKind::Gamma { shape, rate } => {
                let base = Complex64::from(rate) / (rate + z);
                -(shape / (rate + z)) * (base.ln() * shape).exp()
            }
            DistributionKind::Deterministic { value } => -value * (-z * value).exp(),
        })
    }
}

/// `exp(z) - 1` with a series fallback near the origin to avoid cancellation.
pub(crate) fn expm1c(z: Complex64) -> Complex64 {
    if z.norm_sqr() < 1e-6 {
        // |z| < 1e-3: five-term Horner series, relative error below 1e-18
        z * (1.0
            + z * (0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z / 720.0)))))
    } else {
        z.exp() - 1.0
    }
}

/// Economic and stochastic parameters of a single customer-period.
///
/// The interest-free period is folded into the statement period once at
/// construction; all formulas see the single effective horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    gamma_interchange: f64,
    nu_funding: f64,
    horizon: f64,
    limit_lo: f64,
    limit_hi: f64,
    mark: DistributionSpec,
    arrivals: DistributionSpec,
}

pub const DEFAULT_LIMIT_LO: f64 = 0.0;
pub const DEFAULT_LIMIT_HI: f64 = 5000.0;

impl ModelParams {
    pub fn new(
        gamma_interchange: f64,
        nu_funding: f64,
        period: f64,
        interest_free: f64,
        mark: DistributionSpec,
        arrivals: DistributionSpec,
    ) -> Result<Self, TransformError> {
        if !(gamma_interchange > 0.0 && gamma_interchange < 1.0) {
            return Err(TransformError::InvalidSpec(format!(
                "interchange proportion must lie in (0,1), got {gamma_interchange}"
            )));
        }
        if !(nu_funding > 0.0 && nu_funding < 1.0) {
            return Err(TransformError::InvalidSpec(format!(
                "funding-cost proportion must lie in (0,1), got {nu_funding}"
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(TransformError::InvalidSpec(format!(
                "statement period must be positive, got {period}"
            )));
        }
        if !(interest_free >= 0.0 && interest_free.is_finite()) {
            return Err(TransformError::InvalidSpec(format!(
                "interest-free period must be nonnegative, got {interest_free}"
            )));
        }
        if mark.role() != DistributionRole::Mark {
            return Err(TransformError::InvalidSpec(
                "mark distribution must have the Mark role".into(),
            ));
        }
        if arrivals.role() != DistributionRole::InterArrival {
            return Err(TransformError::InvalidSpec(
                "arrival distribution must have the InterArrival role".into(),
            ));
        }
        Ok(Self {
            gamma_interchange,
            nu_funding,
            horizon: period + interest_free,
            limit_lo: DEFAULT_LIMIT_LO,
            limit_hi: DEFAULT_LIMIT_HI,
            mark,
            arrivals,
        })
    }

    /// Replace the permitted-limit interval `(lo, hi]`.
    pub fn with_limit_set(mut self, lo: f64, hi: f64) -> Result<Self, TransformError> {
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(TransformError::InvalidSpec(format!(
                "limit set requires 0 <= lo < hi, got [{lo}, {hi}]"
            )));
        }
        self.limit_lo = lo;
        self.limit_hi = hi;
        Ok(self)
    }

    pub fn gamma_interchange(&self) -> f64 {
        self.gamma_interchange
    }

    pub fn nu_funding(&self) -> f64 {
        self.nu_funding
    }

    /// Effective horizon: statement period plus interest-free period, days.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn limit_lo(&self) -> f64 {
        self.limit_lo
    }

    pub fn limit_hi(&self) -> f64 {
        self.limit_hi
    }

    pub fn mark(&self) -> DistributionSpec {
        self.mark
    }

    pub fn arrivals(&self) -> DistributionSpec {
        self.arrivals
    }

    /// Funding-to-interchange ratio ν/γ, the first-order-condition target.
    pub fn cost_ratio(&self) -> f64 {
        self.nu_funding / self.gamma_interchange
    }

    fn poisson_rate(&self) -> Result<f64, TransformError> {
        match self.arrivals.kind() {
            DistributionKind::Exponential { rate } => Ok(rate),
            _ => Err(TransformError::UnsupportedArrivalLaw),
        }
    }

    /// Mean aggregate attempted spend over the horizon, λT·E[ξ].
    pub fn mean_aggregate_spend(&self) -> Result<f64, TransformError> {
        Ok(self.poisson_rate()? * self.horizon * self.mark.mean())
    }
}

/// `f(z)` together with `f(z) - 1` computed without cancellation.
fn mark_value_and_em(
    mark: DistributionSpec,
    z: Complex64,
) -> Result<(Complex64, Complex64), TransformError> {
    mark.check_region(z)?;
    match mark.kind() {
        DistributionKind::Exponential { rate } => {
            let x = rate / (rate + z);
            Ok((x, -z / (rate + z)))
        }
        DistributionKind::Gamma { shape, rate } => {
            let w = (Complex64::from(rate) / (rate + z)).ln() * shape;
            Ok((w.exp(), expm1c(w)))
        }
        DistributionKind::Deterministic { .. } => Err(TransformError::UnsupportedMarkLaw),
    }
}

/// Transform of the purchase-size law, `f(θ)`.
pub fn mark_transform(spec: &DistributionSpec, theta: Complex64) -> Result<Complex64, TransformError> {
    if spec.role() != DistributionRole::Mark {
        return Err(TransformError::InvalidSpec(
            "expected a Mark-role distribution".into(),
        ));
    }
    spec.transform(theta)
}

/// Transform of the inter-purchase-time law, `g(ω)`.
pub fn arrival_transform(
    spec: &DistributionSpec,
    omega: Complex64,
) -> Result<Complex64, TransformError> {
    if spec.role() != DistributionRole::InterArrival {
        return Err(TransformError::InvalidSpec(
            "expected an InterArrival-role distribution".into(),
        ));
    }
    spec.transform(omega)
}

/// Triple transform of the frozen-balance tail function,
///
/// `S(θ,ω,ψ) = g(ω)·(f(θ) - f(θ+ψ)) / [θωψ·(1 - g(ω)f(θ+ψ))]`.
pub fn tail_triple_transform(
    params: &ModelParams,
    theta: Complex64,
    omega: Complex64,
    psi: Complex64,
) -> Result<Complex64, TransformError> {
    let zero = Complex64::new(0.0, 0.0);
    if theta == zero || omega == zero || psi == zero {
        return Err(TransformError::PoleAtOrigin);
    }
    let g = params.arrivals.transform(omega)?;
    let f_theta = params.mark.transform(theta)?;
    let f_shift = params.mark.transform(theta + psi)?;
    let geo = g * f_shift;
    if geo.norm() >= 1.0 {
        return Err(TransformError::DivergentGeometricTerm { modulus: geo.norm() });
    }
    Ok(g * (f_theta - f_shift) / (theta * omega * psi * (1.0 - geo)))
}

/// θ-transform over the limit of the expected frozen balance at time `t`,
/// for Poisson arrivals:
///
/// `L{E[B_ℓ(t)]}(θ) = k/(θ(μ+θ)) · f(θ) · (1 - e^{λt(f(θ)-1)})/(1 - f(θ))`
///
/// with `f(θ) = (μ/(μ+θ))^k`; exponential marks are the `k = 1` case.
pub fn expectation_transform_theta(
    params: &ModelParams,
    t: f64,
    theta: Complex64,
) -> Result<Complex64, TransformError> {
    let drv = expectation_derivative_transform_theta(params, t, theta)?;
    Ok(drv / theta)
}

/// θ-transform over the limit of `∂E[B_ℓ(t)]/∂ℓ`, for Poisson arrivals:
///
/// `-f'(θ) · (1 - e^{λt(f(θ)-1)})/(1 - f(θ))`.
pub fn expectation_derivative_transform_theta(
    params: &ModelParams,
    t: f64,
    theta: Complex64,
) -> Result<Complex64, TransformError> {
    if t < 0.0 {
        return Err(TransformError::InvalidSpec(format!(
            "time must be nonnegative, got {t}"
        )));
    }
    if theta == Complex64::new(0.0, 0.0) {
        return Err(TransformError::PoleAtOrigin);
    }
    let lambda = params.poisson_rate()?;
    let (_, em) = mark_value_and_em(params.mark, theta)?;
    let fprime = params.mark.transform_derivative(theta)?;
    // (1 - e^{λt·em})/(1 - (em+1)) = expm1(λt·em)/em, stable as em → 0
    Ok(-fprime * expm1c(lambda * t * em) / em)
}

/// ψ-transform over the limit of the tail of aggregate spend `A(T)`:
///
/// `A~(ψ) = (1/ψ)(1 - e^{λT(f(ψ)-1)})`, so that the inverse at ℓ is
/// `P(A(T) > ℓ)`. Uses the effective horizon.
pub fn aggregate_tail_transform(
    params: &ModelParams,
    psi: Complex64,
) -> Result<Complex64, TransformError> {
    if psi == Complex64::new(0.0, 0.0) {
        return Err(TransformError::PoleAtOrigin);
    }
    let lambda = params.poisson_rate()?;
    let (_, em) = mark_value_and_em(params.mark, psi)?;
    Ok(-expm1c(lambda * params.horizon * em) / psi)
}

/// θ-transform over the limit of `E[min(A(T), ℓ)]`, equal to `A~(θ)/θ`.
pub fn min_expectation_transform(
    params: &ModelParams,
    theta: Complex64,
) -> Result<Complex64, TransformError> {
    let tail = aggregate_tail_transform(params, theta)?;
    Ok(tail / theta)
}

/// A single-variable Laplace transform packaged for numerical inversion.
#[derive(Clone)]
pub struct TransformFn {
    sigma: f64,
    eval: Arc<dyn Fn(Complex64) -> Complex64 + Send + Sync>,
}

impl TransformFn {
    pub fn new<F>(sigma: f64, eval: F) -> Self
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + 'static,
    {
        Self {
            sigma,
            eval: Arc::new(eval),
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        (self.eval)(z)
    }

    /// Abscissa of convergence (an upper bound is acceptable).
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl fmt::Debug for TransformFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformFn").field("sigma", &self.sigma).finish()
    }
}

const NAN_C: Complex64 = Complex64::new(f64::NAN, f64::NAN);

/// Package the expected-balance transform at horizon `t` for inversion over ℓ.
pub fn expectation_transform_fn(
    params: &ModelParams,
    t: f64,
) -> Result<TransformFn, TransformError> {
    // validate law support once so the closure can only fail on region checks
    expectation_transform_theta(params, t, Complex64::new(1.0, 0.0))?;
    let p = *params;
    Ok(TransformFn::new(0.0, move |z| {
        expectation_transform_theta(&p, t, z).unwrap_or(NAN_C)
    }))
}

/// Package the balance-derivative transform at horizon `t`.
pub fn expectation_derivative_transform_fn(
    params: &ModelParams,
    t: f64,
) -> Result<TransformFn, TransformError> {
    expectation_derivative_transform_theta(params, t, Complex64::new(1.0, 0.0))?;
    let p = *params;
    Ok(TransformFn::new(0.0, move |z| {
        expectation_derivative_transform_theta(&p, t, z).unwrap_or(NAN_C)
    }))
}

/// Package the aggregate-spend tail transform for inversion over ℓ.
pub fn aggregate_tail_transform_fn(params: &ModelParams) -> Result<TransformFn, TransformError> {
    aggregate_tail_transform(params, Complex64::new(1.0, 0.0))?;
    let p = *params;
    Ok(TransformFn::new(0.0, move |z| {
        aggregate_tail_transform(&p, z).unwrap_or(NAN_C)
    }))
}

/// Package the `E[min(A(T), ℓ)]` transform for inversion over ℓ.
pub fn min_expectation_transform_fn(params: &ModelParams) -> Result<TransformFn, TransformError> {
    min_expectation_transform(params, Complex64::new(1.0, 0.0))?;
    let p = *params;
    Ok(TransformFn::new(0.0, move |z| {
        min_expectation_transform(&p, z).unwrap_or(NAN_C)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn cpp_params(lambda: f64, mark: DistributionSpec) -> ModelParams {
        ModelParams::new(
            0.0054,
            0.0007,
            30.0,
            0.0,
            mark,
            DistributionSpec::exponential_arrivals(lambda).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn exponential_mark_transform_at_zero_is_total_mass() {
        let spec = DistributionSpec::exponential_mark(0.05).unwrap();
        let v = mark_transform(&spec, c(0.0)).unwrap();
        assert_relative_eq!(v.re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn exponential_mark_transform_halves_at_rate() {
        let spec = DistributionSpec::exponential_mark(0.05).unwrap();
        let v = mark_transform(&spec, c(0.05)).unwrap();
        assert_relative_eq!(v.re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gamma_mark_transform_at_rate_is_half_to_the_shape() {
        let spec = DistributionSpec::gamma_mark(2.8946, 0.0769).unwrap();
        let v = mark_transform(&spec, c(0.0769)).unwrap();
        assert_relative_eq!(v.re, 0.5f64.powf(2.8946), epsilon = 1e-14);
        assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn arrival_transform_identities() {
        let unit = DistributionSpec::exponential_arrivals(1.0).unwrap();
        assert_relative_eq!(arrival_transform(&unit, c(0.0)).unwrap().re, 1.0);
        assert_relative_eq!(arrival_transform(&unit, c(1.0)).unwrap().re, 0.5);
        let fitted = DistributionSpec::exponential_arrivals(0.6451).unwrap();
        assert_relative_eq!(
            arrival_transform(&fitted, c(0.6451)).unwrap().re,
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn role_mismatch_is_invalid_spec() {
        let arrivals = DistributionSpec::exponential_arrivals(1.0).unwrap();
        assert!(matches!(
            mark_transform(&arrivals, c(1.0)),
            Err(TransformError::InvalidSpec(_))
        ));
        let mark = DistributionSpec::exponential_mark(1.0).unwrap();
        assert!(matches!(
            arrival_transform(&mark, c(1.0)),
            Err(TransformError::InvalidSpec(_))
        ));
    }

    #[test]
    fn argument_left_of_abscissa_is_rejected() {
        let spec = DistributionSpec::exponential_mark(0.05).unwrap();
        assert!(matches!(
            mark_transform(&spec, c(-0.06)),
            Err(TransformError::ArgumentOutsideRegion { .. })
        ));
        // the abscissa itself is outside the open region
        assert!(mark_transform(&spec, c(-0.05)).is_err());
    }

    #[test]
    fn nonpositive_parameters_are_rejected() {
        assert!(DistributionSpec::exponential_mark(0.0).is_err());
        assert!(DistributionSpec::exponential_mark(-1.0).is_err());
        assert!(DistributionSpec::gamma_mark(0.0, 1.0).is_err());
        assert!(DistributionSpec::gamma_mark(1.0, f64::NAN).is_err());
        assert!(DistributionSpec::deterministic_mark(0.0).is_err());
    }

    #[test]
    fn triple_transform_is_positive_for_real_positive_arguments() {
        let params = cpp_params(1.0, DistributionSpec::exponential_mark(0.05).unwrap());
        let s = tail_triple_transform(&params, c(1.0), c(1.0), c(1.0)).unwrap();
        assert!(s.re > 0.0, "transform of a nonnegative function, got {s}");
        assert_abs_diff_eq!(s.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn triple_transform_matches_independent_evaluation() {
        // hand-rolled evaluation of the closed form at θ = ω = ψ = 1
        let lambda = 1.0;
        let mu = 0.05f64;
        let g = lambda / (lambda + 1.0);
        let f1 = mu / (mu + 1.0);
        let f2 = mu / (mu + 2.0);
        let expected = g * (f1 - f2) / (1.0 * 1.0 * 1.0 * (1.0 - g * f2));

        let params = cpp_params(lambda, DistributionSpec::exponential_mark(mu).unwrap());
        let s = tail_triple_transform(&params, c(1.0), c(1.0), c(1.0)).unwrap();
        assert_relative_eq!(s.re, expected, epsilon = 1e-14);
    }

    #[test]
    fn triple_transform_limit_matches_expectation_closed_form() {
        // (θωψ·S)/ψ at ψ = 1e-6 should approach -g(ω)f'(θ)/(1-g(ω)f(θ))
        let params = cpp_params(1.0, DistributionSpec::exponential_mark(0.05).unwrap());
        let theta = c(1.0);
        let omega = c(1.0);
        let psi = c(1e-6);
        let s = tail_triple_transform(&params, theta, omega, psi).unwrap();
        let fd = theta * omega * psi * s / psi;

        let g = params.arrivals().transform(omega).unwrap();
        let f = params.mark().transform(theta).unwrap();
        let fp = params.mark().transform_derivative(theta).unwrap();
        let closed = -g * fp / (1.0 - g * f);
        assert_relative_eq!(fd.re, closed.re, max_relative = 1e-4);
    }

    #[test]
    fn triple_transform_rejects_origin_and_divergence() {
        let params = cpp_params(1.0, DistributionSpec::exponential_mark(0.05).unwrap());
        assert!(matches!(
            tail_triple_transform(&params, c(0.0), c(1.0), c(1.0)),
            Err(TransformError::PoleAtOrigin)
        ));
        // ω left of zero inflates g(ω) above 1 and the geometric term diverges
        let r = tail_triple_transform(&params, c(1e-4), c(-0.5), c(1e-4));
        assert!(matches!(r, Err(TransformError::DivergentGeometricTerm { .. })));
    }

    #[test]
    fn gamma_expectation_transform_matches_term_by_term_evaluation() {
        let params = cpp_params(0.6451, DistributionSpec::gamma_mark(2.8946, 0.0769).unwrap());
        let (k, mu, lambda, t, theta) = (2.8946, 0.0769f64, 0.6451, 30.0, 0.01f64);
        let x = (mu / (mu + theta)).powf(k);
        let expected =
            k / (theta * (mu + theta)) * x * (1.0 - (lambda * t * (x - 1.0)).exp()) / (1.0 - x);

        let v = expectation_transform_theta(&params, t, c(theta)).unwrap();
        assert!(v.re.is_finite() && v.re > 0.0);
        assert_relative_eq!(v.re, expected, epsilon = 1e-12);
    }

    #[test]
    fn derivative_transform_matches_direct_exponential_form() {
        let params = cpp_params(1.0, DistributionSpec::exponential_mark(0.05).unwrap());
        let (mu, lambda, t, theta) = (0.05f64, 1.0, 30.0, 0.01f64);
        let expected =
            (1.0 / theta) * (mu / (mu + theta)) * (1.0 - (lambda * t * (mu / (mu + theta) - 1.0)).exp());
        let v = expectation_derivative_transform_theta(&params, t, c(theta)).unwrap();
        assert_relative_eq!(v.re, expected, epsilon = 1e-13);
    }

    #[test]
    fn derivative_transform_vanishes_as_rate_goes_to_zero() {
        let params = cpp_params(1e-300, DistributionSpec::exponential_mark(0.05).unwrap());
        let v = expectation_derivative_transform_theta(&params, 30.0, c(0.5)).unwrap();
        assert!(v.norm() < 1e-12, "got {v}");
    }

    #[test]
    fn derivative_is_theta_times_expectation() {
        for mark in [
            DistributionSpec::exponential_mark(0.05).unwrap(),
            DistributionSpec::gamma_mark(2.8946, 0.0769).unwrap(),
        ] {
            let params = cpp_params(1.0, mark);
            for theta in [0.01, 0.1, 1.0] {
                let e = expectation_transform_theta(&params, 30.0, c(theta)).unwrap();
                let d = expectation_derivative_transform_theta(&params, 30.0, c(theta)).unwrap();
                assert_relative_eq!((c(theta) * e).re, d.re, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn expectation_transform_is_zero_at_zero_horizon() {
        let params = cpp_params(1.0, DistributionSpec::exponential_mark(0.05).unwrap());
        for theta in [0.01, 1.0, 10.0] {
            let v = expectation_transform_theta(&params, 0.0, c(theta)).unwrap();
            assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-300);
        }
    }

    #[test]
    fn tail_transform_initial_value_is_arrival_probability() {
        // ψ·A~(ψ) → 1 - e^{-λT} as ψ → ∞
        let lambda = 1.0;
        let params = cpp_params(lambda, DistributionSpec::exponential_mark(0.05).unwrap());
        let psi = c(1e7);
        let v = aggregate_tail_transform(&params, psi).unwrap();
        let expected = 1.0 - (-lambda * 30.0f64).exp();
        assert_relative_eq!((psi * v).re, expected, epsilon = 1e-6);
    }

    #[test]
    fn tail_transform_vanishes_without_arrivals() {
        let params = cpp_params(1e-300, DistributionSpec::exponential_mark(0.05).unwrap());
        let v = aggregate_tail_transform(&params, c(0.3)).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn min_expectation_initial_value_matches_tail() {
        let lambda = 1.0;
        let params = cpp_params(lambda, DistributionSpec::exponential_mark(0.05).unwrap());
        let theta = c(1e7);
        let v = min_expectation_transform(&params, theta).unwrap();
        let expected = 1.0 - (-lambda * 30.0f64).exp();
        assert_relative_eq!((theta * theta * v).re, expected, epsilon = 1e-6);
    }

    #[test]
    fn deterministic_marks_are_rejected_by_compound_poisson_transforms() {
        let params = cpp_params(1.0, DistributionSpec::deterministic_mark(25.0).unwrap());
        assert!(matches!(
            expectation_derivative_transform_theta(&params, 30.0, c(1.0)),
            Err(TransformError::UnsupportedMarkLaw)
        ));
        assert!(matches!(
            aggregate_tail_transform(&params, c(1.0)),
            Err(TransformError::UnsupportedMarkLaw)
        ));
    }

    #[test]
    fn non_poisson_arrivals_are_rejected_by_time_inverted_transforms() {
        let params = ModelParams::new(
            0.0054,
            0.0007,
            30.0,
            0.0,
            DistributionSpec::exponential_mark(0.05).unwrap(),
            DistributionSpec::gamma_arrivals(2.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            expectation_transform_theta(&params, 30.0, c(1.0)),
            Err(TransformError::UnsupportedArrivalLaw)
        ));
    }

    #[test]
    fn model_params_validation() {
        let mark = DistributionSpec::exponential_mark(0.05).unwrap();
        let arr = DistributionSpec::exponential_arrivals(1.0).unwrap();
        assert!(ModelParams::new(0.0, 0.0007, 30.0, 0.0, mark, arr).is_err());
        assert!(ModelParams::new(0.0054, 0.0, 30.0, 0.0, mark, arr).is_err());
        assert!(ModelParams::new(0.0054, 0.0007, 0.0, 0.0, mark, arr).is_err());
        assert!(ModelParams::new(0.0054, 0.0007, 30.0, -1.0, mark, arr).is_err());
        assert!(ModelParams::new(0.0054, 0.0007, 30.0, 0.0, arr, arr).is_err());
        assert!(ModelParams::new(0.0054, 0.0007, 30.0, 0.0, mark, mark).is_err());

        let p = ModelParams::new(0.0054, 0.0007, 30.0, 5.0, mark, arr).unwrap();
        assert_relative_eq!(p.horizon(), 35.0);
        assert!(p.with_limit_set(100.0, 50.0).is_err());
    }

    #[test]
    fn expm1c_series_branch_agrees_with_direct() {
        let z = Complex64::new(9e-4, -4e-4);
        let series = expm1c(z);
        let direct = z.exp() - 1.0;
        assert_relative_eq!(series.re, direct.re, max_relative = 1e-10);
        assert_relative_eq!(series.im, direct.im, max_relative = 1e-10);
        assert_abs_diff_eq!(expm1c(Complex64::new(0.0, 0.0)).norm(), 0.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn transforms_have_unit_mass_and_bounded_modulus(
                rate in 0.01f64..10.0,
                shape in 0.2f64..8.0,
                theta in 0.0f64..100.0,
            ) {
                for spec in [
                    DistributionSpec::exponential_mark(rate).unwrap(),
                    DistributionSpec::gamma_mark(shape, rate).unwrap(),
                ] {
                    let at_zero = spec.transform(c(0.0)).unwrap();
                    prop_assert!((at_zero.re - 1.0).abs() < 1e-12);
                    let v = spec.transform(c(theta)).unwrap();
                    prop_assert!(v.norm() <= 1.0 + 1e-12);
                }
            }

            #[test]
            fn transforms_decrease_along_the_real_axis(
                rate in 0.01f64..10.0,
                shape in 0.2f64..8.0,
            ) {
                for spec in [
                    DistributionSpec::exponential_mark(rate).unwrap(),
                    DistributionSpec::gamma_mark(shape, rate).unwrap(),
                ] {
                    let mut prev = f64::INFINITY;
                    for i in 0..32 {
                        let theta = 0.05 * f64::from(i);
                        let v = spec.transform(c(theta)).unwrap().re;
                        prop_assert!(v > 0.0);
                        prop_assert!(v <= prev + 1e-14);
                        prev = v;
                    }
                }
            }

            #[test]
            fn derivative_identity_holds_exactly(
                lambda in 0.05f64..5.0,
                rate in 0.01f64..1.0,
                shape in 0.5f64..5.0,
                t in 1.0f64..90.0,
                theta in 1e-3f64..10.0,
            ) {
                for mark in [
                    DistributionSpec::exponential_mark(rate).unwrap(),
                    DistributionSpec::gamma_mark(shape, rate).unwrap(),
                ] {
                    let params = cpp_params(lambda, mark);
                    let e = expectation_transform_theta(&params, t, c(theta)).unwrap();
                    let d = expectation_derivative_transform_theta(&params, t, c(theta)).unwrap();
                    prop_assert!(((c(theta) * e - d).norm()) <= 1e-12 * d.norm());
                }
            }

            #[test]
            fn lhopital_limit_consistency(
                lambda in 0.2f64..4.0,
                rate in 0.02f64..0.5,
                theta in 0.1f64..4.0,
                omega in 0.1f64..4.0,
            ) {
                let params = cpp_params(lambda, DistributionSpec::exponential_mark(rate).unwrap());
                let (th, om, ps) = (c(theta), c(omega), c(1e-6));
                let s = tail_triple_transform(&params, th, om, ps).unwrap();
                let fd = th * om * ps * s / ps;
                let g = params.arrivals().transform(om).unwrap();
                let f = params.mark().transform(th).unwrap();
                let fp = params.mark().transform_derivative(th).unwrap();
                let closed = -g * fp / (1.0 - g * f);
                prop_assert!((fd - closed).norm() <= 1e-4 * closed.norm());
            }
        }
    }
}
