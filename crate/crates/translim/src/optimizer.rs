//! Optimal-limit solvers.
//!
//! The freeze-policy optimum solves the first-order condition
//! `∂E[B_ℓ(T)]/∂ℓ = ν/γ` by bisection on the limit-derivative, which is
//! monotone decreasing over the relevant range. The newsvendor limit is the
//! quantile `inf{ℓ : P(A(T) > ℓ) ≤ ν/γ}`, found by bisection on the decline
//! probability. Together they bracket the retrial-policy optimum.

use crate::model::{
    balance_derivative, decline_probability, expected_balance, expected_min, expected_profit,
    BalanceQuery, ModelError, PolicyKind,
};
use crate::transforms::{DistributionKind, ModelParams};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizerError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(
        "critical ratio unattainable: P(A(T) > 0) = {attainable} < ν/γ = {ratio}; \
         the newsvendor optimum degenerates to zero"
    )]
    RatioUnattainable { attainable: f64, ratio: f64 },
    #[error("computed bounds are out of order: lower {lower} > upper {upper}")]
    InvalidBounds { lower: f64, upper: f64 },
}

/// How the reported optimum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    /// Root of the defining equation, bracketed and bisected.
    Bisection,
    /// Profit maximized by golden-section search after the derivative
    /// pre-scan showed non-monotone behavior.
    GoldenSection,
    /// No interior root; the lower endpoint of the limit set won on profit.
    BoundaryLo,
    /// No interior root; the upper endpoint of the limit set won on profit.
    BoundaryHi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub limit_star: f64,
    pub profit_at_star: f64,
    pub decline_prob_at_star: f64,
    pub iterations: u32,
    /// Distance of the defining equation from its target at the optimum.
    pub residual: f64,
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsResult {
    /// Newsvendor limit ℓ*, the lower bound on the retrial optimum.
    pub lower: f64,
    /// Freeze-policy limit, the upper bound on the retrial optimum.
    pub upper: f64,
    pub gap: f64,
}

const SCAN_POINTS: usize = 32;
const RESIDUAL_TOL: f64 = 1e-8;
const BRACKET_TOL: f64 = 1e-6;
const MAX_ITERS: u32 = 200;

fn derivative_at(params: &ModelParams, limit: f64) -> Result<f64, ModelError> {
    balance_derivative(&BalanceQuery::new(*params, limit)?)
}

fn decline_at(params: &ModelParams, limit: f64) -> Result<f64, ModelError> {
    decline_probability(&BalanceQuery::new(*params, limit)?)
}

fn freeze_profit_at(params: &ModelParams, limit: f64) -> Result<f64, ModelError> {
    if limit <= 0.0 {
        return Ok(0.0);
    }
    expected_profit(&BalanceQuery::new(*params, limit)?, PolicyKind::Freeze)
}

/// Evenly spaced scan of `(lo, hi]`, skipping the open lower endpoint.
fn scan_grid(lo: f64, hi: f64) -> Vec<f64> {
    let step = (hi - lo) / SCAN_POINTS as f64;
    (1..=SCAN_POINTS).map(|i| lo + step * i as f64).collect()
}

fn is_nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + 1e-9)
}

/// Last cell of the scan where the values cross the target from above.
fn descending_crossing(grid: &[f64], values: &[f64], target: f64) -> Option<(f64, f64)> {
    (1..grid.len())
        .rev()
        .find(|&i| values[i - 1] >= target && values[i] < target)
        .map(|i| (grid[i - 1], grid[i]))
}

/// Bisect `f(ℓ) = target` on a bracket with `f(left) ≥ target > f(right)`.
fn bisect<F>(
    mut left: f64,
    mut right: f64,
    target: f64,
    mut f: F,
) -> Result<(f64, u32), OptimizerError>
where
    F: FnMut(f64) -> Result<f64, ModelError>,
{
    let mut iterations = 0;
    let mut mid = 0.5 * (left + right);
    while iterations < MAX_ITERS {
        mid = 0.5 * (left + right);
        let value = f(mid)?;
        iterations += 1;
        if (value - target).abs() <= RESIDUAL_TOL || (right - left) <= BRACKET_TOL {
            break;
        }
        if value >= target {
            left = mid;
        } else {
            right = mid;
        }
    }
    Ok((mid, iterations))
}

/// Golden-section maximization of the freeze profit on `[a, b]`.
fn golden_section_profit(
    params: &ModelParams,
    mut a: f64,
    mut b: f64,
) -> Result<(f64, u32), OptimizerError> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = freeze_profit_at(params, x1)?;
    let mut f2 = freeze_profit_at(params, x2)?;
    let mut iterations = 0;
    while (b - a) > BRACKET_TOL && iterations < MAX_ITERS {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = freeze_profit_at(params, x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = freeze_profit_at(params, x1)?;
        }
        iterations += 1;
    }
    Ok((0.5 * (a + b), iterations))
}

fn assemble_freeze_result(
    params: &ModelParams,
    limit: f64,
    iterations: u32,
    method: SolveMethod,
) -> Result<OptimizationResult, OptimizerError> {
    let (residual, decline) = if limit > 0.0 {
        (
            (derivative_at(params, limit)? - params.cost_ratio()).abs(),
            decline_at(params, limit)?,
        )
    } else {
        (f64::NAN, 1.0)
    };
    Ok(OptimizationResult {
        limit_star: limit,
        profit_at_star: freeze_profit_at(params, limit)?,
        decline_prob_at_star: decline,
        iterations,
        residual,
        method,
    })
}

/// Profit-maximizing limit under the freeze policy: the root of
/// `balance_derivative(ℓ) = ν/γ` within the permitted limit set.
///
/// A 32-point pre-scan locates the bracket and validates that the
/// derivative is monotone decreasing; a non-monotone scan falls back to
/// golden-section profit maximization, and a scan with no crossing reports
/// the better endpoint of the limit set.
pub fn optimal_limit_freeze(params: &ModelParams) -> Result<OptimizationResult, OptimizerError> {
    let target = params.cost_ratio();
    let (lo, hi) = (params.limit_lo(), params.limit_hi());

    let grid = scan_grid(lo, hi);
    let values: Vec<f64> = grid
        .iter()
        .map(|&l| derivative_at(params, l))
        .collect::<Result<_, _>>()?;

    if !is_nonincreasing(&values) {
        // rising stretch visible (limit set reaches into the small-limit
        // regime where the derivative grows from zero): maximize profit
        // directly around the most profitable scanned cell
        let mut best = 0;
        let mut best_profit = f64::NEG_INFINITY;
        for (i, &l) in grid.iter().enumerate() {
            let p = freeze_profit_at(params, l)?;
            if p > best_profit {
                best_profit = p;
                best = i;
            }
        }
        let a = if best == 0 { lo + BRACKET_TOL } else { grid[best - 1] };
        let b = if best + 1 < grid.len() { grid[best + 1] } else { hi };
        let (limit, iterations) = golden_section_profit(params, a, b)?;
        return assemble_freeze_result(params, limit, iterations, SolveMethod::GoldenSection);
    }

    if let Some((left, right)) = descending_crossing(&grid, &values, target) {
        let (limit, iterations) = bisect(left, right, target, |l| derivative_at(params, l))?;
        return assemble_freeze_result(params, limit, iterations, SolveMethod::Bisection);
    }

    if values.iter().all(|&d| d < target) {
        // the root may hide inside the first cell where the derivative has
        // already risen and fallen; refine once before declaring a boundary
        let sub_grid = scan_grid(lo, grid[0]);
        let sub_values: Vec<f64> = sub_grid
            .iter()
            .map(|&l| derivative_at(params, l))
            .collect::<Result<_, _>>()?;
        if let Some((left, right)) = descending_crossing(&sub_grid, &sub_values, target) {
            let (limit, iterations) = bisect(left, right, target, |l| derivative_at(params, l))?;
            return assemble_freeze_result(params, limit, iterations, SolveMethod::Bisection);
        }
        // profit slope γ·D − ν is negative throughout: compare endpoints
        let profit_lo = freeze_profit_at(params, lo)?;
        let profit_hi = freeze_profit_at(params, hi)?;
        return if profit_lo >= profit_hi {
            assemble_freeze_result(params, lo, 0, SolveMethod::BoundaryLo)
        } else {
            assemble_freeze_result(params, hi, 0, SolveMethod::BoundaryHi)
        };
    }

    // derivative above the cost ratio everywhere: profit still rising at hi
    assemble_freeze_result(params, hi, 0, SolveMethod::BoundaryHi)
}

/// Newsvendor limit: the critical-ratio quantile of aggregate spend,
/// `ℓ* = inf{ℓ : F_A(ℓ) ≥ (γ−ν)/γ}`, solved as `decline(ℓ*) = ν/γ`.
pub fn newsvendor_limit(params: &ModelParams) -> Result<OptimizationResult, OptimizerError> {
    let target = params.cost_ratio();
    let (lo, hi) = (params.limit_lo(), params.limit_hi());

    // the decline probability at 0+ is 1 - e^{-λT}; below the cost ratio
    // the quantile collapses to zero
    if let DistributionKind::Exponential { rate } = params.arrivals().kind() {
        let attainable = -(-rate * params.horizon()).exp_m1();
        if attainable < target {
            return Err(OptimizerError::RatioUnattainable {
                attainable,
                ratio: target,
            });
        }
    }

    let left = if lo > 0.0 { lo } else { BRACKET_TOL };
    if decline_at(params, left)? < target {
        // quantile sits below the limit set's lower end
        return newsvendor_result(params, left, 0, SolveMethod::BoundaryLo);
    }
    if decline_at(params, hi)? >= target {
        return newsvendor_result(params, hi, 0, SolveMethod::BoundaryHi);
    }

    let (limit, iterations) = bisect(left, hi, target, |l| decline_at(params, l))?;
    newsvendor_result(params, limit, iterations, SolveMethod::Bisection)
}

fn newsvendor_result(
    params: &ModelParams,
    limit: f64,
    iterations: u32,
    method: SolveMethod,
) -> Result<OptimizationResult, OptimizerError> {
    let q = BalanceQuery::new(*params, limit)?;
    let decline = decline_probability(&q)?;
    Ok(OptimizationResult {
        limit_star: limit,
        profit_at_star: params.gamma_interchange() * expected_min(&q)?
            - params.nu_funding() * limit,
        decline_prob_at_star: decline,
        iterations,
        residual: (decline - params.cost_ratio()).abs(),
        method,
    })
}

/// Bracketing bounds for the retrial-policy optimum: newsvendor below,
/// freeze-policy optimum above.
pub fn retrial_bounds(params: &ModelParams) -> Result<BoundsResult, OptimizerError> {
    let lower = newsvendor_limit(params)?.limit_star;
    let upper = optimal_limit_freeze(params)?.limit_star;
    if lower > upper {
        return Err(OptimizerError::InvalidBounds { lower, upper });
    }
    Ok(BoundsResult {
        lower,
        upper,
        gap: upper - lower,
    })
}

/// Bundle of per-limit model evaluations, suitable for
/// original-vs-optimal-vs-revised comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitReport {
    pub limit: f64,
    pub expected_balance: f64,
    pub expected_profit: f64,
    pub decline_prob: f64,
}

pub fn evaluate_limit(params: &ModelParams, limit: f64) -> Result<LimitReport, OptimizerError> {
    let q = BalanceQuery::new(*params, limit)?;
    Ok(LimitReport {
        limit,
        expected_balance: expected_balance(&q)?,
        expected_profit: expected_profit(&q, PolicyKind::Freeze)?,
        decline_prob: decline_probability(&q)?,
    })
}

/// Round an optimal limit to the $500 multiple with the higher freeze
/// profit among floor and ceiling; ties go to the ceiling, which has the
/// smaller decline probability.
pub fn revised_limit(
    params: &ModelParams,
    anchor: f64,
) -> Result<(f64, LimitReport), OptimizerError> {
    const STEP: f64 = 500.0;
    let floor = (anchor / STEP).floor() * STEP;
    let ceil = (anchor / STEP).ceil() * STEP;
    if floor <= 0.0 || floor == ceil {
        let report = evaluate_limit(params, ceil)?;
        return Ok((ceil, report));
    }
    let floor_report = evaluate_limit(params, floor)?;
    let ceil_report = evaluate_limit(params, ceil)?;
    if floor_report.expected_profit > ceil_report.expected_profit {
        Ok((floor, floor_report))
    } else {
        Ok((ceil, ceil_report))
    }
}
