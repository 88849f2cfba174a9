//! Monte-Carlo simulation of the marked point process and the three
//! balance-control policies.
//!
//! The simulator is the independent oracle for every transform-inverted
//! quantity, and the only estimator for the retrial policy, which has no
//! closed form. Randomness comes from ChaCha8 keyed by a 64-bit seed with
//! one counter-derived substream per replication, so results are
//! reproducible bit-for-bit across platforms and thread counts, and common
//! random numbers across policies and grid points come for free.

use crate::model::PolicyKind;
use crate::transforms::{DistributionKind, DistributionSpec, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("replication count must be at least 1")]
    InvalidReplications,
    #[error("limit must be positive, got {0}")]
    InvalidLimit(f64),
    #[error("distribution not supported by the sampler: {0}")]
    UnsupportedDistribution(String),
    #[error("grid of candidate limits is empty")]
    EmptyGrid,
}

/// Monte-Carlo estimate of a policy's end-of-period balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimReport {
    pub policy: PolicyKind,
    pub limit: f64,
    pub mean_balance: f64,
    pub std_err: f64,
    pub decline_frequency: f64,
    pub mean_undershoot_given_exceed: f64,
    pub replications: u64,
    pub seed: u64,
}

#[derive(Clone, Copy)]
enum Sampler {
    Exponential(rand_distr::Exp<f64>),
    Gamma(rand_distr::Gamma<f64>),
    Constant(f64),
}

impl Sampler {
    fn from_spec(spec: DistributionSpec) -> Result<Self, SimError> {
        match spec.kind() {
            DistributionKind::Exponential { rate } => rand_distr::Exp::new(rate)
                .map(Sampler::Exponential)
                .map_err(|e| SimError::UnsupportedDistribution(e.to_string())),
            DistributionKind::Gamma { shape, rate } => rand_distr::Gamma::new(shape, 1.0 / rate)
                .map(Sampler::Gamma)
                .map_err(|e| SimError::UnsupportedDistribution(e.to_string())),
            DistributionKind::Deterministic { value } => Ok(Sampler::Constant(value)),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Exponential(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::Constant(v) => *v,
        }
    }
}

/// End-of-period outcome of one replication under all three policies.
#[derive(Debug, Clone, Copy, Default)]
struct PathOutcome {
    aggregate: f64,
    freeze: f64,
    retrial: f64,
}

impl PathOutcome {
    fn balance(&self, policy: PolicyKind, limit: f64) -> f64 {
        match policy {
            PolicyKind::Freeze => self.freeze,
            PolicyKind::Retrial => self.retrial,
            PolicyKind::NewsvendorTruncation => self.aggregate.min(limit),
        }
    }
}

/// Generate one path of attempted purchases on (0, T] and apply the
/// acceptance rules of all three policies simultaneously (the attempt
/// stream itself is policy-independent).
fn simulate_path(
    arrivals: &Sampler,
    marks: &Sampler,
    horizon: f64,
    limit: f64,
    rng: &mut ChaCha8Rng,
) -> PathOutcome {
    let mut out = PathOutcome::default();
    let mut frozen = false;
    let mut clock = arrivals.sample(rng);
    while clock <= horizon {
        let mark = marks.sample(rng);
        out.aggregate += mark;
        if !frozen {
            if out.freeze + mark <= limit {
                out.freeze += mark;
            } else {
                frozen = true;
            }
        }
        if out.retrial + mark <= limit {
            out.retrial += mark;
        }
        clock += arrivals.sample(rng);
    }
    out
}

#[derive(Debug, Default, Clone, Copy)]
struct Accumulator {
    sum: f64,
    sum_sq: f64,
    exceed: u64,
    undershoot: f64,
}

impl Accumulator {
    fn add(&mut self, balance: f64, exceeded: bool, limit: f64) {
        self.sum += balance;
        self.sum_sq += balance * balance;
        if exceeded {
            self.exceed += 1;
            self.undershoot += limit - balance;
        }
    }

    fn merge(mut self, other: Accumulator) -> Accumulator {
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.exceed += other.exceed;
        self.undershoot += other.undershoot;
        self
    }
}

const CHUNK: u64 = 4096;

fn rng_for_replication(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

/// Run `replications` paths and fold them with `f`, in parallel over fixed
/// chunks merged in index order so the result is independent of scheduling.
fn accumulate<F>(
    params: &ModelParams,
    limit: f64,
    replications: u64,
    seed: u64,
    f: F,
) -> Result<Accumulator, SimError>
where
    F: Fn(&PathOutcome, &mut Accumulator) + Sync,
{
    if replications == 0 {
        return Err(SimError::InvalidReplications);
    }
    let arrivals = Sampler::from_spec(params.arrivals())?;
    let marks = Sampler::from_spec(params.mark())?;
    let horizon = params.horizon();

    let n_chunks = replications.div_ceil(CHUNK);
    let partials: Vec<Accumulator> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(replications);
            let mut acc = Accumulator::default();
            for rep in start..end {
                let mut rng = rng_for_replication(seed, rep);
                let out = simulate_path(&arrivals, &marks, horizon, limit, &mut rng);
                f(&out, &mut acc);
            }
            acc
        })
        .collect();

    Ok(partials.into_iter().fold(Accumulator::default(), Accumulator::merge))
}

/// Simulate the end-of-period balance under `policy`.
///
/// Deterministic given `(params, limit, policy, replications, seed)`.
pub fn simulate_policy(
    params: &ModelParams,
    limit: f64,
    policy: PolicyKind,
    replications: u64,
    seed: u64,
) -> Result<SimReport, SimError> {
    if !(limit > 0.0) {
        return Err(SimError::InvalidLimit(limit));
    }
    let acc = accumulate(params, limit, replications, seed, |out, acc| {
        acc.add(out.balance(policy, limit), out.aggregate > limit, limit)
    })?;

    let n = replications as f64;
    let mean = acc.sum / n;
    let variance = if replications > 1 {
        ((acc.sum_sq - acc.sum * acc.sum / n) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(SimReport {
        policy,
        limit,
        mean_balance: mean,
        std_err: (variance / n).sqrt(),
        decline_frequency: acc.exceed as f64 / n,
        mean_undershoot_given_exceed: if acc.exceed > 0 {
            acc.undershoot / acc.exceed as f64
        } else {
            0.0
        },
        replications,
        seed,
    })
}

/// Empirical frequency of `{A(T) > limit}`. A zero limit is allowed and
/// estimates the probability of any purchase at all.
pub fn simulate_aggregate_tail(
    params: &ModelParams,
    limit: f64,
    replications: u64,
    seed: u64,
) -> Result<f64, SimError> {
    if !(limit >= 0.0) {
        return Err(SimError::InvalidLimit(limit));
    }
    let acc = accumulate(params, limit, replications, seed, |out, acc| {
        acc.add(0.0, out.aggregate > limit, limit)
    })?;
    Ok(acc.exceed as f64 / replications as f64)
}

/// Count replications violating the pathwise policy ordering
/// `freeze ≤ retrial ≤ min(A(T), ℓ)` under common random numbers.
/// The comparison is exact: the ordering holds in floating point, not just
/// in expectation.
pub fn count_policy_ordering_violations(
    params: &ModelParams,
    limit: f64,
    replications: u64,
    seed: u64,
) -> Result<u64, SimError> {
    if !(limit > 0.0) {
        return Err(SimError::InvalidLimit(limit));
    }
    let acc = accumulate(params, limit, replications, seed, |out, acc| {
        let truncated = out.aggregate.min(limit);
        let ordered = out.freeze <= out.retrial && out.retrial <= truncated;
        // reuse the exceed counter as the violation counter
        acc.add(0.0, !ordered, limit);
    })?;
    Ok(acc.exceed)
}

/// Grid-search estimate of the retrial-policy optimal limit
/// `argmax γ·E[B̄_ℓ(T)] − νℓ`, with common random numbers across grid
/// points. Ties resolve to the first maximizer encountered.
pub fn estimate_retrial_optimum(
    params: &ModelParams,
    grid: &[f64],
    replications: u64,
    seed: u64,
) -> Result<f64, SimError> {
    if grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    let mut best_limit = f64::NAN;
    let mut best_profit = f64::NEG_INFINITY;
    for &limit in grid {
        let report = simulate_policy(params, limit, PolicyKind::Retrial, replications, seed)?;
        let profit =
            params.gamma_interchange() * report.mean_balance - params.nu_funding() * limit;
        if profit > best_profit {
            best_profit = profit;
            best_limit = limit;
        }
    }
    Ok(best_limit)
}
