//! Transaction ingestion and statistical fitting.
//!
//! Reads raw card-transaction CSVs, prepares a purchase time series
//! (category filter, decline-reason exclusions, time clustering), fits an
//! exponential law to inter-purchase times and a gamma law to purchase
//! values by maximum likelihood, and reports a Kolmogorov-Smirnov
//! goodness-of-fit statistic with its asymptotic p-value.

use crate::transforms::DistributionSpec;
use serde::Serialize;
use statrs::function::gamma::digamma;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    FileNotFound {
        path: String,
        source: std::io::Error,
    },
    #[error("header row does not match the configured schema; missing columns: {missing:?}")]
    SchemaMismatch { missing: Vec<String> },
    #[error("csv structure error: {0}")]
    Malformed(#[from] csv::Error),
    #[error("no transactions left after filtering")]
    EmptySeriesAfterFilter,
    #[error("need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("purchase values must be positive, got {0}")]
    NonPositiveValue(f64),
    #[error("estimation did not converge: {0}")]
    NoConvergence(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TxStatus {
    Approved,
    Declined,
}

/// One parsed transaction row.
#[derive(Debug, Clone, PartialEq)]
pub struct TransactionRecord {
    pub account_id: String,
    /// Seconds since epoch.
    pub timestamp: f64,
    pub amount: f64,
    pub merchant_category: String,
    pub status: TxStatus,
    pub decline_reason: Option<String>,
}

/// Column names of the input CSV.
#[derive(Debug, Clone)]
pub struct SchemaConfig {
    pub account_id: String,
    pub timestamp: String,
    pub amount: String,
    pub category: String,
    pub status: String,
    pub decline_reason: String,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            account_id: "account_id".into(),
            timestamp: "ts".into(),
            amount: "amount".into(),
            category: "mcc_category".into(),
            status: "status".into(),
            decline_reason: "decline_reason".into(),
        }
    }
}

/// A row that failed to parse, reported rather than silently dropped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadOutcome {
    /// Well-formed purchase rows in timestamp order.
    pub records: Vec<TransactionRecord>,
    pub row_errors: Vec<RowError>,
    /// Rows skipped because the amount was not a positive purchase
    /// (payments, reversals, zero amounts).
    pub skipped_non_purchase: usize,
}

/// Parse a transaction CSV. Malformed rows are collected into
/// `row_errors` with their line numbers; schema problems abort.
pub fn load_transactions(
    path: impl AsRef<Path>,
    schema: &SchemaConfig,
) -> Result<LoadOutcome, IngestError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| IngestError::FileNotFound {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().flexible(false).from_reader(file);

    let headers = reader.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let wanted = [
        &schema.account_id,
        &schema.timestamp,
        &schema.amount,
        &schema.category,
        &schema.status,
        &schema.decline_reason,
    ];
    let missing: Vec<String> = wanted
        .iter()
        .filter(|n| find(n).is_none())
        .map(|n| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::SchemaMismatch { missing });
    }
    let idx_account = find(&schema.account_id).unwrap();
    let idx_ts = find(&schema.timestamp).unwrap();
    let idx_amount = find(&schema.amount).unwrap();
    let idx_category = find(&schema.category).unwrap();
    let idx_status = find(&schema.status).unwrap();
    let idx_reason = find(&schema.decline_reason).unwrap();

    let mut outcome = LoadOutcome::default();
    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or_default();
                outcome.row_errors.push(RowError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or_default();

        let timestamp = match record[idx_ts].trim().parse::<f64>() {
            Ok(t) if t.is_finite() => t,
            _ => {
                outcome.row_errors.push(RowError {
                    line,
                    message: format!("bad timestamp {:?}", &record[idx_ts]),
                });
                continue;
            }
        };
        let amount = match record[idx_amount].trim().parse::<f64>() {
            Ok(a) if a.is_finite() => a,
            _ => {
                outcome.row_errors.push(RowError {
                    line,
                    message: format!("bad amount {:?}", &record[idx_amount]),
                });
                continue;
            }
        };
        let status = match record[idx_status].trim().to_ascii_lowercase().as_str() {
            "approved" => TxStatus::Approved,
            "declined" => TxStatus::Declined,
            other => {
                outcome.row_errors.push(RowError {
                    line,
                    message: format!("unknown status {other:?}"),
                });
                continue;
            }
        };
        if amount <= 0.0 {
            outcome.skipped_non_purchase += 1;
            continue;
        }
        let reason = record[idx_reason].trim();
        outcome.records.push(TransactionRecord {
            account_id: record[idx_account].to_string(),
            timestamp,
            amount,
            merchant_category: record[idx_category].to_string(),
            status,
            decline_reason: if reason.is_empty() {
                None
            } else {
                Some(reason.to_string())
            },
        });
    }

    outcome
        .records
        .sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok(outcome)
}

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Filter to one merchant category, keep approved purchases and declines
/// whose reason is not excluded, then greedily merge transactions within
/// `cluster_window_secs` of the previous retained transaction (the window
/// chains from the last event of the growing cluster), summing values.
///
/// Returns `(time in days from the first event, value in dollars)` pairs.
pub fn prepare_series(
    records: &[TransactionRecord],
    category_filter: Option<&str>,
    exclusions: &[&str],
    cluster_window_secs: f64,
) -> Result<Vec<(f64, f64)>, IngestError> {
    let retained = records.iter().filter(|r| {
        if let Some(cat) = category_filter {
            if r.merchant_category != cat {
                return false;
            }
        }
        match r.status {
            TxStatus::Approved => true,
            TxStatus::Declined => match &r.decline_reason {
                Some(reason) => !exclusions.contains(&reason.as_str()),
                None => true,
            },
        }
    });

    // (cluster start, last member, running total)
    let mut clusters: Vec<(f64, f64, f64)> = Vec::new();
    for r in retained {
        match clusters.last_mut() {
            Some((_, last, total)) if r.timestamp - *last <= cluster_window_secs => {
                *total += r.amount;
                *last = r.timestamp;
            }
            _ => clusters.push((r.timestamp, r.timestamp, r.amount)),
        }
    }
    if clusters.is_empty() {
        return Err(IngestError::EmptySeriesAfterFilter);
    }
    let origin = clusters[0].0;
    Ok(clusters
        .into_iter()
        .map(|(start, _, total)| ((start - origin) / SECONDS_PER_DAY, total))
        .collect())
}

/// Exponential-rate estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub se: f64,
    pub n_gaps: usize,
}

/// Rate of the inter-purchase exponential law: the reciprocal of the mean
/// gap, with SE = λ̂/√n.
pub fn fit_interarrival(series: &[(f64, f64)]) -> Result<RateEstimate, IngestError> {
    if series.len() < 2 {
        return Err(IngestError::InsufficientData {
            needed: 2,
            got: series.len(),
        });
    }
    let n = series.len() - 1;
    let span = series[n].0 - series[0].0;
    if !(span > 0.0) {
        return Err(IngestError::NoConvergence(
            "all events share one timestamp; the rate diverges".into(),
        ));
    }
    let rate = n as f64 / span;
    Ok(RateEstimate {
        rate,
        se: rate / (n as f64).sqrt(),
        n_gaps: n,
    })
}

/// Gamma maximum-likelihood estimates with observed-information SEs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaEstimate {
    pub shape: f64,
    pub shape_se: f64,
    pub rate: f64,
    pub rate_se: f64,
    pub n: usize,
    pub iterations: u32,
}

/// `ψ'(x)` by recurrence into the asymptotic region.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 6.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        * (1.0
            + inv * (0.5
                + inv * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))))
}

const SHAPE_TOL: f64 = 1e-10;
const MAX_NEWTON_ITERS: u32 = 100;

/// Fit a gamma law by maximum likelihood: Newton iteration on the profile
/// equation `ln k − ψ(k) = ln(mean) − mean(ln x)`, then `rate = k/mean`.
pub fn fit_gamma_mle(values: &[f64]) -> Result<GammaEstimate, IngestError> {
    const MIN_N: usize = 10;
    if values.len() < MIN_N {
        return Err(IngestError::InsufficientData {
            needed: MIN_N,
            got: values.len(),
        });
    }
    if let Some(&bad) = values.iter().find(|&&v| !(v > 0.0)) {
        return Err(IngestError::NonPositiveValue(bad));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_log;
    if !(s > 1e-12) {
        return Err(IngestError::NoConvergence(
            "zero log-dispersion: all values are (nearly) identical and the shape diverges".into(),
        ));
    }

    // standard closed-form starting point, then Newton on ln k − ψ(k) − s
    let mut shape = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let mut iterations = 0;
    loop {
        let f = shape.ln() - digamma(shape) - s;
        let fp = 1.0 / shape - trigamma(shape);
        let mut next = shape - f / fp;
        if next <= 0.0 {
            next = shape / 2.0;
        }
        let delta = (next - shape).abs();
        shape = next;
        iterations += 1;
        if delta <= SHAPE_TOL {
            break;
        }
        if iterations >= MAX_NEWTON_ITERS {
            return Err(IngestError::NoConvergence(format!(
                "shape iteration still moving by {delta:.3e} after {iterations} steps"
            )));
        }
    }

    let rate = shape / mean;
    // inverse observed Fisher information per observation:
    // I = [[ψ'(k), -1/μ], [-1/μ, k/μ²]]
    let denom = n * (shape * trigamma(shape) - 1.0);
    let shape_se = (shape / denom).sqrt();
    let rate_se = (trigamma(shape) * rate * rate / denom).sqrt();
    Ok(GammaEstimate {
        shape,
        shape_se,
        rate,
        rate_se,
        n: values.len(),
        iterations,
    })
}

/// Survival function of the Kolmogorov distribution, `Q(x) = P(K > x)`,
/// with the theta-function form on the left tail for accuracy.
fn kolmogorov_q(x: f64) -> f64 {
    if x <= 1e-8 {
        return 1.0;
    }
    if x < 1.18 {
        let t = (-std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
        let cdf =
            (2.0 * std::f64::consts::PI).sqrt() / x * (t + t.powi(9) + t.powi(25) + t.powi(49));
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for j in 1..=8u32 {
            let term = (-2.0 * f64::from(j * j) * x * x).exp();
            sum += if j % 2 == 1 { term } else { -term };
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Two-sided Kolmogorov-Smirnov statistic of `values` against a fitted
/// distribution, with the asymptotic p-value `Q(√n·D_n)`.
pub fn ks_test(values: &[f64], fitted: &DistributionSpec) -> Result<(f64, f64), IngestError> {
    if values.is_empty() {
        return Err(IngestError::InsufficientData { needed: 1, got: 0 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = fitted.cdf(x);
        let upper = (i + 1) as f64 / n - cdf;
        let lower = cdf - i as f64 / n;
        d = d.max(upper).max(lower);
    }
    Ok((d, kolmogorov_q(n.sqrt() * d)))
}

/// Fit output with schema-stable JSON field names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitReport {
    pub lambda_hat: f64,
    pub lambda_se: f64,
    pub shape_hat: f64,
    pub shape_se: f64,
    pub rate_hat: f64,
    pub rate_se: f64,
    pub ks_d: f64,
    pub ks_p: f64,
    pub n_obs: usize,
}

/// Full fitting pipeline on a prepared series: exponential inter-arrivals,
/// gamma purchase values, KS test of the values against the fitted gamma.
pub fn fit_series(series: &[(f64, f64)]) -> Result<FitReport, IngestError> {
    let arrival = fit_interarrival(series)?;
    let values: Vec<f64> = series.iter().map(|&(_, v)| v).collect();
    let gamma = fit_gamma_mle(&values)?;
    let fitted = DistributionSpec::gamma_mark(gamma.shape, gamma.rate)
        .map_err(|e| IngestError::NoConvergence(e.to_string()))?;
    let (ks_d, ks_p) = ks_test(&values, &fitted)?;
    Ok(FitReport {
        lambda_hat: arrival.rate,
        lambda_se: arrival.se,
        shape_hat: gamma.shape,
        shape_se: gamma.shape_se,
        rate_hat: gamma.rate,
        rate_se: gamma.rate_se,
        ks_d,
        ks_p,
        n_obs: values.len(),
    })
}
