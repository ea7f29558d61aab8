//! Row-level bootstrap confidence intervals for arbitrary estimation
//! pipelines.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Bootstrap settings.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapConfig {
    /// Number of resamples `B`.
    pub resamples: usize,
    pub seed: u64,
    /// Two-sided confidence level, e.g. 0.95.
    pub ci_level: f64,
    /// Whether the pipeline refits its models inside each resample. The
    /// flag is consumed by the pipeline builder; `bootstrap` itself treats
    /// the pipeline as opaque.
    pub refit_models: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 200,
            seed: 0,
            ci_level: 0.95,
            refit_models: true,
        }
    }
}

/// A point estimate with a percentile confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// The interval excludes zero.
    pub significant: bool,
}

/// Result of a bootstrap run: one interval per pipeline output coordinate,
/// plus how many resamples failed (at most 20% are tolerated).
#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub estimates: Vec<IntervalEstimate>,
    pub failed_resamples: usize,
    pub resamples: usize,
}

/// Runs `pipeline` on `config.resamples` row-resamples of the table (drawn
/// with replacement, weights carried along) and returns percentile intervals
/// around the original-table point estimates.
///
/// Resample `b` draws its indices from a stream keyed by `(seed, b)`, so
/// resamples may be evaluated in any order, or in parallel, with identical
/// results. Resamples on which the pipeline errors (a rare coalition missing
/// from the draw, for instance) are skipped and counted; more than 20%
/// failures is an error.
pub fn bootstrap<F>(
    table: &ObservationTable,
    pipeline: F,
    config: &BootstrapConfig,
) -> Result<BootstrapOutcome>
where
    F: Fn(&ObservationTable) -> Result<Vec<f64>> + Sync,
{
    if config.resamples < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 resamples, got {}",
            config.resamples
        )));
    }
    if !(config.ci_level > 0.0 && config.ci_level < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "confidence level {} must lie in (0, 1)",
            config.ci_level
        )));
    }
    let points = pipeline(table)?;
    let dim = points.len();
    let n = table.len();

    let replicate_results: Vec<Result<Vec<f64>>> = (0..config.resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(config.seed, b as u64);
            let indices: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            pipeline(&table.select(&indices))
        })
        .collect();

    let mut replicates: Vec<Vec<f64>> = Vec::with_capacity(config.resamples);
    let mut failed = 0usize;
    let mut first_failure = None;
    for result in replicate_results {
        match result {
            Ok(v) if v.len() == dim => replicates.push(v),
            Ok(v) => {
                failed += 1;
                first_failure.get_or_insert_with(|| {
                    format!("pipeline returned {} values, expected {dim}", v.len())
                });
            }
            Err(e) => {
                failed += 1;
                first_failure.get_or_insert_with(|| e.to_string());
            }
        }
    }
    if failed as f64 > 0.2 * config.resamples as f64 {
        return Err(Error::PipelineFailure {
            failed,
            total: config.resamples,
            first: first_failure.unwrap_or_default(),
        });
    }

    let lower_q = (1.0 - config.ci_level) / 2.0;
    let upper_q = 1.0 - lower_q;
    let mut column = Vec::with_capacity(replicates.len());
    let estimates = points
        .iter()
        .enumerate()
        .map(|(j, &point)| {
            column.clear();
            column.extend(replicates.iter().map(|r| r[j]));
            column.sort_by(f64::total_cmp);
            let ci_low = quantile(&column, lower_q);
            let ci_high = quantile(&column, upper_q);
            IntervalEstimate {
                point,
                ci_low,
                ci_high,
                significant: ci_low > 0.0 || ci_high < 0.0,
            }
        })
        .collect();
    Ok(BootstrapOutcome {
        estimates,
        failed_resamples: failed,
        resamples: config.resamples,
    })
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}
