//! Synthetic multi-experiment logs with known ground truth, and a benchmark
//! runner that scores estimator/sharing combinations against that truth.
//!
//! The generator draws covariates from a standard normal, assigns each
//! experiment independently (a fair coin under `rct`, otherwise a logistic
//! curve in the covariates, which confounds assignment with the outcome),
//! and produces outcomes as a covariate ramp plus a per-coalition effect
//! plus unit normal noise.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{
    Coalition, CoalitionEstimates, ExperimentSet, ObservationTable, DEFAULT_MAX_EXACT_EXPERIMENTS,
};
use crate::error::{Error, Result};
use crate::estimators::{estimate_all, fit_outcome, Estimator};
use crate::propensity::{fit_factorized, FitConfig};
use crate::rng::{derive_seed, stream_rng};
use crate::sharing::{weighted_average_share, weighted_shapley, AttributionMethod};

// Stream ids of the per-seed ChaCha generator.
const STREAM_EFFECTS: u64 = 0;
const STREAM_COVARIATES: u64 = 1;
const STREAM_ASSIGNMENT: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_TRUTH_MC: u64 = 4;

/// Sign of the logistic assignment curve per experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// `(-1)^l`: experiments alternate between attracting opposite tails of
    /// the covariate distribution.
    Alternating,
    /// Every experiment uses the negative curve, so all share one
    /// assignment mechanism.
    ConstantNegative,
}

impl SignMode {
    fn sign(self, experiment: usize) -> f64 {
        match self {
            SignMode::Alternating => {
                if experiment.is_multiple_of(2) {
                    1.0
                } else {
                    -1.0
                }
            }
            SignMode::ConstantNegative => -1.0,
        }
    }
}

/// Configuration of the synthetic generator.
#[derive(Debug, Clone, Serialize)]
pub struct GeneratorConfig {
    pub n: usize,
    /// Covariate dimension.
    pub dim: usize,
    /// Number of parallel experiments.
    pub m_treatments: usize,
    /// Assign each experiment by a fair coin instead of the confounded
    /// logistic curve.
    pub rct: bool,
    pub seed: u64,
    pub sign_mode: SignMode,
}

impl GeneratorConfig {
    pub fn new(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            m_treatments: 3,
            rct: false,
            seed: 0,
            sign_mode: SignMode::Alternating,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(
                "generator needs n >= 1 and dim >= 1".into(),
            ));
        }
        if self.m_treatments == 0 || self.m_treatments > DEFAULT_MAX_EXACT_EXPERIMENTS {
            return Err(Error::InvalidConfig(format!(
                "m_treatments must lie in 1..={DEFAULT_MAX_EXACT_EXPERIMENTS}"
            )));
        }
        Ok(())
    }
}

/// The generator's hidden parameters: per-coalition effects, the two
/// covariate ramps, and the sample-averaged assignment distribution.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// True effect per non-empty coalition, drawn uniformly from [-1, 1].
    pub tau: BTreeMap<Coalition, f64>,
    /// Unit-norm ascending ramp driving treatment assignment.
    pub assignment_direction: Vec<f64>,
    /// Unit-norm descending ramp driving the outcome.
    pub outcome_direction: Vec<f64>,
    /// Assignment probability per coalition, averaged over the generated
    /// covariate sample.
    pub true_weights: BTreeMap<Coalition, f64>,
}

fn linspace(from: f64, to: f64, num: usize) -> Vec<f64> {
    if num == 1 {
        return vec![from];
    }
    let step = (to - from) / (num - 1) as f64;
    (0..num).map(|i| from + step * i as f64).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    v
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// The coalition whose treatment bitstring has the given rank in
/// lexicographic order (experiment 0 is the most significant bit).
fn coalition_from_lex_rank(rank: usize, m: usize) -> Coalition {
    let mut c = Coalition::EMPTY;
    for l in 0..m {
        if rank >> (m - 1 - l) & 1 == 1 {
            c = c.with(l);
        }
    }
    c
}

/// Per-experiment activation probability at one covariate row.
fn assignment_marginals(config: &GeneratorConfig, truth_dir: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let score: f64 = x.iter().zip(truth_dir).map(|(a, b)| a * b).sum();
    out.clear();
    for l in 0..config.m_treatments {
        out.push(if config.rct {
            0.5
        } else {
            sigmoid(config.sign_mode.sign(l) * score)
        });
    }
}

/// Product-form coalition probabilities from independent per-experiment
/// marginals.
fn product_probs(marginals: &[f64], out: &mut [f64]) {
    for (mask, slot) in out.iter_mut().enumerate() {
        let mut p = 1.0;
        for (l, pl) in marginals.iter().enumerate() {
            p *= if mask >> l & 1 == 1 { *pl } else { 1.0 - pl };
        }
        *slot = p;
    }
}

/// Draws a synthetic observation table and its ground truth. Deterministic
/// in the seed: effects, covariates, assignments and noise come from
/// separate ChaCha streams keyed by `config.seed`.
pub fn generate(config: &GeneratorConfig) -> Result<(ObservationTable, GroundTruth)> {
    config.validate()?;
    let m = config.m_treatments;
    let d = config.dim;
    let n = config.n;
    let coalitions = 1usize << m;

    // per-coalition effects in lexicographic bitstring order
    let mut effects_rng = stream_rng(config.seed, STREAM_EFFECTS);
    let mut tau = BTreeMap::new();
    for rank in 1..coalitions {
        let draw: f64 = effects_rng.random();
        tau.insert(coalition_from_lex_rank(rank, m), 2.0 * draw - 1.0);
    }

    let assignment_direction = normalized(linspace(-(d as f64), d as f64, d));
    let outcome_direction = normalized(linspace(d as f64, -(d as f64), d));

    let mut covariate_rng = stream_rng(config.seed, STREAM_COVARIATES);
    let mut covariates = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        covariates.push(covariate_rng.sample::<f64, _>(StandardNormal));
    }

    let mut assign_rng = stream_rng(config.seed, STREAM_ASSIGNMENT);
    let mut treatments = Vec::with_capacity(n);
    let mut weight_sums = vec![0.0; coalitions];
    let mut probs = vec![0.0; coalitions];
    let mut marginals = Vec::with_capacity(m);
    for i in 0..n {
        let x = &covariates[i * d..(i + 1) * d];
        assignment_marginals(config, &assignment_direction, x, &mut marginals);
        product_probs(&marginals, &mut probs);
        for (slot, p) in weight_sums.iter_mut().zip(&probs) {
            *slot += p;
        }
        let mut t = Coalition::EMPTY;
        for (l, &p) in marginals.iter().enumerate() {
            if assign_rng.random::<f64>() < p {
                t = t.with(l);
            }
        }
        treatments.push(t);
    }

    let mut noise_rng = stream_rng(config.seed, STREAM_NOISE);
    let mut outcomes = Vec::with_capacity(n);
    for i in 0..n {
        let x = &covariates[i * d..(i + 1) * d];
        let ramp: f64 = x.iter().zip(&outcome_direction).map(|(a, b)| a * b).sum();
        let effect = tau.get(&treatments[i]).copied().unwrap_or(0.0);
        let noise: f64 = noise_rng.sample(StandardNormal);
        outcomes.push(ramp + effect + noise);
    }

    let true_weights = weight_sums
        .iter()
        .enumerate()
        .map(|(mask, s)| (Coalition(mask as u32), s / n as f64))
        .collect();
    let table = ObservationTable::new(
        ExperimentSet::new(m)?,
        d,
        outcomes,
        None,
        treatments,
        covariates,
    )?;
    Ok((
        table,
        GroundTruth {
            tau,
            assignment_direction,
            outcome_direction,
            true_weights,
        },
    ))
}

/// The attribution an oracle would produce: true effects `tau` as the game
/// values and the true assignment distribution as the weights. Under `rct`
/// every coalition has probability `2^-m` exactly; otherwise the weights are
/// a Monte Carlo average of the product-form probabilities over
/// `mc_samples` fresh covariate draws.
pub fn true_attribution(
    truth: &GroundTruth,
    config: &GeneratorConfig,
    method: AttributionMethod,
    mc_samples: usize,
) -> Result<Vec<f64>> {
    config.validate()?;
    let m = config.m_treatments;
    let coalitions = 1usize << m;
    let weights: BTreeMap<Coalition, f64> = if config.rct {
        (0..coalitions)
            .map(|mask| (Coalition(mask as u32), (0.5f64).powi(m as i32)))
            .collect()
    } else {
        if mc_samples == 0 {
            return Err(Error::InvalidConfig(
                "mc_samples must be at least 1 for the confounded design".into(),
            ));
        }
        let mut rng = stream_rng(config.seed, STREAM_TRUTH_MC);
        let mut sums = vec![0.0; coalitions];
        let mut probs = vec![0.0; coalitions];
        let mut marginals = Vec::with_capacity(m);
        let mut x = vec![0.0; config.dim];
        for _ in 0..mc_samples {
            for slot in x.iter_mut() {
                *slot = rng.sample(StandardNormal);
            }
            assignment_marginals(config, &truth.assignment_direction, &x, &mut marginals);
            product_probs(&marginals, &mut probs);
            for (slot, p) in sums.iter_mut().zip(&probs) {
                *slot += p;
            }
        }
        sums.iter()
            .enumerate()
            .map(|(mask, s)| (Coalition(mask as u32), s / mc_samples as f64))
            .collect()
    };
    let estimates = CoalitionEstimates::new(
        ExperimentSet::new(m)?,
        0.0,
        truth.tau.clone(),
        weights,
        BTreeMap::new(),
    )?;
    let result = match method {
        AttributionMethod::WeightedShapley => {
            weighted_shapley(&estimates, DEFAULT_MAX_EXACT_EXPERIMENTS)?
        }
        AttributionMethod::WeightedAverage => weighted_average_share(&estimates)?,
        AttributionMethod::Marginal => {
            return Err(Error::InvalidConfig(
                "the ground-truth oracle supports the weighted_shapley and weighted_average methods"
                    .into(),
            ))
        }
    };
    Ok(result.per_experiment)
}

/// One benchmark observation: an estimated attribution next to its truth.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRow {
    pub replication: usize,
    pub estimator: String,
    pub method: AttributionMethod,
    pub experiment: usize,
    pub delta_hat: f64,
    pub delta_true: f64,
}

/// Accuracy summary of one estimator/method pair across replications.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkSummary {
    pub estimator: String,
    pub method: AttributionMethod,
    /// Mean signed error per experiment.
    pub bias: Vec<f64>,
    /// Root mean squared error per experiment.
    pub rmse: Vec<f64>,
    /// Fraction of replications in which this estimator had the smallest
    /// L2 attribution error among all estimators evaluated with the same
    /// method (ties count for every tied estimator).
    pub win_rate: f64,
}

/// A replication whose pipeline errored; recorded, not fatal.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkFailure {
    pub replication: usize,
    pub estimator: String,
    pub message: String,
}

/// Raw rows plus per-combination summaries.
#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub summaries: Vec<BenchmarkSummary>,
    pub failures: Vec<BenchmarkFailure>,
}

impl BenchmarkReport {
    /// Plot-ready long format, one row per (replication, estimator, method,
    /// experiment).
    pub fn write_csv<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(
            writer,
            "replication,estimator,method,experiment,delta_hat,delta_true"
        )?;
        for row in &self.rows {
            writeln!(
                writer,
                "{},{},{},{},{},{}",
                row.replication,
                row.estimator,
                method_label(row.method),
                row.experiment,
                row.delta_hat,
                row.delta_true
            )?;
        }
        Ok(())
    }
}

pub fn method_label(method: AttributionMethod) -> &'static str {
    match method {
        AttributionMethod::WeightedShapley => "weighted_shapley",
        AttributionMethod::WeightedAverage => "weighted_average",
        AttributionMethod::Marginal => "marginal",
    }
}

/// Runs the generator `replications` times (replication `r` re-seeds the
/// generator with a sub-seed derived from `(config.seed, r)`), estimates
/// attributions with every estimator/method combination, and scores them
/// against the per-replication ground-truth oracle.
pub fn run_benchmark(
    config: &GeneratorConfig,
    replications: usize,
    estimators: &[Estimator],
    methods: &[AttributionMethod],
    mc_samples: usize,
) -> Result<BenchmarkReport> {
    config.validate()?;
    if replications == 0 {
        return Err(Error::InvalidConfig("need at least one replication".into()));
    }
    if methods.contains(&AttributionMethod::Marginal) {
        return Err(Error::InvalidConfig(
            "the benchmark scores the weighted_shapley and weighted_average methods".into(),
        ));
    }

    struct Replication {
        rows: Vec<BenchmarkRow>,
        failures: Vec<BenchmarkFailure>,
    }

    let outcomes: Vec<Result<Replication>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let rep_config = GeneratorConfig {
                seed: derive_seed(config.seed, r as u64),
                ..config.clone()
            };
            let (table, truth) = generate(&rep_config)?;
            let mut truths = Vec::with_capacity(methods.len());
            for &method in methods {
                truths.push(true_attribution(&truth, &rep_config, method, mc_samples)?);
            }
            let mut rows = Vec::new();
            let mut failures = Vec::new();
            for &estimator in estimators {
                let attempt = (|| -> Result<Vec<(AttributionMethod, Vec<f64>)>> {
                    let fit = FitConfig::default();
                    let needs_p =
                        matches!(estimator, Estimator::Ips | Estimator::Snips | Estimator::Dr(_));
                    let needs_o = matches!(estimator, Estimator::Ra | Estimator::Dr(_));
                    let pmodel = if needs_p {
                        Some(fit_factorized(&table, &fit)?)
                    } else {
                        None
                    };
                    let omodel = if needs_o {
                        Some(fit_outcome(&table, &fit)?)
                    } else {
                        None
                    };
                    let estimates =
                        estimate_all(&table, estimator, pmodel.as_ref(), omodel.as_ref())?;
                    let mut out = Vec::with_capacity(methods.len());
                    for &method in methods {
                        let attribution = match method {
                            AttributionMethod::WeightedShapley => {
                                weighted_shapley(&estimates, DEFAULT_MAX_EXACT_EXPERIMENTS)?
                            }
                            AttributionMethod::WeightedAverage => {
                                weighted_average_share(&estimates)?
                            }
                            AttributionMethod::Marginal => unreachable!(),
                        };
                        out.push((method, attribution.per_experiment));
                    }
                    Ok(out)
                })();
                match attempt {
                    Ok(per_method) => {
                        for (mi, (method, deltas)) in per_method.into_iter().enumerate() {
                            for (l, &delta_hat) in deltas.iter().enumerate() {
                                rows.push(BenchmarkRow {
                                    replication: r,
                                    estimator: estimator.to_string(),
                                    method,
                                    experiment: l,
                                    delta_hat,
                                    delta_true: truths[mi][l],
                                });
                            }
                        }
                    }
                    Err(e) => failures.push(BenchmarkFailure {
                        replication: r,
                        estimator: estimator.to_string(),
                        message: e.to_string(),
                    }),
                }
            }
            Ok(Replication { rows, failures })
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        let rep = outcome?;
        rows.extend(rep.rows);
        failures.extend(rep.failures);
    }
    let summaries = summarize(&rows, estimators, methods, config.m_treatments);
    Ok(BenchmarkReport {
        rows,
        summaries,
        failures,
    })
}

fn summarize(
    rows: &[BenchmarkRow],
    estimators: &[Estimator],
    methods: &[AttributionMethod],
    m: usize,
) -> Vec<BenchmarkSummary> {
    // (estimator, method, replication) -> squared L2 error, for win rates
    let mut l2: BTreeMap<(String, &'static str, usize), f64> = BTreeMap::new();
    for row in rows {
        *l2
            .entry((row.estimator.clone(), method_label(row.method), row.replication))
            .or_insert(0.0) += (row.delta_hat - row.delta_true).powi(2);
    }
    let mut summaries = Vec::new();
    for &method in methods {
        for &estimator in estimators {
            let name = estimator.to_string();
            let mine: Vec<&BenchmarkRow> = rows
                .iter()
                .filter(|r| r.estimator == name && r.method == method)
                .collect();
            if mine.is_empty() {
                continue;
            }
            let mut bias = vec![0.0; m];
            let mut rmse = vec![0.0; m];
            let mut reps: Vec<usize> = mine.iter().map(|r| r.replication).collect();
            reps.sort_unstable();
            reps.dedup();
            for row in &mine {
                let err = row.delta_hat - row.delta_true;
                bias[row.experiment] += err;
                rmse[row.experiment] += err * err;
            }
            let count = reps.len() as f64;
            for l in 0..m {
                bias[l] /= count;
                rmse[l] = (rmse[l] / count).sqrt();
            }
            let wins = reps
                .iter()
                .filter(|&&r| {
                    let own = l2[&(name.clone(), method_label(method), r)];
                    estimators.iter().all(|other| {
                        l2.get(&(other.to_string(), method_label(method), r))
                            .is_none_or(|&v| own <= v)
                    })
                })
                .count();
            summaries.push(BenchmarkSummary {
                estimator: name,
                method,
                bias,
                rmse,
                win_rate: wins as f64 / count,
            });
        }
    }
    summaries
}
