//! Joint impact measurement and fair lift attribution for parallel online
//! experiments.
//!
//! When several experiments run at once, every user sees some subset (a
//! *coalition*) of them, and the population-level engagement metric moves by
//! an amount no single experiment's dashboard explains. This crate estimates
//! the expected outcome of every treatment combination — by group means,
//! inverse propensity weighting, regression adjustment or a doubly robust
//! combination — and then splits the total effect over the no-experiment
//! baseline across the individual experiments with cost-sharing rules from
//! cooperative game theory. Exposure-weighted Shapley sharing is exactly
//! budget balanced and ignores null players; equal-split average sharing is
//! provided for comparison. Uncertainty comes from a row-level bootstrap,
//! and a synthetic generator with known ground truth backs the benchmark
//! suite.

pub mod bootstrap;
pub mod data;
pub mod error;
pub mod estimators;
pub mod propensity;
pub mod sharing;
pub mod synth;

mod linalg;
mod rng;

pub use bootstrap::{bootstrap, BootstrapConfig, BootstrapOutcome, IntervalEstimate};
pub use data::{
    indicator, parse_header, parse_table, power_set, write_csv, Coalition, CoalitionEstimates,
    CsvSchema, ExperimentSet, ObservationTable, DEFAULT_MAX_EXACT_EXPERIMENTS,
};
pub use error::{Error, Result};
pub use estimators::{
    ate, estimate_all, estimate_dr, estimate_ips, estimate_mean, estimate_ra, estimate_snips,
    fit_outcome, impute_missing, lift, marginal_effect, DrVariant, EffectEstimate, Estimator,
    MarginalEffect, OutcomeModel,
};
pub use propensity::{
    coalition_weights, fit_empirical, fit_factorized, fit_joint, FitConfig, PropensityKind,
    PropensityModel, PropensitySummary,
};
pub use sharing::{
    conditional_attribution, restricted_game, shapley_exact, shapley_sampled, weighted_average_share,
    weighted_shapley, AttributionMethod, AttributionResult, Game, PermutationSampling,
};
pub use synth::{
    generate, run_benchmark, true_attribution, BenchmarkReport, BenchmarkRow, BenchmarkSummary,
    GeneratorConfig, GroundTruth, SignMode,
};
