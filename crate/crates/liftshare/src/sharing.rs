//! Cost-sharing rules that attribute the exposure-weighted total effect to
//! individual experiments: exact and permutation-sampled Shapley values,
//! exposure-weighted Shapley sharing, weighted average (equal-split)
//! sharing, and a conditional variant at a fixed covariate value.

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Coalition, CoalitionEstimates};
use crate::error::{Error, Result};
use crate::estimators::OutcomeModel;
use crate::propensity::PropensityModel;
use crate::rng::stream_rng;

/// Exhaustive permutation enumeration is capped at this many players
/// (10! orderings).
const MAX_EXHAUSTIVE_PLAYERS: usize = 10;

/// A cooperative game over the members of a grand coalition: every subset
/// maps to the cost incurred when exactly those experiments are active.
#[derive(Debug, Clone, PartialEq)]
pub struct Game {
    grand: Coalition,
    values: BTreeMap<Coalition, f64>,
}

impl Game {
    /// Builds a game; the empty coalition's value is pinned to exactly zero
    /// and all keys must be subsets of the grand coalition.
    pub fn new(grand: Coalition, mut values: BTreeMap<Coalition, f64>) -> Result<Self> {
        if let Some(&v) = values.get(&Coalition::EMPTY) {
            if v != 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "the empty coalition must have value 0, got {v}"
                )));
            }
        }
        values.insert(Coalition::EMPTY, 0.0);
        if let Some(bad) = values.keys().find(|s| !s.is_subset_of(grand)) {
            return Err(Error::InvalidConfig(format!(
                "coalition {bad} is not a subset of the grand coalition {grand}"
            )));
        }
        Ok(Self { grand, values })
    }

    pub fn grand(&self) -> Coalition {
        self.grand
    }

    pub fn player_count(&self) -> usize {
        self.grand.size()
    }

    pub fn value(&self, s: Coalition) -> Result<f64> {
        self.values
            .get(&s)
            .copied()
            .ok_or_else(|| Error::MissingSubsetValue(s.to_string()))
    }
}

/// Exact Shapley values, one per member of the grand coalition.
///
/// Each player's value is the factorially weighted sum of marginal
/// contributions over all subsets of the other players. The per-player terms
/// are summed in a canonical sorted order, so relabeling players permutes
/// the output bitwise.
pub fn shapley_exact(game: &Game, max_players: usize) -> Result<BTreeMap<usize, f64>> {
    let players: Vec<usize> = game.grand().members().collect();
    let g = players.len();
    if g > max_players {
        return Err(Error::TooManyExperiments {
            count: g,
            limit: max_players,
        });
    }
    let mut factorial = vec![1.0; g + 1];
    for i in 1..=g {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut out = BTreeMap::new();
    let mut terms = Vec::with_capacity(1 << g.saturating_sub(1));
    for &player in &players {
        let rest = game.grand().without(player);
        terms.clear();
        for s in rest.subsets() {
            let weight = factorial[s.size()] * factorial[g - s.size() - 1] / factorial[g];
            let marginal = game.value(s.with(player))? - game.value(s)?;
            terms.push(weight * marginal);
        }
        terms.sort_by(f64::total_cmp);
        out.insert(player, terms.iter().sum());
    }
    Ok(out)
}

/// How `shapley_sampled` draws player orderings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PermutationSampling {
    /// Enumerate all `|G|!` orderings; no sampling error.
    Exhaustive,
    /// Average over `permutations` orderings drawn from a per-permutation
    /// seed stream, so results do not depend on evaluation order.
    Random { permutations: usize, seed: u64 },
}

/// Permutation-form Shapley estimate against a value oracle. The oracle
/// returns `None` for coalitions it cannot price, which surfaces as
/// [`Error::OracleUndefined`].
pub fn shapley_sampled<F>(
    oracle: F,
    grand: Coalition,
    sampling: PermutationSampling,
) -> Result<BTreeMap<usize, f64>>
where
    F: Fn(Coalition) -> Option<f64>,
{
    let players: Vec<usize> = grand.members().collect();
    let g = players.len();
    if g == 0 {
        return Ok(BTreeMap::new());
    }
    let value = |s: Coalition| oracle(s).ok_or_else(|| Error::OracleUndefined(s.to_string()));

    match sampling {
        PermutationSampling::Exhaustive => {
            if g > MAX_EXHAUSTIVE_PLAYERS {
                return Err(Error::TooManyExperiments {
                    count: g,
                    limit: MAX_EXHAUSTIVE_PLAYERS,
                });
            }
            let mut terms: BTreeMap<usize, Vec<f64>> =
                players.iter().map(|&p| (p, Vec::new())).collect();
            let mut count = 0usize;
            for perm in players.iter().permutations(g) {
                count += 1;
                let mut prefix = Coalition::EMPTY;
                let mut previous = value(prefix)?;
                for &&player in &perm {
                    prefix = prefix.with(player);
                    let current = value(prefix)?;
                    terms.get_mut(&player).unwrap().push(current - previous);
                    previous = current;
                }
            }
            Ok(terms
                .into_iter()
                .map(|(player, mut t)| {
                    t.sort_by(f64::total_cmp);
                    (player, t.iter().sum::<f64>() / count as f64)
                })
                .collect())
        }
        PermutationSampling::Random { permutations, seed } => {
            if permutations == 0 {
                return Err(Error::InvalidConfig(
                    "permutation count must be at least 1".into(),
                ));
            }
            let mut sums: BTreeMap<usize, f64> = players.iter().map(|&p| (p, 0.0)).collect();
            let mut order = players.clone();
            for k in 0..permutations {
                let mut rng = stream_rng(seed, k as u64);
                order.copy_from_slice(&players);
                order.shuffle(&mut rng);
                let mut prefix = Coalition::EMPTY;
                let mut previous = value(prefix)?;
                for &player in &order {
                    prefix = prefix.with(player);
                    let current = value(prefix)?;
                    *sums.get_mut(&player).unwrap() += current - previous;
                    previous = current;
                }
            }
            Ok(sums
                .into_iter()
                .map(|(player, s)| (player, s / permutations as f64))
                .collect())
        }
    }
}

/// How an attribution vector was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    WeightedShapley,
    WeightedAverage,
    Marginal,
}

/// Attributed cost per experiment, in outcome units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttributionResult {
    pub method: AttributionMethod,
    /// One entry per experiment index.
    pub per_experiment: Vec<f64>,
    /// The decomposed quantity `sum_T P(T) v(T)`.
    pub total: f64,
    /// `|sum_l delta_l - total|`; absent for marginal effects, which do not
    /// decompose the total.
    pub budget_gap: Option<f64>,
}

/// The game restricted to the subsets of `t`, valued by `v(S) = mu_S - mu_0`.
pub fn restricted_game(estimates: &CoalitionEstimates, t: Coalition) -> Result<Game> {
    let mut values = BTreeMap::new();
    for s in t.subsets() {
        let v = estimates
            .game_value(s)
            .ok_or_else(|| Error::MissingSubsetValue(s.to_string()))?;
        values.insert(s, v);
    }
    Game::new(t, values)
}

/// Exposure-weighted Shapley sharing: each coalition contributes its
/// restricted-game Shapley values, weighted by its exposure probability.
/// Experiments outside a coalition receive nothing from it (null player
/// property), and the attributed costs sum to `sum_T P(T) v(T)`.
pub fn weighted_shapley(
    estimates: &CoalitionEstimates,
    max_exact: usize,
) -> Result<AttributionResult> {
    let mut per_experiment = vec![0.0; estimates.experiments.count()];
    let mut total = 0.0;
    for (&t, &p) in &estimates.weights {
        if t.is_empty() || p == 0.0 {
            continue;
        }
        let game = restricted_game(estimates, t)?;
        let phi = shapley_exact(&game, max_exact)?;
        for (player, value) in phi {
            per_experiment[player] += p * value;
        }
        total += p * game.value(t)?;
    }
    let attributed: f64 = per_experiment.iter().sum();
    Ok(AttributionResult {
        method: AttributionMethod::WeightedShapley,
        per_experiment,
        total,
        budget_gap: Some((attributed - total).abs()),
    })
}

/// Weighted average cost sharing: each coalition's cost is split equally
/// among its active experiments, weighted by exposure probability.
pub fn weighted_average_share(estimates: &CoalitionEstimates) -> Result<AttributionResult> {
    let mut per_experiment = vec![0.0; estimates.experiments.count()];
    let mut total = 0.0;
    for (&t, &p) in &estimates.weights {
        if t.is_empty() || p == 0.0 {
            continue;
        }
        let v = estimates
            .game_value(t)
            .ok_or_else(|| Error::UnobservedCoalition(t.to_string()))?;
        let share = p * v / t.size() as f64;
        for member in t.members() {
            per_experiment[member] += share;
        }
        total += p * v;
    }
    let attributed: f64 = per_experiment.iter().sum();
    Ok(AttributionResult {
        method: AttributionMethod::WeightedAverage,
        per_experiment,
        total,
        budget_gap: Some((attributed - total).abs()),
    })
}

/// Conditional cost sharing at a covariate value: the per-coalition means
/// are replaced by the outcome model's counterfactual predictions
/// `m(T, x)`, and the exposure weights by the propensities `e(T, x)`.
pub fn conditional_attribution(
    x: &[f64],
    omodel: &OutcomeModel,
    pmodel: &PropensityModel,
    method: AttributionMethod,
    max_exact: usize,
) -> Result<AttributionResult> {
    if omodel.covariate_dim() != pmodel.covariate_dim() {
        return Err(Error::DimensionMismatch(format!(
            "outcome model has {} slopes, propensity model expects {} covariates",
            omodel.covariate_dim(),
            pmodel.covariate_dim()
        )));
    }
    let experiments = pmodel.experiments().clone();
    if experiments.count() > max_exact {
        return Err(Error::TooManyExperiments {
            count: experiments.count(),
            limit: max_exact,
        });
    }
    let probs = pmodel.predict(x)?;
    let baseline = omodel.predict(Coalition::EMPTY, x);
    let mut values = BTreeMap::new();
    let mut weights = BTreeMap::new();
    for (mask, &p) in probs.iter().enumerate() {
        let t = Coalition(mask as u32);
        weights.insert(t, p);
        if !t.is_empty() {
            values.insert(t, omodel.predict(t, x));
        }
    }
    let estimates = CoalitionEstimates::new(experiments, baseline, values, weights, BTreeMap::new())?;
    match method {
        AttributionMethod::WeightedShapley => weighted_shapley(&estimates, max_exact),
        AttributionMethod::WeightedAverage => weighted_average_share(&estimates),
        AttributionMethod::Marginal => Err(Error::InvalidConfig(
            "conditional attribution supports the weighted_shapley and weighted_average methods"
                .into(),
        )),
    }
}
