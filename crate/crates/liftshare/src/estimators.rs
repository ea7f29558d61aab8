//! Per-coalition expected-outcome estimators, treatment effects and lift.
//!
//! Five estimators are provided: the treated-group weighted mean, inverse
//! propensity scoring (IPS), self-normalized IPS, linear regression
//! adjustment (RA), and a doubly robust combination of the last two. All of
//! them exist in a model-based form and, for the propensity-weighted ones,
//! a `*_with` form that takes the per-row treatment probabilities directly.
//!
//! Every sum is extended by the row frequency weights `w_i`; with unit
//! weights the estimators reduce to their textbook forms.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::data::{Coalition, CoalitionEstimates, ObservationTable};
use crate::error::{Error, Result};
use crate::linalg::{dot, solve_spd};
use crate::propensity::{
    coalition_weights, fit_empirical, fit_factorized, fit_joint, FitConfig, PropensityKind,
    PropensityModel,
};

/// Smallest baseline magnitude for which a lift percentage is reported.
pub const BASELINE_FLOOR: f64 = 1e-12;

/// Normalization variant of the doubly robust estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DrVariant {
    /// Divide by the treated weight.
    Paper,
    /// Divide by the total weight (standard AIPW normalization).
    Aipw,
}

/// Estimation method for per-coalition expected outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Mean,
    Ips,
    Snips,
    Ra,
    Dr(DrVariant),
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Mean => write!(f, "mean"),
            Estimator::Ips => write!(f, "ips"),
            Estimator::Snips => write!(f, "snips"),
            Estimator::Ra => write!(f, "ra"),
            Estimator::Dr(DrVariant::Paper) => write!(f, "dr(paper)"),
            Estimator::Dr(DrVariant::Aipw) => write!(f, "dr(aipw)"),
        }
    }
}

/// A single estimated expected outcome `mu_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectEstimate {
    pub coalition: Coalition,
    pub method: Estimator,
    pub mu_hat: f64,
    /// Weighted count of rows assigned to the coalition. Zero is possible
    /// only for estimators defined through an average over all rows.
    pub effective_count: f64,
}

/// Weighted mean outcome of the rows assigned exactly to `t`.
pub fn estimate_mean(table: &ObservationTable, t: Coalition) -> Result<EffectEstimate> {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..table.len() {
        if table.treatment(i) == t {
            let w = table.weight(i);
            num += w * table.outcome(i);
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::UnobservedCoalition(t.to_string()));
    }
    Ok(EffectEstimate {
        coalition: t,
        method: Estimator::Mean,
        mu_hat: num / den,
        effective_count: den,
    })
}

/// Inverse propensity estimate with explicit per-row probabilities
/// `e(t, x_i)`. With no treated rows the estimate is the empty sum, zero,
/// flagged by `effective_count == 0`.
pub fn estimate_ips_with(
    table: &ObservationTable,
    propensities: &[f64],
    t: Coalition,
) -> Result<EffectEstimate> {
    if propensities.len() != table.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} propensities for {} rows",
            propensities.len(),
            table.len()
        )));
    }
    let mut num = 0.0;
    let mut treated_weight = 0.0;
    for (i, &e) in propensities.iter().enumerate() {
        if table.treatment(i) == t {
            let w = table.weight(i);
            num += w * table.outcome(i) / e;
            treated_weight += w;
        }
    }
    Ok(EffectEstimate {
        coalition: t,
        method: Estimator::Ips,
        mu_hat: num / table.total_weight(),
        effective_count: treated_weight,
    })
}

/// Inverse propensity estimate using clipped model probabilities.
pub fn estimate_ips(
    table: &ObservationTable,
    model: &PropensityModel,
    t: Coalition,
) -> Result<EffectEstimate> {
    let propensities = model.predict_for(table, t)?;
    estimate_ips_with(table, &propensities, t)
}

/// Self-normalized inverse propensity estimate with explicit probabilities:
/// the IPS numerator divided by the mean inverse propensity of the treated.
pub fn estimate_snips_with(
    table: &ObservationTable,
    propensities: &[f64],
    t: Coalition,
) -> Result<EffectEstimate> {
    if propensities.len() != table.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} propensities for {} rows",
            propensities.len(),
            table.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut treated_weight = 0.0;
    for (i, &e) in propensities.iter().enumerate() {
        if table.treatment(i) == t {
            let w = table.weight(i);
            num += w * table.outcome(i) / e;
            den += w / e;
            treated_weight += w;
        }
    }
    if treated_weight == 0.0 {
        return Err(Error::UnobservedCoalition(t.to_string()));
    }
    Ok(EffectEstimate {
        coalition: t,
        method: Estimator::Snips,
        mu_hat: num / den,
        effective_count: treated_weight,
    })
}

/// Self-normalized inverse propensity estimate from a fitted model.
pub fn estimate_snips(
    table: &ObservationTable,
    model: &PropensityModel,
    t: Coalition,
) -> Result<EffectEstimate> {
    let propensities = model.predict_for(table, t)?;
    estimate_snips_with(table, &propensities, t)
}

/// Linear regression adjustment model: outcome explained by one dummy per
/// observed non-empty coalition plus an intercept and covariate slopes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeModel {
    /// Treatment dummy coefficient per observed non-empty coalition; the
    /// empty coalition's dummy is dropped (coefficient identically zero).
    pub alpha: BTreeMap<Coalition, f64>,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub residual_variance: f64,
}

impl OutcomeModel {
    /// Counterfactual prediction `m(t, x)`. Coalitions without a fitted
    /// dummy (the empty coalition, or coalitions absent from the fitting
    /// table) contribute zero treatment effect.
    pub fn predict(&self, t: Coalition, x: &[f64]) -> f64 {
        self.intercept + self.alpha.get(&t).copied().unwrap_or(0.0) + dot(&self.slopes, x)
    }

    pub fn covariate_dim(&self) -> usize {
        self.slopes.len()
    }
}

/// Fits the regression adjustment model by weighted least squares with an
/// L2 penalty on every coefficient except the intercept.
pub fn fit_outcome(table: &ObservationTable, config: &FitConfig) -> Result<OutcomeModel> {
    config.validate()?;
    let d = table.covariate_dim();
    let coalitions: Vec<Coalition> = table
        .coalition_counts()
        .into_keys()
        .filter(|t| !t.is_empty())
        .collect();
    let dummy_index: BTreeMap<Coalition, usize> = coalitions
        .iter()
        .enumerate()
        .map(|(j, &t)| (t, 1 + j))
        .collect();
    let k = 1 + coalitions.len() + d;

    // Normal equations X'WX b = X'Wy, exploiting that each row activates the
    // intercept, at most one dummy, and the covariate block.
    let mut xtwx = vec![0.0; k * k];
    let mut xtwy = vec![0.0; k];
    let mut row_idx = Vec::with_capacity(2 + d);
    let mut row_val = Vec::with_capacity(2 + d);
    for i in 0..table.len() {
        row_idx.clear();
        row_val.clear();
        row_idx.push(0);
        row_val.push(1.0);
        if let Some(&j) = dummy_index.get(&table.treatment(i)) {
            row_idx.push(j);
            row_val.push(1.0);
        }
        for (j, &x) in table.covariate_row(i).iter().enumerate() {
            row_idx.push(1 + coalitions.len() + j);
            row_val.push(x);
        }
        let w = table.weight(i);
        let y = table.outcome(i);
        for (a, (&ia, &va)) in row_idx.iter().zip(&row_val).enumerate() {
            xtwy[ia] += w * va * y;
            for (&ib, &vb) in row_idx.iter().zip(&row_val).skip(a) {
                xtwx[ia * k + ib] += w * va * vb;
            }
        }
    }
    // mirror the upper triangle
    for a in 0..k {
        for b in (a + 1)..k {
            xtwx[b * k + a] = xtwx[a * k + b];
        }
    }
    // ridge on everything but the intercept
    for j in 1..k {
        xtwx[j * k + j] += config.l2_penalty;
    }
    let beta = solve_spd(&xtwx, &xtwy, k).ok_or(Error::RankDeficient)?;

    let alpha: BTreeMap<Coalition, f64> = coalitions
        .iter()
        .map(|&t| (t, beta[dummy_index[&t]]))
        .collect();
    let intercept = beta[0];
    let slopes = beta[1 + coalitions.len()..].to_vec();
    let model = OutcomeModel {
        alpha,
        intercept,
        slopes,
        residual_variance: 0.0,
    };
    let mut sse = 0.0;
    for i in 0..table.len() {
        let resid = table.outcome(i) - model.predict(table.treatment(i), table.covariate_row(i));
        sse += table.weight(i) * resid * resid;
    }
    Ok(OutcomeModel {
        residual_variance: sse / table.total_weight(),
        ..model
    })
}

/// Regression adjustment estimate: the weighted average of the
/// counterfactual prediction `m(t, x_i)` over all rows.
pub fn estimate_ra(
    model: &OutcomeModel,
    table: &ObservationTable,
    t: Coalition,
) -> Result<EffectEstimate> {
    if model.covariate_dim() != table.covariate_dim() {
        return Err(Error::DimensionMismatch(format!(
            "outcome model has {} slopes, table has {} covariates",
            model.covariate_dim(),
            table.covariate_dim()
        )));
    }
    let mut num = 0.0;
    for i in 0..table.len() {
        num += table.weight(i) * model.predict(t, table.covariate_row(i));
    }
    let total = table.total_weight();
    Ok(EffectEstimate {
        coalition: t,
        method: Estimator::Ra,
        mu_hat: num / total,
        effective_count: total,
    })
}

/// Doubly robust estimate with explicit per-row probabilities.
pub fn estimate_dr_with(
    table: &ObservationTable,
    propensities: &[f64],
    model: &OutcomeModel,
    t: Coalition,
    variant: DrVariant,
) -> Result<EffectEstimate> {
    if propensities.len() != table.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} propensities for {} rows",
            propensities.len(),
            table.len()
        )));
    }
    if model.covariate_dim() != table.covariate_dim() {
        return Err(Error::DimensionMismatch(format!(
            "outcome model has {} slopes, table has {} covariates",
            model.covariate_dim(),
            table.covariate_dim()
        )));
    }
    let mut num = 0.0;
    let mut treated_weight = 0.0;
    for (i, &e) in propensities.iter().enumerate() {
        let w = table.weight(i);
        let m = model.predict(t, table.covariate_row(i));
        let mut term = m;
        if table.treatment(i) == t {
            term += (table.outcome(i) - m) / e;
            treated_weight += w;
        }
        num += w * term;
    }
    let den = match variant {
        DrVariant::Paper => {
            if treated_weight == 0.0 {
                return Err(Error::UnobservedCoalition(t.to_string()));
            }
            treated_weight
        }
        DrVariant::Aipw => table.total_weight(),
    };
    Ok(EffectEstimate {
        coalition: t,
        method: Estimator::Dr(variant),
        mu_hat: num / den,
        effective_count: treated_weight,
    })
}

/// Doubly robust estimate combining a fitted propensity model with the
/// regression adjustment model.
pub fn estimate_dr(
    table: &ObservationTable,
    pmodel: &PropensityModel,
    omodel: &OutcomeModel,
    t: Coalition,
    variant: DrVariant,
) -> Result<EffectEstimate> {
    let propensities = pmodel.predict_for(table, t)?;
    estimate_dr_with(table, &propensities, omodel, t, variant)
}

/// Average treatment effect `mu_T - mu_S` between two estimates of the same
/// method.
pub fn ate(mu_t: &EffectEstimate, mu_s: &EffectEstimate) -> Result<f64> {
    if mu_t.method != mu_s.method {
        return Err(Error::MethodMismatch(
            mu_t.method.to_string(),
            mu_s.method.to_string(),
        ));
    }
    Ok(mu_t.mu_hat - mu_s.mu_hat)
}

/// Lift over the baseline in percent: `ate / mu_0 * 100`.
pub fn lift(ate: f64, mu_0: f64) -> Result<f64> {
    if mu_0.abs() < BASELINE_FLOOR {
        return Err(Error::BaselineNearZero(mu_0));
    }
    Ok(ate / mu_0 * 100.0)
}

fn estimate_one(
    table: &ObservationTable,
    estimator: Estimator,
    pmodel: Option<&PropensityModel>,
    omodel: Option<&OutcomeModel>,
    t: Coalition,
) -> Result<EffectEstimate> {
    let need_p = || {
        pmodel.ok_or(Error::ModelRequired {
            estimator: "ips/snips/dr",
            model: "propensity",
        })
    };
    let need_o = || {
        omodel.ok_or(Error::ModelRequired {
            estimator: "ra/dr",
            model: "outcome",
        })
    };
    match estimator {
        Estimator::Mean => estimate_mean(table, t),
        Estimator::Ips => estimate_ips(table, need_p()?, t),
        Estimator::Snips => estimate_snips(table, need_p()?, t),
        Estimator::Ra => estimate_ra(need_o()?, table, t),
        Estimator::Dr(variant) => estimate_dr(table, need_p()?, need_o()?, t, variant),
    }
}

/// Estimates `mu_T` for the baseline and every observed coalition, together
/// with exposure weights and counts. Weights come from the propensity model
/// when one is supplied and from the weighted coalition frequencies
/// otherwise.
pub fn estimate_all(
    table: &ObservationTable,
    estimator: Estimator,
    pmodel: Option<&PropensityModel>,
    omodel: Option<&OutcomeModel>,
) -> Result<CoalitionEstimates> {
    let weights = match pmodel {
        Some(m) => coalition_weights(m, table)?,
        None => table.coalition_frequencies(),
    };
    let counts = table.coalition_counts();
    let baseline = estimate_one(table, estimator, pmodel, omodel, Coalition::EMPTY)?.mu_hat;
    let mut values = BTreeMap::new();
    for &t in counts.keys() {
        if t.is_empty() {
            continue;
        }
        let est = estimate_one(table, estimator, pmodel, omodel, t)?;
        values.insert(t, est.mu_hat);
    }
    CoalitionEstimates::new(
        table.experiments().clone(),
        baseline,
        values,
        weights,
        counts,
    )
}

/// Fills in `mu_S` for unobserved sub-coalitions of every positively
/// weighted coalition, using the regression adjustment prediction average
/// (the unidentified treatment dummy of an unobserved coalition is zero).
/// Returns the imputed coalitions.
pub fn impute_missing(
    estimates: &mut CoalitionEstimates,
    omodel: &OutcomeModel,
    table: &ObservationTable,
) -> Result<Vec<Coalition>> {
    let targets: Vec<Coalition> = estimates
        .weights
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(&t, _)| t)
        .collect();
    let mut imputed = Vec::new();
    for t in targets {
        for s in t.subsets() {
            if s.is_empty() || estimates.values.contains_key(&s) {
                continue;
            }
            let est = estimate_ra(omodel, table, s)?;
            estimates.values.insert(s, est.mu_hat);
            imputed.push(s);
        }
    }
    imputed.sort_unstable();
    imputed.dedup();
    Ok(imputed)
}

/// A per-experiment binary treatment effect, ignoring the other running
/// experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginalEffect {
    /// `mu_{l active} - mu_{l inactive}` on the collapsed table.
    pub ate: f64,
    /// ATE relative to the collapsed control mean, in percent.
    pub lift_percent: f64,
}

/// Estimates the marginal effect of experiment `l` by collapsing the table
/// to a binary treatment and refitting the requested models on the
/// collapsed table.
pub fn marginal_effect(
    table: &ObservationTable,
    l: usize,
    estimator: Estimator,
    propensity_kind: PropensityKind,
    config: &FitConfig,
) -> Result<MarginalEffect> {
    let collapsed = table.marginal_collapse(l)?;
    for arm in [Coalition::singleton(0), Coalition::EMPTY] {
        if !collapsed.treatments().contains(&arm) {
            return Err(Error::UnobservedCoalition(arm.to_string()));
        }
    }
    let needs_propensity = matches!(
        estimator,
        Estimator::Ips | Estimator::Snips | Estimator::Dr(_)
    );
    let needs_outcome = matches!(estimator, Estimator::Ra | Estimator::Dr(_));
    let pmodel = if needs_propensity {
        Some(match propensity_kind {
            PropensityKind::Joint => fit_joint(&collapsed, config)?,
            PropensityKind::Factorized => fit_factorized(&collapsed, config)?,
            PropensityKind::Empirical => fit_empirical(&collapsed),
        })
    } else {
        None
    };
    let omodel = if needs_outcome {
        Some(fit_outcome(&collapsed, config)?)
    } else {
        None
    };
    let active = estimate_one(
        &collapsed,
        estimator,
        pmodel.as_ref(),
        omodel.as_ref(),
        Coalition::singleton(0),
    )?;
    let control = estimate_one(
        &collapsed,
        estimator,
        pmodel.as_ref(),
        omodel.as_ref(),
        Coalition::EMPTY,
    )?;
    let effect = ate(&active, &control)?;
    Ok(MarginalEffect {
        ate: effect,
        lift_percent: lift(effect, control.mu_hat)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_table;

    fn table(csv: &str, l: usize, d: usize) -> ObservationTable {
        parse_table(csv.as_bytes(), l, d).unwrap()
    }

    const T0: Coalition = Coalition(1);

    #[test]
    fn mean_examples() {
        let t = table("y,t_0\n1,1\n2,1\n3,0\n4,0\n", 1, 0);
        assert_eq!(estimate_mean(&t, T0).unwrap().mu_hat, 1.5);

        let t = table("y,w,t_0\n1,1,1\n2,3,1\n", 1, 0);
        assert_eq!(estimate_mean(&t, T0).unwrap().mu_hat, 1.75);

        let t = table("y,t_0\n1,0\n2,0\n", 1, 0);
        assert!(matches!(
            estimate_mean(&t, T0),
            Err(Error::UnobservedCoalition(_))
        ));
    }

    #[test]
    fn ips_hand_example() {
        // n=4, Y=[1,2,0,0], D=[1,1,0,0], e=0.5 -> (1/4)(2+4) = 1.5
        let t = table("y,t_0\n1,1\n2,1\n0,0\n0,0\n", 1, 0);
        let e = vec![0.5; 4];
        let est = estimate_ips_with(&t, &e, T0).unwrap();
        assert!((est.mu_hat - 1.5).abs() < 1e-15);
        assert_eq!(est.effective_count, 2.0);
    }

    #[test]
    fn ips_with_empirical_model_matches_mean() {
        let t = table("y,w,t_0,t_1\n1,1,1,0\n2,2,1,0\n5,1,0,1\n3,1,0,0\n4,2,1,1\n", 2, 0);
        let model = fit_empirical(&t);
        for &c in &[Coalition(1), Coalition(2), Coalition(3), Coalition::EMPTY] {
            let ips = estimate_ips(&t, &model, c).unwrap();
            let mean = estimate_mean(&t, c).unwrap();
            assert!(
                (ips.mu_hat - mean.mu_hat).abs() <= 1e-12 * mean.mu_hat.abs().max(1.0),
                "{c}: {} vs {}",
                ips.mu_hat,
                mean.mu_hat
            );
        }
    }

    #[test]
    fn ips_empty_coalition_sum_is_zero() {
        let t = table("y,t_0\n1,0\n2,0\n", 1, 0);
        let est = estimate_ips_with(&t, &[0.5, 0.5], T0).unwrap();
        assert_eq!(est.mu_hat, 0.0);
        assert_eq!(est.effective_count, 0.0);
    }

    #[test]
    fn snips_hand_example_and_collapse() {
        // Y=[2,4], e=[0.5,0.25] -> (4+16)/(2+4) = 10/3
        let t = table("y,t_0\n2,1\n4,1\n", 1, 0);
        let est = estimate_snips_with(&t, &[0.5, 0.25], T0).unwrap();
        assert!((est.mu_hat - 10.0 / 3.0).abs() < 1e-15);

        // single treated row: ratio collapses to its outcome
        let t = table("y,t_0\n7,1\n1,0\n", 1, 0);
        for e in [0.9, 0.2, 0.004] {
            let est = estimate_snips_with(&t, &[e, e], T0).unwrap();
            assert_eq!(est.mu_hat, 7.0);
        }
    }

    #[test]
    fn snips_is_invariant_to_constant_propensity_scaling() {
        let t = table("y,t_0\n2,1\n4,1\n1,0\n3,1\n", 1, 0);
        let base = vec![0.8, 0.3, 0.5, 0.6];
        let reference = estimate_snips_with(&t, &base, T0).unwrap().mu_hat;
        for c in [1.0, 0.7, 0.25, 1e-3] {
            let scaled: Vec<f64> = base.iter().map(|e| e * c).collect();
            let est = estimate_snips_with(&t, &scaled, T0).unwrap().mu_hat;
            assert!((est - reference).abs() <= 1e-12 * reference.abs().max(1.0));
        }
    }

    #[test]
    fn outcome_fit_reproduces_group_means_without_covariates() {
        let t = table("y,w,t_0,t_1\n1,1,1,0\n2,2,1,0\n5,1,0,1\n3,1,0,0\n4,2,1,1\n6,1,0,0\n", 2, 0);
        let config = FitConfig {
            l2_penalty: 0.0,
            ..FitConfig::default()
        };
        let model = fit_outcome(&t, &config).unwrap();
        for &c in &[Coalition(1), Coalition(2), Coalition(3)] {
            let mean = estimate_mean(&t, c).unwrap().mu_hat;
            let fitted = model.intercept + model.alpha[&c];
            assert!((fitted - mean).abs() < 1e-10, "{c}: {fitted} vs {mean}");
            let ra = estimate_ra(&model, &t, c).unwrap().mu_hat;
            assert!((ra - mean).abs() < 1e-10);
        }
        let base = estimate_mean(&t, Coalition::EMPTY).unwrap().mu_hat;
        assert!((model.intercept - base).abs() < 1e-10);
    }

    #[test]
    fn outcome_fit_finds_no_effect_in_noiseless_linear_data() {
        let mut rows = String::from("y,t_0,x_0\n");
        for i in 0..200 {
            let x = (i as f64 - 100.0) / 25.0;
            let y = 0.5 + 2.0 * x;
            let t = i % 2;
            rows.push_str(&format!("{y},{t},{x}\n"));
        }
        let t = table(&rows, 1, 1);
        let model = fit_outcome(&t, &FitConfig::default()).unwrap();
        assert!(model.alpha[&T0].abs() < 1e-8, "alpha = {}", model.alpha[&T0]);
        assert!((model.slopes[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn duplicate_columns_without_penalty_are_rank_deficient() {
        let t = table("y,t_0,x_0,x_1\n1,1,0.5,0.5\n2,0,0.1,0.1\n3,1,0.7,0.7\n", 1, 2);
        let config = FitConfig {
            l2_penalty: 0.0,
            ..FitConfig::default()
        };
        assert!(matches!(fit_outcome(&t, &config), Err(Error::RankDeficient)));
    }

    #[test]
    fn ra_with_null_model_is_zero() {
        let t = table("y,t_0,x_0\n1,1,0.5\n2,0,0.1\n", 1, 1);
        let model = OutcomeModel {
            alpha: BTreeMap::new(),
            intercept: 0.0,
            slopes: vec![0.0],
            residual_variance: 0.0,
        };
        for c in [Coalition::EMPTY, T0] {
            assert_eq!(estimate_ra(&model, &t, c).unwrap().mu_hat, 0.0);
        }
    }

    #[test]
    fn dr_aipw_matches_ra_under_zero_residuals() {
        let t = table("y,t_0,x_0\n1,1,0.5\n2,0,0.1\n3,1,0.7\n0,0,-0.3\n", 1, 1);
        let model = fit_outcome(&t, &FitConfig::default()).unwrap();
        // replace outcomes by the model's own predictions: residuals vanish
        let predicted: Vec<f64> = (0..t.len())
            .map(|i| model.predict(t.treatment(i), t.covariate_row(i)))
            .collect();
        let exact = ObservationTable::new(
            t.experiments().clone(),
            1,
            predicted,
            Some(t.weights().to_vec()),
            t.treatments().to_vec(),
            (0..t.len()).flat_map(|i| t.covariate_row(i).to_vec()).collect(),
        )
        .unwrap();
        let e = vec![0.5; 4];
        let dr = estimate_dr_with(&exact, &e, &model, T0, DrVariant::Aipw).unwrap();
        let ra = estimate_ra(&model, &exact, T0).unwrap();
        assert!((dr.mu_hat - ra.mu_hat).abs() <= 1e-12 * ra.mu_hat.abs().max(1.0));
    }

    #[test]
    fn dr_aipw_matches_ips_under_zero_outcome_model() {
        let t = table("y,t_0,x_0\n1,1,0.5\n2,0,0.1\n3,1,0.7\n0,0,-0.3\n", 1, 1);
        let zero = OutcomeModel {
            alpha: BTreeMap::new(),
            intercept: 0.0,
            slopes: vec![0.0],
            residual_variance: 0.0,
        };
        let e = vec![0.6, 0.4, 0.3, 0.9];
        let dr = estimate_dr_with(&t, &e, &zero, T0, DrVariant::Aipw).unwrap();
        let ips = estimate_ips_with(&t, &e, T0).unwrap();
        assert!((dr.mu_hat - ips.mu_hat).abs() <= 1e-12 * ips.mu_hat.abs().max(1.0));
    }

    #[test]
    fn dr_paper_variant_hand_value() {
        // m == 1 everywhere, e == 0.5, treated Y = [2, 4], n = 4:
        // (4*1 + (2-1)/0.5 + (4-1)/0.5) / 2 = (4 + 2 + 6) / 2 = 6
        let t = table("y,t_0,x_0\n2,1,0.0\n4,1,0.0\n9,0,0.0\n7,0,0.0\n", 1, 1);
        let constant = OutcomeModel {
            alpha: BTreeMap::new(),
            intercept: 1.0,
            slopes: vec![0.0],
            residual_variance: 0.0,
        };
        let model = fit_empirical(&t);
        let dr = estimate_dr(&t, &model, &constant, T0, DrVariant::Paper).unwrap();
        assert!((dr.mu_hat - 6.0).abs() < 1e-12);
    }

    #[test]
    fn ate_and_lift_guards() {
        let a = estimate_mean(&table("y,t_0\n1,1\n3,1\n", 1, 0), T0).unwrap();
        let b = estimate_mean(&table("y,t_0\n1,0\n1,0\n", 1, 0), Coalition::EMPTY).unwrap();
        assert_eq!(ate(&a, &a).unwrap(), 0.0);
        assert_eq!(ate(&a, &b).unwrap(), 1.0);
        let ips = estimate_ips_with(&table("y,t_0\n1,1\n", 1, 0), &[0.5], T0).unwrap();
        assert!(matches!(ate(&a, &ips), Err(Error::MethodMismatch(..))));

        assert_eq!(lift(0.5, 1.0).unwrap(), 50.0);
        assert_eq!(lift(0.0, 2.0).unwrap(), 0.0);
        assert!(matches!(lift(0.5, 0.0), Err(Error::BaselineNearZero(_))));
    }

    #[test]
    fn estimate_all_collects_observed_coalitions() {
        let t = table("y,t_0,t_1\n1,0,0\n2,1,0\n3,1,1\n4,0,0\n", 2, 0);
        let est = estimate_all(&t, Estimator::Mean, None, None).unwrap();
        assert_eq!(est.baseline, 2.5);
        assert_eq!(est.values.len(), 2);
        assert_eq!(est.values[&Coalition(1)], 2.0);
        assert_eq!(est.values[&Coalition(3)], 3.0);
        assert_eq!(est.counts[&Coalition::EMPTY], 2);
        assert_eq!(est.game_value(Coalition(1)), Some(-0.5));
        assert_eq!(est.game_value(Coalition(2)), None);
    }

    #[test]
    fn estimate_all_on_a_baseline_only_table() {
        let t = table("y,t_0,t_1\n1,0,0\n3,0,0\n", 2, 0);
        let est = estimate_all(&t, Estimator::Mean, None, None).unwrap();
        assert_eq!(est.baseline, 2.0);
        assert!(est.values.is_empty());
        assert_eq!(est.weight(Coalition::EMPTY), 1.0);
    }

    #[test]
    fn fit_rejects_invalid_config() {
        let t = table("y,t_0,x_0\n1,1,0.5\n2,0,0.1\n", 1, 1);
        let bad = FitConfig {
            l2_penalty: -1.0,
            ..FitConfig::default()
        };
        assert!(matches!(fit_outcome(&t, &bad), Err(Error::InvalidConfig(_))));
        assert!(matches!(
            crate::propensity::fit_joint(&t, &bad),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn estimate_all_is_invariant_to_doubling_all_weights() {
        let t = table("y,w,t_0\n1,1,1\n2,2,1\n5,1,0\n3,1,0\n", 1, 0);
        let doubled = table("y,w,t_0\n1,2,1\n2,4,1\n5,2,0\n3,2,0\n", 1, 0);
        let a = estimate_all(&t, Estimator::Mean, None, None).unwrap();
        let b = estimate_all(&doubled, Estimator::Mean, None, None).unwrap();
        assert_eq!(a.baseline, b.baseline);
        assert_eq!(a.values, b.values);
        assert_eq!(a.weights, b.weights);
    }

    #[test]
    fn estimators_are_invariant_to_row_permutation() {
        let t = table("y,w,t_0,x_0\n1,1,1,0.4\n2,2,1,-0.2\n5,1,0,0.9\n3,1,0,0.0\n", 1, 1);
        let permuted = table("y,w,t_0,x_0\n3,1,0,0.0\n1,1,1,0.4\n5,1,0,0.9\n2,2,1,-0.2\n", 1, 1);
        let tol = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
        assert!(tol(
            estimate_mean(&t, T0).unwrap().mu_hat,
            estimate_mean(&permuted, T0).unwrap().mu_hat
        ));
        let ma = fit_outcome(&t, &FitConfig::default()).unwrap();
        let mb = fit_outcome(&permuted, &FitConfig::default()).unwrap();
        assert!(tol(
            estimate_ra(&ma, &t, T0).unwrap().mu_hat,
            estimate_ra(&mb, &permuted, T0).unwrap().mu_hat
        ));
    }

    #[test]
    fn marginal_effect_reduces_to_multivariate_for_one_experiment() {
        let t = table("y,t_0\n1,1\n3,1\n2,0\n4,0\n", 1, 0);
        let m = marginal_effect(
            &t,
            0,
            Estimator::Mean,
            PropensityKind::Empirical,
            &FitConfig::default(),
        )
        .unwrap();
        assert_eq!(m.ate, -1.0);
        assert!((m.lift_percent - (-1.0 / 3.0 * 100.0)).abs() < 1e-12);
    }

    #[test]
    fn marginal_effect_requires_an_active_arm() {
        let t = table("y,t_0,t_1\n1,0,1\n3,0,0\n", 2, 0);
        assert!(matches!(
            marginal_effect(
                &t,
                0,
                Estimator::Mean,
                PropensityKind::Empirical,
                &FitConfig::default()
            ),
            Err(Error::UnobservedCoalition(_))
        ));
    }

    #[test]
    fn impute_fills_missing_subsets_with_ra_predictions() {
        // {0,1} and {} observed; {0} and {1} unobserved.
        let t = table("y,t_0,t_1,x_0\n1,1,1,0.5\n2,0,0,0.3\n3,1,1,-0.2\n2,0,0,0.6\n", 2, 1);
        let omodel = fit_outcome(&t, &FitConfig::default()).unwrap();
        let mut est = estimate_all(&t, Estimator::Mean, None, None).unwrap();
        assert!(est.game_value(Coalition(1)).is_none());
        let imputed = impute_missing(&mut est, &omodel, &t).unwrap();
        assert_eq!(imputed, vec![Coalition(1), Coalition(2)]);
        // unidentified dummies are zero: the imputed value is the RA baseline
        let ra_base = estimate_ra(&omodel, &t, Coalition(1)).unwrap().mu_hat;
        assert_eq!(est.values[&Coalition(1)], ra_base);
    }
}
