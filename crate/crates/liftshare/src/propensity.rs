//! Treatment-assignment models: the probability `e(T, x)` of receiving each
//! treatment combination given covariates, and the derived coalition
//! exposure weights `P(T)`.
//!
//! Three model kinds are supported:
//! - `joint`: one multinomial logistic regression over all `2^L` coalitions,
//!   with the empty coalition as the reference class;
//! - `factorized`: `L` independent binary logistic regressions, one per
//!   experiment, combined by the product rule;
//! - `empirical`: covariate-free weighted class frequencies.
//!
//! Fitting uses deterministic full-batch gradient ascent with a backtracking
//! line search from a zero start, so repeated fits on the same table are
//! bit-identical.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::{Coalition, ExperimentSet, ObservationTable};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Default lower clip bound for model-based treatment probabilities.
pub const DEFAULT_CLIP_EPSILON: f64 = 1e-3;

/// Options for the logistic fitters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// L2 penalty on slope coefficients (intercepts are not penalized).
    pub l2_penalty: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the gradient norm of the mean
    /// log-likelihood.
    pub gradient_tolerance: f64,
    /// Standardize covariates internally before fitting.
    pub standardize: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            l2_penalty: 1e-6,
            max_iterations: 1000,
            gradient_tolerance: 1e-8,
            standardize: true,
        }
    }
}

impl FitConfig {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "l2 penalty {} must be finite and non-negative",
                self.l2_penalty
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if self.gradient_tolerance <= 0.0 || self.gradient_tolerance.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "gradient tolerance {} must be positive",
                self.gradient_tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityKind {
    Joint,
    Factorized,
    Empirical,
}

/// Per-covariate location/scale applied before the linear predictor.
#[derive(Debug, Clone)]
struct Standardization {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardization {
    fn identity(dim: usize) -> Self {
        Self {
            means: vec![0.0; dim],
            scales: vec![1.0; dim],
        }
    }

    fn fit(table: &ObservationTable) -> Self {
        let d = table.covariate_dim();
        let n = table.len() as f64;
        let mut means = vec![0.0; d];
        for i in 0..table.len() {
            for (m, x) in means.iter_mut().zip(table.covariate_row(i)) {
                *m += x;
            }
        }
        for m in means.iter_mut() {
            *m /= n;
        }
        let mut scales = vec![0.0; d];
        for i in 0..table.len() {
            for (j, x) in table.covariate_row(i).iter().enumerate() {
                scales[j] += (x - means[j]).powi(2);
            }
        }
        for s in scales.iter_mut() {
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0; // constant column: leave it centered only
            }
        }
        Self { means, scales }
    }

    /// Design row `[1, (x - mean) / scale ...]`.
    fn design_row(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        for ((x, m), s) in x.iter().zip(&self.means).zip(&self.scales) {
            out.push((x - m) / s);
        }
    }
}

/// Convergence record of one logistic fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Penalized mean log-likelihood at the start of each iteration;
    /// non-decreasing by the line-search contract.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug)]
enum Params {
    /// Coefficients for classes `1..2^L` (reference class 0 is fixed at
    /// zero), each a `[intercept, slopes..]` row.
    Joint {
        coef: Vec<f64>,
        diagnostics: FitDiagnostics,
    },
    /// One `[intercept, slopes..]` row per experiment.
    Factorized {
        coef: Vec<f64>,
        diagnostics: Vec<FitDiagnostics>,
    },
    /// Weighted class frequency per coalition mask.
    Empirical { probs: Vec<f64> },
}

/// A fitted treatment-assignment model. Immutable after fitting; safe to
/// share across threads for concurrent prediction.
#[derive(Debug)]
pub struct PropensityModel {
    experiments: ExperimentSet,
    covariate_dim: usize,
    standardization: Standardization,
    params: Params,
    clip_epsilon: f64,
    clip_count: AtomicU64,
}

impl PropensityModel {
    pub fn kind(&self) -> PropensityKind {
        match self.params {
            Params::Joint { .. } => PropensityKind::Joint,
            Params::Factorized { .. } => PropensityKind::Factorized,
            Params::Empirical { .. } => PropensityKind::Empirical,
        }
    }

    pub fn experiments(&self) -> &ExperimentSet {
        &self.experiments
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    pub fn clip_epsilon(&self) -> f64 {
        self.clip_epsilon
    }

    /// Number of predictions in which at least one coalition probability was
    /// raised to the clip bound.
    pub fn clip_count(&self) -> u64 {
        self.clip_count.load(Ordering::Relaxed)
    }

    /// Overrides the clip bound; must lie in (0, 0.5).
    pub fn with_clip_epsilon(mut self, clip_epsilon: f64) -> Result<Self> {
        if !(clip_epsilon > 0.0 && clip_epsilon < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "clip epsilon {clip_epsilon} must lie in (0, 0.5)"
            )));
        }
        self.clip_epsilon = clip_epsilon;
        Ok(self)
    }

    pub fn converged(&self) -> bool {
        match &self.params {
            Params::Joint { diagnostics, .. } => diagnostics.converged,
            Params::Factorized { diagnostics, .. } => diagnostics.iter().all(|d| d.converged),
            Params::Empirical { .. } => true,
        }
    }

    pub fn diagnostics(&self) -> Vec<&FitDiagnostics> {
        match &self.params {
            Params::Joint { diagnostics, .. } => vec![diagnostics],
            Params::Factorized { diagnostics, .. } => diagnostics.iter().collect(),
            Params::Empirical { .. } => Vec::new(),
        }
    }

    /// Probability vector over all `2^L` coalitions (ascending mask order)
    /// at covariate value `x`. Model-based probabilities below the clip
    /// bound are raised to it and the vector renormalized.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.covariate_dim {
            return Err(Error::DimensionMismatch(format!(
                "covariate vector has length {}, model expects {}",
                x.len(),
                self.covariate_dim
            )));
        }
        let mut probs = vec![0.0; self.experiments.coalition_count()];
        let mut design = Vec::with_capacity(self.covariate_dim + 1);
        self.raw_probs(x, &mut design, &mut probs);
        if self.clip(&mut probs) {
            self.clip_count.fetch_add(1, Ordering::Relaxed);
        }
        Ok(probs)
    }

    /// Per-row probability of coalition `t` across the whole table:
    /// `e(t, x_i)` for each row `i`.
    pub fn predict_for(&self, table: &ObservationTable, t: Coalition) -> Result<Vec<f64>> {
        if table.covariate_dim() != self.covariate_dim {
            return Err(Error::DimensionMismatch(format!(
                "table has {} covariates, model expects {}",
                table.covariate_dim(),
                self.covariate_dim
            )));
        }
        let idx = t.mask() as usize;
        if idx >= self.experiments.coalition_count() {
            return Err(Error::DimensionMismatch(format!(
                "coalition {t} out of range for {} experiments",
                self.experiments.count()
            )));
        }
        if let Params::Empirical { probs } = &self.params {
            return Ok(vec![probs[idx]; table.len()]);
        }
        let mut out = Vec::with_capacity(table.len());
        let mut probs = vec![0.0; self.experiments.coalition_count()];
        let mut design = Vec::with_capacity(self.covariate_dim + 1);
        let mut clipped = 0u64;
        for i in 0..table.len() {
            self.raw_probs(table.covariate_row(i), &mut design, &mut probs);
            if self.clip(&mut probs) {
                clipped += 1;
            }
            out.push(probs[idx]);
        }
        if clipped > 0 {
            self.clip_count.fetch_add(clipped, Ordering::Relaxed);
        }
        Ok(out)
    }

    fn raw_probs(&self, x: &[f64], design: &mut Vec<f64>, probs: &mut [f64]) {
        match &self.params {
            Params::Empirical { probs: stored } => probs.copy_from_slice(stored),
            Params::Joint { coef, .. } => {
                self.standardization.design_row(x, design);
                let p = design.len();
                let k = probs.len();
                // logits with the reference class fixed at zero
                probs[0] = 0.0;
                let mut max_logit = 0.0f64;
                for c in 1..k {
                    let logit = dot(&coef[(c - 1) * p..c * p], design);
                    probs[c] = logit;
                    max_logit = max_logit.max(logit);
                }
                let mut sum = 0.0;
                for v in probs.iter_mut() {
                    *v = (*v - max_logit).exp();
                    sum += *v;
                }
                for v in probs.iter_mut() {
                    *v /= sum;
                }
            }
            Params::Factorized { coef, .. } => {
                self.standardization.design_row(x, design);
                let p = design.len();
                let l = self.experiments.count();
                let mut marginals = Vec::with_capacity(l);
                for e in 0..l {
                    let logit = dot(&coef[e * p..(e + 1) * p], design);
                    marginals.push(sigmoid(logit));
                }
                for (mask, v) in probs.iter_mut().enumerate() {
                    let mut prob = 1.0;
                    for (e, pe) in marginals.iter().enumerate() {
                        prob *= if mask >> e & 1 == 1 { *pe } else { 1.0 - pe };
                    }
                    *v = prob;
                }
            }
        }
    }

    /// Raises model-based entries below the clip bound and renormalizes.
    /// Empirical frequencies are exact by construction and pass through
    /// unchanged. Returns whether anything was clipped.
    fn clip(&self, probs: &mut [f64]) -> bool {
        if matches!(self.params, Params::Empirical { .. }) {
            return false;
        }
        let mut clipped = false;
        let mut sum = 0.0;
        for v in probs.iter_mut() {
            if *v < self.clip_epsilon {
                *v = self.clip_epsilon;
                clipped = true;
            }
            sum += *v;
        }
        if clipped {
            for v in probs.iter_mut() {
                *v /= sum;
            }
        }
        clipped
    }

    /// Serializable snapshot for reports. Coefficients are reported on the
    /// original covariate scale.
    pub fn summary(&self) -> PropensitySummary {
        let l = self.experiments.count();
        let unstandardize = |row: &[f64]| -> (f64, Vec<f64>) {
            let mut intercept = row[0];
            let mut slopes = Vec::with_capacity(row.len() - 1);
            for (j, &theta) in row[1..].iter().enumerate() {
                let s = self.standardization.scales[j];
                let m = self.standardization.means[j];
                intercept -= theta * m / s;
                slopes.push(theta / s);
            }
            (intercept, slopes)
        };
        let (coefficients, class_probabilities) = match &self.params {
            Params::Joint { coef, .. } => {
                let p = self.covariate_dim + 1;
                let groups = (1..self.experiments.coalition_count())
                    .map(|c| {
                        let (intercept, slopes) = unstandardize(&coef[(c - 1) * p..c * p]);
                        CoefficientGroup {
                            label: Coalition(c as u32).bitstring(l),
                            intercept,
                            slopes,
                        }
                    })
                    .collect();
                (groups, None)
            }
            Params::Factorized { coef, .. } => {
                let p = self.covariate_dim + 1;
                let groups = (0..l)
                    .map(|e| {
                        let (intercept, slopes) = unstandardize(&coef[e * p..(e + 1) * p]);
                        CoefficientGroup {
                            label: self.experiments.label(e).to_string(),
                            intercept,
                            slopes,
                        }
                    })
                    .collect();
                (groups, None)
            }
            Params::Empirical { probs } => {
                let entries = probs
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(mask, &p)| ClassProbability {
                        coalition: Coalition(mask as u32).bitstring(l),
                        probability: p,
                    })
                    .collect();
                (Vec::new(), Some(entries))
            }
        };
        PropensitySummary {
            kind: self.kind(),
            converged: self.converged(),
            iterations: self
                .diagnostics()
                .iter()
                .map(|d| d.iterations)
                .max()
                .unwrap_or(0),
            clip_epsilon: self.clip_epsilon,
            clip_count: self.clip_count(),
            coefficients,
            class_probabilities,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientGroup {
    pub label: String,
    pub intercept: f64,
    pub slopes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassProbability {
    pub coalition: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensitySummary {
    pub kind: PropensityKind,
    pub converged: bool,
    pub iterations: usize,
    pub clip_epsilon: f64,
    pub clip_count: u64,
    pub coefficients: Vec<CoefficientGroup>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_probabilities: Option<Vec<ClassProbability>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fits a joint multinomial logistic regression over all `2^L` coalitions,
/// reference class: the empty coalition.
pub fn fit_joint(table: &ObservationTable, config: &FitConfig) -> Result<PropensityModel> {
    config.validate()?;
    if table.covariate_dim() == 0 {
        return Err(Error::NoCovariates);
    }
    let counts = table.coalition_counts();
    if counts.len() < 2 {
        let only = counts.keys().next().copied().unwrap_or(Coalition::EMPTY);
        return Err(Error::SingleClassOnly(format!(
            "every row received coalition {only}"
        )));
    }
    let standardization = if config.standardize {
        Standardization::fit(table)
    } else {
        Standardization::identity(table.covariate_dim())
    };
    let (design, p) = build_design(table, &standardization);
    let classes: Vec<usize> = table.treatments().iter().map(|t| t.mask() as usize).collect();
    let k = table.experiments().coalition_count();
    let (coef, diagnostics) = fit_multinomial(&design, table.len(), p, &classes, k, table.weights(), config);
    Ok(PropensityModel {
        experiments: table.experiments().clone(),
        covariate_dim: table.covariate_dim(),
        standardization,
        params: Params::Joint { coef, diagnostics },
        clip_epsilon: DEFAULT_CLIP_EPSILON,
        clip_count: AtomicU64::new(0),
    })
}

/// Fits one binary logistic regression per experiment; the coalition
/// probability is the product of the per-experiment marginals.
pub fn fit_factorized(table: &ObservationTable, config: &FitConfig) -> Result<PropensityModel> {
    config.validate()?;
    if table.covariate_dim() == 0 {
        return Err(Error::NoCovariates);
    }
    let standardization = if config.standardize {
        Standardization::fit(table)
    } else {
        Standardization::identity(table.covariate_dim())
    };
    let (design, p) = build_design(table, &standardization);
    let l = table.experiment_count();
    let mut coef = Vec::with_capacity(l * p);
    let mut diagnostics = Vec::with_capacity(l);
    for e in 0..l {
        let classes: Vec<usize> = table
            .treatments()
            .iter()
            .map(|t| usize::from(t.contains(e)))
            .collect();
        let active: usize = classes.iter().sum();
        if active == 0 || active == classes.len() {
            return Err(Error::SingleClassOnly(format!(
                "experiment {e} ({}) is {} in every row",
                table.experiments().label(e),
                if active == 0 { "inactive" } else { "active" }
            )));
        }
        let (c, d) = fit_multinomial(&design, table.len(), p, &classes, 2, table.weights(), config);
        coef.extend_from_slice(&c);
        diagnostics.push(d);
    }
    Ok(PropensityModel {
        experiments: table.experiments().clone(),
        covariate_dim: table.covariate_dim(),
        standardization,
        params: Params::Factorized { coef, diagnostics },
        clip_epsilon: DEFAULT_CLIP_EPSILON,
        clip_count: AtomicU64::new(0),
    })
}

/// Covariate-free model: `e(T, x)` is the weighted fraction of rows
/// assigned to `T`, for every `x`.
pub fn fit_empirical(table: &ObservationTable) -> PropensityModel {
    let mut probs = vec![0.0; table.experiments().coalition_count()];
    for (t, share) in table.coalition_frequencies() {
        probs[t.mask() as usize] = share;
    }
    PropensityModel {
        experiments: table.experiments().clone(),
        covariate_dim: table.covariate_dim(),
        standardization: Standardization::identity(table.covariate_dim()),
        params: Params::Empirical { probs },
        clip_epsilon: DEFAULT_CLIP_EPSILON,
        clip_count: AtomicU64::new(0),
    }
}

/// Exposure weight per coalition: `P(T) = sum_i w_i e(T, x_i) / sum_i w_i`.
/// For the empirical model this collapses to the weighted coalition
/// frequencies, exactly.
pub fn coalition_weights(
    model: &PropensityModel,
    table: &ObservationTable,
) -> Result<BTreeMap<Coalition, f64>> {
    if table.covariate_dim() != model.covariate_dim {
        return Err(Error::DimensionMismatch(format!(
            "table has {} covariates, model expects {}",
            table.covariate_dim(),
            model.covariate_dim
        )));
    }
    if let Params::Empirical { .. } = model.params {
        return Ok(table.coalition_frequencies());
    }
    let k = model.experiments.coalition_count();
    let mut sums = vec![0.0; k];
    let mut probs = vec![0.0; k];
    let mut design = Vec::with_capacity(model.covariate_dim + 1);
    let mut clipped = 0u64;
    for i in 0..table.len() {
        model.raw_probs(table.covariate_row(i), &mut design, &mut probs);
        if model.clip(&mut probs) {
            clipped += 1;
        }
        let w = table.weight(i);
        for (s, p) in sums.iter_mut().zip(&probs) {
            *s += w * p;
        }
    }
    if clipped > 0 {
        model.clip_count.fetch_add(clipped, Ordering::Relaxed);
    }
    let total = table.total_weight();
    Ok(sums
        .iter()
        .enumerate()
        .map(|(mask, s)| (Coalition(mask as u32), s / total))
        .collect())
}

fn build_design(table: &ObservationTable, std: &Standardization) -> (Vec<f64>, usize) {
    let p = table.covariate_dim() + 1;
    let mut design = Vec::with_capacity(table.len() * p);
    let mut row = Vec::with_capacity(p);
    for i in 0..table.len() {
        std.design_row(table.covariate_row(i), &mut row);
        design.extend_from_slice(&row);
    }
    (design, p)
}

/// Maximizes the L2-penalized mean log-likelihood of a multinomial logistic
/// model with `k` classes (class 0 is the zero-coefficient reference) by
/// full-batch gradient ascent with a backtracking Armijo line search from a
/// zero start. The trial step uses the Barzilai-Borwein spectral length,
/// which keeps the iteration count manageable without giving up determinism
/// or the monotone-objective contract.
fn fit_multinomial(
    design: &[f64],
    n: usize,
    p: usize,
    classes: &[usize],
    k: usize,
    weights: &[f64],
    config: &FitConfig,
) -> (Vec<f64>, FitDiagnostics) {
    let dim = (k - 1) * p;
    let total_weight: f64 = weights.iter().sum();
    let mut theta = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None; // (theta, grad) of last iterate

    let eval = |theta: &[f64], grad: Option<&mut [f64]>| -> f64 {
        let mut objective = 0.0;
        let mut grad = grad;
        if let Some(g) = &mut grad {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut logits = vec![0.0; k];
        for i in 0..n {
            let z = &design[i * p..(i + 1) * p];
            let w = weights[i];
            logits[0] = 0.0;
            let mut max_logit = 0.0f64;
            for c in 1..k {
                let logit = dot(&theta[(c - 1) * p..c * p], z);
                logits[c] = logit;
                max_logit = max_logit.max(logit);
            }
            let mut sum_exp = 0.0;
            for logit in &logits {
                sum_exp += (logit - max_logit).exp();
            }
            let lse = max_logit + sum_exp.ln();
            objective += w * (logits[classes[i]] - lse);
            if let Some(g) = &mut grad {
                for c in 1..k {
                    let prob = (logits[c] - lse).exp();
                    let observed = if classes[i] == c { 1.0 } else { 0.0 };
                    let resid = w * (observed - prob);
                    let g_row = &mut g[(c - 1) * p..c * p];
                    for (gv, zv) in g_row.iter_mut().zip(z) {
                        *gv += resid * zv;
                    }
                }
            }
        }
        // slope-only ridge penalty
        for c in 0..k - 1 {
            for j in 1..p {
                let t = theta[c * p + j];
                objective -= 0.5 * config.l2_penalty * t * t;
                if let Some(g) = &mut grad {
                    g[c * p + j] -= config.l2_penalty * t;
                }
            }
        }
        if let Some(g) = &mut grad {
            g.iter_mut().for_each(|v| *v /= total_weight);
        }
        objective / total_weight
    };

    let mut objective = eval(&theta, Some(&mut grad));
    for iter in 0..config.max_iterations {
        iterations = iter;
        trace.push(objective);
        let grad_norm_sq: f64 = grad.iter().map(|g| g * g).sum();
        if grad_norm_sq.sqrt() <= config.gradient_tolerance {
            converged = true;
            break;
        }
        // Spectral (Barzilai-Borwein) trial step, safeguarded by Armijo
        // backtracking so the objective never decreases.
        let mut step = match &prev {
            Some((theta_prev, grad_prev)) => {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for i in 0..dim {
                    let s = theta[i] - theta_prev[i];
                    let y = grad[i] - grad_prev[i];
                    ss += s * s;
                    sy += s * y;
                }
                if sy < 0.0 {
                    (-ss / sy).clamp(1e-10, 1e10)
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let mut accepted = false;
        while step >= 1e-18 {
            let candidate: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .map(|(t, g)| t + step * g)
                .collect();
            let value = eval(&candidate, None);
            if value >= objective + 1e-4 * step * grad_norm_sq {
                prev = Some((std::mem::replace(&mut theta, candidate), grad.clone()));
                objective = eval(&theta, Some(&mut grad));
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // step underflow: no further ascent possible
        }
    }
    trace.push(objective);
    (
        theta,
        FitDiagnostics {
            converged,
            iterations,
            objective_trace: trace,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_table;

    fn table(csv: &str, l: usize, d: usize) -> ObservationTable {
        parse_table(csv.as_bytes(), l, d).unwrap()
    }

    #[test]
    fn empirical_frequencies() {
        let mut rows = String::from("y,t_0\n");
        for _ in 0..50 {
            rows.push_str("1,1\n");
        }
        for _ in 0..50 {
            rows.push_str("0,0\n");
        }
        let t = table(&rows, 1, 0);
        let m = fit_empirical(&t);
        let p = m.predict(&[]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn empirical_degenerate_point_mass() {
        let t = table("y,t_0\n1,0\n", 1, 0);
        let m = fit_empirical(&t);
        assert_eq!(m.predict(&[]).unwrap(), vec![1.0, 0.0]);
        let w = coalition_weights(&m, &t).unwrap();
        assert_eq!(w.get(&Coalition::EMPTY), Some(&1.0));
        assert_eq!(w.get(&Coalition(1)), None);
    }

    #[test]
    fn empirical_respects_frequency_weights() {
        let t = table("y,w,t_0\n1,2,1\n0,1,0\n0,1,0\n", 1, 0);
        let m = fit_empirical(&t);
        let p = m.predict(&[]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn empirical_weights_match_frequencies_exactly() {
        let t = table("y,w,t_0,t_1\n1,1.3,1,0\n2,0.7,0,1\n3,2.0,1,1\n", 2, 0);
        let m = fit_empirical(&t);
        assert_eq!(coalition_weights(&m, &t).unwrap(), t.coalition_frequencies());
    }

    #[test]
    fn joint_fit_requires_two_classes_and_covariates() {
        let t = table("y,t_0\n1,0\n2,0\n", 1, 0);
        assert!(matches!(fit_joint(&t, &FitConfig::default()), Err(Error::NoCovariates)));
        let t = table("y,t_0,x_0\n1,0,0.3\n2,0,-0.1\n", 1, 1);
        assert!(matches!(
            fit_joint(&t, &FitConfig::default()),
            Err(Error::SingleClassOnly(_))
        ));
    }

    #[test]
    fn factorized_rejects_constant_experiment() {
        let t = table("y,t_0,t_1,x_0\n1,1,0,0.5\n2,1,1,-0.5\n", 2, 1);
        assert!(matches!(
            fit_factorized(&t, &FitConfig::default()),
            Err(Error::SingleClassOnly(_))
        ));
    }

    #[test]
    fn separable_data_is_clipped_and_reports_status() {
        // x < 0 -> control, x > 0 -> treated: perfectly separable.
        let mut rows = String::from("y,t_0,x_0\n");
        for i in 0..20 {
            let x = (i as f64 + 1.0) / 10.0;
            rows.push_str(&format!("1,1,{x}\n"));
            rows.push_str(&format!("0,0,{}\n", -x));
        }
        let t = table(&rows, 1, 1);
        let config = FitConfig {
            max_iterations: 200,
            ..FitConfig::default()
        };
        let m = fit_joint(&t, &config).unwrap();
        let p = m.predict(&[5.0]).unwrap();
        let floor = m.clip_epsilon() / (1.0 + 2.0 * m.clip_epsilon());
        assert!(p.iter().all(|&v| v >= floor && v <= 1.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.clip_count() >= 1);
        // status is reported either way; with separation and few iterations
        // the gradient tolerance is typically not reached
        let _ = m.converged();
        assert_eq!(m.diagnostics().len(), 1);
    }

    #[test]
    fn predictions_form_a_simplex_above_the_floor() {
        let t = table(
            "y,t_0,t_1,x_0\n1,0,0,0.1\n2,1,0,0.9\n3,0,1,-0.7\n4,1,1,0.4\n1,0,0,-0.2\n2,1,1,1.4\n",
            2,
            1,
        );
        let m = fit_joint(&t, &FitConfig::default()).unwrap();
        for x in [-3.0, -0.5, 0.0, 0.7, 10.0] {
            let p = m.predict(&[x]).unwrap();
            assert_eq!(p.len(), 4);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let floor = m.clip_epsilon() / (1.0 + 4.0 * m.clip_epsilon());
            assert!(p.iter().all(|&v| v >= floor));
        }
        assert!(matches!(
            m.predict(&[1.0, 2.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn objective_trace_is_monotone() {
        let t = table(
            "y,t_0,t_1,x_0,x_1\n1,0,0,0.1,1.0\n2,1,0,0.9,-0.3\n3,0,1,-0.7,0.2\n4,1,1,0.4,0.8\n\
             1,0,0,-0.2,-1.1\n2,1,1,1.4,0.5\n0,0,1,0.3,-0.9\n1,1,0,-0.6,0.4\n",
            2,
            2,
        );
        let m = fit_joint(&t, &FitConfig::default()).unwrap();
        for d in m.diagnostics() {
            for pair in d.objective_trace.windows(2) {
                assert!(
                    pair[1] >= pair[0] - 1e-15,
                    "objective decreased: {} -> {}",
                    pair[0],
                    pair[1]
                );
            }
        }
        let m = fit_factorized(&t, &FitConfig::default()).unwrap();
        for d in m.diagnostics() {
            for pair in d.objective_trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-15);
            }
        }
    }

    #[test]
    fn factorized_single_experiment_matches_joint_binary_logit() {
        let t = table(
            "y,t_0,x_0\n1,1,0.6\n0,0,-0.4\n1,1,1.2\n0,0,-0.8\n1,0,0.1\n0,1,-0.2\n1,1,0.9\n0,0,0.3\n",
            1,
            1,
        );
        let config = FitConfig::default();
        let fac = fit_factorized(&t, &config).unwrap();
        let joint = fit_joint(&t, &config).unwrap();
        for x in [-1.0, 0.0, 0.5, 2.0] {
            let pf = fac.predict(&[x]).unwrap();
            let pj = joint.predict(&[x]).unwrap();
            for (a, b) in pf.iter().zip(&pj) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn joint_model_with_zero_slopes_is_a_softmax_of_intercepts() {
        let intercepts = [0.4, -1.1, 2.0];
        let mut coef = Vec::new();
        for b in intercepts {
            coef.extend_from_slice(&[b, 0.0]); // intercept, one dead slope
        }
        let model = PropensityModel {
            experiments: ExperimentSet::new(2).unwrap(),
            covariate_dim: 1,
            standardization: Standardization::identity(1),
            params: Params::Joint {
                coef,
                diagnostics: FitDiagnostics {
                    converged: true,
                    iterations: 0,
                    objective_trace: Vec::new(),
                },
            },
            clip_epsilon: 1e-9,
            clip_count: AtomicU64::new(0),
        };
        let denom: f64 = 1.0 + intercepts.iter().map(|b| b.exp()).sum::<f64>();
        for x in [-2.0, 0.0, 3.5] {
            let p = model.predict(&[x]).unwrap();
            assert!((p[0] - 1.0 / denom).abs() < 1e-12);
            for (c, b) in intercepts.iter().enumerate() {
                assert!((p[c + 1] - b.exp() / denom).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn joint_fit_is_equivariant_under_covariate_permutation() {
        let t = table(
            "y,t_0,x_0,x_1\n1,0,0.1,1.0\n2,1,0.9,-0.3\n3,0,-0.7,0.2\n4,1,0.4,0.8\n\
             1,0,-0.2,-1.1\n2,1,1.4,0.5\n0,0,0.3,-0.9\n1,1,-0.6,0.4\n",
            1,
            2,
        );
        let swapped = table(
            "y,t_0,x_0,x_1\n1,0,1.0,0.1\n2,1,-0.3,0.9\n3,0,0.2,-0.7\n4,1,0.8,0.4\n\
             1,0,-1.1,-0.2\n2,1,0.5,1.4\n0,0,-0.9,0.3\n1,1,0.4,-0.6\n",
            1,
            2,
        );
        let config = FitConfig::default();
        let a = fit_joint(&t, &config).unwrap();
        let b = fit_joint(&swapped, &config).unwrap();
        for x in [[0.2, -0.5], [1.0, 1.0], [-0.3, 0.8]] {
            let pa = a.predict(&x).unwrap();
            let pb = b.predict(&[x[1], x[0]]).unwrap();
            for (u, v) in pa.iter().zip(&pb) {
                assert!((u - v).abs() < 1e-9, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn model_weight_average_sums_to_one() {
        let t = table(
            "y,t_0,t_1,x_0\n1,0,0,0.1\n2,1,0,0.9\n3,0,1,-0.7\n4,1,1,0.4\n1,0,0,-0.2\n2,1,1,1.4\n",
            2,
            1,
        );
        let m = fit_factorized(&t, &FitConfig::default()).unwrap();
        let w = coalition_weights(&m, &t).unwrap();
        let total: f64 = w.values().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(w.len(), 4);
    }
}
