//! The attribution report file: a JSON document with the run configuration,
//! the baseline estimate, one block per treatment combination and one block
//! per experiment, plus renderers to an aligned text table and to
//! plot-ready CSV.

use std::io::Write;

use liftshare::{IntervalEstimate, PropensitySummary};
use serde::{Deserialize, Serialize};

/// Echo of the run configuration plus dataset and model facts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metadata {
    pub command: String,
    pub data: String,
    pub n: usize,
    pub experiments: usize,
    pub labels: Vec<String>,
    pub covariates: usize,
    pub estimator: String,
    pub method: String,
    pub seed: u64,
    pub max_exact_l: usize,
    pub impute_missing: bool,
    /// Coalitions whose value was imputed rather than observed.
    pub imputed_coalitions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propensity: Option<PropensitySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome_residual_variance: Option<f64>,
    pub bootstrap: BootstrapMeta,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapMeta {
    pub resamples: usize,
    pub failed_resamples: usize,
    pub ci_level: f64,
    pub refit_models: bool,
}

/// One treatment combination: its estimated mean outcome and lift over the
/// baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoalitionEntry {
    pub mask: u32,
    /// Treatment bitstring `t_0..t_{L-1}`.
    pub bits: String,
    pub label: String,
    pub count: usize,
    pub weight: f64,
    pub mu_hat: f64,
    /// Lift over the baseline in percent, with bootstrap CI.
    pub lift: IntervalEstimate,
}

/// One experiment's attributed share of the total effect.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentEntry {
    pub id: usize,
    pub label: String,
    /// Attributed cost in outcome units (marginal mode: the binary ATE).
    pub delta: f64,
    /// Attributed cost as a lift percentage, with bootstrap CI; significant
    /// when the interval excludes zero.
    pub lift: IntervalEstimate,
}

/// The canonical JSON report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub metadata: Metadata,
    /// Baseline mean outcome with bootstrap CI (outcome units).
    pub baseline: IntervalEstimate,
    pub coalitions: Vec<CoalitionEntry>,
    pub experiments: Vec<ExperimentEntry>,
    /// Absolute gap between the attributed total and the decomposed total;
    /// omitted in marginal mode, which does not decompose the total.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_gap: Option<f64>,
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Aligned text rendering: one row per experiment and per coalition,
    /// lift followed by the confidence interval in parentheses and a `*`
    /// marker on significant entries.
    pub fn render_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = &self.metadata;
        writeln!(w, "attribution report ({} on {})", m.estimator, m.data)?;
        writeln!(
            w,
            "rows: {}   experiments: {}   covariates: {}   method: {}   seed: {}",
            m.n, m.experiments, m.covariates, m.method, m.seed
        )?;
        let propensity = match &m.propensity {
            Some(p) => {
                let kind = match p.kind {
                    liftshare::PropensityKind::Joint => "joint",
                    liftshare::PropensityKind::Factorized => "factorized",
                    liftshare::PropensityKind::Empirical => "empirical",
                };
                format!(
                    "{kind} (converged: {}, clipped predictions: {})",
                    p.converged, p.clip_count
                )
            }
            None => "empirical frequencies".to_string(),
        };
        writeln!(w, "propensity: {propensity}")?;
        writeln!(
            w,
            "bootstrap: {} resamples, {} failed, {:.0}% intervals",
            m.bootstrap.resamples,
            m.bootstrap.failed_resamples,
            m.bootstrap.ci_level * 100.0
        )?;
        for warning in &m.warnings {
            writeln!(w, "warning: {warning}")?;
        }
        writeln!(w)?;
        writeln!(
            w,
            "baseline mean: {:.6} ({:.6}, {:.6})",
            self.baseline.point, self.baseline.ci_low, self.baseline.ci_high
        )?;
        writeln!(w)?;
        writeln!(w, "lift per treatment combination (% vs baseline)")?;
        writeln!(
            w,
            "{:<8} {:<16} {:>8} {:>9} {:>10}   lift (%)",
            "bits", "coalition", "count", "weight", "mu_hat"
        )?;
        for c in &self.coalitions {
            writeln!(
                w,
                "{:<8} {:<16} {:>8} {:>9.4} {:>10.4}   {}",
                c.bits,
                c.label,
                c.count,
                c.weight,
                c.mu_hat,
                interval_cell(&c.lift)
            )?;
        }
        writeln!(w)?;
        writeln!(w, "attributed cost per experiment ({})", m.method)?;
        writeln!(
            w,
            "{:<4} {:<12} {:>12}   lift (%)",
            "id", "label", "delta"
        )?;
        for e in &self.experiments {
            writeln!(
                w,
                "{:<4} {:<12} {:>12.6}   {}",
                e.id,
                e.label,
                e.delta,
                interval_cell(&e.lift)
            )?;
        }
        if let Some(gap) = self.budget_gap {
            writeln!(w)?;
            writeln!(w, "budget gap: {gap:e}")?;
        }
        Ok(())
    }

    /// Plot-ready CSV: one row per baseline/coalition/experiment entry.
    pub fn render_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "kind,id,bits,label,count,weight,point,lift,ci_low,ci_high,significant"
        )?;
        writeln!(
            w,
            "baseline,,,,{},,{},,{},{},{}",
            self.metadata.n,
            self.baseline.point,
            self.baseline.ci_low,
            self.baseline.ci_high,
            self.baseline.significant
        )?;
        for c in &self.coalitions {
            writeln!(
                w,
                "coalition,{},{},{},{},{},{},{},{},{},{}",
                c.mask,
                c.bits,
                csv_field(&c.label),
                c.count,
                c.weight,
                c.mu_hat,
                c.lift.point,
                c.lift.ci_low,
                c.lift.ci_high,
                c.lift.significant
            )?;
        }
        for e in &self.experiments {
            writeln!(
                w,
                "experiment,{},,{},,,{},{},{},{},{}",
                e.id,
                csv_field(&e.label),
                e.delta,
                e.lift.point,
                e.lift.ci_low,
                e.lift.ci_high,
                e.lift.significant
            )?;
        }
        Ok(())
    }
}

/// Quotes a CSV field when it contains separators or quotes.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// `point (low, high)` with two decimals and a trailing `*` when the
/// interval excludes zero, e.g. `-10.19 (-12.31, -7.90)*`.
pub fn interval_cell(i: &IntervalEstimate) -> String {
    format!(
        "{:.2} ({:.2}, {:.2}){}",
        i.point,
        i.ci_low,
        i.ci_high,
        if i.significant { "*" } else { "" }
    )
}
