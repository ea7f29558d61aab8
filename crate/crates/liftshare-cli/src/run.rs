//! Command implementations behind the CLI: data loading, the attribution
//! pipeline with bootstrap intervals, the synthetic benchmark, and report
//! rendering.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use liftshare::{
    bootstrap, estimate_all, fit_empirical, fit_factorized, fit_joint, fit_outcome,
    impute_missing, lift, marginal_effect, parse_header, parse_table, run_benchmark, write_csv,
    AttributionMethod, BenchmarkReport, BootstrapConfig, Coalition, CoalitionEstimates, Estimator,
    FitConfig, GeneratorConfig, ObservationTable, OutcomeModel, PropensityKind, PropensityModel,
};

use crate::report::{BootstrapMeta, CoalitionEntry, ExperimentEntry, Metadata, ReportFile};

/// Attribution run settings, mirroring the CLI flags.
#[derive(Debug, Clone)]
pub struct AttributeConfig {
    pub estimator: Estimator,
    /// Propensity model kind; `None` picks empirical for covariate-free
    /// tables and the factorized model otherwise, and skips the model
    /// entirely for estimators that do not need one.
    pub propensity: Option<PropensityKind>,
    pub method: AttributionMethod,
    pub bootstrap: BootstrapConfig,
    pub impute_missing: bool,
    pub max_exact_l: usize,
    pub fit: FitConfig,
}

/// Reads a CSV log, inferring the experiment/covariate counts from the
/// header when they are not pinned by flags.
pub fn load_table(
    path: &Path,
    experiments: Option<usize>,
    covariates: Option<usize>,
) -> anyhow::Result<ObservationTable> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .with_context(|| format!("reading {}", path.display()))?;
    let header_line = text
        .lines()
        .next()
        .ok_or_else(|| anyhow!("{} is empty", path.display()))?;
    let fields: Vec<String> = header_line
        .split(',')
        .map(|f| f.trim().to_string())
        .collect();
    let schema = parse_header(&fields)?;
    let l = experiments.unwrap_or(schema.experiments);
    let d = covariates.unwrap_or(schema.covariate_dim);
    Ok(parse_table(text.as_bytes(), l, d)?)
}

fn needs_propensity(estimator: Estimator) -> bool {
    matches!(
        estimator,
        Estimator::Ips | Estimator::Snips | Estimator::Dr(_)
    )
}

fn needs_outcome_model(estimator: Estimator, impute: bool) -> bool {
    impute || matches!(estimator, Estimator::Ra | Estimator::Dr(_))
}

fn default_kind(table: &ObservationTable) -> PropensityKind {
    if table.covariate_dim() == 0 {
        PropensityKind::Empirical
    } else {
        PropensityKind::Factorized
    }
}

fn fit_models(
    table: &ObservationTable,
    cfg: &AttributeConfig,
) -> liftshare::Result<(Option<PropensityModel>, Option<OutcomeModel>)> {
    let pmodel = if needs_propensity(cfg.estimator) || cfg.propensity.is_some() {
        let kind = cfg.propensity.unwrap_or_else(|| default_kind(table));
        Some(match kind {
            PropensityKind::Joint => fit_joint(table, &cfg.fit)?,
            PropensityKind::Factorized => fit_factorized(table, &cfg.fit)?,
            PropensityKind::Empirical => fit_empirical(table),
        })
    } else {
        None
    };
    let omodel = if needs_outcome_model(cfg.estimator, cfg.impute_missing) {
        Some(fit_outcome(table, &cfg.fit)?)
    } else {
        None
    };
    Ok((pmodel, omodel))
}

struct Analysis {
    estimates: CoalitionEstimates,
    per_experiment_delta: Vec<f64>,
    per_experiment_lift: Vec<f64>,
    budget_gap: Option<f64>,
    imputed: Vec<Coalition>,
}

fn analyze(
    table: &ObservationTable,
    cfg: &AttributeConfig,
    pmodel: Option<&PropensityModel>,
    omodel: Option<&OutcomeModel>,
) -> liftshare::Result<Analysis> {
    let mut estimates = estimate_all(table, cfg.estimator, pmodel, omodel)?;
    let mut imputed = Vec::new();
    if cfg.impute_missing && cfg.method != AttributionMethod::Marginal {
        let omodel = omodel.ok_or(liftshare::Error::ModelRequired {
            estimator: "imputation",
            model: "outcome",
        })?;
        imputed = impute_missing(&mut estimates, omodel, table)?;
    }
    let (per_experiment_delta, per_experiment_lift, budget_gap) = match cfg.method {
        AttributionMethod::WeightedShapley | AttributionMethod::WeightedAverage => {
            let result = match cfg.method {
                AttributionMethod::WeightedShapley => {
                    liftshare::weighted_shapley(&estimates, cfg.max_exact_l)?
                }
                _ => liftshare::weighted_average_share(&estimates)?,
            };
            let lifts = result
                .per_experiment
                .iter()
                .map(|&delta| lift(delta, estimates.baseline))
                .collect::<liftshare::Result<Vec<f64>>>()?;
            (result.per_experiment, lifts, result.budget_gap)
        }
        AttributionMethod::Marginal => {
            let kind = cfg.propensity.unwrap_or_else(|| default_kind(table));
            let mut deltas = Vec::new();
            let mut lifts = Vec::new();
            for l in 0..table.experiment_count() {
                let effect = marginal_effect(table, l, cfg.estimator, kind, &cfg.fit)?;
                deltas.push(effect.ate);
                lifts.push(effect.lift_percent);
            }
            (deltas, lifts, None)
        }
    };
    Ok(Analysis {
        estimates,
        per_experiment_delta,
        per_experiment_lift,
        budget_gap,
        imputed,
    })
}

/// Statistic vector a bootstrap resample must reproduce: the baseline mean,
/// one lift per (originally observed) coalition, one attributed lift per
/// experiment.
fn statistic_vector(analysis: &Analysis, coalitions: &[Coalition]) -> liftshare::Result<Vec<f64>> {
    let mut v = Vec::with_capacity(1 + coalitions.len() + analysis.per_experiment_lift.len());
    let baseline = analysis.estimates.baseline;
    v.push(baseline);
    for t in coalitions {
        let mu = analysis
            .estimates
            .values
            .get(t)
            .ok_or_else(|| liftshare::Error::UnobservedCoalition(t.to_string()))?;
        v.push(lift(mu - baseline, baseline)?);
    }
    v.extend_from_slice(&analysis.per_experiment_lift);
    Ok(v)
}

/// The full attribution pipeline: fit, estimate, share, bootstrap, report.
pub fn attribute(
    table: &ObservationTable,
    cfg: &AttributeConfig,
    data_label: &str,
) -> anyhow::Result<ReportFile> {
    let mut warnings = Vec::new();
    if needs_propensity(cfg.estimator)
        && cfg.propensity.is_none()
        && table.covariate_dim() == 0
    {
        warnings.push(
            "no covariates in the data; the propensity falls back to empirical class frequencies"
                .to_string(),
        );
    }
    let (pmodel, omodel) = fit_models(table, cfg)?;
    if let Some(p) = &pmodel {
        if !p.converged() {
            warnings.push(
                "the propensity fit did not reach the gradient tolerance; estimates use the last iterate"
                    .to_string(),
            );
        }
    }
    let point = analyze(table, cfg, pmodel.as_ref(), omodel.as_ref())?;
    let coalitions: Vec<Coalition> = point.estimates.values.keys().copied().collect();

    let pipeline = |t: &ObservationTable| -> liftshare::Result<Vec<f64>> {
        let analysis = if cfg.bootstrap.refit_models {
            let (p, o) = fit_models(t, cfg)?;
            analyze(t, cfg, p.as_ref(), o.as_ref())?
        } else {
            analyze(t, cfg, pmodel.as_ref(), omodel.as_ref())?
        };
        statistic_vector(&analysis, &coalitions)
    };
    let boot = bootstrap(table, pipeline, &cfg.bootstrap)?;
    if boot.failed_resamples > 0 {
        warnings.push(format!(
            "{} of {} bootstrap resamples failed and were skipped",
            boot.failed_resamples, boot.resamples
        ));
    }

    let baseline = boot.estimates[0];
    let experiments = table.experiments();
    let coalition_entries: Vec<CoalitionEntry> = coalitions
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let members: Vec<&str> = t.members().map(|l| experiments.label(l)).collect();
            CoalitionEntry {
                mask: t.mask(),
                bits: t.bitstring(experiments.count()),
                label: format!("{{{}}}", members.join(",")),
                count: point.estimates.counts.get(&t).copied().unwrap_or(0),
                weight: point.estimates.weight(t),
                mu_hat: point.estimates.values[&t],
                lift: boot.estimates[1 + j],
            }
        })
        .collect();
    let experiment_entries: Vec<ExperimentEntry> = (0..experiments.count())
        .map(|l| ExperimentEntry {
            id: l,
            label: experiments.label(l).to_string(),
            delta: point.per_experiment_delta[l],
            lift: boot.estimates[1 + coalitions.len() + l],
        })
        .collect();

    let metadata = Metadata {
        command: "attribute".to_string(),
        data: data_label.to_string(),
        n: table.len(),
        experiments: experiments.count(),
        labels: experiments.labels().to_vec(),
        covariates: table.covariate_dim(),
        estimator: cfg.estimator.to_string(),
        method: method_name(cfg.method).to_string(),
        seed: cfg.bootstrap.seed,
        max_exact_l: cfg.max_exact_l,
        impute_missing: cfg.impute_missing,
        imputed_coalitions: point.imputed.iter().map(|c| c.to_string()).collect(),
        propensity: pmodel.as_ref().map(|m| m.summary()),
        outcome_residual_variance: omodel.as_ref().map(|m| m.residual_variance),
        bootstrap: BootstrapMeta {
            resamples: boot.resamples,
            failed_resamples: boot.failed_resamples,
            ci_level: cfg.bootstrap.ci_level,
            refit_models: cfg.bootstrap.refit_models,
        },
        warnings,
    };
    Ok(ReportFile {
        metadata,
        baseline,
        coalitions: coalition_entries,
        experiments: experiment_entries,
        budget_gap: point.budget_gap,
    })
}

pub fn method_name(method: AttributionMethod) -> &'static str {
    match method {
        AttributionMethod::WeightedShapley => "weighted_shapley",
        AttributionMethod::WeightedAverage => "weighted_average",
        AttributionMethod::Marginal => "marginal",
    }
}

/// Writes a generated synthetic log to `out` in the canonical CSV schema.
pub fn simulate(config: &GeneratorConfig, out: &Path) -> anyhow::Result<usize> {
    let (table, _) = liftshare::generate(config)?;
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(&table, BufWriter::new(file))?;
    Ok(table.len())
}

/// Runs the synthetic benchmark, writing plot rows to `out` and the JSON
/// summary to `summary_out`.
#[allow(clippy::too_many_arguments)]
pub fn benchmark(
    config: &GeneratorConfig,
    replications: usize,
    estimators: &[Estimator],
    methods: &[AttributionMethod],
    mc_samples: usize,
    out: &Path,
    summary_out: &Path,
) -> anyhow::Result<BenchmarkReport> {
    let report = run_benchmark(config, replications, estimators, methods, mc_samples)?;
    let csv_file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    report.write_csv(BufWriter::new(csv_file))?;
    let mut json = serde_json::to_string_pretty(&report.summaries)?;
    json.push('\n');
    std::fs::write(summary_out, json)
        .with_context(|| format!("creating {}", summary_out.display()))?;
    Ok(report)
}

/// Output format of the `report` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Text,
    Csv,
}

/// Renders a stored JSON report to aligned text or plot CSV.
pub fn render_report(data: &Path, format: RenderFormat, mut out: impl Write) -> anyhow::Result<()> {
    let file = File::open(data).with_context(|| format!("reading {}", data.display()))?;
    let mut text = String::new();
    BufReader::new(file).read_to_string(&mut text)?;
    let report = ReportFile::from_json(&text)?;
    match format {
        RenderFormat::Text => report.render_text(&mut out)?,
        RenderFormat::Csv => report.render_csv(&mut out)?,
    }
    Ok(())
}
