//! `liftshare` - measure the joint impact of parallel experiments and share
//! the lift fairly across them.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use liftshare::{
    AttributionMethod, BootstrapConfig, DrVariant, Estimator, FitConfig, GeneratorConfig,
    PropensityKind, SignMode, DEFAULT_MAX_EXACT_EXPERIMENTS,
};
use liftshare_cli::run::{self, AttributeConfig, RenderFormat};

#[derive(Parser)]
#[command(
    name = "liftshare",
    version,
    about = "Estimate the joint impact of parallel experiments on an engagement outcome \
             and attribute the lift over the no-experiment baseline to the individual \
             experiments via cost-sharing rules."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-experiment log with known ground truth.
    Simulate(SimulateArgs),
    /// Estimate per-coalition effects and attribute the total lift.
    Attribute(AttributeArgs),
    /// Score estimator/sharing combinations against the synthetic oracle.
    Benchmark(BenchmarkArgs),
    /// Render a stored JSON report as an aligned table or plot CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Number of observation rows.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Number of parallel experiments.
    #[arg(long, default_value_t = 3)]
    experiments: usize,
    /// Covariate dimension.
    #[arg(long, default_value_t = 5)]
    covariates: usize,
    /// Randomize assignment with fair coins instead of the confounded
    /// logistic mechanism.
    #[arg(long)]
    rct: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sign pattern of the per-experiment assignment curves.
    #[arg(long, value_enum, default_value_t = SignModeArg::Alternating)]
    sign_mode: SignModeArg,
}

#[derive(Args)]
struct AttributeArgs {
    /// Input CSV log (`y[,w],t_0..,x_0..`).
    #[arg(long)]
    data: PathBuf,
    /// Write the JSON report here; without it the JSON goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of experiments; inferred from the header when omitted.
    #[arg(long)]
    experiments: Option<usize>,
    /// Covariate dimension; inferred from the header when omitted.
    #[arg(long)]
    covariates: Option<usize>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Mean)]
    estimator: EstimatorArg,
    /// Propensity model kind; defaults to empirical without covariates and
    /// factorized with them.
    #[arg(long, value_enum)]
    propensity: Option<PropensityArg>,
    #[arg(long, value_enum, default_value_t = MethodArg::Shapley)]
    method: MethodArg,
    /// Bootstrap resamples.
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// Impute unobserved sub-coalition values from the regression
    /// adjustment model instead of failing.
    #[arg(long)]
    impute_missing: bool,
    /// Normalization of the doubly robust estimator.
    #[arg(long, value_enum, default_value_t = DrVariantArg::Aipw)]
    dr_variant: DrVariantArg,
    /// Largest experiment count for exact power-set and Shapley enumeration.
    #[arg(long, default_value_t = DEFAULT_MAX_EXACT_EXPERIMENTS)]
    max_exact_l: usize,
    /// Reuse the models fitted on the full table inside every bootstrap
    /// resample instead of refitting.
    #[arg(long)]
    freeze_models: bool,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Output CSV with one row per replication/estimator/method/experiment.
    #[arg(long)]
    out: PathBuf,
    /// JSON accuracy summary path; defaults to the CSV path with a .json
    /// extension.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    experiments: usize,
    #[arg(long, default_value_t = 5)]
    covariates: usize,
    #[arg(long)]
    rct: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SignModeArg::Alternating)]
    sign_mode: SignModeArg,
    #[arg(long, default_value_t = 20)]
    replications: usize,
    /// Estimators to score.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EstimatorArg::Mean, EstimatorArg::Ips])]
    estimators: Vec<EstimatorArg>,
    /// Sharing methods to score.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::Shapley, MethodArg::Average])]
    methods: Vec<MethodArg>,
    /// Fresh covariate draws for the ground-truth exposure weights.
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    /// Doubly robust normalization, used when `dr` is among the estimators.
    #[arg(long, value_enum, default_value_t = DrVariantArg::Aipw)]
    dr_variant: DrVariantArg,
}

#[derive(Args)]
struct ReportArgs {
    /// A JSON report produced by `attribute`.
    #[arg(long)]
    data: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum EstimatorArg {
    Mean,
    Ips,
    Snips,
    Ra,
    Dr,
}

impl EstimatorArg {
    fn to_estimator(self, dr: DrVariantArg) -> Estimator {
        match self {
            EstimatorArg::Mean => Estimator::Mean,
            EstimatorArg::Ips => Estimator::Ips,
            EstimatorArg::Snips => Estimator::Snips,
            EstimatorArg::Ra => Estimator::Ra,
            EstimatorArg::Dr => Estimator::Dr(match dr {
                DrVariantArg::Paper => DrVariant::Paper,
                DrVariantArg::Aipw => DrVariant::Aipw,
            }),
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum PropensityArg {
    Joint,
    Factorized,
    Empirical,
}

impl From<PropensityArg> for PropensityKind {
    fn from(arg: PropensityArg) -> Self {
        match arg {
            PropensityArg::Joint => PropensityKind::Joint,
            PropensityArg::Factorized => PropensityKind::Factorized,
            PropensityArg::Empirical => PropensityKind::Empirical,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, PartialEq, Eq)]
enum MethodArg {
    Shapley,
    Average,
    Marginal,
}

impl From<MethodArg> for AttributionMethod {
    fn from(arg: MethodArg) -> Self {
        match arg {
            MethodArg::Shapley => AttributionMethod::WeightedShapley,
            MethodArg::Average => AttributionMethod::WeightedAverage,
            MethodArg::Marginal => AttributionMethod::Marginal,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum DrVariantArg {
    Paper,
    Aipw,
}

#[derive(ValueEnum, Clone, Copy)]
enum SignModeArg {
    Alternating,
    ConstantNegative,
}

impl From<SignModeArg> for SignMode {
    fn from(arg: SignModeArg) -> Self {
        match arg {
            SignModeArg::Alternating => SignMode::Alternating,
            SignModeArg::ConstantNegative => SignMode::ConstantNegative,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum FormatArg {
    Text,
    Csv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let payload = serde_json::json!({ "error": e.to_string() });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let config = GeneratorConfig {
                n: args.n,
                dim: args.covariates,
                m_treatments: args.experiments,
                rct: args.rct,
                seed: args.seed,
                sign_mode: args.sign_mode.into(),
            };
            let rows = run::simulate(&config, &args.out)?;
            eprintln!("wrote {rows} rows to {}", args.out.display());
            Ok(())
        }
        Command::Attribute(args) => {
            let table = run::load_table(&args.data, args.experiments, args.covariates)?;
            let cfg = AttributeConfig {
                estimator: args.estimator.to_estimator(args.dr_variant),
                propensity: args.propensity.map(Into::into),
                method: args.method.into(),
                bootstrap: BootstrapConfig {
                    resamples: args.bootstrap,
                    seed: args.seed,
                    ci_level: args.ci_level,
                    refit_models: !args.freeze_models,
                },
                impute_missing: args.impute_missing,
                max_exact_l: args.max_exact_l,
                fit: FitConfig::default(),
            };
            let report = run::attribute(&table, &cfg, &args.data.display().to_string())?;
            match &args.out {
                Some(path) => {
                    fs::write(path, report.to_json())?;
                    report.render_text(std::io::stdout().lock())?;
                }
                None => {
                    let mut stdout = std::io::stdout().lock();
                    stdout.write_all(report.to_json().as_bytes())?;
                }
            }
            Ok(())
        }
        Command::Benchmark(args) => {
            let config = GeneratorConfig {
                n: args.n,
                dim: args.covariates,
                m_treatments: args.experiments,
                rct: args.rct,
                seed: args.seed,
                sign_mode: args.sign_mode.into(),
            };
            let estimators: Vec<Estimator> = args
                .estimators
                .iter()
                .map(|e| e.to_estimator(args.dr_variant))
                .collect();
            let methods: Vec<AttributionMethod> =
                args.methods.iter().map(|&m| m.into()).collect();
            let summary_out = args
                .summary_out
                .clone()
                .unwrap_or_else(|| args.out.with_extension("json"));
            let report = run::benchmark(
                &config,
                args.replications,
                &estimators,
                &methods,
                args.mc_samples,
                &args.out,
                &summary_out,
            )?;
            eprintln!(
                "wrote {} rows to {} and {} summaries to {}",
                report.rows.len(),
                args.out.display(),
                report.summaries.len(),
                summary_out.display()
            );
            for failure in &report.failures {
                eprintln!(
                    "replication {} ({}) failed: {}",
                    failure.replication, failure.estimator, failure.message
                );
            }
            Ok(())
        }
        Command::Report(args) => {
            let format = match args.format {
                FormatArg::Text => RenderFormat::Text,
                FormatArg::Csv => RenderFormat::Csv,
            };
            match &args.out {
                Some(path) => {
                    let mut buf = Vec::new();
                    run::render_report(&args.data, format, &mut buf)?;
                    fs::write(path, buf)?;
                }
                None => run::render_report(&args.data, format, std::io::stdout().lock())?,
            }
            Ok(())
        }
    }
}
