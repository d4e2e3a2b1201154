//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors (bad flags or flag values),
//! 2 for data errors (unreadable, malformed or inconsistent inputs).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calibration::{ausuc_from_curve, select_gamma, tradeoff_curve};
use crate::data::{Dataset, GzslSplit};
use crate::error::{Error, Result};
use crate::io::{self, ReportBody, ReportFile, RunConfig};
use crate::metrics::{mse_vs_lambda_curves, AccuracyKind};
use crate::models::{fit, ModelSpec, RankingVariant, SgdConfig};
use crate::pipeline::{
    log_grid, refit_pool, run_gzsl_evaluation, run_zsl_evaluation, score_gzsl_test, select_lambda_gamma_gzsl,
    ExperimentConfig, GzslOptions, LambdaMode,
};
use crate::splits::{make_validation_folds, SplitConfig};
use crate::synthetic::{generate, SyntheticConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gzsl", version, about = "Generalized zero-shot learning evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Base seed for data generation, splits and seeded models.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Number of repeated runs averaged into a report.
    #[arg(long, global = true, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, global = true, value_enum, default_value_t = AccArg::PerClass)]
    pub acc: AccArg,
    /// Comma-separated λ values [default: 10 log-spaced values from 1e-4 to 1e2].
    #[arg(long, global = true, value_delimiter = ',', num_args = 1..)]
    pub lambda_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AccArg {
    PerClass,
    PerSample,
}

impl From<AccArg> for AccuracyKind {
    fn from(a: AccArg) -> Self {
        match a {
            AccArg::PerClass => AccuracyKind::PerClass,
            AccArg::PerSample => AccuracyKind::PerSample,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Draw class partitions and sample pools; writes a split file.
    Split(SplitArgs),
    /// Classical ZSL evaluation among test classes only.
    Zsl(EvalArgs),
    /// GZSL evaluation over all classes.
    Gzsl(GzslArgs),
    /// Seen-unseen trade-off curve on the test pools, with its AUSUC.
    Curve(CurveArgs),
    /// Attribute MSE of seen and unseen test samples across the λ grid.
    MseCurve(MseCurveArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub classes: usize,
    #[arg(long, default_value_t = 30)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub feature_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub attribute_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub intra_var: f64,
    #[arg(long, default_value_t = 10.0)]
    pub inter_var: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_var: f64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output split file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub val_classes: usize,
    #[arg(long, default_value_t = 1)]
    pub test_classes: usize,
    #[arg(long, default_value_t = 0.2)]
    pub seen_test_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    pub seen_val_fraction: f64,
    /// Number of validation folds.
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Split file written by `gzsl split`.
    #[arg(long)]
    pub split: PathBuf,
    /// Use class prototypes as stored instead of scaling rows to unit norm.
    #[arg(long)]
    pub no_normalize_prototypes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    LinearVs,
    LinearSv,
    Ale,
    Devise,
    Sje,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::LinearVs)]
    pub model: ModelArg,
    /// SGD step size (ranking models).
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// SGD passes over the training pool (ranking models).
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Hinge margin as a fraction of the mean initial |score| (ranking models).
    #[arg(long, default_value_t = 0.1)]
    pub margin_fraction: f64,
    /// Half-width of the uniform weight initialization (ranking models).
    #[arg(long, default_value_t = 1e-2)]
    pub init_scale: f64,
}

impl ModelArgs {
    fn spec(&self) -> ModelSpec {
        let sgd = SgdConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            margin_fraction: self.margin_fraction,
            init_scale: self.init_scale,
            seed: 0,
        };
        match self.model {
            ModelArg::LinearVs => ModelSpec::linear_vs(0.0),
            ModelArg::LinearSv => ModelSpec::linear_sv(0.0),
            ModelArg::Ale => ModelSpec::bilinear(RankingVariant::Ale, sgd, 0.0),
            ModelArg::Devise => ModelSpec::bilinear(RankingVariant::Devise, sgd, 0.0),
            ModelArg::Sje => ModelSpec::bilinear(RankingVariant::Sje, sgd, 0.0),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Report file; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LambdaModeArg {
    Zsl,
    Gzsl,
}

#[derive(Debug, Args)]
pub struct GzslArgs {
    #[command(flatten)]
    pub eval: EvalArgs,
    /// Evaluate with γ = 0.
    #[arg(long)]
    pub no_calibration: bool,
    /// Protocol used to select λ.
    #[arg(long, value_enum, default_value_t = LambdaModeArg::Gzsl)]
    pub lambda_mode: LambdaModeArg,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fixed λ; selected with the GZSL protocol when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Curve CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MseCurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn usage(flag: &str, e: Error) -> Failure {
    match e {
        Error::InvalidConfig(msg) => Failure::Usage(format!("{flag}: {msg}")),
        e @ Error::NotEnoughClasses { .. } => Failure::Usage(format!("{flag}: {e}")),
        other => Failure::Data(other),
    }
}

fn experiment(global: &GlobalArgs, model: &ModelArgs) -> std::result::Result<ExperimentConfig, Failure> {
    let grid = global.lambda_grid.clone().unwrap_or_else(|| log_grid(1e-4, 1e2, 10));
    let spec = model.spec();
    spec.validate().map_err(|e| usage("model flags", e))?;
    let cfg = ExperimentConfig {
        acc_kind: global.acc.into(),
        n_runs: global.runs,
        seed: global.seed,
        ..ExperimentConfig::new(spec, grid)
    };
    if cfg.n_runs == 0 {
        return Err(Failure::Usage("--runs: must be at least 1".into()));
    }
    cfg.validate().map_err(|e| usage("--lambda-grid", e))?;
    Ok(cfg)
}

fn load(args: &DataArgs) -> Result<(Dataset, Vec<GzslSplit>)> {
    let d = io::load_dataset(&args.data, !args.no_normalize_prototypes)?;
    let folds = io::load_splits(&args.split, &d)?;
    Ok((d, folds))
}

fn run_config(args: &DataArgs, experiment: ExperimentConfig, gzsl: Option<GzslOptions>) -> RunConfig {
    RunConfig {
        dataset: args.data.display().to_string(),
        split: args.split.display().to_string(),
        normalize_prototypes: !args.no_normalize_prototypes,
        experiment,
        gzsl,
    }
}

fn emit_report(report: &ReportFile, out: Option<&Path>, summary: String) -> Result<()> {
    match out {
        Some(path) => {
            report.write(path)?;
            println!("{summary}");
        }
        None => print!("{}", report.to_json()?),
    }
    Ok(())
}

fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    let global = &cli.global;
    match &cli.command {
        Command::Synth(a) => {
            let cfg = SyntheticConfig {
                n_classes: a.classes,
                samples_per_class: a.samples_per_class,
                feature_dim: a.feature_dim,
                attribute_dim: a.attribute_dim,
                intra_var: a.intra_var,
                inter_var: a.inter_var,
                noise_var: a.noise_var,
                seed: global.seed,
            };
            cfg.validate().map_err(|e| usage("synth flags", e))?;
            let d = generate(&cfg)?;
            io::save_dataset(&a.out, &d)?;
            println!("wrote {} samples of {} classes to {}", d.len(), d.class_count(), a.out.display());
        }
        Command::Split(a) => {
            let d = io::load_dataset(&a.data, false)?;
            let cfg = SplitConfig {
                n_val_classes: a.val_classes,
                n_test_classes: a.test_classes,
                seen_test_fraction: a.seen_test_fraction,
                seen_val_fraction: a.seen_val_fraction,
                n_val_folds: a.folds,
                seed: global.seed,
            };
            cfg.validate(d.class_count()).map_err(|e| usage("split flags", e))?;
            let folds = make_validation_folds(&d, &cfg)?;
            io::write_splits(&a.out, &folds)?;
            println!("wrote {} folds to {}", folds.len(), a.out.display());
        }
        Command::Zsl(a) => {
            let cfg = experiment(global, &a.model)?;
            let (d, folds) = load(&a.data)?;
            let report = run_zsl_evaluation(&d, &folds, &cfg)?;
            let summary = format!(
                "A_U->Cu {:.2} ± {:.2}  lambda* {}",
                report.acc_unseen_in_unseen, report.std, report.lambda_star
            );
            let file = ReportFile::new("zsl", run_config(&a.data, cfg, None), ReportBody::Zsl(report));
            emit_report(&file, a.out.as_deref(), summary)?;
        }
        Command::Gzsl(a) => {
            let cfg = experiment(global, &a.eval.model)?;
            let opts = GzslOptions {
                calibrate: !a.no_calibration,
                lambda_mode: match a.lambda_mode {
                    LambdaModeArg::Zsl => LambdaMode::Zsl,
                    LambdaModeArg::Gzsl => LambdaMode::Gzsl,
                },
            };
            let (d, folds) = load(&a.eval.data)?;
            let report = run_gzsl_evaluation(&d, &folds, &cfg, opts)?;
            let summary = format!(
                "A_U->C {:.2}  A_S->C {:.2}  H {:.2}  AUSUC {:.4}  gamma* {}  lambda* {}",
                report.acc_unseen_in_all,
                report.acc_seen_in_all,
                report.harmonic_mean,
                report.ausuc,
                report.gamma_star,
                report.lambda_star
            );
            let file = ReportFile::new("gzsl", run_config(&a.eval.data, cfg, Some(opts)), ReportBody::Gzsl(report));
            emit_report(&file, a.eval.out.as_deref(), summary)?;
        }
        Command::Curve(a) => {
            let mut cfg = experiment(global, &a.model)?;
            if let Some(l) = a.lambda {
                cfg.lambda_grid = vec![l];
                cfg.validate().map_err(|e| usage("--lambda", e))?;
            }
            let (d, folds) = load(&a.data)?;
            let split = &folds[0];
            let cfg = ExperimentConfig {
                model: cfg.model.with_seed(cfg.seed),
                ..cfg
            };
            let lambda = select_lambda_gamma_gzsl(&d, &folds, &cfg)?.lambda_star;
            let model = fit(&d, &refit_pool(split), &cfg.model.with_lambda(lambda))?;
            let (scores, truth) = score_gzsl_test(&d, split, &model)?;
            let curve = tradeoff_curve(&scores, &truth, cfg.acc_kind)?;
            let area = ausuc_from_curve(&curve);
            let (gamma, h) = select_gamma(&scores, &truth, cfg.acc_kind)?;
            match &a.out {
                Some(path) => {
                    io::write_curve(&curve, path)?;
                    println!("AUSUC {area}  lambda {lambda}  best-on-test gamma {gamma} H {h:.2}");
                }
                None => {
                    print!("{}", io::format_curve(&curve));
                    eprintln!("AUSUC {area}");
                }
            }
        }
        Command::MseCurve(a) => {
            let grid = global.lambda_grid.clone().unwrap_or_else(|| log_grid(1e-4, 1e2, 10));
            let probe = ExperimentConfig::new(ModelSpec::linear_vs(0.0), grid.clone());
            probe.validate().map_err(|e| usage("--lambda-grid", e))?;
            let (d, folds) = load(&a.data)?;
            let curves = mse_vs_lambda_curves(&d, &folds[0], &grid)?;
            io::write_mse_curves(&curves, &a.out)?;
            println!("wrote {} points to {}", grid.len(), a.out.display());
        }
    }
    std::io::stdout().flush().map_err(|e| Failure::Data(Error::io(Path::new("<stdout>"), e)))?;
    Ok(())
}
