use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use softsensor_cli::commands::{self, EvalSplit};
use softsensor_cli::{config, CliError, CliResult};
use softsensor_core::data::Variable;

/// Soft-sensors for hard-to-measure water-quality variables: estimate
/// nutrient concentrations from cheap surrogate sensors with linear or
/// random-forest regression.
#[derive(Parser)]
#[command(name = "softsensor", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration file (key = value sections)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in column set and transforms: enborne | cut
    #[arg(long)]
    preset: Option<String>,
    /// Input CSV path
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Target variable (e.g. TRP, NO3N)
    #[arg(long)]
    target: Option<String>,
    /// Comma-separated predictor variables
    #[arg(long, value_delimiter = ',')]
    predictors: Option<Vec<String>>,
    /// Model kind: linear | forest
    #[arg(long = "model-kind")]
    model_kind: Option<String>,
    /// Master random seed
    #[arg(long)]
    seed: Option<u64>,
    /// Validation holdout fraction
    #[arg(long = "validation-fraction")]
    validation_fraction: Option<f64>,
    /// Quantile bins for stratification
    #[arg(long = "n-bins")]
    n_bins: Option<usize>,
    /// Cross-validation folds
    #[arg(short, long)]
    k: Option<usize>,
    /// Skewness threshold for automatic transforms
    #[arg(long = "skew-threshold")]
    skew_threshold: Option<f64>,
    /// Complete-case policy: all | model
    #[arg(long = "drop-policy")]
    drop_policy: Option<String>,
    /// Timestamp format string (chrono strftime)
    #[arg(long = "timestamp-format")]
    timestamp_format: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> config::Overrides {
        config::Overrides {
            config: self.config.clone(),
            preset: self.preset.clone(),
            dataset: self.dataset.clone(),
            target: self.target.clone(),
            predictors: self.predictors.clone(),
            model_kind: self.model_kind.clone(),
            seed: self.seed,
            validation_fraction: self.validation_fraction,
            n_bins: self.n_bins,
            k: self.k,
            skew_threshold: self.skew_threshold,
            drop_policy: self.drop_policy.clone(),
            timestamp_format: self.timestamp_format.clone(),
        }
    }

    fn resolve(&self) -> CliResult<config::RunConfig> {
        config::resolve(&self.overrides())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Per-column summary statistics of the complete cases
    Summary {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Write the statistics as CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank predictors by correlation with the target
    Correlate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Correlate raw instead of transformed columns
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predictor-subset selection (stepwise forward / recursive ranking)
    Select {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Stop after this many predictors
        #[arg(long = "max-k")]
        max_k: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured model and write a model file
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output model path
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
        /// Also export the holdout plan as CSV
        #[arg(long = "export-split")]
        export_split: Option<PathBuf>,
    },
    /// Evaluate a model file on the held-out validation rows
    Evaluate {
        /// Model file to evaluate
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Evaluate on: validation | working
        #[arg(long, default_value = "validation")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict a CSV of raw predictor rows with a model file
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Input CSV with the predictor columns
        #[arg(long)]
        input: PathBuf,
        /// Output CSV of (timestamp, prediction)
        #[arg(long, default_value = "predictions.csv")]
        out: PathBuf,
    },
    /// Export (index, observed, predicted) for the first validation rows
    ExportPlot {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// How many validation rows to export
        #[arg(short = 'M', long = "max-rows", default_value_t = 100)]
        max_rows: usize,
        #[arg(long, default_value = "plot.csv")]
        out: PathBuf,
    },
    /// Train flow-only backup forests and report their validation error
    FlowBackup {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Partner surrogate for the two-sensor model (defaults to the most
        /// correlated one)
        #[arg(long = "with")]
        with: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print one tree of a forest model in indented text form
    DumpTree {
        #[arg(long)]
        model: PathBuf,
        /// Tree index
        #[arg(long, default_value_t = 0)]
        tree: usize,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Summary { cfg, out } => {
            commands::cmd_summary(&cfg.resolve()?, out.as_deref())?;
        }
        Command::Correlate { cfg, raw, out } => {
            commands::cmd_correlate(&cfg.resolve()?, raw, out.as_deref())?;
        }
        Command::Select { cfg, max_k, out } => {
            commands::cmd_select(&cfg.resolve()?, max_k, out.as_deref())?;
        }
        Command::Train {
            cfg,
            out,
            export_split,
        } => {
            commands::cmd_train(&cfg.resolve()?, &out, export_split.as_deref())?;
        }
        Command::Evaluate {
            model,
            cfg,
            split,
            out,
        } => {
            let split = match split.to_ascii_lowercase().as_str() {
                "validation" => EvalSplit::Validation,
                "working" | "training" => EvalSplit::Working,
                other => {
                    return Err(CliError::usage(format!(
                        "unknown split '{other}' (expected 'validation' or 'working')"
                    )))
                }
            };
            commands::cmd_evaluate(&model, &cfg.resolve()?, split, out.as_deref())?;
        }
        Command::Predict { model, input, out } => {
            commands::cmd_predict(&model, &input, &out)?;
        }
        Command::ExportPlot {
            model,
            cfg,
            max_rows,
            out,
        } => {
            commands::cmd_export_plot(&model, &cfg.resolve()?, max_rows, &out)?;
        }
        Command::FlowBackup { cfg, with, out } => {
            let partner = with
                .map(|s| Variable::from_str(&s).map_err(CliError::Core))
                .transpose()?;
            commands::cmd_flow_backup(&cfg.resolve()?, partner, out.as_deref())?;
        }
        Command::DumpTree { model, tree } => {
            commands::cmd_dump_tree(&model, tree)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
