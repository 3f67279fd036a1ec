use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(name = "apportion", version, about = "Cost-sensitive multiclass SVM with apportioned margins")]
struct Cli {
    /// TOML file with default option values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory searched for data paths that do not exist as given.
    /// Falls back to $APPORTION_DATA_DIR, then the config file, then `data`.
    #[arg(long, global = true, value_name = "DIR")]
    data_dir: Option<PathBuf>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only warnings and errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataFormat {
    Libsvm,
    Csv,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// LIBSVM or CSV file.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,

    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<DataFormat>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// Class costs in class order, e.g. `10,10,1,1`.
    #[arg(long)]
    theta: Option<String>,

    /// apportioned, csova, cscs or csovo.
    #[arg(long)]
    method: Option<String>,

    /// linear, rbf or polynomial (apportioned only).
    #[arg(long)]
    kernel: Option<String>,

    #[arg(long)]
    gamma: Option<f64>,

    #[arg(long)]
    degree: Option<u32>,

    #[arg(long)]
    coef0: Option<f64>,

    /// Regularization strength; overrides C.
    #[arg(long, conflicts_with = "c")]
    lambda: Option<f64>,

    /// Soft-margin constant, used as lambda = 1/(n*C).
    #[arg(long)]
    c: Option<f64>,

    /// Iterations as multiples of the training-set size.
    #[arg(long, conflicts_with = "iterations")]
    epochs: Option<u64>,

    /// Exact iteration count.
    #[arg(long)]
    iterations: Option<u64>,

    /// Train on raw features instead of standardized ones.
    #[arg(long)]
    no_standardize: bool,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    /// Select C (and gamma) by cross-validated expected risk.
    #[arg(long)]
    grid: bool,

    /// Folds for the grid search.
    #[arg(long)]
    grid_folds: Option<usize>,

    /// Comma-separated C values; defaults to 2^-5, 2^-3, ..., 2^15.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,

    /// Comma-separated gamma values; defaults to 2^-15, 2^-13, ..., 2^3.
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write it to a file.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Model file to write.
        #[arg(long, short, value_name = "PATH")]
        out: PathBuf,
    },
    /// Predict class names for every point of a dataset.
    Predict {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Cross-validated expected risk and sensitivity of each method.
    Benchmark {
        /// Dataset files; names without a path are looked up in the data directory.
        #[arg(long = "data", value_name = "PATH", required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<DataFormat>,
        /// Comma-separated subset of apportioned, csova, cscs, csovo.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        /// Class whose sensitivity is reported; defaults to the costliest.
        #[arg(long)]
        important: Option<usize>,
        /// Folds for the final cross-validation.
        #[arg(long)]
        folds: Option<usize>,
        /// Write one CSV row per dataset and method instead of a table.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Write a synthetic 2-D dataset in LIBSVM format.
    Synth {
        #[arg(long, value_enum, default_value = "quadrants")]
        preset: Preset,
        #[arg(long, default_value_t = 0.6)]
        stddev: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Distance of each two-blobs centre from the origin.
        #[arg(long, default_value_t = 3.0)]
        center: f64,
        /// Output file; stdout when omitted.
        #[arg(long, short, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Evaluate a 2-D model on a uniform grid for plotting.
    BoundaryGrid {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        /// Training points, copied to the points file.
        #[command(flatten)]
        data: DataArgs,
        /// xmin,xmax,ymin,ymax
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-5.0, 5.0, -5.0, 5.0])]
        bounds: Vec<f64>,
        /// Grid points per axis.
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        /// Grid CSV with columns x1,x2,predicted_class.
        #[arg(long, short, value_name = "PATH")]
        out: PathBuf,
        /// Points CSV with columns x1,x2,label; defaults to `<out>.points.csv`.
        #[arg(long, value_name = "PATH")]
        points: Option<PathBuf>,
    },
    /// Compare the numeric population minimizer with the closed form.
    FisherCheck {
        #[arg(long, default_value_t = 500)]
        draws: usize,
    },
    /// Margins, margin bounds and norm checks of a linear model.
    Diagnose {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Quadrants,
    TwoBlobs,
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .parse_default_env()
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose, cli.quiet);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::FAILURE
        }
    }
}
