//! `dtsurv`: transform, train, evaluate, predict, synth and serve.
//!
//! Exit status is 0 on success, 2 when the input or configuration is invalid
//! and 1 for runtime failures (I/O, diverged training, geocoder outages).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dtsurv", version, about = "Discrete-time survival models from censored records")]
struct Cli {
    /// Seed for every random choice (splits, bootstrap, model initialization).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Settings file for the command: service settings for `serve`,
    /// hyperparameter overrides for `train`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Filter, encode, split and expand a table into person-month rows.
    Transform(TransformArgs),
    /// Fit a hazard model on expanded rows.
    Train(TrainArgs),
    /// Score 6/12/60-month classifiers on a test set.
    Evaluate(EvaluateArgs),
    /// Survival curve and horizon probabilities for one patient.
    Predict(PredictArgs),
    /// Generate a synthetic cohort from a spec file.
    Synth(SynthArgs),
    /// Run the HTTP prognosis service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Raw CSV (with --encoder) or an encoded dataset CSV.
    #[arg(long)]
    input: PathBuf,
    /// Cohort filter rules.
    #[arg(long)]
    filter: Option<PathBuf>,
    /// Encoder spec; without it the input must already be encoded.
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Where to write the fitted encoder (JSON).
    #[arg(long)]
    encoder_out: Option<PathBuf>,
    /// Address cache used to resolve location columns.
    #[arg(long)]
    geo_cache: Option<PathBuf>,
    /// Encoded dataset (all patients).
    #[arg(long)]
    encoded_out: Option<PathBuf>,
    /// Expanded person-month rows (training patients when splitting).
    #[arg(long)]
    expanded_out: PathBuf,
    /// Hold out this fraction of patients as a test set.
    #[arg(long, requires = "test_out")]
    test_fraction: Option<f64>,
    /// Encoded test patients.
    #[arg(long)]
    test_out: Option<PathBuf>,
    /// Rows held in memory while writing the expansion.
    #[arg(long, default_value_t = 65_536)]
    chunk_size: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Expanded rows.
    #[arg(long)]
    input: PathBuf,
    /// tree, forest, mlp or lifetable.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    kind: Option<String>,
    /// One of the published configurations, e.g. breast-rf or lung-nn.
    #[arg(long)]
    preset: Option<String>,
    /// Hyperparameter overrides, one `name value` per line.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Encoder to embed so the model accepts raw fields.
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch losses (mlp) as CSV.
    #[arg(long)]
    log_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Model files; the first is the reference for agreement and correlation.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Encoded test dataset.
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "6,12,60")]
    horizons: Vec<u32>,
    /// Report CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Patient fields as a JSON object.
    #[arg(long, conflicts_with = "row", required_unless_present = "row")]
    patient: Option<PathBuf>,
    /// CSV with a header and the patient's raw fields.
    #[arg(long)]
    row: Option<PathBuf>,
    /// Data row of --row to use (1-based).
    #[arg(long, default_value_t = 1)]
    row_index: usize,
    #[arg(long)]
    curve_out: Option<PathBuf>,
    /// Add bootstrap bands to the curve.
    #[arg(long)]
    bands: bool,
    #[arg(long, default_value_t = 10_000)]
    n_resamples: usize,
    #[arg(long, value_delimiter = ',', default_value = "6,12,60")]
    horizons: Vec<u32>,
    /// Address cache used to resolve location fields.
    #[arg(long)]
    geo_cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's patient count.
    #[arg(long)]
    patients: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Overrides the config file and DTSURV_BIND.
    #[arg(long)]
    bind: Option<std::net::SocketAddr>,
    /// Overrides the config file and DTSURV_MODEL_DIR.
    #[arg(long)]
    model_dir: Option<PathBuf>,
    #[arg(long)]
    static_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Serve(a) => commands::serve(&cli, a),
        other => {
            env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
                .format_timestamp(None)
                .init();
            match other {
                Command::Transform(a) => commands::transform(&cli, a),
                Command::Train(a) => commands::train(&cli, a),
                Command::Evaluate(a) => commands::evaluate(a),
                Command::Predict(a) => commands::predict(&cli, a),
                Command::Synth(a) => commands::synth(&cli, a),
                Command::Serve(_) => unreachable!(),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(if e.validation { 2 } else { 1 })
        }
    }
}
