//! Command-line entry point: data generation, training, batch scoring,
//! evaluation, boundary recalibration, and the HTTP scoring endpoint.
//!
//! Exit codes: 0 success, 1 rejected input (bad arguments, malformed data,
//! incompatible artifact), 2 runtime failure (IO, numeric breakdown).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wincast::ingest::parse_records_path;
use wincast::metrics::render_comparison;
use wincast::pipeline::{
    load_artifact, recalibrate, run_ml_pipeline, run_prediction_pipeline, save_artifact,
    BoundarySource, TrainOptions,
};
use wincast::synth::{generate, SynthConfig};
use wincast::{Error, Result};

#[derive(Parser)]
#[command(
    name = "wincast",
    version,
    about = "Win-probability forecasting for B2B sales opportunities",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic opportunity-history CSV
    GenData(GenDataArgs),
    /// Train an ensemble artifact from a history CSV
    Train(TrainArgs),
    /// Score records with a trained artifact and write a report CSV
    Predict(PredictArgs),
    /// Compare ML and user forecasts on closed records
    Evaluate(EvaluateArgs),
    /// Refit only the decision boundaries of an existing artifact
    Calibrate(CalibrateArgs),
    /// Serve scoring over HTTP (GET /health, POST /score)
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Number of records to generate
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target mean win probability
    #[arg(long, default_value_t = 0.58)]
    won_prior: f64,
    /// Latent signal strength; 0 means coin-flip outcomes
    #[arg(long, default_value_t = 3.0)]
    signal: f64,
    /// Fraction of records with one field blanked
    #[arg(long, default_value_t = 0.009)]
    missing_rate: f64,
    /// Noise sigma on the human probability estimate
    #[arg(long, default_value_t = 0.4)]
    noise: f64,
    /// Fraction of records left open (no outcome)
    #[arg(long, default_value_t = 0.0)]
    open: f64,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// History CSV with closed opportunities
    #[arg(long)]
    data: PathBuf,
    /// Seed for the train/test split and fold partition
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    /// Cross-validation folds for member weighting
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Which split feeds boundary calibration
    #[arg(long, value_enum, default_value_t = SplitChoice::Train)]
    calibrate_on: SplitChoice,
    /// Optional path for the cross-validation report CSV
    #[arg(long)]
    cv_report: Option<PathBuf>,
    /// Optional timestamp recorded in the artifact (omitting it keeps
    /// artifacts byte-identical across reruns)
    #[arg(long)]
    timestamp: Option<String>,
    /// Output artifact path (single JSON file)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// CSV of records to score
    #[arg(long)]
    data: PathBuf,
    /// Trained artifact
    #[arg(long)]
    model: PathBuf,
    /// Output report CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// CSV containing closed records (won/lost)
    #[arg(long)]
    data: PathBuf,
    /// Trained artifact
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Trained artifact to recalibrate
    #[arg(long)]
    model: PathBuf,
    /// History CSV to calibrate against
    #[arg(long)]
    data: PathBuf,
    /// Which replayed split feeds calibration
    #[arg(long, value_enum)]
    on: SplitChoice,
    /// Output path; defaults to overwriting --model
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Trained artifact
    #[arg(long)]
    model: PathBuf,
    /// Bind address (port 0 picks an ephemeral port)
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitChoice {
    Train,
    Test,
}

impl From<SplitChoice> for BoundarySource {
    fn from(choice: SplitChoice) -> Self {
        match choice {
            SplitChoice::Train => BoundarySource::Train,
            SplitChoice::Test => BoundarySource::Test,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are successful exits; everything else is
            // invalid usage.
            let code = if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(args) => {
            let config = SynthConfig {
                n_records: args.n,
                seed: args.seed,
                won_prior: args.won_prior,
                signal_strength: args.signal,
                missing_rate: args.missing_rate,
                noise_user_prediction: args.noise,
                open_fraction: args.open,
                ..SynthConfig::default()
            };
            let rs = generate(&config)?;
            wincast::ingest::write_records_path(&rs, &args.out)?;
            println!("wrote {} records to {}", rs.len(), args.out.display());
            Ok(())
        }
        Command::Train(args) => {
            let options = TrainOptions {
                seed: args.seed,
                train_fraction: args.train_fraction,
                cv_folds: args.folds,
                boundary_source: args.calibrate_on.into(),
                timestamp: args.timestamp,
            };
            let outcome = run_ml_pipeline(&args.data, &options)?;
            for warning in &outcome.warnings {
                eprintln!("warning: {warning}");
            }
            let meta = &outcome.artifact.training_metadata;
            if let Some(path) = &args.cv_report {
                fs::write(path, meta.cv_report.to_csv()).map_err(|e| Error::io(path, e))?;
                println!("cross-validation report written to {}", path.display());
            }
            save_artifact(&outcome.artifact, &args.out)?;
            println!(
                "trained {} members on {} closed records ({} train / {} test)",
                outcome.artifact.ensemble.members.len(),
                meta.n_closed,
                meta.n_train,
                meta.n_test
            );
            println!(
                "held-out accuracy {:.4}, AUC {}",
                meta.test_metrics.accuracy,
                meta.test_metrics
                    .auc
                    .map_or("undefined".to_string(), |a| format!("{a:.4}"))
            );
            println!(
                "artifact saved to {} (fingerprint {})",
                args.out.display(),
                outcome.artifact.fingerprint()
            );
            Ok(())
        }
        Command::Predict(args) => {
            let artifact = load_artifact(&args.model)?;
            let report = run_prediction_pipeline(&args.data, &artifact)?;
            fs::write(&args.out, report.to_csv()).map_err(|e| Error::io(&args.out, e))?;
            println!(
                "scored {} records to {}",
                report.rows.len(),
                args.out.display()
            );
            Ok(())
        }
        Command::Evaluate(args) => {
            let artifact = load_artifact(&args.model)?;
            // Evaluation reads history, so incomplete rows are dropped the
            // same way training drops them (predict, by contrast, insists on
            // complete scoring batches).
            let rs = parse_records_path(&args.data).map_err(|e| e.in_stage("ingest"))?;
            let (complete, dropped) = wincast::ingest::drop_missing(&rs);
            if dropped > 0 {
                eprintln!("warning: skipped {dropped} incomplete records");
            }
            let report = wincast::pipeline::predict_records(&complete, &artifact)?;
            match (&report.ml_metrics, &report.user_metrics) {
                (Some(ml), user) => {
                    print!("{}", render_comparison(ml, user.as_ref()));
                    Ok(())
                }
                _ => Err(Error::Config(
                    "no closed records to evaluate against".to_string(),
                )),
            }
        }
        Command::Calibrate(args) => {
            let artifact = load_artifact(&args.model)?;
            let rs = parse_records_path(&args.data).map_err(|e| e.in_stage("ingest"))?;
            let updated = recalibrate(&artifact, &rs, args.on.into())?;
            let out = args.out.unwrap_or(args.model);
            save_artifact(&updated, &out)?;
            println!(
                "boundaries recalibrated on the {} split, saved to {}",
                match args.on {
                    SplitChoice::Train => "train",
                    SplitChoice::Test => "test",
                },
                out.display()
            );
            Ok(())
        }
        Command::Serve(args) => {
            let artifact = load_artifact(&args.model)?;
            let server = wincast::serve::serve(artifact, &args.addr)?;
            println!(
                "serving on http://{} (GET /health, POST /score)",
                server.addr()
            );
            server.join();
            Ok(())
        }
    }
}
