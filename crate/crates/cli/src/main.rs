//! Subcommand front-end over the library pipeline. Exit codes: 0 on
//! success, 1 for usage or configuration problems, 2 for data problems
//! (unreadable/corrupt/mismatched files), 3 for internal errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use convernet_core::metrics::MetricKind;
use convernet_core::nn::model::AttentionKind;
use convernet_core::pipeline::{
    cmd_compare, cmd_evaluate, cmd_predict, cmd_prepare, cmd_train, CompareArgs, Corpus, EvalArgs,
    ModelKind, PrepareConfig, TrainArgs,
};
use convernet_core::Error;

#[derive(Parser)]
#[command(name = "convernet", version, about = "Predict thread-ending posts in conversations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw corpus into splits, instance caches and lookup tables
    Prepare {
        /// Corpus layout: reddit (posts files) or movie (lines + conversations)
        #[arg(long)]
        corpus: String,
        /// Input file(s); movie takes exactly two
        #[arg(long, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Sampling/split seed (overrides the config file)
        #[arg(long)]
        seed: Option<u64>,
        /// key=value lines overriding prepare defaults
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train a model on a prepared directory
    Train {
        /// Directory written by prepare
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// convernet or linear
        #[arg(long, default_value = "convernet")]
        model: String,
        /// dwdl, standard or none (network only)
        #[arg(long)]
        attention: Option<String>,
        /// Feature families to zero out, comma separated
        #[arg(long, value_delimiter = ',')]
        ablate: Vec<String>,
        /// key=value lines overriding model defaults
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score a cache with a trained model and report accuracy/AUC/MAP
    Evaluate {
        /// Two paths: the training output directory, then the instance cache
        #[arg(long, num_args = 2, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Force the artifact kind when the directory holds both
        #[arg(long)]
        model: Option<String>,
        /// Pretrained embedding file (baselines trained with one)
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Score a cache and write predictions without metrics
    Predict {
        /// Two paths: the training output directory, then the instance cache
        #[arg(long, num_args = 2, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Paired permutation test between two prediction files
    Compare {
        /// Two prediction CSVs over the same instances
        #[arg(long, num_args = 2, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// auc, accuracy or map
        #[arg(long, default_value = "auc")]
        metric: String,
        #[arg(long, default_value_t = 1000)]
        rounds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Data(_)
        | Error::Io { .. }
        | Error::Corrupt(_)
        | Error::Version { .. }
        | Error::EmptyInput(_)
        | Error::Vocab(..)
        | Error::Pairing(_)
        | Error::Metric(_) => 2,
        Error::Shape(_) | Error::Numeric(_) | Error::Tape(_) => 3,
    }
}

fn parse_eval_args(
    input: Vec<PathBuf>,
    out: PathBuf,
    model: Option<String>,
    embeddings: Option<PathBuf>,
) -> Result<EvalArgs, Error> {
    let model = model.map(|m| ModelKind::from_str(&m)).transpose()?;
    let mut input = input.into_iter();
    Ok(EvalArgs {
        model_dir: input.next().unwrap(),
        instances: input.next().unwrap(),
        out,
        model,
        embeddings,
        vocab: None,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Prepare { corpus, input, out, seed, config } => {
            let mut cfg = PrepareConfig::new(Corpus::from_str(&corpus)?);
            if let Some(path) = &config {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                cfg.apply_lines(&text)?;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let stats = cmd_prepare(&input, &out, &cfg)?;
            print!("{}", stats.to_lines());
        }
        Command::Train { input, out, model, attention, ablate, config, seed } => {
            let args = TrainArgs {
                prepared: input,
                out,
                model: ModelKind::from_str(&model)?,
                attention: attention.map(|a| AttentionKind::from_str(&a)).transpose()?,
                ablate,
                config,
                seed,
            };
            if args.model == ModelKind::Linear && args.attention.is_some() {
                return Err(Error::Config("--attention applies to the network model only".into()));
            }
            let report = cmd_train(&args)?;
            print!("{}", report.to_lines());
        }
        Command::Evaluate { input, out, model, embeddings } => {
            let report = cmd_evaluate(&parse_eval_args(input, out, model, embeddings)?)?;
            print!("{}", report.to_lines());
        }
        Command::Predict { input, out, model, embeddings } => {
            let n = cmd_predict(&parse_eval_args(input, out, model, embeddings)?)?;
            println!("predictions {n}");
        }
        Command::Compare { input, out, metric, rounds, seed } => {
            let args = CompareArgs {
                a: input[0].clone(),
                b: input[1].clone(),
                metric: MetricKind::from_str(&metric)?,
                rounds,
                seed,
                out,
            };
            let report = cmd_compare(&args)?;
            print!("{}", report.to_lines(&args.a, &args.b));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are success; everything else is usage
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
