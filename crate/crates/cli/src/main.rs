mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use readcheck::ErrorKind;

#[derive(Parser)]
#[command(name = "readcheck", version, about = "Audit reading-comprehension models with counterfactuals and saliency")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct DataArgs {
    /// Dataset file.
    #[arg(long)]
    pub dataset: PathBuf,
    /// unified, squad, hotpot, wiki2hop or quoref.
    #[arg(long, default_value = "unified")]
    pub format: String,
    /// supporting_facts or paragraphs.
    #[arg(long, default_value = "supporting_facts")]
    pub context_mode: String,
}

#[derive(Args, Clone)]
pub struct RunArgs {
    /// toy:<seed>, remote:<command>, oracle or frequency.
    #[arg(long, default_value = "toy:0")]
    pub model: String,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Global seed for every random choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// File of `key = value` lines supplying defaults for any flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct SaliencyArgs {
    /// occlusion or ig.
    #[arg(long, default_value = "occlusion")]
    pub method: String,
    /// l2, l1 or dot.
    #[arg(long, default_value = "l2")]
    pub summarizer: String,
    #[arg(long, default_value_t = 50)]
    pub ig_steps: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Predict answers and score F1/EM.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Counterfactual file; adds original-vs-counterfactual accuracy.
        #[arg(long)]
        cf: Option<PathBuf>,
        /// in_dist or ood, for generated antonym swaps.
        #[arg(long, default_value = "in_dist")]
        antonyms: String,
    },
    /// Compute saliency maps.
    Saliency {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        saliency: SaliencyArgs,
    },
    /// Generate antonym-swap counterfactuals for comparison questions.
    CfGenerate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// in_dist or ood.
        #[arg(long, default_value = "in_dist")]
        antonyms: String,
        /// Pick the replacement antonym at random instead of the first one.
        #[arg(long)]
        random_replacement: bool,
    },
    /// Score explanation alignment of counterfactuals and saliency.
    Align {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        saliency: SaliencyArgs,
        #[arg(long, default_value_t = readcheck::alignment::DEFAULT_ALPHA)]
        alpha: f64,
        /// Counterfactual file; antonym swaps are generated when absent.
        #[arg(long)]
        cf: Option<PathBuf>,
        /// in_dist or ood, for generated antonym swaps.
        #[arg(long, default_value = "in_dist")]
        antonyms: String,
    },
    /// Significance rate of random token partitions.
    Calibrate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        saliency: SaliencyArgs,
        #[arg(long, default_value_t = readcheck::alignment::DEFAULT_ALPHA)]
        alpha: f64,
        /// Random partitions drawn per instance.
        #[arg(long, default_value_t = 10)]
        n_partitions: usize,
    },
    /// Run the unsupervised sentence-selection baseline.
    Heuristic {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        /// token_overlap, lcs, position or sentence_encoder.
        #[arg(long, default_value = "token_overlap")]
        strategy: String,
        /// wh_mapping or learned.
        #[arg(long, default_value = "wh_mapping")]
        entity_types: String,
        #[arg(long, default_value = "rule")]
        ner: String,
        #[arg(long, default_value = "hashing")]
        embedder: String,
        #[arg(long)]
        classifier: Option<String>,
    },
    /// Answer model requests on stdin/stdout.
    #[command(hide = true)]
    Serve {
        #[arg(long, default_value = "toy:0")]
        model: String,
    },
}

fn run(cli: Cli) -> readcheck::Result<()> {
    use commands as c;
    match cli.command {
        Command::Evaluate { data, run, cf, antonyms } => c::evaluate(&data, &run, cf.as_deref(), &antonyms),
        Command::Saliency { data, run, saliency } => c::saliency(&data, &run, &saliency),
        Command::CfGenerate {
            data,
            run,
            antonyms,
            random_replacement,
        } => c::cf_generate(&data, &run, &antonyms, random_replacement),
        Command::Align {
            data,
            run,
            saliency,
            alpha,
            cf,
            antonyms,
        } => c::align(&data, &run, &saliency, alpha, cf.as_deref(), &antonyms),
        Command::Calibrate {
            data,
            run,
            saliency,
            alpha,
            n_partitions,
        } => c::calibrate(&data, &run, &saliency, alpha, n_partitions),
        Command::Heuristic {
            data,
            run,
            strategy,
            entity_types,
            ner,
            embedder,
            classifier,
        } => c::heuristic(&data, &run, &strategy, &entity_types, &ner, &embedder, classifier.as_deref()),
        Command::Serve { model } => c::serve(&model),
    }
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Input => 2,
        ErrorKind::Capability => 3,
        ErrorKind::Internal => 4,
    }
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(e.kind()));
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(id) = e.instance_id() {
                eprintln!("instance: {id}");
            }
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
