//! `latesearch`: build token indexes, run searches, evaluate runs.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "latesearch", version, about = "Late-interaction token retrieval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Config file of `key = value` lines under `[section]` headers.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `retrieval.nprobe=16`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Index directory (`paths.index`).
    #[arg(long)]
    index: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment, encode and index a JSONL corpus.
    Index {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Corpus file (`paths.corpus`).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Replace an existing index directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Run every topic against an index and write a TREC run.
    Search {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Topics file (`paths.topics`).
        #[arg(long)]
        topics: Option<PathBuf>,
        /// Query form: t (title), d (description) or td (both).
        #[arg(long, default_value = "td")]
        form: String,
        /// Expand each query with pseudo-relevance feedback.
        #[arg(long)]
        prf: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run tag written in the last column.
        #[arg(long, default_value = "latesearch")]
        tag: String,
    },
    /// MAP per run and Holm-corrected paired t-tests between runs.
    Eval {
        /// Relevance judgements.
        #[arg(long)]
        qrels: PathBuf,
        /// Family-wise significance level.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Run files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
    },
    /// Storage footprint of an index.
    Footprint {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LATESEARCH_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("LATESEARCH_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} worker threads: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Index {
            cfg,
            corpus,
            overwrite,
        } => {
            let mut c = commands::resolve(&cfg)?;
            if let Some(p) = corpus {
                c.paths.corpus = Some(p);
            }
            commands::index(&c, overwrite)
        }
        Command::Search {
            cfg,
            topics,
            form,
            prf,
            out,
            tag,
        } => {
            let mut c = commands::resolve(&cfg)?;
            if let Some(p) = topics {
                c.paths.topics = Some(p);
            }
            let form = form.parse().map_err(CliError::usage)?;
            commands::search(&c, form, prf, out.as_deref(), &tag)
        }
        Command::Eval { qrels, alpha, runs } => commands::eval(&qrels, alpha, &runs),
        Command::Footprint { cfg } => commands::footprint(&commands::resolve(&cfg)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("latesearch: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
