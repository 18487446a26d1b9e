//! `hicl`: train, run, and evaluate top-down hierarchical classifiers with
//! per-node filter feature selection.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::TrainFlags;
use crate::error::CliError;

#[derive(Parser)]
#[command(
    name = "hicl",
    version,
    about = "Top-down hierarchical classification with per-node feature selection"
)]
struct Cli {
    /// Worker threads (default: all cores, or HICL_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score features, select per-node subsets, and fit the classifier
    Train {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a lossless JSON mirror of the model
        #[arg(long)]
        json_model: bool,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Predict leaf labels top-down with a trained model
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Include the per-level decision path in the output
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        one_based: bool,
    },
    /// Compute micro/macro F1, per-class F1 and level-wise errors
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Truth labels: LIBSVM data file or one leaf id per line
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Second predictions file: adds sign-test and Wilcoxon comparison
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Emit per-node feature score tables as TSV files
    ScoreFeatures {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// gini, mrmr-d, mrmr-q, or kw
        #[arg(long, default_value = "gini")]
        method: String,
        #[arg(long)]
        tfidf: bool,
        #[arg(long)]
        one_based: bool,
        #[arg(long)]
        kw_invert: bool,
    },
    /// Model memory/runtime report plus a CSV/gnuplot bundle
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// evaluation.json from `evaluate`, for level-wise error charts
        #[arg(long)]
        evaluation: Option<PathBuf>,
        /// selection.json from `train`, for per-node subset charts
        #[arg(long)]
        selection: Option<PathBuf>,
    },
    /// Training-size sweep: subsample per-class instances, compare FS
    /// against all features over repetitions
    Sweep {
        #[arg(long)]
        taxonomy: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated per-class training sizes
        #[arg(long, default_value = "5,10,25,50")]
        per_class: String,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[command(flatten)]
        flags: TrainFlags,
    },
}

fn thread_count(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("HICL_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn run(cli: Cli, threads: usize) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            taxonomy,
            data,
            out,
            json_model,
            flags,
        } => commands::train::run(&taxonomy, &data, &out, json_model, &flags, threads),
        Command::Predict {
            model,
            data,
            out,
            trace,
            one_based,
        } => commands::predict::run(&model, &data, &out, trace, one_based, threads),
        Command::Evaluate {
            predictions,
            truth,
            taxonomy,
            out,
            compare,
        } => commands::evaluate::run(
            &predictions,
            &truth,
            &taxonomy,
            &out,
            compare.as_deref(),
            threads,
        ),
        Command::ScoreFeatures {
            taxonomy,
            data,
            out,
            method,
            tfidf,
            one_based,
            kw_invert,
        } => commands::score::run(
            &taxonomy, &data, &out, &method, tfidf, one_based, kw_invert, threads,
        ),
        Command::Report {
            model,
            out,
            evaluation,
            selection,
        } => commands::report::run(
            &model,
            &out,
            evaluation.as_deref(),
            selection.as_deref(),
            threads,
        ),
        Command::Sweep {
            taxonomy,
            data,
            test_data,
            out,
            per_class,
            repeats,
            flags,
        } => commands::sweep::run(
            &taxonomy, &data, &test_data, &out, &per_class, repeats, &flags, threads,
        ),
    }
}

fn main() {
    let cli = Cli::parse();
    let threads = thread_count(cli.threads);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .expect("rayon pool initialized once");
    match run(cli, threads) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code());
        }
    }
}
