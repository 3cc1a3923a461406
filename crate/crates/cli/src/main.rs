mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use meta4::eval::{Condition, Split};

use crate::config::LoadedConfig;

/// Synthesize data, train the schema classifier and the gesture generator,
/// generate, evaluate and render pose sequences.
///
/// Relative `--out` paths are placed under `$META4_OUTPUT_ROOT` when it is set.
#[derive(Parser)]
#[command(name = "meta4", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; copied verbatim into the output directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse().map_err(|e: meta4::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: meta4::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic gesture dataset directory.
    SynthData {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        speakers: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic labeled schema corpus as `text,label` CSV.
    SynthCorpus {
        #[arg(long, default_value_t = 1400, value_parser = clap::value_parser!(u64).range(10..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the schema classifier on a `text,label` CSV corpus.
    TrainBertis {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Print the schema label and the full 14-way distribution for a text.
    Classify {
        /// Directory written by `train-bertis`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: String,
    },
    /// Train the gesture generator on a pose dataset.
    TrainMeta4 {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Classifier directory for segments without a schema override.
        #[arg(long)]
        bertis: Option<PathBuf>,
    },
    /// Generate the 64-frame pose sequence of one dataset segment.
    Generate {
        /// Directory written by `train-meta4`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        sample: String,
        /// full, is-ablated or mismatched.
        #[arg(long, default_value = "full", value_parser = parse_condition)]
        condition: Condition,
        /// Dataset to read instead of the one the run was trained on.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        bertis: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report rmse, mae, pcc and cosine per split and condition.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Only this condition (full, is-ablated or mismatched).
        #[arg(long, value_parser = parse_condition)]
        condition: Option<Condition>,
        /// Only this split (seen or unseen).
        #[arg(long, value_parser = parse_split)]
        split: Option<Split>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        bertis: Option<PathBuf>,
        /// Report directory; defaults to `<run>/evaluation`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a poses CSV as an animated SVG plus one still per frame.
    Render {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::SynthData { n, speakers, seed, out } => {
            commands::synth_data(n as usize, speakers as usize, seed, &out)
        }
        Command::SynthCorpus { n, seed, out } => commands::synth_corpus(n as usize, seed, &out),
        Command::TrainBertis { run, corpus } => {
            let cfg = LoadedConfig::load(run.config.as_deref(), run.seed)?;
            commands::train_bertis_cmd(&cfg, corpus.as_deref(), &run.out)
        }
        Command::Classify { model, text } => commands::classify(&model, &text),
        Command::TrainMeta4 { run, data, bertis } => {
            let cfg = LoadedConfig::load(run.config.as_deref(), run.seed)?;
            commands::train_meta4_cmd(&cfg, data.as_deref(), bertis.as_deref(), &run.out)
        }
        Command::Generate {
            run,
            sample,
            condition,
            data,
            bertis,
            out,
        } => commands::generate(&run, &sample, condition, data.as_deref(), bertis.as_deref(), &out),
        Command::Evaluate {
            run,
            condition,
            split,
            data,
            bertis,
            out,
        } => commands::evaluate(&run, condition, split, data.as_deref(), bertis.as_deref(), out.as_deref()),
        Command::Render { poses, out } => commands::render(&poses, &out),
    }
}
