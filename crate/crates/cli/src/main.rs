//! Command-line driver for the framecount pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use framecount::config::AnalysisConfig;
use framecount::{pipeline, Error};

#[derive(Parser)]
#[command(
    name = "framecount",
    version,
    about = "Scores linked-page content as episodic or thematic and models reshare counts"
)]
struct Cli {
    /// Run configuration (flat key=value file).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,

    /// Override the configured random seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Fix the topic count (disables candidate selection).
    #[arg(long, value_name = "N")]
    k: Option<usize>,

    /// Topic-count candidates to select from by held-out perplexity.
    #[arg(long = "select-k", value_name = "LIST", value_delimiter = ',')]
    select_k: Option<Vec<usize>>,

    /// Serve pages from the replay fixture instead of the network.
    #[arg(long)]
    offline: bool,

    /// Round report tables to three decimals.
    #[arg(long = "paper-style")]
    paper_style: bool,

    /// Override the configured output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Parse the archives and trim the top reshare percentile.
    Ingest,
    /// Resolve linked pages and extract their text.
    Fetch,
    /// Build the corpus and fit the topic model.
    Topics,
    /// Apply the topic labeling and compute aspect scores.
    Score,
    /// Fit the count models and run model selection.
    Fit,
    /// Emit the figure-data series.
    Report,
    /// Run every stage in order.
    Run,
}

fn load_config(cli: &Cli) -> Result<AnalysisConfig, Error> {
    let mut cfg = AnalysisConfig::from_file(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(k) = cli.k {
        cfg.topic_count = Some(k);
        cfg.topic_count_candidates.clear();
    }
    if let Some(candidates) = &cli.select_k {
        cfg.topic_count_candidates = candidates.clone();
    }
    if cli.offline {
        cfg.offline = true;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli, cfg: &AnalysisConfig) -> Result<(), Error> {
    let stages: &[Command] = match cli.command {
        Command::Run => &[
            Command::Ingest,
            Command::Fetch,
            Command::Topics,
            Command::Score,
            Command::Fit,
            Command::Report,
        ],
        single => &[single],
    };
    for stage in stages {
        match stage {
            Command::Ingest => {
                let s = pipeline::run_ingest(cfg)?;
                println!(
                    "ingest: {} posts parsed ({} malformed lines), {} of {} trimmed, {} kept",
                    s.posts_parsed,
                    s.parse_errors,
                    s.trim.n_removed,
                    s.trim.n_before,
                    s.trim.n_before - s.trim.n_removed
                );
            }
            Command::Fetch => {
                let s = pipeline::run_fetch(cfg)?;
                println!(
                    "fetch: {} distinct urls, {} newly fetched, {} resolved, {} unresolvable",
                    s.distinct_urls, s.newly_fetched, s.resolved_ok, s.unresolved
                );
            }
            Command::Topics => {
                let s = pipeline::run_topics(cfg)?;
                println!(
                    "topics: {} documents ({} parsable), vocabulary {}, {} topics",
                    s.documents, s.parsable_documents, s.vocabulary_size, s.topic_count
                );
            }
            Command::Score => {
                let s = pipeline::run_score(cfg)?;
                println!(
                    "score: {} documents scored ({} parsable)",
                    s.rows, s.parsable_rows
                );
            }
            Command::Fit => {
                let s = pipeline::run_fit(cfg, cli.paper_style)?;
                println!(
                    "fit: {} observations, {} family, dropped [{}], {} final terms",
                    s.observations,
                    s.family.name(),
                    s.dropped_terms.join(", "),
                    s.final_term_count
                );
            }
            Command::Report => {
                let s = pipeline::run_report(cfg)?;
                println!(
                    "report: {} reshare rows, {} aspect rows, {} posterior rows",
                    s.retweet_rows, s.aspect_rows, s.topic_rows
                );
            }
            Command::Run => unreachable!("run expands to its stages"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("framecount: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("framecount: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
