use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imgspread_cli::fixture::{write_fixture, CONFIG_FILE};
use imgspread_cli::{Outcome, Pipeline, PipelineConfig, PipelineError, Stage};

/// Image-dissemination analytics pipeline.
#[derive(Parser)]
#[command(name = "imgspread", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Pipeline config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Rebuild even if the recorded config or inputs match.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Perceptual-hash every image in the corpus.
    Hash(StageArgs),
    /// Group hashes into near-duplicate clusters.
    Cluster(StageArgs),
    /// Fetch entity/URL annotations for each cluster medoid.
    Annotate(StageArgs),
    /// Build cluster-similarity and entity-domain graphs with communities.
    Graph(StageArgs),
    /// Ingest and filter cross-community image occurrences.
    Events(StageArgs),
    /// Fit one Hawkes model per pHash.
    Fit(StageArgs),
    /// Write tables, influence/efficiency matrices and rankings.
    Report(StageArgs),
    /// Run every stage in order, skipping those already up to date.
    All(StageArgs),
    /// Show each stage's state against the current config.
    Status {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Write the synthetic fixture and a config for it into DIR.
    Fixture {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run_stages(args: &StageArgs, stages: &[Stage]) -> Result<(), PipelineError> {
    let pipeline = Pipeline::new(PipelineConfig::load(&args.config)?, args.force);
    for &s in stages {
        match pipeline.run(s)? {
            Outcome::Ran => println!("{}: done", s.name()),
            Outcome::UpToDate => println!("{}: up to date", s.name()),
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Hash(a) => run_stages(&a, &[Stage::Hash]),
        Command::Cluster(a) => run_stages(&a, &[Stage::Cluster]),
        Command::Annotate(a) => run_stages(&a, &[Stage::Annotate]),
        Command::Graph(a) => run_stages(&a, &[Stage::Graph]),
        Command::Events(a) => run_stages(&a, &[Stage::Events]),
        Command::Fit(a) => run_stages(&a, &[Stage::Fit]),
        Command::Report(a) => run_stages(&a, &[Stage::Report]),
        Command::All(a) => run_stages(&a, &Stage::ALL),
        Command::Status { config } => {
            let pipeline = Pipeline::new(PipelineConfig::load(&config)?, false);
            for s in Stage::ALL {
                println!("{:<9} {:?}", s.name(), pipeline.status(s)?);
            }
            Ok(())
        }
        Command::Fixture { dir, seed } => {
            let truth = write_fixture(&dir, seed)?;
            println!(
                "wrote fixture to {} ({} series); run `imgspread all --config {}`",
                dir.display(),
                truth.series.len(),
                dir.join(CONFIG_FILE).display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
