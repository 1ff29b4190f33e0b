use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use profile_design::optimizer::Progress;
use profile_design::{run_design_search, summary_text, write_outputs, Error, RunConfig};

#[derive(Parser)]
#[command(name = "profile-design", version, about = "Bayesian optimal designs for functional models with profile factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a design search described by a JSON configuration file.
    Search {
        config: PathBuf,
        /// Output directory, overriding the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Report the objective after every sweep on stderr.
        #[arg(long)]
        progress: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else if e.is_infeasible() {
        3
    } else {
        1
    }
}

fn search(config: PathBuf, out: Option<PathBuf>, seed: Option<u64>, workers: Option<usize>, progress: bool) -> Result<(), Error> {
    let mut cfg = RunConfig::from_path(&config)?;
    if let Some(out) = out {
        // relative to the working directory, not the config file
        cfg.output.directory = std::env::current_dir()?.join(out);
    }
    if let Some(seed) = seed {
        cfg.search.seed = seed;
    }
    if let Some(workers) = workers {
        cfg.search.workers = workers;
    }
    cfg.search.progress |= progress;

    let report = |p: &Progress| {
        eprintln!("start {} sweep {}: objective {}", p.start + 1, p.sweep, p.objective);
    };
    let result = run_design_search(&cfg, cfg.search.progress.then_some(&report as _))?;
    let files = write_outputs(&result, &cfg)?;
    println!("{}", summary_text(&result, &cfg));
    eprintln!("outputs written to {}", files.manifest.parent().unwrap_or(&files.manifest).display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Search {
            config,
            out,
            seed,
            workers,
            progress,
        } => search(config, out, seed, workers, progress),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
