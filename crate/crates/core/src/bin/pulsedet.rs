use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pulsedet::pipeline::commands::{
    cmd_calibrate, cmd_combine, cmd_cov, cmd_eval, cmd_gen, cmd_gen_stream, cmd_localize, cmd_pipeline, cmd_roc,
    cmd_search, cmd_train,
};
use pulsedet::pipeline::{Context, ExperimentConfig};
use pulsedet::Result;

#[derive(Parser)]
#[command(name = "pulsedet", version, about = "Wavelet + linear SVM pulse detection experiments")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the effective config as TOML.
    PrintConfig,
    /// Record training-set seeds and digests.
    Gen {
        /// Also write the feature rows of every training set.
        #[arg(long)]
        materialize: bool,
    },
    /// Train one SVM per shift.
    Train,
    /// Set thresholds for the target false-alarm rate.
    Calibrate,
    /// Monte Carlo P_fa and P_d per detector.
    Eval,
    /// Score covariance under pulse and noise.
    Cov,
    /// ROC points per detector.
    Roc,
    /// Train and evaluate the score combiner.
    Combine,
    /// Firing positions around embedded pulses.
    Localize,
    /// Write a noise stream with one embedded pulse.
    GenStream,
    /// Run the detector bank over a single-column stream CSV.
    Search {
        /// Stream file to search.
        stream: PathBuf,
    },
    /// All stages in order plus a summary.
    Pipeline {
        #[arg(long)]
        materialize: bool,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    if let Command::PrintConfig = cli.command {
        config.validate()?;
        print!("{}", config.to_toml());
        return Ok(Vec::new());
    }
    let ctx = Context::new(config, cli.workers)?;
    ctx.run(|| match &cli.command {
        Command::PrintConfig => unreachable!(),
        Command::Gen { materialize } => cmd_gen(&ctx, *materialize),
        Command::Train => cmd_train(&ctx),
        Command::Calibrate => cmd_calibrate(&ctx),
        Command::Eval => cmd_eval(&ctx).map(|r| r.1),
        Command::Cov => cmd_cov(&ctx).map(|r| r.2),
        Command::Roc => cmd_roc(&ctx).map(|r| r.1),
        Command::Combine => cmd_combine(&ctx).map(|r| r.1),
        Command::Localize => cmd_localize(&ctx).map(|r| r.1),
        Command::GenStream => cmd_gen_stream(&ctx),
        Command::Search { stream } => cmd_search(&ctx, stream).map(|r| r.2),
        Command::Pipeline { materialize } => cmd_pipeline(&ctx, *materialize).map(|r| r.1),
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
