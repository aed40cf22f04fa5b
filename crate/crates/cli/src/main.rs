use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use ckbias::commands;
use ckbias::config::{Overrides, RunConfig};
use ckbias_core::metrics::RatioSource;
use ckbias_core::templates::Verb;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ckbias",
    version,
    about = "Gender-bias fluctuation analysis over pre-training checkpoints"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "ckbias.toml")]
    config: PathBuf,
    /// Never touch the network; serve Ngram data from fixtures or cache.
    #[arg(long, global = true)]
    offline: bool,
    /// Plateau start applied to every model instead of the profile's.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Restrict to one verb ("is" or "works as").
    #[arg(long, global = true)]
    verb: Option<Verb>,
    /// Restrict to one ratio source.
    #[arg(long, global = true, value_parser = ["normalized", "unnormalized"])]
    source: Option<String>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the probe template manifest for each model.
    Templates,
    /// Run the analyses and write the report bundle.
    Analyze,
    /// Estimate corpus frequencies for every profession.
    Freq,
    /// Re-render figures from an existing report.
    Report,
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        offline: cli.offline,
        k: cli.k,
        verb: cli.verb,
        source: cli
            .source
            .as_deref()
            .map(str::parse::<RatioSource>)
            .transpose()
            .map_err(anyhow::Error::msg)?,
        out: cli.out,
    };
    let cfg = RunConfig::load(&cli.config, &overrides)?;
    match cli.command {
        Command::Templates => {
            for path in commands::cmd_templates(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Analyze => {
            let report = commands::cmd_analyze(&cfg)?;
            println!(
                "{} analyses written to {}",
                report.analyses.len(),
                cfg.out_dir().join("report").display()
            );
        }
        Command::Freq => {
            for table in commands::cmd_freq(&cfg)? {
                println!(
                    "{}: {} professions",
                    table.case_mode,
                    table.professions.len()
                );
            }
        }
        Command::Report => {
            let written = commands::cmd_report(cfg.out_dir())?;
            println!("{} figure files written", written.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
