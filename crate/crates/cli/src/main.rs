use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sr_cli::config::ConfigFile;
use sr_cli::mos::{MosReportArgs, MosServeArgs, MosStatusArgs, MosStudyArgs};
use sr_cli::{DictTrainArgs, EvalArgs, PrepareArgs, RunArgs, TrainArgs};

/// Grayscale single-image super-resolution toolkit.
#[derive(Debug, Parser)]
#[command(name = "srkit", version)]
struct Cli {
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crop and bicubically degrade HR images into a paired test corpus
    Prepare(PrepareArgs),
    /// Train srcnn, srresnet or srgan
    Train(TrainArgs),
    /// Learn the coupled LR/HR dictionaries for sparse SR
    DictTrain(DictTrainArgs),
    /// Super-resolve a directory of LR images
    Run(RunArgs),
    /// PSNR/SSIM (and MOS) table over a prepared corpus
    Eval(EvalArgs),
    /// Blinded rating studies
    #[command(subcommand)]
    Mos(MosCommand),
}

#[derive(Debug, Subcommand)]
enum MosCommand {
    /// Write a study file from a prepared corpus and SR outputs
    Study(MosStudyArgs),
    /// Serve a study over HTTP
    Serve(MosServeArgs),
    /// Per-method MOS from a ratings log
    Report {
        #[command(flatten)]
        args: MosReportArgs,
        /// Print JSON instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Progress of a session on a running service
    Status(MosStatusArgs),
}

fn merged<T: Serialize + DeserializeOwned>(cfg: &ConfigFile, section: &str, flags: &T) -> anyhow::Result<T> {
    Ok(cfg.merge(section, flags)?)
}

fn print_json<T: Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting async runtime")
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Prepare(a) => {
            let m = sr_cli::prepare(&merged(&cfg, "prepare", &a)?)?;
            println!("{} pairs at {}x", m.pairs.len(), m.scale);
        }
        Command::Train(a) => print_json(&sr_cli::train(&merged(&cfg, "train", &a)?)?)?,
        Command::DictTrain(a) => print_json(&sr_cli::dict_train(&merged(&cfg, "dict-train", &a)?)?)?,
        Command::Run(a) => {
            let written = sr_cli::run(&merged(&cfg, "run", &a)?)?;
            println!("{} images written", written.len());
        }
        Command::Eval(a) => {
            let report = sr_cli::eval(&merged(&cfg, "eval", &a)?)?;
            print!("{}", sr_cli::render_table(&report));
        }
        Command::Mos(MosCommand::Study(a)) => {
            let a = merged(&cfg, "mos-study", &a)?;
            let study = sr_cli::mos::build_study(&a)?;
            if a.out.is_none() {
                print_json(&study)?;
            }
        }
        Command::Mos(MosCommand::Serve(a)) => {
            let a = merged(&cfg, "mos-serve", &a)?;
            runtime()?.block_on(sr_cli::mos::serve(&a))?;
        }
        Command::Mos(MosCommand::Report { args, json }) => {
            let r = sr_cli::mos::report(&merged(&cfg, "mos-report", &args)?)?;
            if json {
                print_json(&r)?;
            } else {
                print!("{}", sr_service::render_mos_table(&r.methods));
            }
        }
        Command::Mos(MosCommand::Status(a)) => {
            let a = merged(&cfg, "mos-status", &a)?;
            print_json(&runtime()?.block_on(sr_cli::mos::status(&a))?)?;
        }
    }
    Ok(())
}
