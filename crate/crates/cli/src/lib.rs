//! `hud` command-line interface.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "hud",
    version,
    about = "Hyperspectral image generation by diffusion in abundance space"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat key = value (TOML) file with settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dump_config: bool,
    #[command(flatten)]
    pub settings: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract endmembers with VCA and solve for abundances.
    Unmix(CommonArgs),
    /// Train the denoiser on latent abundance patches of one scene.
    Train(CommonArgs),
    /// Generate cubes from a checkpoint.
    Sample(CommonArgs),
    /// Score generated cubes against the real scene.
    Eval(CommonArgs),
    /// Write a pseudo-color PNG from three bands.
    ExportRgb(CommonArgs),
    /// Generate a synthetic scene with known endmembers and abundances.
    MakeSynthetic(CommonArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    let (args, action): (&CommonArgs, fn(&RunConfig) -> Result<()>) = match &cli.command {
        Command::Unmix(a) => (a, commands::unmix),
        Command::Train(a) => (a, commands::train_model),
        Command::Sample(a) => (a, commands::sample_images),
        Command::Eval(a) => (a, commands::evaluate),
        Command::ExportRgb(a) => (a, commands::export_rgb),
        Command::MakeSynthetic(a) => (a, commands::make_synthetic_scene),
    };
    let cfg = RunConfig::resolve(args.config.as_deref(), &args.settings)?;
    if args.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }
    action(&cfg)
}
