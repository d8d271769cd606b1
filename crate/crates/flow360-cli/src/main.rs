//! Command-line frontend for the `flow360` library.
//!
//! Every long option can also come from a `--config` key=value file
//! (flags win). `--print-config` shows the merged settings without
//! running; `FLOW360_LOG` controls log verbosity. Exit codes: 0 on
//! success, 2 for usage or config problems, 3 for i/o failures, 4 for
//! malformed or inconsistent data.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "flow360",
    version,
    about = "Optical-flow toolkit for 360-degree video: synthetic spheres, \
             spherical augmentation, wrap-aware warping, occlusion masks, \
             endpoint-error metrics, and row-group convolution fitting"
)]
pub(crate) struct Cli {
    /// Key=value file supplying defaults for any long option.
    #[arg(long, global = true, value_name = "PATH")]
    pub(crate) config: Option<PathBuf>,
    /// Worker threads for batch work (0 = one per core).
    #[arg(long, global = true, value_name = "N")]
    pub(crate) jobs: Option<usize>,
    /// Treat config keys the command does not understand as errors.
    #[arg(long, global = true)]
    pub(crate) strict: bool,
    /// Print the effective settings for the command and exit.
    #[arg(long, global = true)]
    pub(crate) print_config: bool,
    #[command(subcommand)]
    pub(crate) command: Command,
}

#[derive(Subcommand)]
pub(crate) enum Command {
    /// Render a procedural sphere texture, a rotated copy, and the exact
    /// rotation flow between them.
    Synth(commands::SynthArgs),
    /// Re-project images and flow fields through the forward spherical
    /// augmentation.
    Augment(commands::AugmentArgs),
    /// Backward-warp an image by a forward flow.
    Warp(commands::WarpArgs),
    /// Derive occlusion masks from a forward/backward flow pair.
    Occlusion(commands::OcclusionArgs),
    /// Endpoint-error metrics between two flow files, as JSON lines.
    Eval(commands::EvalArgs),
    /// Render a flow field as a color-wheel image.
    Colorize(commands::ColorizeArgs),
    /// Fit per-row-group kernel projection matrices on synthetic
    /// spherical data.
    Fit(commands::FitArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLOW360_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(err) = commands::run(cli) {
        eprintln!("error: {err}");
        process::exit(err.code());
    }
}
