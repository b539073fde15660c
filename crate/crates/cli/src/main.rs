//! `ea`: synthetic-data generation, training and evaluation of the pose
//! regressor from one TOML run configuration.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{LoadedConfig, Overrides};
use crate::error::CliResult;

#[derive(Parser)]
#[command(name = "ea", version, about = "Expected-appearance pose registration pipeline")]
struct Cli {
    /// More log output (repeat for trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set regressor.epochs=20`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel worker cap.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    output_root: Option<PathBuf>,
}

impl Common {
    fn load(&self, epochs: Option<usize>) -> CliResult<LoadedConfig> {
        let ov = Overrides {
            set: self.set.clone(),
            seed: self.seed,
            workers: self.workers,
            run_id: self.run_id.clone(),
            output_root: self.output_root.clone(),
            epochs,
        };
        LoadedConfig::load(self.config.as_deref(), &ov)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render labels, synthesize textured views and write the case dataset.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Train the pose regressor on the dataset and save the model bundle.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score the saved model and write the accuracy-threshold curve.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// External pose file to compare, `name=path.csv` (id,rx,ry,rz,tx,ty,tz).
        #[arg(long, value_name = "NAME=CSV")]
        external: Vec<String>,
    },
    /// Leave-one-texture-out cross-validation.
    Loto {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Accuracy against the number of training textures.
    Ablation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Print the pose of one RGB PNG as `rx ry rz tx ty tz`.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: PathBuf,
        /// Model bundle directory; `<output_root>/model` by default.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Draw ground-truth (green) and predicted (blue) poses over a sample.
    Overlay {
        #[command(flatten)]
        common: Common,
        /// Sample id from the dataset manifest.
        #[arg(long)]
        sample: String,
        /// Predicted pose as six numbers; the saved model predicts when omitted.
        #[arg(long, allow_hyphen_values = true)]
        pred_pose: Option<String>,
        #[arg(long, default_value_t = 0.6)]
        opacity: f32,
        /// Paint the whole silhouette instead of the vessels.
        #[arg(long)]
        silhouette: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a procedural dome case (mesh, textures, config.toml).
    DemoCase {
        #[arg(long)]
        out: PathBuf,
        /// Reduced profile: 20 poses, 4 textures, 30 epochs.
        #[arg(long)]
        smoke: bool,
    },
}

fn command_with_field_help() -> clap::Command {
    use crate::config::*;
    let pairs: [(&str, &[&str]); 7] = [
        ("gen-data", GEN_DATA_FIELDS),
        ("train", TRAIN_FIELDS),
        ("evaluate", EVALUATE_FIELDS),
        ("loto", LOTO_FIELDS),
        ("ablation", ABLATION_FIELDS),
        ("predict", PREDICT_FIELDS),
        ("overlay", OVERLAY_FIELDS),
    ];
    let mut cmd = Cli::command();
    for (name, fields) in pairs {
        let help = fields_help(fields);
        cmd = cmd.mut_subcommand(name, move |c| c.after_help(help));
    }
    cmd
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { common } => commands::gen_data(&common.load(None)?),
        Command::Train { common, epochs } => commands::train(&common.load(epochs)?),
        Command::Evaluate { common, external } => {
            let ext = external.iter().map(|s| commands::parse_external(s)).collect::<CliResult<Vec<_>>>()?;
            commands::evaluate(&common.load(None)?, &ext)
        }
        Command::Loto { common, epochs } => commands::loto(&common.load(epochs)?),
        Command::Ablation { common, epochs } => commands::ablation(&common.load(epochs)?),
        Command::Predict { common, image, model } => commands::predict(&common.load(None)?, &image, model.as_deref()),
        Command::Overlay {
            common,
            sample,
            pred_pose,
            opacity,
            silhouette,
            out,
        } => commands::overlay(
            &common.load(None)?,
            &commands::OverlayArgs {
                sample: &sample,
                pred_pose: pred_pose.as_deref(),
                opacity,
                silhouette,
                out: out.as_deref(),
            },
        ),
        Command::DemoCase { out, smoke } => {
            let profile = if smoke { commands::DEMO_SMOKE } else { commands::DEMO_FULL };
            let path = commands::demo_case(&out, profile)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let matches = command_with_field_help().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
