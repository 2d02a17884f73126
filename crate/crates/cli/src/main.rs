//! `surgen`: data preparation, training, sampling and evaluation.

mod commands;
mod config;
mod exit;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use surgen::data::Profile;

use config::{resolve, Overrides};
use exit::CliError;

#[derive(Parser, Debug)]
#[command(name = "surgen", version, about = "Phase-conditioned latent video diffusion")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for checkpoints, logs, samples and reports.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dataset root.
    #[arg(long, global = true, env = "SURGEN_DATA_ROOT")]
    data_root: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Toy,
    Full,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build train/eval manifests and write their clips.
    BuildData,
    /// Train one component.
    Train {
        #[arg(value_enum)]
        component: TrainTarget,
    },
    /// Generate clips for one prompt.
    Sample {
        #[arg(long)]
        prompt: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Directory for the generated clips (default: <out>/samples).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        guidance: Option<f64>,
    },
    /// Run the evaluation protocol and write the report.
    Evaluate,
    /// Print the resolved configuration.
    Config,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TrainTarget {
    Vae,
    Denoiser,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let flags = Overrides {
        profile: cli.common.profile.map(|p| match p {
            ProfileArg::Toy => Profile::Toy,
            ProfileArg::Full => Profile::Full,
        }),
        seed: cli.common.seed,
        out: cli.common.out,
        data_root: cli.common.data_root,
    };
    let mut cfg = resolve(cli.common.config.as_deref(), &flags)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::BuildData => commands::build_data(&cfg, &mut out),
        Command::Train {
            component: TrainTarget::Vae,
        } => commands::train_vae_cmd(&cfg, &mut out),
        Command::Train {
            component: TrainTarget::Denoiser,
        } => commands::train_denoiser_cmd(&cfg, &mut out),
        Command::Sample {
            prompt,
            n,
            out_dir,
            steps,
            guidance,
        } => {
            if let Some(s) = steps {
                cfg.sample.steps = s;
            }
            if let Some(g) = guidance {
                cfg.sample.guidance = g;
            }
            commands::sample_cmd(&cfg, &prompt, n, out_dir.as_deref(), &mut out).map(|_| ())
        }
        Command::Evaluate => commands::evaluate_cmd(&cfg, &mut out).map(|_| ()),
        Command::Config => out.write_all(cfg.to_json()?.as_bytes()).map_err(CliError::internal),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
