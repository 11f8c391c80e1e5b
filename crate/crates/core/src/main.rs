use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mscl::cli;
use mscl::dataset::SyntheticConfig;

#[derive(Parser)]
#[command(name = "mscl", version, about = "Contrastive top-k recommendation with MF and LightGCN encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint of final embeddings.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value_t = 20)]
        k: usize,
        /// CSV report path; defaults to eval.csv next to the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients against finite differences.
    Gradcheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, hide = true)]
        corrupt_scale: Option<f64>,
    },
    /// Write a block-structured synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2020)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        blocks: usize,
        #[arg(long, default_value_t = 50)]
        users_per_block: usize,
        #[arg(long, default_value_t = 40)]
        items_per_block: usize,
        #[arg(long, default_value_t = 0.8)]
        density: f64,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let code = match Cli::parse().command {
        Command::Train { config, out, seed } => cli::cmd_train(&config, out.as_deref(), seed),
        Command::Eval {
            checkpoint,
            train,
            test,
            k,
            out,
        } => cli::cmd_eval(&checkpoint, &train, &test, k, out.as_deref()),
        Command::Gradcheck {
            config,
            trials,
            corrupt_scale,
        } => cli::cmd_gradcheck(&config, trials, corrupt_scale),
        Command::Synth {
            out,
            seed,
            blocks,
            users_per_block,
            items_per_block,
            density,
            noise,
            holdout,
        } => {
            let params = SyntheticConfig {
                num_blocks: blocks,
                users_per_block,
                items_per_block,
                in_block_density: density,
                noise_density: noise,
                holdout_fraction: holdout,
            };
            cli::cmd_synth(&params, &out, seed)
        }
    };
    ExitCode::from(code as u8)
}
