use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pris::commands;
use pris::config::Config;
use pris::error::CliResult;

#[derive(Parser)]
#[command(name = "pris", version, about = "Invertible-network image hiding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Print the validated config and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Hide a secret image in a host image.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        host: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use the per-attack model `{model}.{attack}.ckpt`.
        #[arg(long)]
        attack: Option<String>,
    },
    /// Recover the secret from a container image.
    Extract {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        container: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Enhancer set (or per-attack model) to use.
        #[arg(long)]
        attack: Option<String>,
        #[arg(long, default_value_t = 0)]
        z_seed: u64,
    },
    /// Evaluate PSNR-C / PSNR-S under a list of attacks.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        level: u8,
        #[arg(long, value_delimiter = ',', required = true)]
        attacks: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lossless 32-bit bit-packing demonstration.
    BitpackDemo {
        #[arg(long)]
        host: PathBuf,
        #[arg(long)]
        secret: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, dump_config } => {
            let cfg = Config::load(&config)?;
            if dump_config {
                print!("{}", cfg.to_toml()?);
                return Ok(());
            }
            let out = commands::train(&cfg)?;
            if let Some(r) = out.report {
                print!("{}", r.to_table());
            }
        }
        Command::Embed { model, host, secret, out, attack } => {
            let r = commands::embed(&model, &host, &secret, &out, attack.as_deref())?;
            println!("{}  {}x{}  PSNR-C {:.2} dB", out.display(), r.width, r.height, r.psnr_c);
        }
        Command::Extract { model, container, out, attack, z_seed } => {
            commands::extract(&model, &container, &out, attack.as_deref(), z_seed)?;
            println!("{}", out.display());
        }
        Command::Eval { model, data, level, attacks, out } => {
            let seed = commands::eval_seed_from_env()?;
            let r = commands::eval(&model, &data, level, &attacks, &out, seed)?;
            print!("{}", r.to_table());
        }
        Command::BitpackDemo { host, secret, out_dir } => {
            let r = commands::bitpack_demo(&host, &secret, &out_dir)?;
            println!("container  {}", r.container.display());
            println!("recovered  {} ({})", r.recovered.display(), if r.exact { "exact" } else { "MISMATCH" });
            println!("PSNR       {:.4} dB", r.psnr);
            println!("floor      {:.4} dB", r.floor);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
