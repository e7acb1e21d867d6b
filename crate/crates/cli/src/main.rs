// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fbdicke_cli::{execute, load, recipes, CliError, Overrides};

#[derive(Parser)]
#[command(name = "fbdicke", version, about = "Feedback-controlled Dicke model experiments")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a bundled recipe.
    Run {
        config: String,
        /// Override the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write SVG plots.
        #[arg(long)]
        plot: bool,
    },
    /// List the bundled figure recipes.
    ListRecipes,
    /// Check a config without running it.
    Validate { config: String },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run {
            config,
            seed,
            out,
            plot,
        } => {
            let cfg = load(&config)?;
            let report = execute(&cfg, &Overrides { seed, out, plot })?;
            println!("{}", report.manifest.display());
        }
        Command::ListRecipes => {
            println!("{:<18} {:<15} {:<16} criterion", "name", "kind", "runtime");
            for (name, cfg) in recipes::all() {
                println!(
                    "{:<18} {:<15} {:<16} {}",
                    name,
                    cfg.kind.name(),
                    cfg.runtime,
                    cfg.criterion
                );
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!("ok: {} ({})", config, cfg.kind.name());
        }
    }
    Ok(())
}
