use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use oneshot_cli::{parse_config, run_command, SCHEMA};

#[derive(Parser)]
#[command(name = "oneshot-unsteady", version, about = "One-shot optimization with unsteady constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Only log errors.
        #[arg(long)]
        quiet: bool,
    },
    /// Print the config JSON schema.
    Schema,
}

fn init_logging(quiet: bool) {
    let level =
        if quiet { "error".to_string() } else { std::env::var("ONESHOT_LOG_LEVEL").unwrap_or_else(|_| "info".into()) };
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Schema => {
            print!("{SCHEMA}");
            ExitCode::SUCCESS
        }
        Command::Run { config, output_dir, quiet } => {
            init_logging(quiet);
            let cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            };
            let dir = output_dir.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
            match run_command(&cfg, &dir) {
                Ok(outcome) => ExitCode::from(outcome.exit_code() as u8),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
