use std::path::PathBuf;
use std::process::ExitCode;

use bdlab_cli::output::fmt_f64;
use bdlab_cli::{presets, run_config_file, run_preset, CliError, RunOutcome};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bdlab", version, about = "Becker-Döring polarization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML file.
    Run {
        config: PathBuf,
        /// Output directory (default: $BDLAB_OUTPUT_ROOT/<name> or ./bdlab-output/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in preset.
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List built-in presets whose name contains FILTER.
    ListPresets {
        #[arg(default_value = "")]
        filter: String,
    },
}

fn report(outcome: &RunOutcome) {
    for c in &outcome.checks {
        let rel = serde_json::to_value(c.relation).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        println!(
            "{} {} {} {rel} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            fmt_f64(c.measured),
            fmt_f64(c.threshold)
        );
    }
    for e in &outcome.errors {
        eprintln!("error: {e}");
    }
    println!("{}: outputs in {}", outcome.name, outcome.dir.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result: Result<Option<RunOutcome>, CliError> = match cli.command {
        Command::Run { config, out } => run_config_file(&config, out.as_deref()).map(Some),
        Command::Preset { name, out } => run_preset(&name, out.as_deref()).map(Some),
        Command::ListPresets { filter } => {
            for cfg in presets(&filter) {
                println!("{:<30} {}", cfg.name, cfg.description);
            }
            Ok(None)
        }
    };
    match result {
        Ok(Some(outcome)) => {
            report(&outcome);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bdlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
