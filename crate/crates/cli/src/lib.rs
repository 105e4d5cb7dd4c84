//! Experiment runner for `bdlab`: TOML configs, built-in presets, byte-stable outputs
//! and a JSON acceptance report.

pub mod checks;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod runner;

use std::path::{Path, PathBuf};

pub use checks::{CheckResult, CheckSpec, Relation};
pub use config::{load_config, parse_config, ExperimentConfig};
pub use error::CliError;
pub use presets::{find_preset, preset_names, presets, PRESETS};
pub use runner::{run_experiment, RunData, RunOutcome, RunStatus};

/// Environment variable overriding the output root.
pub const OUTPUT_ROOT_ENV: &str = "BDLAB_OUTPUT_ROOT";

/// `$BDLAB_OUTPUT_ROOT/<name>`, else the config's `output.dir`, else `./bdlab-output/<name>`.
pub fn default_output_dir(cfg: &ExperimentConfig) -> PathBuf {
    if let Some(root) = std::env::var_os(OUTPUT_ROOT_ENV) {
        return PathBuf::from(root).join(&cfg.name);
    }
    cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("bdlab-output").join(&cfg.name))
}

pub fn run_config_file(path: &Path, out: Option<&Path>) -> Result<RunOutcome, CliError> {
    let cfg = load_config(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| default_output_dir(&cfg));
    run_experiment(&cfg, base, &dir)
}

pub fn run_preset(name: &str, out: Option<&Path>) -> Result<RunOutcome, CliError> {
    let cfg = find_preset(name)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| default_output_dir(&cfg));
    run_experiment(&cfg, Path::new("."), &dir)
}
