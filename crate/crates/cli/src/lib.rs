//! Configuration, orchestration and reporting for the `prehyp` binary.

pub mod config;
pub mod error;
pub mod presets;
pub mod report;
pub mod run;
pub mod scenario;

use std::path::{Path, PathBuf};

pub use config::{load_config, ScenarioConfig};
pub use error::CliError;
pub use run::{run, Command, Outcome, Study};

/// Loads `config_path`, runs `command` and writes the outputs. The output
/// directory is `out`, else `output.directory`, else `./out`.
pub fn execute(command: Command, config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(Outcome, PathBuf), CliError> {
    let config = load_config(config_path)?;
    let dir = match (out, &config.output) {
        (Some(d), _) => d.to_path_buf(),
        (None, Some(o)) => PathBuf::from(&o.directory),
        (None, None) => PathBuf::from("out"),
    };
    let outcome = run(command, &config, seed)?;
    report::write_outputs(&dir, &outcome.report, &outcome.timings, &outcome.csv)?;
    Ok((outcome, dir))
}
