//! Command-line front end: configuration, run directories and dispatch to
//! the training, verification and timing drivers.

pub mod config;
pub mod run;

pub use config::{config_keys, flag_name, parse_config, Ablation, Estimator, Mode, RunConfig};
pub use run::{config_digest, run, run_dir, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hnca_core::Error),
    #[error("{0}")]
    Gate(String),
}

impl CliError {
    /// 2 for configuration problems, 3 for numeric failures (including failed
    /// verification gates), 4 for I/O and file-format problems.
    pub fn exit_code(&self) -> i32 {
        use hnca_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Gate(_) => 3,
            CliError::Core(e) => match e {
                E::Config(_) | E::Size { .. } => 2,
                E::Numeric { .. } => 3,
                E::Format { .. } | E::Io { .. } | E::Json(_) => 4,
            },
        }
    }
}

/// Resolve the config for a subcommand: the optional file, then flags, with
/// the mode fixed by the subcommand.
pub fn resolve(mode: Mode, document: Option<&str>, flags: &[(String, String)]) -> Result<RunConfig, CliError> {
    if let Some(text) = document {
        if let Ok(serde_json::Value::Object(m)) = serde_json::from_str::<serde_json::Value>(text) {
            if let Some(v) = m.get("mode") {
                let want = serde_json::to_value(mode).expect("mode serializes");
                if *v != want {
                    return Err(CliError::Config(format!(
                        "key `mode`: config file says {v} but the subcommand is {}",
                        mode.subcommand()
                    )));
                }
            }
        }
    }
    let mut all = flags.to_vec();
    all.push(("mode".into(), serde_json::to_string(&mode).expect("mode serializes")));
    parse_config(document, &all)
}
