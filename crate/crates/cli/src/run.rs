use std::fs;
use std::path::{Path, PathBuf};

use hnca_core::fhnca::save_vae;
use hnca_core::harness::{bandit_train, bench_timing, vae_train, Dataset, Split};
use hnca_core::netcore::snapshot::save_net;
use hnca_core::oracle::suite::run_suite;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Mode, RunConfig};
use crate::CliError;

/// What a finished run left behind.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: Value,
}

/// First 8 hex digits of the SHA-256 of the resolved config, ignoring the
/// seed and the output location.
pub fn config_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.seed = 0;
    c.out_dir = PathBuf::new();
    let digest = Sha256::digest(c.to_json().as_bytes());
    hex::encode(&digest[..4])
}

pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join(format!(
        "{}-{}-seed{}",
        cfg.mode.subcommand(),
        config_digest(cfg),
        cfg.seed
    ))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Core(io_err(path, e)))
}

fn io_err(path: &Path, e: std::io::Error) -> hnca_core::Error {
    hnca_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn create_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = run_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| CliError::Core(io_err(&dir, e)))?;
    write(&dir.join("resolved-config.json"), cfg.to_json())?;
    Ok(dir)
}

fn write_report(dir: &Path, report: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).map_err(hnca_core::Error::from)? + "\n";
    write(&dir.join("report.json"), text)
}

fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    Ok((
        Dataset::load_mnist(&cfg.data_dir, Split::Train)?,
        Dataset::load_mnist(&cfg.data_dir, Split::Test)?,
    ))
}

/// Execute a validated config and write its artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    match cfg.mode {
        Mode::Bandit => {
            let bc = cfg.bandit_config()?;
            let (train, test) = load_data(cfg)?;
            let dir = create_dir(cfg)?;
            let out = bandit_train(&bc, &train, &test)?;
            out.metrics.write_csv(dir.join("metrics.csv"))?;
            save_net(&out.net, &dir.join("model"))?;
            let report = json!({
                "mode": cfg.mode,
                "estimator": cfg.estimator,
                "widths": bc.widths,
                "steps": out.metrics.last().map_or(0, |r| r.step),
                "final": out.metrics.last(),
            });
            write_report(&dir, &report)?;
            Ok(RunOutcome { dir, report })
        }
        Mode::Vae => {
            let vc = cfg.vae_config()?;
            let (train, test) = load_data(cfg)?;
            let dir = create_dir(cfg)?;
            let out = vae_train(&vc, &train, &test)?;
            out.metrics.write_csv(dir.join("metrics.csv"))?;
            save_vae(&out.vae, &dir.join("model"))?;
            let report = json!({
                "mode": cfg.mode,
                "estimator": vc.estimator,
                "widths": vc.widths,
                "steps": out.metrics.last().map_or(0, |r| r.step),
                "final": out.metrics.last(),
            });
            write_report(&dir, &report)?;
            Ok(RunOutcome { dir, report })
        }
        Mode::Verify => {
            let dir = create_dir(cfg)?;
            let suite = run_suite(cfg.verify_samples, cfg.seed)?;
            let report = serde_json::to_value(&suite).map_err(hnca_core::Error::from)?;
            write_report(&dir, &report)?;
            if !suite.pass {
                return Err(CliError::Gate(format!(
                    "verification gates failed; see {}",
                    dir.join("report.json").display()
                )));
            }
            Ok(RunOutcome { dir, report })
        }
        Mode::Bench => {
            let dir = create_dir(cfg)?;
            let bench = bench_timing(&cfg.bench_config())?;
            write(&dir.join("bench.txt"), bench.to_table())?;
            let report = serde_json::to_value(&bench).map_err(hnca_core::Error::from)?;
            write_report(&dir, &report)?;
            Ok(RunOutcome { dir, report })
        }
    }
}
