//! Run configuration: a JSON document whose keys can each be overridden by a
//! kebab-case flag.

use std::path::PathBuf;

use hnca_core::harness::{AdamConfig, BanditConfig, BanditEstimator, BenchConfig, VaeConfig, VaeEstimator};
use hnca_core::Encoding;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Bandit,
    Vae,
    Verify,
    Bench,
}

impl Mode {
    pub fn subcommand(self) -> &'static str {
        match self {
            Mode::Bandit => "bandit-train",
            Mode::Vae => "vae-train",
            Mode::Verify => "verify",
            Mode::Bench => "bench",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Reinforce,
    ReinforceB,
    Hnca,
    HncaB,
    Fhnca,
    FhncaB,
    FhncaNoprune,
    FhncaFullreward,
    Rloo,
    RlooIs,
}

impl Estimator {
    pub const BANDIT: [Estimator; 4] = [Self::Reinforce, Self::ReinforceB, Self::Hnca, Self::HncaB];
    pub const VAE: [Estimator; 8] = [
        Self::Fhnca,
        Self::FhncaB,
        Self::FhncaNoprune,
        Self::FhncaFullreward,
        Self::Rloo,
        Self::RlooIs,
        Self::Reinforce,
        Self::ReinforceB,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    None,
    NoChildPruning,
    FullReward,
}

/// Every knob of a run. Absent keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub estimator: Estimator,
    /// Units per hidden (latent) layer when `widths` is not given.
    pub width: usize,
    pub depth: usize,
    /// Explicit per-layer widths; must have `depth` entries.
    pub widths: Option<Vec<usize>>,
    /// Hidden-unit alphabet. Bandit nets default to ±1; VAEs need zero-one.
    pub encoding: Option<Encoding>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    /// Defaults to 100 for bandit runs and 840 for VAE runs.
    pub epochs: Option<usize>,
    pub seed: u64,
    /// Directory holding the four MNIST IDX files (optionally gzipped).
    pub data_dir: PathBuf,
    pub baseline_discount: f64,
    pub test_samples: usize,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub ablation: Ablation,
    pub log_every: usize,
    pub record_wall_time: bool,
    /// Draws per estimator in `verify` mode.
    pub verify_samples: usize,
    pub bench_widths: Vec<usize>,
    pub bench_calls: usize,
    pub bench_trials: usize,
    /// Parent directory for run directories.
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Bandit,
            estimator: Estimator::Hnca,
            width: 200,
            depth: 1,
            widths: None,
            encoding: None,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 50,
            epochs: None,
            seed: 0,
            data_dir: PathBuf::from("data/mnist"),
            baseline_discount: 0.99,
            test_samples: 1,
            train_limit: None,
            test_limit: None,
            ablation: Ablation::None,
            log_every: 0,
            record_wall_time: false,
            verify_samples: 200_000,
            bench_widths: vec![100, 200, 400],
            bench_calls: 100,
            bench_trials: 25,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Keys accepted in the JSON document, in declaration order. Each has a flag
/// of the same name with `_` replaced by `-`.
pub fn config_keys() -> Vec<String> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Parse a flag value: JSON when it parses, a bare string otherwise.
fn flag_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()))
}

/// Build a config from an optional JSON document and flag overrides, then
/// validate it. `overrides` holds `(key, raw value)` pairs.
pub fn parse_config(document: Option<&str>, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut map = match document {
        None => Map::new(),
        Some(text) => match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(CliError::Config("the config file must hold a JSON object".into())),
            Err(e) => return Err(CliError::Config(format!("config file is not valid JSON: {e}"))),
        },
    };
    for (key, raw) in overrides {
        map.insert(key.clone(), flag_value(raw));
    }
    let cfg = from_map(map)?;
    cfg.validate()?;
    Ok(cfg)
}

fn from_map(map: Map<String, Value>) -> Result<RunConfig, CliError> {
    let value = Value::Object(map);
    serde_path_to_error::deserialize(&value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        if path == "." {
            CliError::Config(inner)
        } else {
            CliError::Config(format!("key `{path}`: {inner}"))
        }
    })
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn names(list: &[Estimator]) -> String {
    list.iter().map(|e| e.name()).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn layer_widths(&self) -> Vec<usize> {
        self.widths.clone().unwrap_or_else(|| vec![self.width; self.depth])
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    fn epochs_or_default(&self) -> usize {
        self.epochs.unwrap_or(match self.mode {
            Mode::Vae => 840,
            _ => 100,
        })
    }

    /// Whole-config checks; nothing runs and nothing is written on failure.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.depth == 0 {
            return Err(config_err("key `depth`: must be at least 1"));
        }
        if let Some(w) = &self.widths {
            if w.len() != self.depth {
                return Err(config_err(format!(
                    "key `widths`: {} entries for depth {}",
                    w.len(),
                    self.depth
                )));
            }
        }
        if self.layer_widths().contains(&0) {
            return Err(config_err("key `width`/`widths`: layer widths must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(config_err("key `learning_rate`: must be finite and non-negative"));
        }
        for (key, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(config_err(format!("key `{key}`: must lie in [0, 1), got {v}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(config_err("key `eps`: must be positive"));
        }
        if !(0.0..1.0).contains(&self.baseline_discount) {
            return Err(config_err("key `baseline_discount`: must lie in [0, 1)"));
        }
        for (key, v) in [
            ("batch_size", self.batch_size),
            ("test_samples", self.test_samples),
            ("verify_samples", self.verify_samples),
            ("bench_calls", self.bench_calls),
            ("bench_trials", self.bench_trials),
        ] {
            if v == 0 {
                return Err(config_err(format!("key `{key}`: must be positive")));
            }
        }
        if self.epochs == Some(0) {
            return Err(config_err("key `epochs`: must be positive"));
        }
        match self.mode {
            Mode::Bandit => {
                self.bandit_estimator()?;
            }
            Mode::Vae => {
                if self.encoding == Some(Encoding::PlusMinusOne) {
                    return Err(config_err(
                        "key `encoding`: VAE latents are zero-one bits; allowed values: zero-one",
                    ));
                }
                self.vae_estimator()?;
            }
            Mode::Verify => {}
            Mode::Bench => {
                if self.bench_widths.len() < 2 || self.bench_widths.contains(&0) {
                    return Err(config_err("key `bench_widths`: need at least two positive widths"));
                }
            }
        }
        if self.ablation != Ablation::None && !matches!(self.mode, Mode::Vae) {
            return Err(config_err("key `ablation`: only VAE runs have ablations"));
        }
        Ok(())
    }

    pub fn bandit_estimator(&self) -> Result<BanditEstimator, CliError> {
        Ok(match self.estimator {
            Estimator::Reinforce => BanditEstimator::Reinforce,
            Estimator::ReinforceB => BanditEstimator::ReinforceB,
            Estimator::Hnca => BanditEstimator::Hnca,
            Estimator::HncaB => BanditEstimator::HncaB,
            other => {
                return Err(config_err(format!(
                    "key `estimator`: `{}` is a VAE estimator; bandit runs support: {}",
                    other.name(),
                    names(&Estimator::BANDIT)
                )))
            }
        })
    }

    pub fn vae_estimator(&self) -> Result<VaeEstimator, CliError> {
        let base = match self.estimator {
            Estimator::Fhnca => VaeEstimator::Fhnca,
            Estimator::FhncaB => VaeEstimator::FhncaB,
            Estimator::FhncaNoprune => VaeEstimator::FhncaNoprune,
            Estimator::FhncaFullreward => VaeEstimator::FhncaFullreward,
            Estimator::Rloo => VaeEstimator::Rloo,
            Estimator::RlooIs => VaeEstimator::RlooIs,
            Estimator::Reinforce => VaeEstimator::Reinforce,
            Estimator::ReinforceB => VaeEstimator::ReinforceB,
            other => {
                return Err(config_err(format!(
                    "key `estimator`: `{}` needs a softmax head, which a VAE encoder lacks; VAE runs support: {}",
                    other.name(),
                    names(&Estimator::VAE)
                )))
            }
        };
        let est = match (self.ablation, base) {
            (Ablation::None, e) => e,
            (Ablation::NoChildPruning, VaeEstimator::Fhnca | VaeEstimator::FhncaB | VaeEstimator::FhncaNoprune) => {
                VaeEstimator::FhncaNoprune
            }
            (Ablation::FullReward, VaeEstimator::Fhnca | VaeEstimator::FhncaB | VaeEstimator::FhncaFullreward) => {
                VaeEstimator::FhncaFullreward
            }
            (a, e) => {
                return Err(config_err(format!(
                    "key `ablation`: {a:?} does not apply to estimator `{}`; allowed with fhnca, fhnca-b",
                    e.name()
                )))
            }
        };
        if est == VaeEstimator::FhncaB && self.layer_widths().len() == 1 {
            return Err(config_err(
                "key `estimator`: fhnca-b needs depth >= 2; a single latent layer has no mediated components",
            ));
        }
        Ok(est)
    }

    pub fn bandit_config(&self) -> Result<BanditConfig, CliError> {
        Ok(BanditConfig {
            widths: self.layer_widths(),
            encoding: self.encoding.unwrap_or(Encoding::PlusMinusOne),
            estimator: self.bandit_estimator()?,
            adam: self.adam(),
            batch_size: self.batch_size,
            epochs: self.epochs_or_default(),
            seed: self.seed,
            baseline_discount: self.baseline_discount,
            test_samples: self.test_samples,
            train_limit: self.train_limit,
            test_limit: self.test_limit,
            log_every: self.log_every,
            record_wall_time: self.record_wall_time,
        })
    }

    pub fn vae_config(&self) -> Result<VaeConfig, CliError> {
        Ok(VaeConfig {
            widths: self.layer_widths(),
            estimator: self.vae_estimator()?,
            adam: self.adam(),
            batch_size: self.batch_size,
            epochs: self.epochs_or_default(),
            seed: self.seed,
            baseline_discount: self.baseline_discount,
            test_samples: self.test_samples,
            train_limit: self.train_limit,
            test_limit: self.test_limit,
            log_every: self.log_every,
            record_wall_time: self.record_wall_time,
        })
    }

    pub fn bench_config(&self) -> BenchConfig {
        BenchConfig {
            widths: self.bench_widths.clone(),
            depth: self.depth,
            encoding: self.encoding.unwrap_or(Encoding::PlusMinusOne),
            calls: self.bench_calls,
            trials: self.bench_trials,
            seed: self.seed,
            ..BenchConfig::default()
        }
    }

    /// Pretty JSON with every key spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
