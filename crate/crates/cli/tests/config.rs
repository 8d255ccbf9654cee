use std::process::Command;

use hnca_cli::{parse_config, resolve, run, CliError, Estimator, Mode, RunConfig};

fn parse(doc: &str) -> Result<RunConfig, CliError> {
    parse_config(Some(doc), &[])
}

fn config_message(r: Result<RunConfig, CliError>) -> String {
    match r {
        Err(e @ CliError::Config(_)) => {
            assert_eq!(e.exit_code(), 2);
            e.to_string()
        }
        other => panic!("expected a configuration error, got {other:?}"),
    }
}

#[test]
fn bandit_defaults() {
    let c = parse(r#"{"mode":"bandit","estimator":"hnca","depth":1}"#).unwrap();
    assert_eq!(c.layer_widths(), vec![200]);
    assert_eq!(c.learning_rate, 1e-4);
    let b = c.bandit_config().unwrap();
    assert_eq!(b.batch_size, 50);
    assert_eq!(b.epochs, 100);
    assert_eq!(b.encoding, hnca_core::Encoding::PlusMinusOne);
}

#[test]
fn single_layer_fhnca_b_is_rejected() {
    let msg = config_message(parse(r#"{"mode":"vae","estimator":"fhnca-b","depth":1}"#));
    assert!(msg.contains("mediated"), "{msg}");
    assert!(parse(r#"{"mode":"vae","estimator":"fhnca-b","depth":2}"#).is_ok());
}

#[test]
fn unsupported_estimator_lists_the_supported_ones() {
    let msg = config_message(parse(r#"{"estimator":"disarm"}"#));
    assert!(msg.contains("estimator"), "{msg}");
    for name in ["reinforce", "hnca-b", "fhnca-noprune", "rloo-is"] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn estimator_must_suit_the_mode() {
    let msg = config_message(parse(r#"{"mode":"vae","estimator":"hnca"}"#));
    assert!(msg.contains("fhnca"), "{msg}");
    let msg = config_message(parse(r#"{"mode":"bandit","estimator":"rloo"}"#));
    assert!(msg.contains("hnca-b"), "{msg}");
    for e in Estimator::VAE {
        let doc = format!(r#"{{"mode":"vae","estimator":"{}","depth":2}}"#, e.name());
        assert!(parse(&doc).is_ok(), "{doc}");
    }
}

#[test]
fn unknown_and_mistyped_keys_are_named() {
    let msg = config_message(parse(r#"{"learning_rat":0.1}"#));
    assert!(msg.contains("learning_rat"), "{msg}");
    let msg = config_message(parse(r#"{"batch_size":"fifty"}"#));
    assert!(msg.contains("batch_size"), "{msg}");
    let msg = config_message(parse(r#"{"learning_rate":-1}"#));
    assert!(msg.contains("learning_rate"), "{msg}");
    let msg = config_message(parse(r#"{"depth":2,"widths":[10]}"#));
    assert!(msg.contains("widths"), "{msg}");
}

#[test]
fn flags_override_the_file() {
    let flags = vec![
        ("learning_rate".to_string(), "0.001".to_string()),
        ("estimator".to_string(), "reinforce-b".to_string()),
        ("widths".to_string(), "[30,20]".to_string()),
        ("depth".to_string(), "2".to_string()),
    ];
    let c = resolve(Mode::Bandit, Some(r#"{"learning_rate":0.5,"seed":4}"#), &flags).unwrap();
    assert_eq!(c.learning_rate, 0.001);
    assert_eq!(c.seed, 4);
    assert_eq!(c.estimator, Estimator::ReinforceB);
    assert_eq!(c.layer_widths(), vec![30, 20]);
    let msg = config_message(resolve(Mode::Vae, Some(r#"{"mode":"bandit"}"#), &[]));
    assert!(msg.contains("mode"), "{msg}");
}

#[test]
fn resolved_config_round_trips() {
    let c = parse(r#"{"mode":"vae","estimator":"fhnca","ablation":"full-reward","train_limit":7,"depth":2}"#).unwrap();
    let back = parse(&c.to_json()).unwrap();
    assert_eq!(back, c);
    assert_eq!(c.vae_config().unwrap().estimator, hnca_core::harness::VaeEstimator::FhncaFullreward);
}

#[test]
fn validation_failure_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs");
    let status = Command::new(env!("CARGO_BIN_EXE_hnca"))
        .args(["vae-train", "--estimator", "fhnca-b", "--depth", "1", "--out-dir"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_data_is_an_io_error_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = RunConfig {
        out_dir: dir.path().join("runs"),
        data_dir: dir.path().join("nowhere"),
        ..RunConfig::default()
    };
    c.epochs = Some(1);
    let err = run(&c).unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
    assert!(!c.out_dir.exists());
}

#[test]
fn run_directory_carries_digest_and_seed() {
    let a = RunConfig::default();
    let b = RunConfig { seed: 9, ..a.clone() };
    let c = RunConfig { learning_rate: 1e-3, ..a.clone() };
    let name = |c: &RunConfig| hnca_cli::run_dir(c).file_name().unwrap().to_string_lossy().into_owned();
    assert_eq!(hnca_cli::config_digest(&a), hnca_cli::config_digest(&b));
    assert_ne!(hnca_cli::config_digest(&a), hnca_cli::config_digest(&c));
    assert!(name(&b).ends_with("-seed9"));
    assert_eq!(hnca_cli::config_digest(&a).len(), 8);
}

#[test]
fn binary_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/mnist");
    let status = Command::new(env!("CARGO_BIN_EXE_hnca"))
        .args(["bandit-train", "--estimator", "hnca", "--width", "8", "--epochs", "1"])
        .args(["--train-limit", "100", "--test-limit", "20", "--seed", "2", "--data-dir", data, "--out-dir"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let run = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    assert!(run.file_name().unwrap().to_string_lossy().starts_with("bandit-train-"));
    for f in ["resolved-config.json", "metrics.csv", "report.json", "model.json", "model.bin"] {
        assert!(run.join(f).exists(), "{f}");
    }
}
