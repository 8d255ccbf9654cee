use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use hnca_cli::{config_keys, flag_name, resolve, run, CliError, Mode};

const MODES: [Mode; 4] = [Mode::Bandit, Mode::Vae, Mode::Verify, Mode::Bench];

fn command() -> Command {
    let keys: Vec<String> = config_keys().into_iter().filter(|k| k != "mode").collect();
    let mut cmd = Command::new("hnca")
        .about("Train and verify discrete stochastic networks with HNCA gradient estimators")
        .subcommand_required(true)
        .arg_required_else_help(true);
    for mode in MODES {
        let about = match mode {
            Mode::Bandit => "Contextual-bandit MNIST training",
            Mode::Vae => "Discrete VAE training on binarized MNIST",
            Mode::Verify => "Run the oracle verification suite on toy networks",
            Mode::Bench => "Time the HNCA backward pass against forward sampling",
        };
        let mut sub = Command::new(mode.subcommand()).about(about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("JSON config file; flags override its keys"),
        );
        for key in &keys {
            sub = sub.arg(
                Arg::new(key.clone())
                    .long(flag_name(key))
                    .value_name("VALUE")
                    .action(ArgAction::Set),
            );
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn execute(name: &str, m: &ArgMatches) -> Result<(), CliError> {
    let mode = MODES
        .into_iter()
        .find(|md| md.subcommand() == name)
        .expect("subcommands come from MODES");
    let document = match m.get_one::<String>("config") {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| {
            CliError::Core(hnca_core::Error::Io {
                path: path.into(),
                source: e,
            })
        })?),
        None => None,
    };
    let flags: Vec<(String, String)> = config_keys()
        .into_iter()
        .filter(|k| k != "mode")
        .filter_map(|k| m.get_one::<String>(&k).map(|v| (k.clone(), v.clone())))
        .collect();
    let cfg = resolve(mode, document.as_deref(), &flags)?;
    let out = run(&cfg)?;
    if mode == Mode::Bench {
        if let Ok(t) = std::fs::read_to_string(out.dir.join("bench.txt")) {
            print!("{t}");
        }
    }
    println!("{}", out.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let matches = command().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match execute(name, sub) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
