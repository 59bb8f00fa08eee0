//! `pomdp-lab`: batch experiments on a finite POMDP model file.
//!
//! Every subcommand writes `results.csv`, `summary.txt` and `provenance.txt`
//! into the output directory. Exit status 0 on success, 2 when a model
//! assumption required by the experiment fails, 1 on any other error.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sha2::{Digest, Sha256};

use config::Config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pomdp_core::Error),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_assumption_violation() => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Constants,
    Stability,
    Quantize,
    Window,
    Qlearn,
    Avgcost,
    RobustPrior,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Constants => "constants",
            Command::Stability => "stability",
            Command::Quantize => "quantize",
            Command::Window => "window",
            Command::Qlearn => "qlearn",
            Command::Avgcost => "avgcost",
            Command::RobustPrior => "robust-prior",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Constants => &[],
            Command::Stability => &["seed", "trials", "horizon", "mu", "nu"],
            Command::Quantize => &["seed", "beta", "tol", "resolutions", "reference_resolution", "samples_per_bin"],
            Command::Window => &[
                "seed",
                "beta",
                "tol",
                "windows",
                "trials",
                "lnt_horizon",
                "reference_resolution",
                "lbar_resolution",
                "alpha_z",
                "ref_prior",
                "prior",
            ],
            Command::Qlearn => &[
                "seed",
                "beta",
                "steps",
                "epochs",
                "instantiation",
                "prior",
                "window",
                "resolution",
                "floor",
                "evaluate_trials",
                "reference_resolution",
            ],
            Command::Avgcost => {
                &["seed", "resolution", "tol", "reference_node", "betas", "trials", "burn_in", "window"]
            }
            Command::RobustPrior => &["seed", "beta", "trials", "resolution", "mu", "nu"],
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pomdp-lab", version, about = "Finite POMDP numerical laboratory")]
struct Args {
    command: Command,
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// `key = value` configuration file; command-line pairs override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads for Monte-Carlo trials; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// `key=value` overrides.
    overrides: Vec<String>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: PathBuf, text: &str) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}

fn run(args: &Args) -> Result<(), CliError> {
    let model_text = read(&args.model)?;
    let model = pomdp_core::parse_model(&model_text)?;
    let mut cfg = match &args.config {
        Some(p) => Config::parse_file(&read(p)?)?,
        None => Config::default(),
    };
    for pair in &args.overrides {
        cfg.insert(pair).map_err(CliError::Config)?;
    }
    let unknown = cfg.unknown(args.command.keys());
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown keys for {}: {}", args.command.name(), unknown.join(", "))));
    }
    let out = match args.command {
        Command::Constants => commands::constants(&model, &cfg),
        Command::Stability => commands::stability(&model, &cfg),
        Command::Quantize => commands::quantize(&model, &cfg),
        Command::Window => commands::window(&model, &cfg),
        Command::Qlearn => commands::qlearn(&model, &cfg),
        Command::Avgcost => commands::avgcost(&model, &cfg),
        Command::RobustPrior => commands::robust_prior(&model, &cfg),
    }?;
    fs::create_dir_all(&args.out).map_err(|source| CliError::Io { path: args.out.clone(), source })?;
    write(args.out.join("results.csv"), &out.results)?;
    write(args.out.join("summary.txt"), &out.summary)?;
    let mut prov = format!(
        "tool = pomdp-lab {}\ncommand = {}\nmodel = {}\nmodel_sha256 = {}\n",
        env!("CARGO_PKG_VERSION"),
        args.command.name(),
        args.model.display(),
        hex::encode(Sha256::digest(model_text.as_bytes()))
    );
    for (k, v) in cfg.resolved() {
        prov.push_str(&format!("{k} = {v}\n"));
    }
    write(args.out.join("provenance.txt"), &prov)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = match args.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&args)),
            Err(e) => Err(CliError::Config(format!("thread pool: {e}"))),
        },
        None => run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
