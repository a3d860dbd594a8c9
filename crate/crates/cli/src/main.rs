use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

mod config;
mod output;
mod run;

use config::{Command, Figure, Format, Mode, RawConfig};

#[derive(Parser)]
#[command(name = "sigcode", version, about = "Randomized signature code experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sum multiplexing gain of one ensemble.
    Smg {
        /// Optimize the two-user closed form over K and epsilon instead.
        #[arg(long)]
        two_user_optimum: bool,
    },
    /// Rate lower bound and its high-SNR terms over SNR.
    Rate,
    /// Grid search over K, nu and epsilon under Rayleigh fading.
    Design,
    /// Blind gain inference roundtrips on random gains.
    Infer {
        #[arg(long)]
        case: Option<u8>,
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Masking versus spreading: epsilon-hat, interval and pre-log checks.
    Optimality,
    /// Emit figure data.
    Figures {
        #[arg(value_enum)]
        name: Figure,
    },
}

#[derive(Args)]
struct Common {
    /// TOML file of key = value settings; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    nu: Option<f64>,
    /// Comma-separated symbols, e.g. -2,-1,1,2.
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    alphabet: Option<Vec<i64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    pmf: Option<Vec<f64>>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    gamma_db: Option<f64>,
    /// start,stop,step in dB (stop inclusive).
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    gamma_db_range: Option<Vec<f64>>,
    /// Squared gains, own first.
    #[arg(long, global = true, value_delimiter = ',')]
    gains: Option<Vec<f64>>,
    #[arg(long, global = true)]
    mc_draws: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    #[arg(long, global = true, value_delimiter = ',')]
    k_values: Option<Vec<usize>>,
    #[arg(long, global = true, value_delimiter = ',')]
    nu_grid: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    epsilon_grid: Option<Vec<f64>>,
}

fn fail(kind: &str, detail: serde_json::Value) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "detail": detail }));
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = cli.common;
    let (command, figure, mut flags) = match cli.command {
        Cmd::Smg { two_user_optimum } => (
            Command::Smg,
            None,
            RawConfig { two_user_optimum: two_user_optimum.then_some(true), ..Default::default() },
        ),
        Cmd::Rate => (Command::Rate, None, RawConfig::default()),
        Cmd::Design => (Command::Design, None, RawConfig::default()),
        Cmd::Infer { case, draws } => (Command::Infer, None, RawConfig { case, draws, ..Default::default() }),
        Cmd::Optimality => (Command::Optimality, None, RawConfig::default()),
        Cmd::Figures { name } => (Command::Figures, Some(name), RawConfig::default()),
    };
    flags = RawConfig {
        k: c.k,
        n: c.n,
        alphabet: c.alphabet,
        pmf: c.pmf,
        nu: c.nu,
        epsilon: c.epsilon,
        gamma_db: c.gamma_db,
        gamma_db_range: c.gamma_db_range,
        gains: c.gains,
        mc_draws: c.mc_draws,
        trials: c.trials,
        seed: c.seed,
        mode: c.mode,
        k_values: c.k_values,
        nu_grid: c.nu_grid,
        epsilon_grid: c.epsilon_grid,
        out: c.out,
        format: c.format,
        ..flags
    };
    let base = match &c.config {
        Some(p) => match RawConfig::load(p) {
            Ok(r) => r,
            Err(e) => return fail("config", json!(e)),
        },
        None => RawConfig::default(),
    };
    let cfg = base.merge(flags).resolve(command, figure);
    let violations = cfg.validate();
    if !violations.is_empty() {
        return fail("validation", json!(violations));
    }
    let start = Instant::now();
    let out = match run::run(&cfg) {
        Ok(o) => o,
        Err(e) => return fail("runtime", json!(e.to_string())),
    };
    match output::emit(&out, &cfg, start.elapsed().as_secs_f64()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail("io", json!(e.to_string())),
    }
}
