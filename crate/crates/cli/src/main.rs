//! `lru`: runs the LRU experiments and writes `<output_dir>/<subcommand>-<seed>.{csv,json}`.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lru_core::report::format_number;
use serde_json::{json, Value};

use crate::config::{read_file, resolve, Override};
use crate::failure::Failure;

pub const THREADS_ENV: &str = "LRU_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "lru",
    version,
    about = "Linear Recurrent Unit experiments",
    after_help = "Any config key can be overridden with a dotted flag, e.g. `--ring.r_max 0.99` or \
                  `--task.params.trials 20`. Precedence: flags > config file > defaults."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ring eigenvalue samples, or Gelfand radius and trace moments of a dense Glorot matrix.
    Spectrum(Common),
    /// Monte-Carlo hidden-state gain against its closed form.
    Gain(Common),
    /// Parallel versus sequential forward pass agreement.
    ScanCheck(Common),
    /// Median timings of sequential and parallel execution per thread count.
    BenchScan(Common),
    /// Spectral leakage of ReLU and the interval-kernel identity.
    Leakage(Common),
    /// Impulse responses of small-phase eigenvalues.
    Impulse(Common),
    /// Linear versus tanh dense RNN on the convolution-kernel task.
    TrainConv(Common),
    /// Standard versus exponential parameterization on the powers task.
    TrainPowers(Common),
    /// Finite-difference check of every model gradient.
    GradCheck(Common),
    /// Exact versus first-order ZOH discretization.
    ZohCompare(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config with sections model, ring, optim, task, seed, output_dir, threads.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    /// State size (channels for impulse, hidden size for train-conv).
    #[arg(long)]
    n: Option<usize>,
    /// Sequence length.
    #[arg(long)]
    len: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    /// Spectrum of a dense Glorot matrix instead of ring samples.
    #[arg(long)]
    dense: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Thread cap; falls back to LRU_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Command {
    fn parts(&self) -> (&'static str, &Common) {
        match self {
            Command::Spectrum(c) => ("spectrum", c),
            Command::Gain(c) => ("gain", c),
            Command::ScanCheck(c) => ("scan-check", c),
            Command::BenchScan(c) => ("bench-scan", c),
            Command::Leakage(c) => ("leakage", c),
            Command::Impulse(c) => ("impulse", c),
            Command::TrainConv(c) => ("train-conv", c),
            Command::TrainPowers(c) => ("train-powers", c),
            Command::GradCheck(c) => ("grad-check", c),
            Command::ZohCompare(c) => ("zoh-compare", c),
        }
    }
}

/// Splits `--a.b value` and `--a.b=value` out of the argument list.
fn split_dotted(args: Vec<String>) -> Result<(Vec<String>, Vec<Override>), Failure> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .filter(|k| k.split('=').next().is_some_and(|p| p.contains('.')));
        match key {
            Some(k) => match k.split_once('=') {
                Some((path, raw)) => overrides.push(Override::parse(path, raw)),
                None => {
                    let raw = it
                        .next()
                        .ok_or_else(|| Failure::Validation(format!("override --{k} needs a value")))?;
                    overrides.push(Override::parse(k, &raw));
                }
            },
            None => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}

/// Translates the convenience flags into dotted overrides for `subcommand`.
fn flag_overrides(subcommand: &str, c: &Common) -> Result<Vec<Override>, Failure> {
    let mut out = Vec::new();
    let mut push = |path: &str, value: Value| {
        out.push(Override {
            path: path.to_string(),
            value,
        })
    };
    let unsupported = |flag: &str| Failure::Validation(format!("--{flag} does not apply to {subcommand}"));

    if let Some(v) = c.r_min {
        push("ring.r_min", json!(v));
    }
    if let Some(v) = c.r_max {
        push("ring.r_max", json!(v));
    }
    if let Some(v) = c.n {
        let path = match subcommand {
            "spectrum" | "gain" | "scan-check" | "bench-scan" | "zoh-compare" => "task.params.n",
            "impulse" => "task.params.channels",
            "leakage" => "task.params.tone_n",
            "train-conv" => "task.params.hidden",
            "grad-check" => "model.n",
            _ => return Err(unsupported("n")),
        };
        push(path, json!(v));
    }
    if let Some(v) = c.len {
        match subcommand {
            "gain" | "scan-check" | "impulse" | "leakage" | "grad-check" => push("task.params.len", json!(v)),
            "bench-scan" => push("task.params.lengths", json!([v])),
            "train-conv" => push("task.params.data.len", json!(v)),
            _ => return Err(unsupported("len")),
        }
    }
    if let Some(v) = c.trials {
        match subcommand {
            "gain" | "scan-check" | "grad-check" => push("task.params.trials", json!(v)),
            _ => return Err(unsupported("trials")),
        }
    }
    if c.dense {
        if subcommand != "spectrum" {
            return Err(unsupported("dense"));
        }
        push("task.params.dense", json!(true));
    }
    if let Some(v) = c.seed {
        push("seed", json!(v));
    }
    if let Some(v) = c.threads {
        push("threads", json!(v));
    }
    if let Some(v) = &c.output_dir {
        push("output_dir", json!(v));
    }
    Ok(out)
}

fn threads_from_env() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .map(Some)
            .ok_or_else(|| Failure::Validation(format!("{THREADS_ENV} must be a positive integer, got `{s}`"))),
        Err(_) => Ok(None),
    }
}

fn execute(cli: Cli, dotted: Vec<Override>) -> Result<(), Failure> {
    let (subcommand, common) = cli.command.parts();
    let file = common.config.as_deref().map(read_file).transpose()?;
    let mut overrides = dotted;
    overrides.extend(flag_overrides(subcommand, common)?);
    let mut cfg = resolve(subcommand, file, &overrides)?;
    if cfg.threads.is_none() {
        cfg.threads = threads_from_env()?;
    }
    if let Some(t) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Validation(format!("thread pool: {e}")))?;
    }

    let outcome = commands::run(subcommand, &mut cfg)?;
    let (csv, json) = outcome.report.write(&cfg.output_dir)?;
    println!("wrote {} and {}", csv.display(), json.display());
    for (k, v) in &outcome.report.metrics {
        println!("  {k} = {}", format_number(*v));
    }
    for note in &outcome.report.notes {
        println!("  note: {note}");
    }
    match outcome.failed_check {
        Some(msg) => Err(Failure::Numerical(msg)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let (rest, dotted) = match split_dotted(args) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("{e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli, dotted) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
