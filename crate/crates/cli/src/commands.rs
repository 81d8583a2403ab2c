use std::f64::consts::PI;

use lru_core::bench::{bench_report, bench_scan, BenchConfig};
use lru_core::experiments::{
    conv_kernel_comparison, gain_monte_carlo, gain_report, impulse_report, leakage_demo, linear_lru_tone_leakage,
    powers_comparison, random_piecewise_signal, relu_spectrum_identity, spectrum_report, zoh_compare_report,
    ConvComparisonConfig, GainConfig, ImpulseConfig, InputMode, PowersComparisonConfig, SpectrumSource,
    ZohCompareConfig,
};
use lru_core::gradients::{finite_difference_check_with, mse_loss, FdStencil};
use lru_core::init::{lru_init, uniform, LruDims, LruInitConfig, RingConfig};
use lru_core::model::{model_backward, model_forward, ModelParams};
use lru_core::recurrence::{lru_forward, max_relative_deviation, Activation, ExecMode, SequenceBatch};
use lru_core::report::ExperimentReport;
use lru_core::rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::failure::Failure;

pub const SUBCOMMANDS: [&str; 10] = [
    "spectrum",
    "gain",
    "scan-check",
    "bench-scan",
    "leakage",
    "impulse",
    "train-conv",
    "train-powers",
    "grad-check",
    "zoh-compare",
];

/// A report plus an optional failed check that maps to exit code 2 after
/// the artifacts are written.
pub struct Outcome {
    pub report: ExperimentReport,
    pub failed_check: Option<String>,
}

impl From<ExperimentReport> for Outcome {
    fn from(report: ExperimentReport) -> Self {
        let failed_check = report.diverged.then(|| "run diverged".to_string());
        Self { report, failed_check }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    pub n: usize,
    pub dense: bool,
    pub gelfand_k: u32,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            n: 256,
            dense: false,
            gelfand_k: 64,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainParams {
    pub n: usize,
    pub len: usize,
    pub input_dim: usize,
    pub mode: InputMode,
    pub trials: usize,
}

impl Default for GainParams {
    fn default() -> Self {
        let g = GainConfig::default();
        Self {
            n: g.n,
            len: g.len,
            input_dim: g.input_dim,
            mode: g.mode,
            trials: g.trials,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanCheckParams {
    pub len: usize,
    pub n: usize,
    pub h: usize,
    pub batch: usize,
    pub trials: usize,
    pub tolerance: f64,
}

impl Default for ScanCheckParams {
    fn default() -> Self {
        Self {
            len: 4096,
            n: 64,
            h: 2,
            batch: 4,
            trials: 3,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LeakageParams {
    pub freq: usize,
    pub len: usize,
    /// Random piecewise signals for the ReLU spectrum identity.
    pub signals: usize,
    pub pieces: usize,
    pub tone_n: usize,
    /// The tone check needs `r_max < 1`, so it has its own ring.
    pub tone_ring: RingConfig,
}

impl Default for LeakageParams {
    fn default() -> Self {
        Self {
            freq: 8,
            len: 256,
            signals: 10,
            pieces: 8,
            tone_n: 64,
            tone_ring: RingConfig::new(0.9, 0.99),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckParams {
    pub len: usize,
    pub batch: usize,
    pub trials: usize,
    pub h: f64,
    pub stencil: FdStencil,
    pub tolerance: f64,
}

impl Default for GradCheckParams {
    fn default() -> Self {
        Self {
            len: 32,
            batch: 2,
            trials: 1,
            h: 1e-4,
            stencil: FdStencil::FourPoint,
            tolerance: 1e-5,
        }
    }
}

pub fn run(subcommand: &str, cfg: &mut RunConfig) -> Result<Outcome, Failure> {
    let seed = cfg.seed;
    let outcome = match subcommand {
        "spectrum" => {
            let p: SpectrumParams = cfg.task_params()?;
            let source = if p.dense {
                SpectrumSource::Dense { gelfand_k: p.gelfand_k }
            } else {
                SpectrumSource::Ring(cfg.ring)
            };
            spectrum_report(&source, p.n, seed)?.into()
        }
        "gain" => {
            let p: GainParams = cfg.task_params()?;
            let gain = GainConfig {
                r_min: cfg.ring.r_min,
                r_max: cfg.ring.r_max,
                n: p.n,
                len: p.len,
                input_dim: p.input_dim,
                mode: p.mode,
                trials: p.trials,
            };
            gain_report(&gain_monte_carlo(&gain, seed)?, seed)?.into()
        }
        "scan-check" => scan_check(cfg.task_params()?, cfg.ring, seed)?,
        "bench-scan" => {
            let mut p: BenchConfig = cfg.task_params()?;
            let mut dropped = Vec::new();
            if let Some(cap) = cfg.threads {
                dropped = p.threads.iter().copied().filter(|&t| t > cap).collect();
                p.threads.retain(|&t| t <= cap);
            }
            let mut report = bench_report(&p, &bench_scan(&p, seed)?, seed)?;
            if !dropped.is_empty() {
                report
                    .notes
                    .push(format!("thread counts {dropped:?} exceed --threads and were skipped"));
            }
            report.into()
        }
        "leakage" => leakage(cfg.task_params()?, seed)?,
        "impulse" => {
            let p: ImpulseConfig = cfg.task_params()?;
            impulse_report(&p, seed)?.into()
        }
        "train-conv" => {
            let mut p: ConvComparisonConfig = cfg.task_params()?;
            p.optim = cfg.optim.clone();
            train_conv(&p, seed)?
        }
        "train-powers" => {
            let p: PowersComparisonConfig = cfg.task_params()?;
            train_powers(&p, seed)?
        }
        "grad-check" => grad_check(cfg.task_params()?, cfg, seed)?,
        "zoh-compare" => {
            let p: ZohCompareConfig = cfg.task_params()?;
            zoh_compare_report(&p, seed)?.into()
        }
        other => {
            return Err(Failure::Validation(format!(
                "unknown subcommand `{other}`; expected one of {}",
                SUBCOMMANDS.join(", ")
            )))
        }
    };
    let mut outcome: Outcome = outcome;
    outcome.report.name = subcommand.to_string();
    outcome.report.seed = seed;
    outcome.report.config = cfg.echo();
    Ok(outcome)
}

fn scan_check(p: ScanCheckParams, ring: RingConfig, seed: u64) -> Result<Outcome, Failure> {
    if p.len == 0 || p.n == 0 || p.h == 0 || p.batch == 0 || p.trials == 0 {
        return Err(Failure::Validation("scan-check sizes must be >= 1".into()));
    }
    let init = LruInitConfig {
        ring,
        ..Default::default()
    };
    let mut report = ExperimentReport::new("scan-check", seed, &["trial", "len", "max_rel_dev"]);
    let mut worst = 0.0f64;
    for t in 0..p.trials {
        let params = lru_init(&init, LruDims::square(p.h, p.n), &mut rng::stream(seed, t as u64))?;
        let mut r = rng::stream(seed, (p.trials + t) as u64);
        let u = SequenceBatch::from_fn(p.batch, p.len, p.h, |_, _, _| uniform(&mut r, -1.0, 1.0));
        let (seq, _) = lru_forward(&params, &u, ExecMode::Sequential)?;
        let (par, _) = lru_forward(&params, &u, ExecMode::Parallel)?;
        let dev = max_relative_deviation(&par.data, &seq.data);
        worst = worst.max(dev);
        report.push_row(vec![t as f64, p.len as f64, dev])?;
    }
    report.metric("max_rel_dev", worst);
    report.metric("tolerance", p.tolerance);
    let failed_check = worst
        .partial_cmp(&p.tolerance)
        .is_none_or(|o| o.is_gt())
        .then(|| format!("parallel scan deviates by {worst:e} > {:e}", p.tolerance));
    Ok(Outcome { report, failed_check })
}

fn leakage(p: LeakageParams, seed: u64) -> Result<Outcome, Failure> {
    let demo = leakage_demo(p.freq, p.len)?;
    let mut report = ExperimentReport::new("leakage", seed, &["bin", "freq", "power_before", "power_after"]);
    for k in 0..demo.after.len() {
        report.push_row(vec![
            k as f64,
            demo.after.freqs[k],
            demo.before.power[k],
            demo.after.power[k],
        ])?;
    }
    report.metric("offband_ratio_before", demo.offband_before);
    report.metric("offband_ratio_after", demo.offband_ratio);
    let mut r = rng::root(seed);
    let mut worst = 0.0f64;
    for _ in 0..p.signals {
        let u = random_piecewise_signal(p.len, p.pieces, &mut r);
        worst = worst.max(relu_spectrum_identity(&u)?.relative_error);
    }
    report.metric("identity_max_rel_err", worst);
    let tone = linear_lru_tone_leakage(p.freq, p.len, p.tone_n, p.tone_ring, seed)?;
    report.metric("linear_lru_offband_ratio", tone.offband_ratio);
    report.metric("linear_lru_warmup", tone.warmup as f64);
    Ok(report.into())
}

fn train_conv(p: &ConvComparisonConfig, seed: u64) -> Result<Outcome, Failure> {
    let runs = conv_kernel_comparison(p)?;
    let mut report = ExperimentReport::new(
        "train-conv",
        seed,
        &["lr", "seed", "activation", "final_loss", "diverged"],
    );
    for r in &runs {
        let act = match r.activation {
            Activation::Linear => 0.0,
            _ => 1.0,
        };
        report.push_row(vec![
            r.lr,
            r.seed as f64,
            act,
            r.final_loss,
            f64::from(u8::from(r.diverged)),
        ])?;
    }
    let mut wins = 0;
    for &lr in &p.lr_grid {
        let mean = |a: Activation| {
            let v: Vec<f64> = runs
                .iter()
                .filter(|r| r.lr == lr && r.activation == a)
                .map(|r| r.final_loss)
                .collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        let (lin, tanh) = (mean(Activation::Linear), mean(Activation::Tanh));
        report.metric(format!("mean_final_loss_linear_lr{lr:e}"), lin);
        report.metric(format!("mean_final_loss_tanh_lr{lr:e}"), tanh);
        if lin < tanh {
            wins += 1;
        }
    }
    report.metric("linear_wins", wins as f64);
    report
        .notes
        .push("activation: 0 = linear, 1 = tanh; the command seed is unused, runs use the grid seeds".into());
    report.diverged = runs.iter().any(|r| r.diverged);
    Ok(report.into())
}

fn train_powers(p: &PowersComparisonConfig, seed: u64) -> Result<Outcome, Failure> {
    let results = powers_comparison(p)?;
    let mut report = ExperimentReport::new(
        "train-powers",
        seed,
        &[
            "theta_star",
            "mean_iters_standard",
            "mean_iters_exponential",
            "solved_standard",
            "solved_exponential",
        ],
    );
    for r in &results {
        report.push_row(vec![
            r.theta_star,
            r.mean_iters_standard,
            r.mean_iters_exponential,
            r.solved_standard as f64,
            r.solved_exponential as f64,
        ])?;
    }
    report.metric(
        "exponential_wins",
        results.iter().filter(|r| r.exponential_faster()).count() as f64,
    );
    report.metric("settings", results.len() as f64);
    report.notes.push(format!(
        "theta_star in radians (pi = {PI}); unsolved runs count as iterations + 1; the command seed is unused"
    ));
    Ok(report.into())
}

fn grad_check(p: GradCheckParams, cfg: &RunConfig, seed: u64) -> Result<Outcome, Failure> {
    if p.len == 0 || p.batch == 0 || p.trials == 0 {
        return Err(Failure::Validation("grad-check sizes must be >= 1".into()));
    }
    let model = &cfg.model;
    let mut report = ExperimentReport::new(
        "grad-check",
        seed,
        &["trial", "tensor", "count", "max_rel_err", "max_abs_err"],
    );
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for t in 0..p.trials as u64 {
        let params = ModelParams::init(model, &mut rng::stream(seed, 2 * t))?;
        let mut r = rng::stream(seed, 2 * t + 1);
        let u = SequenceBatch::from_fn(p.batch, p.len, model.input_dim, |_, _, _| uniform(&mut r, -1.0, 1.0));
        let (y, cache) = model_forward(model, &params, &u, false, &mut rng::root(0))?;
        let target = SequenceBatch::from_fn(y.batch, y.len, y.features, |_, _, _| uniform(&mut r, -1.0, 1.0));
        let (_, dy) = mse_loss(&y, &target)?;
        let grads = model_backward(&params, &cache, &dy)?;
        let loss = |q: &ModelParams| {
            model_forward(model, q, &u, false, &mut rng::root(0))
                .and_then(|(y, _)| mse_loss(&y, &target))
                .map(|(l, _)| l)
                .unwrap_or(f64::NAN)
        };
        let fd = finite_difference_check_with(loss, &params, &grads, p.h, p.stencil)?;
        for (i, e) in fd.entries.iter().enumerate() {
            report.push_row(vec![t as f64, i as f64, e.count as f64, e.max_rel_err, e.max_abs_err])?;
            worst = worst.max(e.max_rel_err);
            if t == 0 {
                names.push(format!("{i} = {}", e.name));
            }
        }
    }
    report.metric("max_rel_err", worst);
    report.metric("tolerance", p.tolerance);
    report.notes.push(format!("tensor index: {}", names.join(", ")));
    let failed_check = worst
        .partial_cmp(&p.tolerance)
        .is_none_or(|o| o.is_ge())
        .then(|| format!("gradient check failed: max rel err {worst:e} >= {:e}", p.tolerance));
    Ok(Outcome { report, failed_check })
}
