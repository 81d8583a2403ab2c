//! Acceptance criteria. Each check returns whether it passed and a one-line
//! summary of what it measured; tolerances are fixed below.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use lru_core::bench::time_forward;
use lru_core::experiments::{
    circular_law_check, conv_kernel_comparison, gain_formula, gain_monte_carlo, linear_lru_tone_leakage,
    powers_comparison, random_piecewise_signal, relu_spectrum_identity, ring_check, ConvComparisonConfig, GainConfig,
    InputMode, PowersComparisonConfig,
};
use lru_core::gradients::{finite_difference_check_with, mse_loss, FdStencil};
use lru_core::init::{lru_init, uniform, LruDims, LruInitConfig, RingConfig};
use lru_core::model::{model_backward, model_forward, ModelConfig, ModelParams, Pooling};
use lru_core::recurrence::{lru_forward, max_relative_deviation, Activation, ExecMode, SequenceBatch};
use lru_core::rng;
use lru_core::training::{train_loop, ModelTask, OptimConfig, Targets};

pub const SCAN_TOL: f64 = 1e-10;
pub const SCAN_BUDGET: Duration = Duration::from_secs(30);
pub const GAIN_TOL: f64 = 0.10;
pub const GAIN_BUDGET: Duration = Duration::from_secs(120);
pub const RADIUS_RANGE: (f64, f64) = (0.9, 1.15);
pub const TRACE_TOL: f64 = 0.1;
pub const CIRCULAR_BUDGET: Duration = Duration::from_secs(60);
pub const KS_TOL: f64 = 0.01;
pub const CHI2_P_MIN: f64 = 1e-3;
pub const FD_TOL: f64 = 1e-5;
pub const FD_STEP: f64 = 1e-4;
pub const CONV_BUDGET: Duration = Duration::from_secs(300);
pub const CONV_HIDDEN: usize = 16;
pub const POWERS_TOL: f64 = 1e-4;
pub const POWERS_BUDGET: Duration = Duration::from_secs(60);
pub const IDENTITY_TOL: f64 = 1e-6;
pub const TONE_TOL: f64 = 1e-10;
pub const SPEEDUP_MIN: f64 = 1.5;
pub const SPEEDUP_THREADS: usize = 8;

pub type Outcome = (bool, String);
pub type Criterion = (&'static str, fn() -> Outcome);

pub fn scan_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let params = lru_init(&LruInitConfig::default(), LruDims::square(2, 64), &mut rng::root(seed)).unwrap();
        for len in [1usize, 2, 3, 257, 4096, 16384] {
            let mut r = rng::stream(seed, len as u64);
            let u = SequenceBatch::from_fn(4, len, 2, |_, _, _| uniform(&mut r, -1.0, 1.0));
            let (seq, _) = lru_forward(&params, &u, ExecMode::Sequential).unwrap();
            let (par, _) = lru_forward(&params, &u, ExecMode::Parallel).unwrap();
            worst = worst.max(max_relative_deviation(&par.data, &seq.data));
        }
    }
    let elapsed = start.elapsed();
    (
        worst < SCAN_TOL && elapsed < SCAN_BUDGET,
        format!(
            "max rel dev {worst:.2e} (< {SCAN_TOL:e}), {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

pub fn gain_reproduction() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (r_min, r_max) in [(0.0, 0.5), (0.5, 0.9), (0.9, 0.99)] {
        for mode in [InputMode::WhiteNoise, InputMode::Constant] {
            let cfg = GainConfig {
                r_min,
                r_max,
                mode,
                ..Default::default()
            };
            let res = gain_monte_carlo(&cfg, 0).unwrap();
            let formula = gain_formula(r_min, r_max).unwrap();
            ok &= res.relative_error() < GAIN_TOL && res.formula_in_band() && res.closed_form == formula;
            parts.push(format!("({r_min},{r_max}) {mode:?} err {:.3}", res.relative_error()));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < GAIN_BUDGET;
    (ok, format!("{}; {:.1} s", parts.join(", "), elapsed.as_secs_f64()))
}

pub fn circular_law() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    let (mut rmin, mut rmax, mut tmax) = (f64::INFINITY, 0.0f64, 0.0f64);
    for seed in 0..10 {
        let check = circular_law_check(256, 64, seed).unwrap();
        let r = check.gelfand.radius;
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        let t = check.trace_moments[..3].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        tmax = tmax.max(t);
        ok &= (RADIUS_RANGE.0..=RADIUS_RANGE.1).contains(&r) && t < TRACE_TOL;
    }
    let elapsed = start.elapsed();
    ok &= elapsed < CIRCULAR_BUDGET;
    (
        ok,
        format!(
            "radius in [{rmin:.3}, {rmax:.3}], max |trace moment| {tmax:.3}; {:.1} s",
            elapsed.as_secs_f64()
        ),
    )
}

pub fn ring_distribution() -> Outcome {
    let (check, _, _) = ring_check(&RingConfig::default(), 100_000, 0).unwrap();
    (
        check.ks_modulus_sq < KS_TOL && check.phase_p_value > CHI2_P_MIN && check.in_sector,
        format!("KS {:.4}, phase chi2 p {:.3}", check.ks_modulus_sq, check.phase_p_value),
    )
}

pub fn gradient_suite() -> Outcome {
    let cfg = ModelConfig {
        depth: 2,
        h: 8,
        n: 8,
        input_dim: 3,
        output_dim: 2,
        pooling: Pooling::None,
        exec: ExecMode::Sequential,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    let mut worst_name = String::new();
    for seed in 0..20u64 {
        let params = ModelParams::init(&cfg, &mut rng::root(seed)).unwrap();
        let mut r = rng::stream(seed, 1);
        let u = SequenceBatch::from_fn(2, 32, 3, |_, _, _| uniform(&mut r, -1.0, 1.0));
        let target = SequenceBatch::from_fn(2, 32, 2, |_, _, _| uniform(&mut r, -1.0, 1.0));
        let (y, cache) = model_forward(&cfg, &params, &u, false, &mut rng::root(0)).unwrap();
        let (_, dy) = mse_loss(&y, &target).unwrap();
        let grads = model_backward(&params, &cache, &dy).unwrap();
        let loss = |p: &ModelParams| {
            let (y, _) = model_forward(&cfg, p, &u, false, &mut rng::root(0)).unwrap();
            mse_loss(&y, &target).unwrap().0
        };
        let report = finite_difference_check_with(loss, &params, &grads, FD_STEP, FdStencil::FourPoint).unwrap();
        for e in &report.entries {
            if e.max_rel_err > worst {
                worst = e.max_rel_err;
                worst_name = e.name.clone();
            }
        }
    }
    (
        worst < FD_TOL,
        format!("max rel err {worst:.2e} ({worst_name}) over 20 seeds"),
    )
}

pub fn conv_kernel() -> Outcome {
    let start = Instant::now();
    let cfg = ConvComparisonConfig {
        hidden: CONV_HIDDEN,
        ..Default::default()
    };
    let runs = conv_kernel_comparison(&cfg).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for &lr in &cfg.lr_grid {
        let mean = |a: Activation| {
            let v: Vec<f64> = runs
                .iter()
                .filter(|r| r.lr == lr && r.activation == a)
                .map(|r| r.final_loss)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let (lin, tanh) = (mean(Activation::Linear), mean(Activation::Tanh));
        ok &= lin < tanh;
        parts.push(format!("lr {lr:e}: linear {lin:.3e} vs tanh {tanh:.3e}"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < CONV_BUDGET;
    (ok, format!("{}; {:.1} s", parts.join(", "), elapsed.as_secs_f64()))
}

pub fn powers() -> Outcome {
    let start = Instant::now();
    let mut cfg = PowersComparisonConfig::default();
    cfg.base.tolerance = POWERS_TOL;
    let results = powers_comparison(&cfg).unwrap();
    let wins = results.iter().filter(|r| r.exponential_faster()).count();
    let parts: Vec<String> = results
        .iter()
        .map(|r| {
            format!(
                "{:.2}pi: exp {:.1} vs std {:.1}",
                r.theta_star / PI,
                r.mean_iters_exponential,
                r.mean_iters_standard
            )
        })
        .collect();
    let elapsed = start.elapsed();
    (
        wins >= 2 && elapsed < POWERS_BUDGET,
        format!(
            "exponential faster in {wins}/3 ({}); {:.1} s",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

pub fn stability() -> Outcome {
    let model = ModelConfig {
        depth: 2,
        h: 8,
        n: 8,
        input_dim: 1,
        output_dim: 1,
        ring: RingConfig::new(0.9, 0.999),
        ..Default::default()
    };
    let mut r = rng::root(7);
    let inputs = SequenceBatch::from_fn(16, 64, 1, |_, _, _| uniform(&mut r, -1.0, 1.0));
    let targets = SequenceBatch::from_fn(16, 1, 1, |b, _, _| inputs.sequence(b).iter().sum::<f64>() / 8.0);
    let task = ModelTask {
        name: "stability".into(),
        model,
        inputs,
        targets: Targets::Regression(targets),
        batch_size: Some(8),
    };
    let optim = OptimConfig {
        base_lr: 1e-2,
        total_steps: 1000,
        ..Default::default()
    };
    let (report, _) = train_loop(&task, &optim, 0).unwrap();
    let trace = report.column("max_lambda_abs").unwrap();
    let max = trace.iter().copied().fold(0.0f64, f64::max);
    (
        trace.len() == 1000 && !report.diverged && max < 1.0,
        format!("{} steps, max |lambda| {max:.6}", trace.len()),
    )
}

pub fn relu_identity() -> Outcome {
    let mut r = rng::root(9);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let u = random_piecewise_signal(256, 4 + i, &mut r);
        worst = worst.max(relu_spectrum_identity(&u).unwrap().relative_error);
    }
    let tone = linear_lru_tone_leakage(8, 256, 64, RingConfig::new(0.9, 0.99), 0).unwrap();
    (
        worst < IDENTITY_TOL && tone.offband_ratio < TONE_TOL,
        format!(
            "identity rel err {worst:.2e}, linear tone off-band {:.2e}",
            tone.offband_ratio
        ),
    )
}

pub fn scan_speedup() -> Outcome {
    let cpus = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let params = lru_init(&LruInitConfig::default(), LruDims::square(1, 64), &mut rng::root(0)).unwrap();
    let mut r = rng::stream(0, 1);
    let u = SequenceBatch::from_fn(1, 1 << 16, 1, |_, _, _| uniform(&mut r, -1.0, 1.0));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(SPEEDUP_THREADS)
        .build()
        .unwrap();
    let (seq, par) = pool.install(|| {
        (
            time_forward(&params, &u, ExecMode::Sequential, 5, 1).unwrap(),
            time_forward(&params, &u, ExecMode::Parallel, 5, 1).unwrap(),
        )
    });
    let speedup = seq / par;
    (
        speedup > SPEEDUP_MIN,
        format!("speedup {speedup:.2}x with {SPEEDUP_THREADS} threads on {cpus} cpu(s)"),
    )
}

pub fn out_of_scope() -> Outcome {
    (
        true,
        "long-range benchmark accuracies are out of scope; nothing asserted".into(),
    )
}

/// Every criterion in order, with a short name.
pub const CRITERIA: [Criterion; 11] = [
    ("scan matches sequential", scan_equivalence),
    ("gain closed form", gain_reproduction),
    ("dense circular law", circular_law),
    ("ring distribution", ring_distribution),
    ("gradient suite", gradient_suite),
    ("conv kernel linear vs tanh", conv_kernel),
    ("powers parameterization", powers),
    ("stability during training", stability),
    ("relu spectrum identity", relu_identity),
    ("parallel scan speedup", scan_speedup),
    ("benchmark accuracies", out_of_scope),
];
