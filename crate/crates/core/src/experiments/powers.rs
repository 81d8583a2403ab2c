//! Learning a single complex eigenvalue through its `k`-th power under the
//! standard (real + imaginary) and exponential parameterizations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{powers_loss, Parameterization};
use crate::init::uniform;
use crate::numerics::C64;
use crate::params::{ParamRole, Parameters, TensorMeta};
use crate::rng;
use crate::training::{adamw_step, OptimConfig, TrainState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowersTaskConfig {
    pub k: u32,
    pub nu_star: f64,
    pub theta_star: f64,
    pub parameterization: Parameterization,
    pub iterations: usize,
    pub lr: f64,
    /// Initial `λ̂ = exp(-ν* + i(θ* + phase_offset))`: right magnitude, wrong phase.
    pub phase_offset: f64,
    /// Loss threshold that counts as solved.
    pub tolerance: f64,
}

impl Default for PowersTaskConfig {
    fn default() -> Self {
        Self {
            k: 100,
            nu_star: 0.02,
            theta_star: 0.45 * std::f64::consts::PI,
            parameterization: Parameterization::Exponential,
            iterations: 500,
            lr: 1e-3,
            phase_offset: 0.3,
            tolerance: 1e-4,
        }
    }
}

impl PowersTaskConfig {
    pub fn target(&self) -> C64 {
        C64::from_polar((-self.nu_star).exp(), self.theta_star).powu(self.k)
    }

    pub fn initial_lambda(&self) -> C64 {
        C64::from_polar((-self.nu_star).exp(), self.theta_star + self.phase_offset)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowersParams(pub [f64; 2]);

impl Parameters for PowersParams {
    fn visit(&self, f: &mut dyn FnMut(&TensorMeta, &[f64])) {
        f(&TensorMeta::new("p", &[2], ParamRole::Other), &self.0)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&TensorMeta, &mut [f64])) {
        f(&TensorMeta::new("p", &[2], ParamRole::Other), &mut self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowersRun {
    /// Loss before each update, then the final loss (`iterations + 1` entries).
    pub losses: Vec<f64>,
    /// `λ̂` before each update, then the final value.
    pub path: Vec<(f64, f64)>,
    /// First index whose loss is below the tolerance.
    pub iterations_to_tol: Option<usize>,
}

/// Adam (constant lr, no weight decay) on `½|λ̂^k - (λ*)^k|²`.
pub fn powers_task_run(cfg: &PowersTaskConfig) -> Result<PowersRun> {
    if cfg.k == 0 {
        return Err(Error::InvalidInput("power k must be >= 1".into()));
    }
    let target = cfg.target();
    let param = cfg.parameterization;
    let optim = OptimConfig::adam(cfg.lr, cfg.iterations);
    optim.validate()?;
    let mut state = TrainState::new(PowersParams(param.params_of(cfg.initial_lambda())));
    let mut losses = Vec::with_capacity(cfg.iterations + 1);
    let mut path = Vec::with_capacity(cfg.iterations + 1);
    for i in 0..=cfg.iterations {
        let p = state.params.0;
        let (loss, g) = powers_loss(param, p, cfg.k, target);
        if !loss.is_finite() {
            return Err(Error::NonFinite("powers loss"));
        }
        losses.push(loss);
        let l = param.lambda(p);
        path.push((l.re, l.im));
        if i < cfg.iterations {
            adamw_step(&mut state, &PowersParams(g), &optim, cfg.lr)?;
        }
    }
    let iterations_to_tol = losses.iter().position(|&l| l < cfg.tolerance);
    Ok(PowersRun {
        losses,
        path,
        iterations_to_tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowersComparisonConfig {
    pub base: PowersTaskConfig,
    pub theta_stars: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Range of `|λ*|`, sampled per seed.
    pub magnitude_range: (f64, f64),
}

impl Default for PowersComparisonConfig {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            base: PowersTaskConfig::default(),
            theta_stars: vec![0.4 * PI, 0.45 * PI, 0.49 * PI],
            seeds: (0..5).collect(),
            magnitude_range: (0.97, 0.995),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowersComparison {
    pub theta_star: f64,
    /// Mean iterations to tolerance; runs that never reach it count as `iterations + 1`.
    pub mean_iters_standard: f64,
    pub mean_iters_exponential: f64,
    pub solved_standard: usize,
    pub solved_exponential: usize,
}

impl PowersComparison {
    pub fn exponential_faster(&self) -> bool {
        self.mean_iters_exponential < self.mean_iters_standard
    }
}

/// For each `θ*`, runs both parameterizations from the same targets and
/// initial points. Seed `s` draws `|λ*|` and the sign of the phase offset.
pub fn powers_comparison(cfg: &PowersComparisonConfig) -> Result<Vec<PowersComparison>> {
    cfg.theta_stars
        .par_iter()
        .map(|&theta_star| {
            let mut iters = [Vec::new(), Vec::new()];
            for &seed in &cfg.seeds {
                let mut r = rng::root(seed);
                let mag = uniform(&mut r, cfg.magnitude_range.0, cfg.magnitude_range.1);
                let sign = if uniform(&mut r, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
                for (slot, param) in [Parameterization::Standard, Parameterization::Exponential]
                    .iter()
                    .enumerate()
                {
                    let run_cfg = PowersTaskConfig {
                        nu_star: -mag.ln(),
                        theta_star,
                        parameterization: *param,
                        phase_offset: sign * cfg.base.phase_offset.abs(),
                        ..cfg.base.clone()
                    };
                    let run = powers_task_run(&run_cfg)?;
                    iters[slot].push(run.iterations_to_tol.unwrap_or(cfg.base.iterations + 1) as f64);
                }
            }
            let solved = |v: &[f64]| v.iter().filter(|&&i| i <= cfg.base.iterations as f64).count();
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            Ok(PowersComparison {
                theta_star,
                mean_iters_standard: mean(&iters[0]),
                mean_iters_exponential: mean(&iters[1]),
                solved_standard: solved(&iters[0]),
                solved_exponential: solved(&iters[1]),
            })
        })
        .collect()
}
