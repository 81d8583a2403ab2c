//! Learning a fixed 1-D convolution with a single-layer dense RNN, linear
//! versus tanh recurrence.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{dense_rnn_backward, mse_loss};
use crate::init::uniform;
use crate::recurrence::{dense_rnn_forward, dense_rnn_forward_tape, Activation, DenseRnn, SequenceBatch};
use crate::rng::{self, Rng};
use crate::training::{train_loop, OptimConfig, Task};

/// `h_k = 0.1 · exp(-0.015 k) · cos(0.04 k)²`
pub fn conv_kernel(len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| {
            let k = k as f64;
            0.1 * (-0.015 * k).exp() * (0.04 * k).cos().powi(2)
        })
        .collect()
}

/// Causal convolution `y_k = Σ_{j ≤ k} h_j u_{k-j}`.
pub fn causal_convolve(u: &[f64], h: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|k| (0..=k.min(h.len().saturating_sub(1))).map(|j| h[j] * u[k - j]).sum())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvKernelConfig {
    pub len: usize,
    pub sequences: usize,
    /// Range of the frequency multipliers `a` and `c`.
    pub freq_range: (f64, f64),
}

impl Default for ConvKernelConfig {
    fn default() -> Self {
        Self {
            len: 100,
            sequences: 32,
            freq_range: (0.5, 2.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvKernelData {
    pub inputs: SequenceBatch,
    pub targets: SequenceBatch,
    pub kernel: Vec<f64>,
    /// `(a, c)` per sequence.
    pub freqs: Vec<(f64, f64)>,
}

/// Inputs `sin(0.05 a k) · cos(0.05 c k)²` for `k = 0..len`, targets their
/// convolution with [`conv_kernel`].
pub fn conv_kernel_task(cfg: &ConvKernelConfig, seed: u64) -> Result<ConvKernelData> {
    let (lo, hi) = cfg.freq_range;
    if cfg.len == 0 || cfg.sequences == 0 || !(lo <= hi) {
        return Err(Error::InvalidInput(
            "conv-kernel task needs len, sequences >= 1 and a valid range".into(),
        ));
    }
    let mut r = rng::root(seed);
    let freqs: Vec<(f64, f64)> = (0..cfg.sequences)
        .map(|_| (uniform(&mut r, lo, hi), uniform(&mut r, lo, hi)))
        .collect();
    let kernel = conv_kernel(cfg.len);
    let inputs = SequenceBatch::from_fn(cfg.sequences, cfg.len, 1, |b, k, _| {
        let (a, c) = freqs[b];
        let k = k as f64;
        (0.05 * a * k).sin() * (0.05 * c * k).cos().powi(2)
    });
    let mut targets = SequenceBatch::zeros(cfg.sequences, cfg.len, 1);
    for b in 0..cfg.sequences {
        let y = causal_convolve(inputs.sequence(b), &kernel);
        targets.data[b * cfg.len..(b + 1) * cfg.len].copy_from_slice(&y);
    }
    Ok(ConvKernelData {
        inputs,
        targets,
        kernel,
        freqs,
    })
}

/// Full-batch MSE regression with a single-layer dense RNN.
#[derive(Clone, Debug)]
pub struct DenseRnnTask {
    pub data: ConvKernelData,
    pub activation: Activation,
    pub hidden: usize,
}

impl Task for DenseRnnTask {
    type Params = DenseRnn;

    fn name(&self) -> &str {
        match self.activation {
            Activation::Linear => "conv-linear",
            Activation::Tanh => "conv-tanh",
            Activation::Relu => "conv-relu",
        }
    }

    fn init(&self, rng: &mut Rng) -> Result<DenseRnn> {
        DenseRnn::glorot(self.hidden, 1, 1, self.activation, rng)
    }

    fn loss_and_grad(&self, params: &DenseRnn, _step: usize, _rng: &mut Rng) -> Result<(f64, DenseRnn)> {
        let (y, tape) = dense_rnn_forward_tape(params, &self.data.inputs)?;
        let (loss, dy) = mse_loss(&y, &self.data.targets)?;
        Ok((loss, dense_rnn_backward(params, &tape, &dy)?))
    }

    fn evaluate(&self, params: &DenseRnn) -> Result<Vec<(String, f64)>> {
        let y = dense_rnn_forward(params, &self.data.inputs)?;
        Ok(vec![("mse".into(), mse_loss(&y, &self.data.targets)?.0)])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvComparisonConfig {
    pub data: ConvKernelConfig,
    pub hidden: usize,
    pub steps: usize,
    pub lr_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Optimizer template; `base_lr` and `total_steps` are replaced per run.
    #[serde(skip)]
    pub optim: OptimConfig,
}

impl Default for ConvComparisonConfig {
    fn default() -> Self {
        Self {
            data: ConvKernelConfig::default(),
            hidden: 100,
            steps: 2000,
            lr_grid: vec![1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
            seeds: vec![0, 1, 2],
            optim: OptimConfig::adam(1e-3, 2000),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvRun {
    pub lr: f64,
    pub seed: u64,
    pub activation: Activation,
    pub final_loss: f64,
    pub diverged: bool,
}

/// Trains linear and tanh RNNs for every `(lr, seed)` pair, by default with
/// plain Adam.
///
/// Seed `s` fixes both the dataset and the initialization, so the two
/// activations start from identical weights.
pub fn conv_kernel_comparison(cfg: &ConvComparisonConfig) -> Result<Vec<ConvRun>> {
    let jobs: Vec<(f64, u64, Activation)> = cfg
        .lr_grid
        .iter()
        .flat_map(|&lr| {
            cfg.seeds
                .iter()
                .flat_map(move |&s| [Activation::Linear, Activation::Tanh].map(|a| (lr, s, a)))
        })
        .collect();
    jobs.into_par_iter()
        .map(|(lr, seed, activation)| {
            let task = DenseRnnTask {
                data: conv_kernel_task(&cfg.data, seed)?,
                activation,
                hidden: cfg.hidden,
            };
            let optim = OptimConfig {
                base_lr: lr,
                total_steps: cfg.steps,
                ..cfg.optim.clone()
            };
            let (report, _) = train_loop(&task, &optim, seed)?;
            let final_loss = if report.diverged {
                f64::INFINITY
            } else {
                report.metrics.get("final_mse").copied().unwrap_or(f64::NAN)
            };
            Ok(ConvRun {
                lr,
                seed,
                activation,
                final_loss,
                diverged: report.diverged,
            })
        })
        .collect()
}
