//! AdamW with recurrent/general parameter groups, the warmup + cosine
//! schedule, and a deterministic training loop.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gradients::{cross_entropy_loss, mse_loss};
use crate::model::{model_backward, model_forward, ModelConfig, ModelParams};
use crate::params::{ParamRole, Parameters};
use crate::recurrence::SequenceBatch;
use crate::report::ExperimentReport;
use crate::rng::{self, Rng};

/// Floor of the schedule at both ends.
pub const LR_FLOOR: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    WarmupCosine,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub base_lr: f64,
    /// Multiplier on the learning rate of the recurrent group.
    pub lr_factor: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub warmup_frac: f64,
    pub total_steps: usize,
    pub schedule: ScheduleKind,
    /// Put `θ^log` in the recurrent group.
    pub theta_recurrent: bool,
    /// Put the skip `D` in the recurrent group.
    pub skip_recurrent: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-3,
            lr_factor: 0.5,
            weight_decay: 0.05,
            betas: (0.9, 0.999),
            eps: 1e-8,
            warmup_frac: 0.1,
            total_steps: 1000,
            schedule: ScheduleKind::WarmupCosine,
            theta_recurrent: true,
            skip_recurrent: false,
        }
    }
}

impl OptimConfig {
    /// Plain Adam: constant learning rate, no weight decay, one group.
    pub fn adam(lr: f64, total_steps: usize) -> Self {
        Self {
            base_lr: lr,
            lr_factor: 1.0,
            weight_decay: 0.0,
            warmup_frac: 0.0,
            total_steps,
            schedule: ScheduleKind::Constant,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (b1, b2) = self.betas;
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(0.0 < b1 && b1 < 1.0 && 0.0 < b2 && b2 < 1.0) {
            return bad(format!("betas must lie in (0, 1), got ({b1}, {b2})"));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad(format!("lr_factor must lie in (0, 1], got {}", self.lr_factor));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return bad(format!("warmup_frac must lie in [0, 1], got {}", self.warmup_frac));
        }
        Ok(())
    }

    pub fn is_recurrent(&self, role: ParamRole) -> bool {
        match role {
            ParamRole::Nu | ParamRole::Gamma | ParamRole::InputProjection => true,
            ParamRole::Theta => self.theta_recurrent,
            ParamRole::Skip => self.skip_recurrent,
            ParamRole::OutputProjection | ParamRole::Other => false,
        }
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_frac * self.total_steps as f64).round() as usize
    }
}

/// Learning rate at `step` (clamped to `[0, total_steps]`).
pub fn lr_schedule(step: usize, cfg: &OptimConfig) -> f64 {
    if cfg.schedule == ScheduleKind::Constant {
        return cfg.base_lr;
    }
    let step = step.min(cfg.total_steps);
    let warmup = cfg.warmup_steps();
    let span = cfg.base_lr - LR_FLOOR;
    if step < warmup {
        return LR_FLOOR + span * step as f64 / warmup as f64;
    }
    let decay = cfg.total_steps - warmup;
    if decay == 0 {
        return cfg.base_lr;
    }
    let progress = (step - warmup) as f64 / decay as f64;
    LR_FLOOR + span * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<P: Parameters> {
    pub params: P,
    pub m: P,
    pub v: P,
    pub step: usize,
}

impl<P: Parameters> TrainState<P> {
    pub fn new(params: P) -> Self {
        let m = params.zeros_like();
        let v = params.zeros_like();
        Self { params, m, v, step: 0 }
    }
}

/// One AdamW update at learning rate `lr`. A non-finite gradient rejects the
/// step and leaves the state untouched.
pub fn adamw_step<P: Parameters>(state: &mut TrainState<P>, grads: &P, cfg: &OptimConfig, lr: f64) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient"));
    }
    check_dim("gradient scalars", state.params.num_scalars(), grads.num_scalars())?;
    let (b1, b2) = cfg.betas;
    let t = (state.step + 1) as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);

    let g = grads.to_flat();
    let mut m = state.m.to_flat();
    let mut v = state.v.to_flat();
    let mut offset = 0;
    state.params.visit_mut(&mut |meta, p| {
        let (lr_g, wd) = if cfg.is_recurrent(meta.role) {
            (lr * cfg.lr_factor, 0.0)
        } else {
            (lr, cfg.weight_decay)
        };
        for (j, pj) in p.iter_mut().enumerate() {
            let i = offset + j;
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let update = (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
            *pj -= lr_g * wd * *pj + lr_g * update;
        }
        offset += p.len();
    });
    state.m.set_flat(&m);
    state.v.set_flat(&v);
    state.step += 1;
    Ok(())
}

/// A trainable objective.
pub trait Task {
    type Params: Parameters;

    fn name(&self) -> &str;

    fn init(&self, rng: &mut Rng) -> Result<Self::Params>;

    /// Training loss and gradient at `step`; `rng` drives stochastic layers.
    fn loss_and_grad(&self, params: &Self::Params, step: usize, rng: &mut Rng) -> Result<(f64, Self::Params)>;

    /// Deterministic evaluation metrics.
    fn evaluate(&self, params: &Self::Params) -> Result<Vec<(String, f64)>>;

    /// Largest eigenvalue magnitude of any recurrence, if the model has one.
    fn max_lambda_abs(&self, _params: &Self::Params) -> f64 {
        f64::NAN
    }
}

pub const TRAIN_COLUMNS: [&str; 4] = ["step", "lr", "loss", "max_lambda_abs"];

/// Trains from `task.init` for `optim.total_steps` steps.
///
/// Row `s` of the report holds the loss evaluated before update `s` and
/// `max|λ|` after it. A non-finite loss or gradient stops training and flags
/// the report as diverged.
pub fn train_loop<T: Task>(task: &T, optim: &OptimConfig, seed: u64) -> Result<(ExperimentReport, T::Params)> {
    optim.validate()?;
    let params = task.init(&mut rng::stream(seed, 0))?;
    train_from(task, params, optim, seed)
}

pub fn train_from<T: Task>(
    task: &T,
    params: T::Params,
    optim: &OptimConfig,
    seed: u64,
) -> Result<(ExperimentReport, T::Params)> {
    optim.validate()?;
    let mut report = ExperimentReport::new(task.name(), seed, &TRAIN_COLUMNS);
    report.config = serde_json::to_value(optim)?;
    for (k, v) in task.evaluate(&params)? {
        report.metric(format!("initial_{k}"), v);
    }
    report.metric("initial_max_lambda_abs", task.max_lambda_abs(&params));

    let mut state = TrainState::new(params);
    let mut noise = rng::stream(seed, 1);
    for step in 0..optim.total_steps {
        let lr = lr_schedule(step, optim);
        let outcome = task
            .loss_and_grad(&state.params, step, &mut noise)
            .and_then(|(loss, g)| {
                if !loss.is_finite() {
                    return Err(Error::Diverged(step));
                }
                adamw_step(&mut state, &g, optim, lr).map(|_| loss)
            });
        let loss = match outcome {
            Ok(loss) => loss,
            Err(e) if e.is_numerical() => {
                report.diverged = true;
                report.notes.push(format!("stopped at step {step}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        report.push_row(vec![step as f64, lr, loss, task.max_lambda_abs(&state.params)])?;
    }

    report.metric("steps", report.rows.len() as f64);
    if !report.rows.is_empty() {
        if let Some(last) = report.rows.last() {
            report.metric("final_train_loss", last[2]);
        }
        let max_lambda = report
            .column("max_lambda_abs")
            .unwrap_or_default()
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        report.metric("max_lambda_abs_trace", max_lambda);
        if !report.diverged {
            for (k, v) in task.evaluate(&state.params)? {
                report.metric(format!("final_{k}"), v);
            }
        }
    }
    Ok((report, state.params))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// Same layout as the model output.
    Regression(SequenceBatch),
    /// One label per sequence.
    Classes(Vec<usize>),
}

/// Supervised training of the deep model on a fixed dataset.
#[derive(Clone, Debug)]
pub struct ModelTask {
    pub name: String,
    pub model: ModelConfig,
    pub inputs: SequenceBatch,
    pub targets: Targets,
    /// Mini-batch size; `None` trains full-batch. Batches rotate
    /// deterministically through the dataset.
    pub batch_size: Option<usize>,
}

impl ModelTask {
    fn select(&self, step: usize) -> (SequenceBatch, Targets) {
        let total = self.inputs.batch;
        let bs = match self.batch_size {
            Some(bs) if bs < total => bs,
            _ => return (self.inputs.clone(), self.targets.clone()),
        };
        let idx: Vec<usize> = (0..bs).map(|i| (step * bs + i) % total).collect();
        let take = |src: &SequenceBatch| {
            let per = src.len * src.features;
            let data = idx
                .iter()
                .flat_map(|&b| src.data[b * per..(b + 1) * per].iter().copied())
                .collect();
            SequenceBatch {
                batch: bs,
                len: src.len,
                features: src.features,
                data,
            }
        };
        let targets = match &self.targets {
            Targets::Regression(t) => Targets::Regression(take(t)),
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&b| c[b]).collect()),
        };
        (take(&self.inputs), targets)
    }

    fn loss(&self, y: &SequenceBatch, targets: &Targets) -> Result<(f64, SequenceBatch)> {
        match targets {
            Targets::Regression(t) => mse_loss(y, t),
            Targets::Classes(labels) => {
                let (loss, grad) = cross_entropy_loss(&y.data, y.features, labels)?;
                Ok((loss, SequenceBatch::new(y.batch, y.len, y.features, grad)?))
            }
        }
    }
}

impl Task for ModelTask {
    type Params = ModelParams;

    fn name(&self) -> &str {
        &self.name
    }

    fn init(&self, rng: &mut Rng) -> Result<ModelParams> {
        ModelParams::init(&self.model, rng)
    }

    fn loss_and_grad(&self, params: &ModelParams, step: usize, rng: &mut Rng) -> Result<(f64, ModelParams)> {
        let (u, targets) = self.select(step);
        let (y, cache) = model_forward(&self.model, params, &u, true, rng)?;
        let (loss, dy) = self.loss(&y, &targets)?;
        Ok((loss, model_backward(params, &cache, &dy)?))
    }

    fn evaluate(&self, params: &ModelParams) -> Result<Vec<(String, f64)>> {
        let mut unused = rng::root(0);
        let (y, _) = model_forward(&self.model, params, &self.inputs, false, &mut unused)?;
        let (loss, _) = self.loss(&y, &self.targets)?;
        let mut out = vec![("loss".to_string(), loss)];
        if let Targets::Classes(labels) = &self.targets {
            let c = y.features;
            let correct = labels
                .iter()
                .enumerate()
                .filter(|(r, &l)| {
                    let row = &y.data[r * c..(r + 1) * c];
                    let arg = (0..c).fold(0, |best, k| if row[k] > row[best] { k } else { best });
                    arg == l
                })
                .count();
            out.push(("accuracy".into(), correct as f64 / labels.len().max(1) as f64));
        }
        Ok(out)
    }

    fn max_lambda_abs(&self, params: &ModelParams) -> f64 {
        params.max_lambda_abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::TensorMeta;

    #[derive(Clone, Debug, PartialEq)]
    struct Pair {
        rec: Vec<f64>,
        other: Vec<f64>,
    }

    impl Parameters for Pair {
        fn visit(&self, f: &mut dyn FnMut(&TensorMeta, &[f64])) {
            f(&TensorMeta::new("rec", &[self.rec.len()], ParamRole::Nu), &self.rec);
            f(
                &TensorMeta::new("other", &[self.other.len()], ParamRole::Other),
                &self.other,
            );
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&TensorMeta, &mut [f64])) {
            f(&TensorMeta::new("rec", &[self.rec.len()], ParamRole::Nu), &mut self.rec);
            f(
                &TensorMeta::new("other", &[self.other.len()], ParamRole::Other),
                &mut self.other,
            );
        }
    }

    fn pair(a: f64, b: f64) -> Pair {
        Pair {
            rec: vec![a],
            other: vec![b],
        }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let cfg = OptimConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut s = TrainState::new(pair(1.5, -2.0));
        adamw_step(&mut s, &pair(0.0, 0.0), &cfg, 0.01).unwrap();
        assert_eq!(s.params, pair(1.5, -2.0));
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = OptimConfig {
            weight_decay: 0.0,
            lr_factor: 1.0,
            ..Default::default()
        };
        let mut s = TrainState::new(pair(0.0, 0.0));
        adamw_step(&mut s, &pair(0.3, 0.3), &cfg, 0.01).unwrap();
        let expected = -0.01 * 0.3 / (0.3 + 1e-8);
        assert!((s.params.other[0] - expected).abs() < 1e-15);
        assert!((s.params.other[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn recurrent_group_uses_lr_factor() {
        let cfg = OptimConfig {
            weight_decay: 0.0,
            lr_factor: 0.25,
            ..Default::default()
        };
        let mut s = TrainState::new(pair(0.0, 0.0));
        adamw_step(&mut s, &pair(0.3, 0.3), &cfg, 0.01).unwrap();
        assert!((s.params.rec[0] / s.params.other[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn decoupled_decay_spares_recurrent_group() {
        let cfg = OptimConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut s = TrainState::new(pair(2.0, 2.0));
        for _ in 0..3 {
            adamw_step(&mut s, &pair(0.0, 0.0), &cfg, 0.01).unwrap();
        }
        assert_eq!(s.params.rec[0], 2.0);
        assert!((s.params.other[0] - 2.0 * (1.0 - 0.001f64).powi(3)).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_rejects_step() {
        let cfg = OptimConfig::default();
        let mut s = TrainState::new(pair(1.0, 1.0));
        let before = s.clone();
        assert!(adamw_step(&mut s, &pair(f64::NAN, 0.0), &cfg, 0.01).is_err());
        assert_eq!(s, before);
    }

    #[test]
    fn group_membership_is_configurable() {
        let cfg = OptimConfig::default();
        assert!(cfg.is_recurrent(ParamRole::Theta));
        assert!(!cfg.is_recurrent(ParamRole::Skip));
        assert!(!cfg.is_recurrent(ParamRole::OutputProjection));
        let cfg = OptimConfig {
            theta_recurrent: false,
            skip_recurrent: true,
            ..cfg
        };
        assert!(!cfg.is_recurrent(ParamRole::Theta));
        assert!(cfg.is_recurrent(ParamRole::Skip));
    }

    #[test]
    fn schedule_endpoints() {
        let cfg = OptimConfig {
            base_lr: 1e-3,
            total_steps: 1000,
            ..Default::default()
        };
        assert_eq!(lr_schedule(0, &cfg), 1e-7);
        assert!((lr_schedule(100, &cfg) - 1e-3).abs() < 1e-18);
        assert!((lr_schedule(1000, &cfg) - 1e-7).abs() < 1e-18);
        assert!(lr_schedule(50, &cfg) > 4e-4 && lr_schedule(50, &cfg) < 6e-4);
    }

    #[test]
    fn schedule_is_continuous() {
        let cfg = OptimConfig {
            base_lr: 1e-2,
            total_steps: 500,
            ..Default::default()
        };
        let warmup = cfg.warmup_steps();
        let slope = (cfg.base_lr - LR_FLOOR) / warmup as f64;
        for s in 0..cfg.total_steps {
            let jump = (lr_schedule(s + 1, &cfg) - lr_schedule(s, &cfg)).abs();
            assert!(jump <= slope * (1.0 + 1e-12), "step {s}: {jump}");
        }
        // across the warmup/decay boundary the step is below base_lr/total_steps
        let edge = (lr_schedule(warmup + 1, &cfg) - lr_schedule(warmup, &cfg)).abs();
        assert!(edge < cfg.base_lr / cfg.total_steps as f64);
    }

    #[test]
    fn constant_schedule() {
        let cfg = OptimConfig::adam(3e-3, 10);
        assert_eq!(lr_schedule(0, &cfg), 3e-3);
        assert_eq!(lr_schedule(10, &cfg), 3e-3);
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = OptimConfig::default();
        for cfg in [
            OptimConfig {
                betas: (1.0, 0.9),
                ..base.clone()
            },
            OptimConfig {
                eps: 0.0,
                ..base.clone()
            },
            OptimConfig {
                lr_factor: 0.0,
                ..base.clone()
            },
            OptimConfig {
                warmup_frac: 1.5,
                ..base.clone()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    fn small_task() -> ModelTask {
        let model = ModelConfig {
            depth: 1,
            h: 4,
            n: 4,
            input_dim: 1,
            output_dim: 2,
            dropout: 0.1,
            ..Default::default()
        };
        let mut r = rng::root(9);
        let inputs = SequenceBatch::from_fn(8, 12, 1, |_, _, _| crate::init::uniform(&mut r, -1.0, 1.0));
        let labels = (0..8)
            .map(|b| usize::from(inputs.sequence(b).iter().sum::<f64>() > 0.0))
            .collect();
        ModelTask {
            name: "sign".into(),
            model,
            inputs,
            targets: Targets::Classes(labels),
            batch_size: Some(4),
        }
    }

    #[test]
    fn zero_steps_reports_only_initial_evaluation() {
        let task = small_task();
        let cfg = OptimConfig {
            total_steps: 0,
            ..Default::default()
        };
        let (report, _) = train_loop(&task, &cfg, 1).unwrap();
        assert!(report.rows.is_empty());
        assert!(report.metrics.contains_key("initial_loss"));
        assert!(!report.metrics.keys().any(|k| k.starts_with("final_")));
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let task = small_task();
        let cfg = OptimConfig {
            base_lr: 1e-2,
            total_steps: 60,
            ..Default::default()
        };
        let (a, _) = train_loop(&task, &cfg, 3).unwrap();
        let (b, _) = train_loop(&task, &cfg, 3).unwrap();
        assert_eq!(a.rows, b.rows);
        assert!(!a.diverged);
        assert!(a.metrics["final_loss"] < a.metrics["initial_loss"]);
        assert!(a.column("max_lambda_abs").unwrap().iter().all(|&r| r < 1.0));
    }

    #[test]
    fn divergence_is_flagged() {
        let task = small_task();
        let cfg = OptimConfig {
            base_lr: 1e300,
            schedule: ScheduleKind::Constant,
            weight_decay: 0.0,
            total_steps: 20,
            ..Default::default()
        };
        let (report, _) = train_loop(&task, &cfg, 0).unwrap();
        assert!(report.diverged);
        assert!(report.rows.len() < 20);
    }
}
