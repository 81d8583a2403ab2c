//! Deep LRU model: linear encoder, a stack of pre-norm residual blocks
//! (layer norm → LRU → GLU → dropout → skip), time pooling and a linear head.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gradients::lru_backward;
use crate::init::{glorot_real, lru_init, LruDims, LruInitConfig, LruParams, PhaseParam, RingConfig};
use crate::params::{ParamRole, Parameters, TensorMeta};
use crate::recurrence::{lru_forward, ExecMode, SequenceBatch, Trajectory};
use crate::rng::Rng;

const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    #[default]
    Mean,
    Last,
    /// No pooling: the head is applied at every timestep (sequence regression).
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GluVariant {
    /// `(W1 z) ⊙ σ(W2 z)`
    #[default]
    Full,
    /// `z ⊙ σ(W2 z)`, without the value projection.
    GateOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub depth: usize,
    /// Model width `H`.
    pub h: usize,
    /// State dimension `N` of each LRU.
    pub n: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub dropout: f64,
    pub ring: RingConfig,
    pub pooling: Pooling,
    pub glu_variant: GluVariant,
    pub phase: PhaseParam,
    pub b_scale: f64,
    pub exec: ExecMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            depth: 2,
            h: 8,
            n: 8,
            input_dim: 1,
            output_dim: 1,
            dropout: 0.0,
            ring: RingConfig::default(),
            pooling: Pooling::Mean,
            glu_variant: GluVariant::Full,
            phase: PhaseParam::Log,
            b_scale: 2.0,
            exec: ExecMode::Parallel,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidInput("model depth must be >= 1".into()));
        }
        if self.h == 0 || self.n == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidInput("model dimensions must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        self.ring.validate()
    }

    fn lru_init_config(&self) -> LruInitConfig {
        LruInitConfig {
            ring: self.ring,
            b_scale: self.b_scale,
            phase: self.phase,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub lru: LruParams,
    /// Value projection, `H × H`; empty for [`GluVariant::GateOnly`].
    pub glu_w1: Vec<f64>,
    /// Gate projection, `H × H`.
    pub glu_w2: Vec<f64>,
    pub norm_scale: Vec<f64>,
    pub norm_shift: Vec<f64>,
}

impl BlockParams {
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let h = cfg.h;
        let lru = lru_init(&cfg.lru_init_config(), LruDims::square(h, cfg.n), rng)?;
        let glu_w1 = match cfg.glu_variant {
            GluVariant::Full => glorot_real(h, h, rng),
            GluVariant::GateOnly => Vec::new(),
        };
        Ok(Self {
            lru,
            glu_w1,
            glu_w2: glorot_real(h, h, rng),
            norm_scale: vec![1.0; h],
            norm_shift: vec![0.0; h],
        })
    }

    pub fn width(&self) -> usize {
        self.norm_scale.len()
    }

    fn variant(&self) -> GluVariant {
        if self.glu_w1.is_empty() {
            GluVariant::GateOnly
        } else {
            GluVariant::Full
        }
    }

    fn visit_prefixed(&self, prefix: &str, f: &mut dyn FnMut(&TensorMeta, &[f64])) {
        let h = self.width();
        self.lru.visit(&mut |m, t| {
            let meta = TensorMeta::new(format!("{prefix}.lru.{}", m.name), &m.shape, m.role);
            f(&meta, t)
        });
        f(
            &TensorMeta::new(
                format!("{prefix}.glu_w1"),
                &[self.glu_w1.len() / h.max(1), h],
                ParamRole::Other,
            ),
            &self.glu_w1,
        );
        f(
            &TensorMeta::new(format!("{prefix}.glu_w2"), &[h, h], ParamRole::Other),
            &self.glu_w2,
        );
        f(
            &TensorMeta::new(format!("{prefix}.norm_scale"), &[h], ParamRole::Other),
            &self.norm_scale,
        );
        f(
            &TensorMeta::new(format!("{prefix}.norm_shift"), &[h], ParamRole::Other),
            &self.norm_shift,
        );
    }

    fn visit_prefixed_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&TensorMeta, &mut [f64])) {
        let h = self.width();
        self.lru.visit_mut(&mut |m, t| {
            let meta = TensorMeta::new(format!("{prefix}.lru.{}", m.name), &m.shape, m.role);
            f(&meta, t)
        });
        let w1_rows = self.glu_w1.len() / h.max(1);
        f(
            &TensorMeta::new(format!("{prefix}.glu_w1"), &[w1_rows, h], ParamRole::Other),
            &mut self.glu_w1,
        );
        f(
            &TensorMeta::new(format!("{prefix}.glu_w2"), &[h, h], ParamRole::Other),
            &mut self.glu_w2,
        );
        f(
            &TensorMeta::new(format!("{prefix}.norm_scale"), &[h], ParamRole::Other),
            &mut self.norm_scale,
        );
        f(
            &TensorMeta::new(format!("{prefix}.norm_shift"), &[h], ParamRole::Other),
            &mut self.norm_shift,
        );
    }
}

impl Parameters for BlockParams {
    fn visit(&self, f: &mut dyn FnMut(&TensorMeta, &[f64])) {
        self.visit_prefixed("block", f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&TensorMeta, &mut [f64])) {
        self.visit_prefixed_mut("block", f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub input_dim: usize,
    pub width: usize,
    pub output_dim: usize,
    /// `H × input_dim`
    pub encoder_w: Vec<f64>,
    pub encoder_b: Vec<f64>,
    pub blocks: Vec<BlockParams>,
    /// `output_dim × H`
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

impl ModelParams {
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let encoder_w = glorot_real(cfg.h, cfg.input_dim, rng);
        let blocks = (0..cfg.depth)
            .map(|_| BlockParams::init(cfg, rng))
            .collect::<Result<Vec<_>>>()?;
        let head_w = glorot_real(cfg.output_dim, cfg.h, rng);
        Ok(Self {
            input_dim: cfg.input_dim,
            width: cfg.h,
            output_dim: cfg.output_dim,
            encoder_w,
            encoder_b: vec![0.0; cfg.h],
            blocks,
            head_w,
            head_b: vec![0.0; cfg.output_dim],
        })
    }

    pub fn max_lambda_abs(&self) -> f64 {
        self.blocks.iter().map(|b| b.lru.max_lambda_abs()).fold(0.0, f64::max)
    }
}

impl Parameters for ModelParams {
    fn visit(&self, f: &mut dyn FnMut(&TensorMeta, &[f64])) {
        let (i, h, o) = (self.input_dim, self.width, self.output_dim);
        f(
            &TensorMeta::new("encoder.w", &[h, i], ParamRole::Other),
            &self.encoder_w,
        );
        f(&TensorMeta::new("encoder.b", &[h], ParamRole::Other), &self.encoder_b);
        for (k, b) in self.blocks.iter().enumerate() {
            b.visit_prefixed(&format!("blocks.{k}"), f);
        }
        f(&TensorMeta::new("head.w", &[o, h], ParamRole::Other), &self.head_w);
        f(&TensorMeta::new("head.b", &[o], ParamRole::Other), &self.head_b);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&TensorMeta, &mut [f64])) {
        let (i, h, o) = (self.input_dim, self.width, self.output_dim);
        f(
            &TensorMeta::new("encoder.w", &[h, i], ParamRole::Other),
            &mut self.encoder_w,
        );
        f(
            &TensorMeta::new("encoder.b", &[h], ParamRole::Other),
            &mut self.encoder_b,
        );
        for (k, b) in self.blocks.iter_mut().enumerate() {
            b.visit_prefixed_mut(&format!("blocks.{k}"), f);
        }
        f(&TensorMeta::new("head.w", &[o, h], ParamRole::Other), &mut self.head_w);
        f(&TensorMeta::new("head.b", &[o], ParamRole::Other), &mut self.head_b);
    }
}

/// `out[r] = W x[r] + b` for every row of a `(rows × in)` buffer.
fn linear_rows(x: &[f64], in_dim: usize, w: &[f64], b: Option<&[f64]>, out_dim: usize) -> Vec<f64> {
    let rows = x.len() / in_dim;
    let mut out = vec![0.0; rows * out_dim];
    for (xr, or) in x.chunks(in_dim).zip(out.chunks_mut(out_dim)) {
        for o in 0..out_dim {
            let wr = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = b.map_or(0.0, |b| b[o]);
            for k in 0..in_dim {
                acc += wr[k] * xr[k];
            }
            or[o] = acc;
        }
    }
    out
}

/// Backward of [`linear_rows`]: accumulates `dW` (and `db`), returns `dx`.
fn linear_rows_backward(
    x: &[f64],
    in_dim: usize,
    w: &[f64],
    dy: &[f64],
    out_dim: usize,
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut dx = vec![0.0; x.len()];
    for ((xr, dyr), dxr) in x.chunks(in_dim).zip(dy.chunks(out_dim)).zip(dx.chunks_mut(in_dim)) {
        for o in 0..out_dim {
            let g = dyr[o];
            if g == 0.0 {
                continue;
            }
            let wr = &w[o * in_dim..(o + 1) * in_dim];
            let dwr = &mut dw[o * in_dim..(o + 1) * in_dim];
            for k in 0..in_dim {
                dwr[k] += g * xr[k];
                dxr[k] += g * wr[k];
            }
        }
    }
    if let Some(db) = db {
        for dyr in dy.chunks(out_dim) {
            for (d, g) in db.iter_mut().zip(dyr) {
                *d += g;
            }
        }
    }
    dx
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Everything the block backward pass needs.
#[derive(Clone, Debug)]
pub struct BlockCache {
    input: SequenceBatch,
    x_hat: Vec<f64>,
    rstd: Vec<f64>,
    normed: SequenceBatch,
    traj: Trajectory,
    lru_out: SequenceBatch,
    value: Vec<f64>,
    gate: Vec<f64>,
    mask: Option<Vec<f64>>,
}

/// Inverted dropout mask: entries are `0` with probability `p`, else `1/(1-p)`.
pub fn dropout_mask(len: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// `u + Dropout(GLU(LRU(Norm(u))))`.
pub fn block_forward(
    block: &BlockParams,
    u: &SequenceBatch,
    dropout: f64,
    train: bool,
    exec: ExecMode,
    rng: &mut Rng,
) -> Result<(SequenceBatch, BlockCache)> {
    let h = block.width();
    check_dim("block input features", h, u.features)?;
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::InvalidInput(format!("dropout must be in [0, 1), got {dropout}")));
    }

    let rows = u.batch * u.len;
    let mut x_hat = vec![0.0; rows * h];
    let mut rstd = vec![0.0; rows];
    let mut normed = SequenceBatch::zeros(u.batch, u.len, h);
    for r in 0..rows {
        let x = &u.data[r * h..(r + 1) * h];
        let mean = x.iter().sum::<f64>() / h as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / h as f64;
        let s = 1.0 / (var + NORM_EPS).sqrt();
        rstd[r] = s;
        for k in 0..h {
            let xh = (x[k] - mean) * s;
            x_hat[r * h + k] = xh;
            normed.data[r * h + k] = block.norm_scale[k] * xh + block.norm_shift[k];
        }
    }

    let (lru_out, traj) = lru_forward(&block.lru, &normed, exec)?;

    let gate = linear_rows(&lru_out.data, h, &block.glu_w2, None, h);
    let value = match block.variant() {
        GluVariant::Full => linear_rows(&lru_out.data, h, &block.glu_w1, None, h),
        GluVariant::GateOnly => lru_out.data.clone(),
    };
    let mut out = u.clone();
    let mask = (train && dropout > 0.0).then(|| dropout_mask(rows * h, dropout, rng));
    for i in 0..rows * h {
        let mut v = value[i] * sigmoid(gate[i]);
        if let Some(m) = &mask {
            v *= m[i];
        }
        out.data[i] += v;
    }
    Ok((
        out,
        BlockCache {
            input: u.clone(),
            x_hat,
            rstd,
            normed,
            traj,
            lru_out,
            value,
            gate,
            mask,
        },
    ))
}

/// Returns (parameter gradients, input gradient).
pub fn block_backward(
    block: &BlockParams,
    cache: &BlockCache,
    d_out: &SequenceBatch,
) -> Result<(BlockParams, SequenceBatch)> {
    let h = block.width();
    let rows = cache.input.batch * cache.input.len;
    check_dim("block output gradient", rows * h, d_out.data.len())?;
    let mut g = block.zeros_like();

    // dropout and GLU
    let mut d_value = vec![0.0; rows * h];
    let mut d_gate = vec![0.0; rows * h];
    for i in 0..rows * h {
        let mut d = d_out.data[i];
        if let Some(m) = &cache.mask {
            d *= m[i];
        }
        let s = sigmoid(cache.gate[i]);
        d_value[i] = d * s;
        d_gate[i] = d * cache.value[i] * s * (1.0 - s);
    }
    let r = &cache.lru_out.data;
    let mut d_r = linear_rows_backward(r, h, &block.glu_w2, &d_gate, h, &mut g.glu_w2, None);
    match block.variant() {
        GluVariant::Full => {
            let dv = linear_rows_backward(r, h, &block.glu_w1, &d_value, h, &mut g.glu_w1, None);
            d_r.iter_mut().zip(&dv).for_each(|(a, b)| *a += b);
        }
        GluVariant::GateOnly => d_r.iter_mut().zip(&d_value).for_each(|(a, b)| *a += b),
    }

    // LRU
    let d_r = SequenceBatch::new(cache.input.batch, cache.input.len, h, d_r)?;
    let back = lru_backward(&block.lru, &cache.normed, &cache.traj, &d_r)?;
    g.lru = back.grads;
    let d_normed = back.d_input;

    // layer norm
    let mut d_in = d_out.clone();
    for row in 0..rows {
        let o = row * h;
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        let mut dxh = vec![0.0; h];
        for k in 0..h {
            let dy = d_normed.data[o + k];
            let xh = cache.x_hat[o + k];
            g.norm_scale[k] += dy * xh;
            g.norm_shift[k] += dy;
            dxh[k] = dy * block.norm_scale[k];
            mean_dxh += dxh[k];
            mean_dxh_xh += dxh[k] * xh;
        }
        mean_dxh /= h as f64;
        mean_dxh_xh /= h as f64;
        let s = cache.rstd[row];
        for k in 0..h {
            d_in.data[o + k] += s * (dxh[k] - mean_dxh - cache.x_hat[o + k] * mean_dxh_xh);
        }
    }
    Ok((g, d_in))
}

#[derive(Clone, Debug)]
pub struct ModelCache {
    input: SequenceBatch,
    blocks: Vec<BlockCache>,
    last_hidden: SequenceBatch,
    pooled: Vec<f64>,
    pooling: Pooling,
}

/// encode → blocks → pool over time → linear head.
///
/// Output is `(batch, 1, output_dim)` for mean/last pooling and
/// `(batch, len, output_dim)` without pooling.
pub fn model_forward(
    cfg: &ModelConfig,
    params: &ModelParams,
    u: &SequenceBatch,
    train: bool,
    rng: &mut Rng,
) -> Result<(SequenceBatch, ModelCache)> {
    cfg.validate()?;
    check_dim("model blocks", cfg.depth, params.blocks.len())?;
    check_dim("model input features", params.input_dim, u.features)?;
    let h = params.width;
    let encoded = linear_rows(&u.data, u.features, &params.encoder_w, Some(&params.encoder_b), h);
    let mut z = SequenceBatch::new(u.batch, u.len, h, encoded)?;
    let mut caches = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let (out, cache) = block_forward(block, &z, cfg.dropout, train, cfg.exec, rng)?;
        caches.push(cache);
        z = out;
    }
    let (pooled, out_len) = pool(&z, cfg.pooling);
    let logits = linear_rows(&pooled, h, &params.head_w, Some(&params.head_b), params.output_dim);
    let out = SequenceBatch::new(u.batch, out_len, params.output_dim, logits)?;
    Ok((
        out,
        ModelCache {
            input: u.clone(),
            blocks: caches,
            last_hidden: z,
            pooled,
            pooling: cfg.pooling,
        },
    ))
}

fn pool(z: &SequenceBatch, pooling: Pooling) -> (Vec<f64>, usize) {
    let h = z.features;
    match pooling {
        Pooling::None => (z.data.clone(), z.len),
        Pooling::Last => {
            let mut out = Vec::with_capacity(z.batch * h);
            for b in 0..z.batch {
                out.extend_from_slice(z.at(b, z.len - 1));
            }
            (out, 1)
        }
        Pooling::Mean => {
            let mut out = vec![0.0; z.batch * h];
            for b in 0..z.batch {
                for t in 0..z.len {
                    for (o, v) in out[b * h..(b + 1) * h].iter_mut().zip(z.at(b, t)) {
                        *o += v;
                    }
                }
            }
            out.iter_mut().for_each(|v| *v /= z.len as f64);
            (out, 1)
        }
    }
}

pub fn model_backward(params: &ModelParams, cache: &ModelCache, d_out: &SequenceBatch) -> Result<ModelParams> {
    let h = params.width;
    let z = &cache.last_hidden;
    let mut g = params.zeros_like();
    check_dim(
        "model output gradient",
        cache.pooled.len() / h * params.output_dim,
        d_out.data.len(),
    )?;
    let d_pooled = linear_rows_backward(
        &cache.pooled,
        h,
        &params.head_w,
        &d_out.data,
        params.output_dim,
        &mut g.head_w,
        Some(&mut g.head_b),
    );
    let mut dz = SequenceBatch::zeros(z.batch, z.len, h);
    match cache.pooling {
        Pooling::None => dz.data.copy_from_slice(&d_pooled),
        Pooling::Last => {
            for b in 0..z.batch {
                dz.at_mut(b, z.len - 1).copy_from_slice(&d_pooled[b * h..(b + 1) * h]);
            }
        }
        Pooling::Mean => {
            let scale = 1.0 / z.len as f64;
            for b in 0..z.batch {
                for t in 0..z.len {
                    for (d, v) in dz.at_mut(b, t).iter_mut().zip(&d_pooled[b * h..(b + 1) * h]) {
                        *d = v * scale;
                    }
                }
            }
        }
    }
    for (k, block) in params.blocks.iter().enumerate().rev() {
        let (gb, d_in) = block_backward(block, &cache.blocks[k], &dz)?;
        g.blocks[k] = gb;
        dz = d_in;
    }
    let u = &cache.input;
    linear_rows_backward(
        &u.data,
        u.features,
        &params.encoder_w,
        &dz.data,
        h,
        &mut g.encoder_w,
        Some(&mut g.encoder_b),
    );
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradients::finite_difference_check;
    use crate::numerics::C64;
    use crate::rng;

    fn random_batch(batch: usize, len: usize, h: usize, seed: u64) -> SequenceBatch {
        let mut r = rng::root(seed);
        SequenceBatch::from_fn(batch, len, h, |_, _, _| r.random::<f64>() * 2.0 - 1.0)
    }

    fn probe(y: &SequenceBatch, w: &SequenceBatch) -> f64 {
        y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn zero_output_path_gives_identity_block() {
        let cfg = ModelConfig::default();
        let mut block = BlockParams::init(&cfg, &mut rng::root(0)).unwrap();
        block.lru.c_re.fill(0.0);
        block.lru.c_im.fill(0.0);
        block.lru.d.fill(0.0);
        let u = random_batch(2, 6, 8, 1);
        let (out, _) = block_forward(&block, &u, 0.0, false, ExecMode::Sequential, &mut rng::root(1)).unwrap();
        assert_eq!(out.data, u.data);
    }

    #[test]
    fn dropout_zero_is_inactive_in_training() {
        let cfg = ModelConfig::default();
        let block = BlockParams::init(&cfg, &mut rng::root(0)).unwrap();
        let u = random_batch(2, 6, 8, 1);
        let (a, _) = block_forward(&block, &u, 0.0, false, ExecMode::Sequential, &mut rng::root(1)).unwrap();
        let (b, _) = block_forward(&block, &u, 0.0, true, ExecMode::Sequential, &mut rng::root(2)).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn dropout_mask_is_unbiased() {
        let mut r = rng::root(3);
        let m = dropout_mask(10_000, 0.3, &mut r);
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.03);
    }

    #[test]
    fn block_gradients_match_fd() {
        for variant in [GluVariant::Full, GluVariant::GateOnly] {
            let cfg = ModelConfig {
                glu_variant: variant,
                dropout: 0.25,
                ..Default::default()
            };
            let block = BlockParams::init(&cfg, &mut rng::root(7)).unwrap();
            let u = random_batch(2, 12, 8, 8);
            let w = random_batch(2, 12, 8, 9);
            // fixed dropout mask: same rng seed on every evaluation
            let loss = |b: &BlockParams| {
                let (y, _) = block_forward(b, &u, 0.25, true, ExecMode::Sequential, &mut rng::root(5)).unwrap();
                probe(&y, &w)
            };
            let (_, cache) = block_forward(&block, &u, 0.25, true, ExecMode::Sequential, &mut rng::root(5)).unwrap();
            let (g, d_in) = block_backward(&block, &cache, &w).unwrap();
            let report = finite_difference_check(loss, &block, &g, 1e-5).unwrap();
            assert!(report.passes(1e-5), "{variant:?}: {report:#?}");

            let h = 1e-6;
            for idx in (0..u.data.len()).step_by(7) {
                let mut up = u.clone();
                up.data[idx] += h;
                let mut um = u.clone();
                um.data[idx] -= h;
                let f = |x: &SequenceBatch| {
                    let (y, _) = block_forward(&block, x, 0.25, true, ExecMode::Sequential, &mut rng::root(5)).unwrap();
                    probe(&y, &w)
                };
                let numeric = (f(&up) - f(&um)) / (2.0 * h);
                assert!((numeric - d_in.data[idx]).abs() < 1e-6 * numeric.abs().max(1.0));
            }
        }
    }

    #[test]
    fn model_output_shapes_and_depth_validation() {
        let cfg = ModelConfig {
            depth: 2,
            h: 8,
            n: 8,
            input_dim: 3,
            output_dim: 5,
            ..Default::default()
        };
        let params = ModelParams::init(&cfg, &mut rng::root(0)).unwrap();
        let u = random_batch(4, 16, 3, 1);
        let (y, _) = model_forward(&cfg, &params, &u, false, &mut rng::root(0)).unwrap();
        assert_eq!((y.batch, y.len, y.features), (4, 1, 5));

        let seq = ModelConfig {
            pooling: Pooling::None,
            ..cfg.clone()
        };
        let (y, _) = model_forward(&seq, &params, &u, false, &mut rng::root(0)).unwrap();
        assert_eq!((y.batch, y.len, y.features), (4, 16, 5));

        let bad = ModelConfig { depth: 0, ..cfg };
        assert!(bad.validate().is_err());
        assert!(ModelParams::init(&bad, &mut rng::root(0)).is_err());
    }

    #[test]
    fn model_gradients_match_fd() {
        for pooling in [Pooling::Mean, Pooling::Last, Pooling::None] {
            let cfg = ModelConfig {
                depth: 2,
                h: 4,
                n: 4,
                input_dim: 2,
                output_dim: 3,
                pooling,
                exec: ExecMode::Sequential,
                ..Default::default()
            };
            let params = ModelParams::init(&cfg, &mut rng::root(11)).unwrap();
            let u = random_batch(2, 10, 2, 12);
            let (y, cache) = model_forward(&cfg, &params, &u, false, &mut rng::root(0)).unwrap();
            let w = random_batch(y.batch, y.len, y.features, 13);
            let g = model_backward(&params, &cache, &w).unwrap();
            let loss = |p: &ModelParams| {
                let (y, _) = model_forward(&cfg, p, &u, false, &mut rng::root(0)).unwrap();
                probe(&y, &w)
            };
            let report = finite_difference_check(loss, &params, &g, 1e-5).unwrap();
            assert!(report.passes(1e-5), "{pooling:?}: {report:#?}");
        }
    }

    #[test]
    fn zeroed_blocks_reduce_to_head_of_pooled_encoding() {
        let cfg = ModelConfig {
            input_dim: 2,
            output_dim: 3,
            ..Default::default()
        };
        let mut params = ModelParams::init(&cfg, &mut rng::root(2)).unwrap();
        for b in &mut params.blocks {
            b.lru.c_re.fill(0.0);
            b.lru.c_im.fill(0.0);
            b.lru.d.fill(0.0);
        }
        let u = random_batch(3, 7, 2, 3);
        let (y, _) = model_forward(&cfg, &params, &u, false, &mut rng::root(0)).unwrap();
        let enc = linear_rows(&u.data, 2, &params.encoder_w, Some(&params.encoder_b), 8);
        let (pooled, _) = pool(&SequenceBatch::new(3, 7, 8, enc).unwrap(), Pooling::Mean);
        let expected = linear_rows(&pooled, 8, &params.head_w, Some(&params.head_b), 3);
        for (a, b) in y.data.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn memoryless_model_is_position_wise() {
        let cfg = ModelConfig {
            pooling: Pooling::None,
            phase: PhaseParam::Direct,
            ..Default::default()
        };
        let mut params = ModelParams::init(&cfg, &mut rng::root(4)).unwrap();
        for b in &mut params.blocks {
            let lambdas = vec![C64::new(0.5, 0.0); cfg.n];
            let fresh = LruParams::with_lambdas(b.lru.dims, PhaseParam::Direct, &lambdas).unwrap();
            b.lru.theta_log = fresh.theta_log;
            b.lru.nu_log = vec![800.0; cfg.n];
            b.lru.gamma_log.fill(0.0);
        }
        let u = random_batch(1, 9, 1, 5);
        let (y, _) = model_forward(&cfg, &params, &u, false, &mut rng::root(0)).unwrap();
        let mut reversed = u.clone();
        for t in 0..9 {
            reversed.data[t] = u.data[8 - t];
        }
        let (yr, _) = model_forward(&cfg, &params, &reversed, false, &mut rng::root(0)).unwrap();
        for t in 0..9 {
            assert!((y.data[t] - yr.data[8 - t]).abs() < 1e-13);
        }
    }
}
