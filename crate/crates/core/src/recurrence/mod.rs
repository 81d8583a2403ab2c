//! Forward passes: the LRU recurrence (sequential, chunked parallel scan and
//! tree scan), dense RNN baselines, zero-order-hold discretization, and the
//! real 2×2 block form of a complex diagonal transition.

pub mod dense;
pub mod scan;
pub mod zoh;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::init::{LruDims, LruParams};
use crate::numerics::{ComplexVec, DenseMatrix, C64};

pub use dense::{dense_rnn_forward, dense_rnn_forward_tape, Activation, DenseRnn, DenseTape};
pub use scan::{scan_combine, tree_scan, ScanElement};
pub use zoh::{s4d_lin, zoh_discretize, ZohMode, ZohSystem};

/// Real tensor shaped `(batch, len, features)`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceBatch {
    pub batch: usize,
    pub len: usize,
    pub features: usize,
    pub data: Vec<f64>,
}

impl SequenceBatch {
    pub fn new(batch: usize, len: usize, features: usize, data: Vec<f64>) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidInput("sequence length must be >= 1".into()));
        }
        check_dim("sequence batch entries", batch * len * features, data.len())?;
        Ok(Self {
            batch,
            len,
            features,
            data,
        })
    }

    pub fn zeros(batch: usize, len: usize, features: usize) -> Self {
        Self {
            batch,
            len,
            features,
            data: vec![0.0; batch * len * features],
        }
    }

    pub fn from_fn(batch: usize, len: usize, features: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(batch * len * features);
        for b in 0..batch {
            for t in 0..len {
                for h in 0..features {
                    data.push(f(b, t, h));
                }
            }
        }
        Self {
            batch,
            len,
            features,
            data,
        }
    }

    #[inline]
    pub fn at(&self, b: usize, t: usize) -> &[f64] {
        let o = (b * self.len + t) * self.features;
        &self.data[o..o + self.features]
    }

    #[inline]
    pub fn at_mut(&mut self, b: usize, t: usize) -> &mut [f64] {
        let o = (b * self.len + t) * self.features;
        &mut self.data[o..o + self.features]
    }

    pub fn sequence(&self, b: usize) -> &[f64] {
        let s = self.len * self.features;
        &self.data[b * s..(b + 1) * s]
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("sequence batch"))
        }
    }
}

/// Hidden states `x_1..x_L` of every sequence, `(batch, len, n)` split storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub batch: usize,
    pub len: usize,
    pub n: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Trajectory {
    pub fn zeros(batch: usize, len: usize, n: usize) -> Self {
        Self {
            batch,
            len,
            n,
            re: vec![0.0; batch * len * n],
            im: vec![0.0; batch * len * n],
        }
    }

    #[inline]
    pub fn state(&self, b: usize, t: usize) -> (&[f64], &[f64]) {
        let o = (b * self.len + t) * self.n;
        (&self.re[o..o + self.n], &self.im[o..o + self.n])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    /// Chunked two-pass scan.
    #[default]
    Parallel,
    /// Blelloch tree scan over explicit scan elements; slower, kept as a
    /// cross-check of the chunked scheme.
    Tree,
}

/// Smallest chunk used by the chunked scan.
pub const MIN_CHUNK_LEN: usize = 256;
/// Upper bound on chunks per sequence.
pub const MAX_CHUNKS: usize = 64;

/// Chunk length for a sequence of length `len`. Depends only on `len`, so
/// results do not change with the size of the thread pool.
pub fn chunk_len_for(len: usize) -> usize {
    MIN_CHUNK_LEN.max(len.div_ceil(MAX_CHUNKS))
}

struct Prepared {
    lambda: Vec<C64>,
    gamma: Vec<f64>,
}

fn prepare(params: &LruParams, u: &SequenceBatch) -> Result<Prepared> {
    params.validate()?;
    check_dim("input features", params.dims.h_in, u.features)?;
    if u.len == 0 {
        return Err(Error::InvalidInput("sequence length must be >= 1".into()));
    }
    if u.data.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("LRU input"));
    }
    Ok(Prepared {
        lambda: params.lambdas(),
        gamma: params.gammas(),
    })
}

/// `v = γ ⊙ (B u)` for each row of a chunk, written into the state buffers.
fn project_inputs(p: &LruParams, gamma: &[f64], u: &[f64], re: &mut [f64], im: &mut [f64]) {
    let (h_in, n) = (p.dims.h_in, p.dims.n);
    for ((u_t, row_re), row_im) in u.chunks(h_in).zip(re.chunks_mut(n)).zip(im.chunks_mut(n)) {
        for i in 0..n {
            let b_re = &p.b_re[i * h_in..(i + 1) * h_in];
            let b_im = &p.b_im[i * h_in..(i + 1) * h_in];
            let mut acc_re = 0.0;
            let mut acc_im = 0.0;
            for j in 0..h_in {
                acc_re += b_re[j] * u_t[j];
                acc_im += b_im[j] * u_t[j];
            }
            row_re[i] = gamma[i] * acc_re;
            row_im[i] = gamma[i] * acc_im;
        }
    }
}

/// `y = Re[C x] + D ⊙ u` for each row of a chunk.
fn read_out(p: &LruParams, u: &[f64], re: &[f64], im: &[f64], y: &mut [f64]) {
    let (h_in, n, h_out) = (p.dims.h_in, p.dims.n, p.dims.h_out);
    for (((u_t, x_re), x_im), y_t) in u
        .chunks(h_in)
        .zip(re.chunks(n))
        .zip(im.chunks(n))
        .zip(y.chunks_mut(h_out))
    {
        for h in 0..h_out {
            let c_re = &p.c_re[h * n..(h + 1) * n];
            let c_im = &p.c_im[h * n..(h + 1) * n];
            let mut acc = 0.0;
            for i in 0..n {
                acc += c_re[i] * x_re[i] - c_im[i] * x_im[i];
            }
            if p.has_skip() {
                acc += p.d[h] * u_t[h];
            }
            y_t[h] = acc;
        }
    }
}

/// Run the LRU over a batch from `x_0 = 0`. Returns the outputs and the full
/// hidden trajectory.
pub fn lru_forward(params: &LruParams, u: &SequenceBatch, mode: ExecMode) -> Result<(SequenceBatch, Trajectory)> {
    match mode {
        ExecMode::Sequential => forward_impl(params, u, None),
        ExecMode::Parallel => forward_impl(params, u, Some(chunk_len_for(u.len))),
        ExecMode::Tree => forward_tree(params, u),
    }
}

/// Chunked scan with an explicit chunk length (`chunk_len >= 1`).
pub fn lru_forward_chunked(
    params: &LruParams,
    u: &SequenceBatch,
    chunk_len: usize,
) -> Result<(SequenceBatch, Trajectory)> {
    if chunk_len == 0 {
        return Err(Error::InvalidInput("chunk length must be >= 1".into()));
    }
    forward_impl(params, u, Some(chunk_len))
}

fn forward_impl(
    params: &LruParams,
    u: &SequenceBatch,
    chunk_len: Option<usize>,
) -> Result<(SequenceBatch, Trajectory)> {
    let prep = prepare(params, u)?;
    let LruDims { h_in, n, h_out } = params.dims;
    let len = u.len;
    let mut traj = Trajectory::zeros(u.batch, len, n);
    let mut y = SequenceBatch::zeros(u.batch, len, h_out);

    traj.re
        .par_chunks_mut(len * n)
        .zip(traj.im.par_chunks_mut(len * n))
        .zip(y.data.par_chunks_mut(len * h_out))
        .zip(u.data.par_chunks(len * h_in))
        .for_each(|(((re, im), y_seq), u_seq)| match chunk_len {
            None => {
                project_inputs(params, &prep.gamma, u_seq, re, im);
                scan::scan_in_place(&prep.lambda, None, re, im);
                read_out(params, u_seq, re, im, y_seq);
            }
            Some(cl) => chunked_sequence(params, &prep, u_seq, re, im, y_seq, cl),
        });
    Ok((y, traj))
}

fn chunked_sequence(
    params: &LruParams,
    prep: &Prepared,
    u_seq: &[f64],
    re: &mut [f64],
    im: &mut [f64],
    y_seq: &mut [f64],
    chunk_len: usize,
) {
    let LruDims { h_in, n, h_out } = params.dims;
    let lambda = &prep.lambda;

    // pass 1: independent local scans
    re.par_chunks_mut(chunk_len * n)
        .zip(im.par_chunks_mut(chunk_len * n))
        .zip(u_seq.par_chunks(chunk_len * h_in))
        .for_each(|((c_re, c_im), c_u)| {
            project_inputs(params, &prep.gamma, c_u, c_re, c_im);
            scan::scan_in_place(lambda, None, c_re, c_im);
        });

    // pass 2: carry the chunk summaries across chunks
    let len = u_seq.len() / h_in;
    let n_chunks = len.div_ceil(chunk_len);
    let mut carries: Vec<Vec<C64>> = Vec::with_capacity(n_chunks.saturating_sub(1));
    let mut carry = vec![C64::new(0.0, 0.0); n];
    for c in 0..n_chunks.saturating_sub(1) {
        let last = ((c + 1) * chunk_len - 1) * n;
        let chunk_size = chunk_len as u32;
        for i in 0..n {
            let local_end = C64::new(re[last + i], im[last + i]);
            carry[i] = lambda[i].powu(chunk_size) * carry[i] + local_end;
        }
        carries.push(carry.clone());
    }

    // pass 3: fix up with the incoming carry, then read out
    re.par_chunks_mut(chunk_len * n)
        .zip(im.par_chunks_mut(chunk_len * n))
        .zip(y_seq.par_chunks_mut(chunk_len * h_out))
        .zip(u_seq.par_chunks(chunk_len * h_in))
        .enumerate()
        .for_each(|(c, (((c_re, c_im), c_y), c_u))| {
            if c > 0 {
                scan::apply_carry(lambda, &carries[c - 1], c_re, c_im);
            }
            read_out(params, c_u, c_re, c_im, c_y);
        });
}

fn forward_tree(params: &LruParams, u: &SequenceBatch) -> Result<(SequenceBatch, Trajectory)> {
    let prep = prepare(params, u)?;
    let LruDims { n, h_out, .. } = params.dims;
    let len = u.len;
    let mut traj = Trajectory::zeros(u.batch, len, n);
    let mut y = SequenceBatch::zeros(u.batch, len, h_out);
    let a = ComplexVec::from_complex(&prep.lambda);
    for b in 0..u.batch {
        let u_seq = u.sequence(b);
        let mut v_re = vec![0.0; len * n];
        let mut v_im = vec![0.0; len * n];
        project_inputs(params, &prep.gamma, u_seq, &mut v_re, &mut v_im);
        let elems: Vec<ScanElement> = v_re
            .chunks(n)
            .zip(v_im.chunks(n))
            .map(|(r, i)| ScanElement {
                a: a.clone(),
                b: ComplexVec {
                    re: r.to_vec(),
                    im: i.to_vec(),
                },
            })
            .collect();
        // x_0 = 0, so the state is the b-part of each prefix
        let prefixes = tree_scan(&elems)?;
        let o = b * len * n;
        for (t, p) in prefixes.iter().enumerate() {
            traj.re[o + t * n..o + (t + 1) * n].copy_from_slice(&p.b.re);
            traj.im[o + t * n..o + (t + 1) * n].copy_from_slice(&p.b.im);
        }
        read_out(
            params,
            u_seq,
            &traj.re[o..o + len * n],
            &traj.im[o..o + len * n],
            &mut y.data[b * len * h_out..(b + 1) * len * h_out],
        );
    }
    Ok((y, traj))
}

/// Streaming inference: only the final state `x_L` of each sequence is kept.
pub fn lru_final_state(params: &LruParams, u: &SequenceBatch) -> Result<Vec<ComplexVec>> {
    let prep = prepare(params, u)?;
    let (h_in, n) = (params.dims.h_in, params.dims.n);
    Ok((0..u.batch)
        .into_par_iter()
        .map(|b| {
            let mut x = vec![C64::new(0.0, 0.0); n];
            let mut v_re = vec![0.0; n];
            let mut v_im = vec![0.0; n];
            for u_t in u.sequence(b).chunks(h_in) {
                project_inputs(params, &prep.gamma, u_t, &mut v_re, &mut v_im);
                for i in 0..n {
                    x[i] = prep.lambda[i] * x[i] + C64::new(v_re[i], v_im[i]);
                }
            }
            ComplexVec::from_complex(&x)
        })
        .collect())
}

/// Real part of state channel `channel` for a unit impulse injected directly
/// into the state: `Re(λ^k)` for `k = 0..len`.
pub fn impulse_response(params: &LruParams, len: usize, channel: usize) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::InvalidInput("impulse length must be >= 1".into()));
    }
    if channel >= params.n() {
        return Err(Error::InvalidInput(format!(
            "channel {channel} out of range for state dimension {}",
            params.n()
        )));
    }
    let lambda = params.lambda(channel);
    let mut x = C64::new(1.0, 0.0);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(x.re);
        x *= lambda;
    }
    Ok(out)
}

/// Number of strict sign changes, ignoring exact zeros.
pub fn count_sign_changes(signal: &[f64]) -> usize {
    let mut prev = 0.0f64;
    let mut count = 0;
    for &v in signal {
        if v == 0.0 {
            continue;
        }
        if prev != 0.0 && (v > 0.0) != (prev > 0.0) {
            count += 1;
        }
        prev = v;
    }
    count
}

/// Block-diagonal real matrix with blocks `[[Re λ, -Im λ], [Im λ, Re λ]]`.
pub fn to_real_block_form(lambda: &ComplexVec) -> DenseMatrix {
    let n = lambda.len();
    let mut m = DenseMatrix::zeros(2 * n);
    for i in 0..n {
        let (re, im) = (lambda.re[i], lambda.im[i]);
        m.set(2 * i, 2 * i, re);
        m.set(2 * i, 2 * i + 1, -im);
        m.set(2 * i + 1, 2 * i, im);
        m.set(2 * i + 1, 2 * i + 1, re);
    }
    m
}

/// Max absolute deviation divided by the largest magnitude of `reference`.
pub fn max_relative_deviation(candidate: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(candidate.len(), reference.len());
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = candidate
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
