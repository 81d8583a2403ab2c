//! Vanilla dense RNN `x_k = σ(A x_{k-1} + B u_k)`, `y_k = C x_k + D u_k`.
//!
//! Internal buffers are time-major with the batch index innermost
//! (`[len][n][batch]`), so the per-step matrix products vectorize over the
//! batch.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::init::{glorot_dense, glorot_real};
use crate::numerics::DenseMatrix;
use crate::params::{ParamRole, Parameters, TensorMeta};
use crate::recurrence::SequenceBatch;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Linear,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative given the pre-activation `z` and output `s = σ(z)`.
    #[inline]
    pub fn derivative(self, z: f64, s: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - s * s,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseRnn {
    pub n: usize,
    pub h_in: usize,
    pub h_out: usize,
    pub activation: Activation,
    pub a: DenseMatrix,
    /// `n × h_in`
    pub b: Vec<f64>,
    /// `h_out × n`
    pub c: Vec<f64>,
    /// `h_out × h_in`
    pub d: Vec<f64>,
}

impl DenseRnn {
    /// Glorot initialization on every matrix; `A` has entries `N(0, 1/n)`.
    pub fn glorot(n: usize, h_in: usize, h_out: usize, activation: Activation, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            n,
            h_in,
            h_out,
            activation,
            a: glorot_dense(n, rng)?,
            b: glorot_real(n, h_in, rng),
            c: glorot_real(h_out, n, rng),
            d: glorot_real(h_out, h_in, rng),
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("A", self.n, self.a.n)?;
        check_dim("B", self.n * self.h_in, self.b.len())?;
        check_dim("C", self.h_out * self.n, self.c.len())?;
        check_dim("D", self.h_out * self.h_in, self.d.len())?;
        Ok(())
    }
}

impl Parameters for DenseRnn {
    fn visit(&self, f: &mut dyn FnMut(&TensorMeta, &[f64])) {
        f(&TensorMeta::new("a", &[self.n, self.n], ParamRole::Other), &self.a.data);
        f(&TensorMeta::new("b", &[self.n, self.h_in], ParamRole::Other), &self.b);
        f(&TensorMeta::new("c", &[self.h_out, self.n], ParamRole::Other), &self.c);
        f(
            &TensorMeta::new("d", &[self.h_out, self.h_in], ParamRole::Other),
            &self.d,
        );
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&TensorMeta, &mut [f64])) {
        let (n, h_in, h_out) = (self.n, self.h_in, self.h_out);
        f(&TensorMeta::new("a", &[n, n], ParamRole::Other), &mut self.a.data);
        f(&TensorMeta::new("b", &[n, h_in], ParamRole::Other), &mut self.b);
        f(&TensorMeta::new("c", &[h_out, n], ParamRole::Other), &mut self.c);
        f(&TensorMeta::new("d", &[h_out, h_in], ParamRole::Other), &mut self.d);
    }
}

/// Saved activations for the backward pass, layout `[len][n][batch]`.
#[derive(Clone, Debug)]
pub struct DenseTape {
    pub batch: usize,
    pub len: usize,
    pub pre: Vec<f64>,
    pub states: Vec<f64>,
    /// Inputs transposed to `[len][h_in][batch]`.
    pub inputs: Vec<f64>,
}

pub fn dense_rnn_forward(rnn: &DenseRnn, u: &SequenceBatch) -> Result<SequenceBatch> {
    dense_rnn_forward_tape(rnn, u).map(|(y, _)| y)
}

/// Strictly sequential evaluation from `x_0 = 0`, keeping the tape.
pub fn dense_rnn_forward_tape(rnn: &DenseRnn, u: &SequenceBatch) -> Result<(SequenceBatch, DenseTape)> {
    rnn.validate()?;
    check_dim("input features", rnn.h_in, u.features)?;
    if u.data.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("dense RNN input"));
    }
    let (n, h_in, h_out) = (rnn.n, rnn.h_in, rnn.h_out);
    let (batch, len) = (u.batch, u.len);

    let mut inputs = vec![0.0; len * h_in * batch];
    for b in 0..batch {
        for t in 0..len {
            for (k, &v) in u.at(b, t).iter().enumerate() {
                inputs[(t * h_in + k) * batch + b] = v;
            }
        }
    }

    let mut pre = vec![0.0; len * n * batch];
    let mut states = vec![0.0; len * n * batch];
    let mut y = SequenceBatch::zeros(batch, len, h_out);
    let zero = vec![0.0; n * batch];
    let mut out_row = vec![0.0; batch];

    for t in 0..len {
        let (done, rest) = states.split_at_mut(t * n * batch);
        let prev: &[f64] = if t == 0 { &zero } else { &done[(t - 1) * n * batch..] };
        let x_t = &mut rest[..n * batch];
        let z_t = &mut pre[t * n * batch..(t + 1) * n * batch];
        let u_t = &inputs[t * h_in * batch..(t + 1) * h_in * batch];
        for i in 0..n {
            let z = &mut z_t[i * batch..(i + 1) * batch];
            z.fill(0.0);
            for j in 0..n {
                let a = rnn.a.data[i * n + j];
                for (zb, xb) in z.iter_mut().zip(&prev[j * batch..(j + 1) * batch]) {
                    *zb += a * xb;
                }
            }
            for k in 0..h_in {
                let w = rnn.b[i * h_in + k];
                for (zb, ub) in z.iter_mut().zip(&u_t[k * batch..(k + 1) * batch]) {
                    *zb += w * ub;
                }
            }
            for (xb, zb) in x_t[i * batch..(i + 1) * batch].iter_mut().zip(z.iter()) {
                *xb = rnn.activation.apply(*zb);
            }
        }
        for h in 0..h_out {
            out_row.fill(0.0);
            for i in 0..n {
                let c = rnn.c[h * n + i];
                for (ob, xb) in out_row.iter_mut().zip(&x_t[i * batch..(i + 1) * batch]) {
                    *ob += c * xb;
                }
            }
            for k in 0..h_in {
                let d = rnn.d[h * h_in + k];
                for (ob, ub) in out_row.iter_mut().zip(&u_t[k * batch..(k + 1) * batch]) {
                    *ob += d * ub;
                }
            }
            for (b, &v) in out_row.iter().enumerate() {
                y.at_mut(b, t)[h] = v;
            }
        }
    }
    Ok((
        y,
        DenseTape {
            batch,
            len,
            pre,
            states,
            inputs,
        },
    ))
}
