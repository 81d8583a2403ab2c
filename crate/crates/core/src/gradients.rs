//! Hand-written vector-Jacobian products and a finite-difference harness.
//!
//! Complex quantities are handled as pairs of reals. For a real loss `L` and a
//! complex variable `z`, the co-tangent is `z̄ = ∂L/∂Re z + i ∂L/∂Im z`. With
//! this convention the adjoint of `z ↦ a z` is `z̄ ↦ conj(a) z̄`, and the
//! adjoint of `y = Re[C x]` puts `C^H ȳ` on `x` (the imaginary part of the
//! output projection receives no co-tangent).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::init::{LruGrads, LruParams, PhaseParam};
use crate::numerics::{dot, C64};
use crate::params::Parameters;
use crate::recurrence::dense::{DenseRnn, DenseTape};
use crate::recurrence::{SequenceBatch, Trajectory};

/// Gradients of the parameters and of the input.
#[derive(Clone, Debug)]
pub struct LruBackward {
    pub grads: LruGrads,
    pub d_input: SequenceBatch,
}

/// Back-propagate `dL/dy` through a forward pass that produced `traj`.
pub fn lru_backward(
    params: &LruParams,
    u: &SequenceBatch,
    traj: &Trajectory,
    dy: &SequenceBatch,
) -> Result<LruBackward> {
    params.validate()?;
    let (h_in, n, h_out) = (params.dims.h_in, params.dims.n, params.dims.h_out);
    check_dim("input features", h_in, u.features)?;
    check_dim("trajectory batch", u.batch, traj.batch)?;
    check_dim("trajectory length", u.len, traj.len)?;
    check_dim("trajectory state", n, traj.n)?;
    check_dim("output-gradient batch", u.batch, dy.batch)?;
    check_dim("output-gradient length", u.len, dy.len)?;
    check_dim("output-gradient features", h_out, dy.features)?;

    let lambda = params.lambdas();
    let gamma = params.gammas();
    let len = u.len;

    let per_sequence: Vec<(LruGrads, Vec<C64>, Vec<f64>)> = (0..u.batch)
        .into_par_iter()
        .map(|b| {
            let mut g = params.zeros_like();
            let mut lambda_bar = vec![C64::new(0.0, 0.0); n];
            let mut gamma_bar = vec![0.0; n];
            let mut du = vec![0.0; len * h_in];
            let mut s = vec![C64::new(0.0, 0.0); n];
            let mut w = vec![C64::new(0.0, 0.0); n];
            for t in (0..len).rev() {
                let g_t = dy.at(b, t);
                let u_t = u.at(b, t);
                let (x_re, x_im) = traj.state(b, t);

                for h in 0..h_out {
                    let gh = g_t[h];
                    if gh == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        g.c_re[h * n + i] += gh * x_re[i];
                        g.c_im[h * n + i] -= gh * x_im[i];
                    }
                }
                for i in 0..n {
                    let mut direct = C64::new(0.0, 0.0);
                    for h in 0..h_out {
                        direct += g_t[h] * C64::new(params.c_re[h * n + i], -params.c_im[h * n + i]);
                    }
                    s[i] = direct + lambda[i].conj() * s[i];
                }
                if t > 0 {
                    let (p_re, p_im) = traj.state(b, t - 1);
                    for i in 0..n {
                        lambda_bar[i] += s[i] * C64::new(p_re[i], -p_im[i]);
                    }
                }
                for i in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..h_in {
                        acc += u_t[j] * C64::new(params.b_re[i * h_in + j], params.b_im[i * h_in + j]);
                    }
                    w[i] = acc;
                }
                let du_t = &mut du[t * h_in..(t + 1) * h_in];
                for i in 0..n {
                    gamma_bar[i] += (s[i] * w[i].conj()).re;
                    let w_bar = gamma[i] * s[i];
                    for j in 0..h_in {
                        g.b_re[i * h_in + j] += w_bar.re * u_t[j];
                        g.b_im[i * h_in + j] += w_bar.im * u_t[j];
                        du_t[j] += params.b_re[i * h_in + j] * w_bar.re + params.b_im[i * h_in + j] * w_bar.im;
                    }
                }
                if params.has_skip() {
                    for h in 0..h_out {
                        g.d[h] += g_t[h] * u_t[h];
                        du_t[h] += params.d[h] * g_t[h];
                    }
                }
            }
            (g, lambda_bar, gamma_bar.into_iter().chain(du).collect())
        })
        .collect();

    let mut grads = params.zeros_like();
    let mut lambda_bar = vec![C64::new(0.0, 0.0); n];
    let mut gamma_bar = vec![0.0; n];
    let mut d_input = SequenceBatch::zeros(u.batch, len, h_in);
    for (b, (g, lb, rest)) in per_sequence.into_iter().enumerate() {
        grads.add_scaled(1.0, &g);
        for i in 0..n {
            lambda_bar[i] += lb[i];
            gamma_bar[i] += rest[i];
        }
        d_input.data[b * len * h_in..(b + 1) * len * h_in].copy_from_slice(&rest[n..]);
    }

    for i in 0..n {
        // λ = exp(μ), μ = -exp(ν^log) + iθ. The magnitude factor |λ|·e^{ν^log}
        // is folded into one exponent so that λ → 0 gives 0 instead of 0·∞.
        let mu_bar = lambda[i].conj() * lambda_bar[i];
        let phase = C64::from_polar(1.0, params.theta(i));
        let nu = params.nu_log[i];
        grads.nu_log[i] = -(phase.conj() * lambda_bar[i]).re * (nu - nu.exp()).exp();
        grads.theta_log[i] = match params.phase {
            PhaseParam::Log => mu_bar.im * params.theta(i),
            PhaseParam::Direct => mu_bar.im,
        };
        grads.gamma_log[i] = gamma[i] * gamma_bar[i];
    }
    Ok(LruBackward { grads, d_input })
}

/// Gradients of a dense RNN given its forward tape.
pub fn dense_rnn_backward(rnn: &DenseRnn, tape: &DenseTape, dy: &SequenceBatch) -> Result<DenseRnn> {
    let (n, h_in, h_out) = (rnn.n, rnn.h_in, rnn.h_out);
    let (batch, len) = (tape.batch, tape.len);
    check_dim("output-gradient batch", batch, dy.batch)?;
    check_dim("output-gradient length", len, dy.len)?;
    check_dim("output-gradient features", h_out, dy.features)?;

    let mut g = rnn.zeros_like();
    // dy transposed to [len][h_out][batch]
    let mut gy = vec![0.0; len * h_out * batch];
    for b in 0..batch {
        for t in 0..len {
            for (h, &v) in dy.at(b, t).iter().enumerate() {
                gy[(t * h_out + h) * batch + b] = v;
            }
        }
    }
    let nb = n * batch;
    let mut carry = vec![0.0; nb]; // Aᵀ ā_{t+1}
    let mut x_bar = vec![0.0; nb];
    let mut a_bar = vec![0.0; nb];
    for t in (0..len).rev() {
        let gy_t = &gy[t * h_out * batch..(t + 1) * h_out * batch];
        let x_t = &tape.states[t * nb..(t + 1) * nb];
        let z_t = &tape.pre[t * nb..(t + 1) * nb];
        let u_t = &tape.inputs[t * h_in * batch..(t + 1) * h_in * batch];

        for h in 0..h_out {
            let gh = &gy_t[h * batch..(h + 1) * batch];
            for i in 0..n {
                let xi = &x_t[i * batch..(i + 1) * batch];
                g.c[h * n + i] += dot(gh, xi);
            }
            for k in 0..h_in {
                let uk = &u_t[k * batch..(k + 1) * batch];
                g.d[h * h_in + k] += dot(gh, uk);
            }
        }
        x_bar.copy_from_slice(&carry);
        for i in 0..n {
            let xb = &mut x_bar[i * batch..(i + 1) * batch];
            for h in 0..h_out {
                let c = rnn.c[h * n + i];
                for (v, gv) in xb.iter_mut().zip(&gy_t[h * batch..(h + 1) * batch]) {
                    *v += c * gv;
                }
            }
        }
        for ((ab, xb), (z, s)) in a_bar.iter_mut().zip(&x_bar).zip(z_t.iter().zip(x_t)) {
            *ab = xb * rnn.activation.derivative(*z, *s);
        }
        for i in 0..n {
            let ai = &a_bar[i * batch..(i + 1) * batch];
            if t > 0 {
                let prev = &tape.states[(t - 1) * nb..t * nb];
                for j in 0..n {
                    let xj = &prev[j * batch..(j + 1) * batch];
                    g.a.data[i * n + j] += dot(ai, xj);
                }
            }
            for k in 0..h_in {
                let uk = &u_t[k * batch..(k + 1) * batch];
                g.b[i * h_in + k] += dot(ai, uk);
            }
        }
        carry.fill(0.0);
        for i in 0..n {
            let ai = &a_bar[i * batch..(i + 1) * batch];
            for j in 0..n {
                let a = rnn.a.data[i * n + j];
                for (c, av) in carry[j * batch..(j + 1) * batch].iter_mut().zip(ai) {
                    *c += a * av;
                }
            }
        }
    }
    Ok(g)
}

/// Mean squared error over every entry and its gradient.
pub fn mse_loss(y: &SequenceBatch, target: &SequenceBatch) -> Result<(f64, SequenceBatch)> {
    check_dim("target entries", y.data.len(), target.data.len())?;
    let count = y.data.len().max(1) as f64;
    let mut grad = y.clone();
    let mut loss = 0.0;
    for (g, (a, b)) in grad.data.iter_mut().zip(y.data.iter().zip(&target.data)) {
        let d = a - b;
        loss += d * d;
        *g = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}

/// Mean softmax cross-entropy over rows of `logits` (`rows × classes`).
pub fn cross_entropy_loss(logits: &[f64], classes: usize, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    check_dim("logit rows", labels.len() * classes, logits.len())?;
    let rows = labels.len().max(1) as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::InvalidInput(format!("label {label} >= {classes} classes")));
        }
        let row = &logits[r * classes..(r + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for c in 0..classes {
            let p = (row[c] - log_z).exp();
            grad[r * classes + c] = (p - if c == label { 1.0 } else { 0.0 }) / rows;
        }
    }
    Ok((loss / rows, grad))
}

/// How two real parameters produce a complex eigenvalue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    /// `λ = p0 + i p1`
    Standard,
    /// `λ = exp(-p0 + i p1)`
    Exponential,
}

impl Parameterization {
    pub fn lambda(self, p: [f64; 2]) -> C64 {
        match self {
            Parameterization::Standard => C64::new(p[0], p[1]),
            Parameterization::Exponential => C64::new(-p[0], p[1]).exp(),
        }
    }

    /// Inverse of [`Self::lambda`] (principal branch for the exponential form).
    pub fn params_of(self, lambda: C64) -> [f64; 2] {
        match self {
            Parameterization::Standard => [lambda.re, lambda.im],
            Parameterization::Exponential => [-lambda.norm().ln(), lambda.arg()],
        }
    }
}

/// `½ |λ^k - target|²` and its gradient in the two real parameters.
pub fn powers_loss(param: Parameterization, p: [f64; 2], k: u32, target: C64) -> (f64, [f64; 2]) {
    let lambda = param.lambda(p);
    let z = lambda.powu(k) - target;
    let loss = 0.5 * z.norm_sqr();
    let dz_dlambda = if k == 0 {
        C64::new(0.0, 0.0)
    } else {
        k as f64 * lambda.powu(k - 1)
    };
    let lambda_bar = dz_dlambda.conj() * z;
    let grad = match param {
        Parameterization::Standard => [lambda_bar.re, lambda_bar.im],
        Parameterization::Exponential => {
            let mu_bar = lambda.conj() * lambda_bar;
            [-mu_bar.re, mu_bar.im]
        }
    };
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub h: f64,
    pub entries: Vec<FdEntry>,
}

impl FdReport {
    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    pub fn max_abs_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_abs_err).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err() < tol
    }
}

/// Central difference stencil used by the finite-difference harness.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdStencil {
    /// `(f(p+h) - f(p-h)) / 2h`, error `O(h²)`.
    #[default]
    TwoPoint,
    /// `(-f(p+2h) + 8f(p+h) - 8f(p-h) + f(p-2h)) / 12h`, error `O(h⁴)`.
    FourPoint,
}

/// Compare `analytic` against central differences of `loss` around `params`,
/// one scalar at a time. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_difference_check<P, F>(loss: F, params: &P, analytic: &P, h: f64) -> Result<FdReport>
where
    P: Parameters,
    F: Fn(&P) -> f64,
{
    finite_difference_check_with(loss, params, analytic, h, FdStencil::TwoPoint)
}

pub fn finite_difference_check_with<P, F>(
    loss: F,
    params: &P,
    analytic: &P,
    h: f64,
    stencil: FdStencil,
) -> Result<FdReport>
where
    P: Parameters,
    F: Fn(&P) -> f64,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidInput(format!("FD step must be in [1e-7, 1e-3], got {h}")));
    }
    let base = params.to_flat();
    let grad = analytic.to_flat();
    check_dim("analytic gradient length", base.len(), grad.len())?;
    let first = loss(params);
    let second = loss(params);
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let metas = params.metas();
    let mut entries = Vec::with_capacity(metas.len());
    let mut work = params.clone();
    let mut flat = base.clone();
    let mut eval = |flat: &mut Vec<f64>, idx: usize, delta: f64| {
        flat[idx] = base[idx] + delta;
        work.set_flat(flat);
        let v = loss(&work);
        flat[idx] = base[idx];
        v
    };
    let mut offset = 0;
    for meta in metas {
        let count: usize = meta.shape.iter().product();
        let mut entry = FdEntry {
            name: meta.name.clone(),
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            count,
        };
        for idx in offset..offset + count {
            let numeric = match stencil {
                FdStencil::TwoPoint => (eval(&mut flat, idx, h) - eval(&mut flat, idx, -h)) / (2.0 * h),
                FdStencil::FourPoint => {
                    let near = eval(&mut flat, idx, h) - eval(&mut flat, idx, -h);
                    let far = eval(&mut flat, idx, 2.0 * h) - eval(&mut flat, idx, -2.0 * h);
                    (8.0 * near - far) / (12.0 * h)
                }
            };
            let abs = (numeric - grad[idx]).abs();
            let rel = abs / grad[idx].abs().max(numeric.abs()).max(1e-8);
            entry.max_abs_err = entry.max_abs_err.max(abs);
            entry.max_rel_err = entry.max_rel_err.max(rel);
        }
        offset += count;
        entries.push(entry);
    }
    Ok(FdReport { h, entries })
}
