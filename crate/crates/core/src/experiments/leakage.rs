//! Spectral leakage of a position-wise ReLU, and its absence in a linear
//! recurrence.
//!
//! For a signal `u` of length `L` with positive set `P`, `ReLU(u) = u · 1_P`,
//! so its DFT is `(1/L) · (U ⊛ K)` with `K` the DFT of the indicator of `P`.
//! Splitting `P` into maximal runs `{s, .., s+m-1}` with centre
//! `p = s + (m-1)/2`,
//!
//! ```text
//! K(ω) = Σ_i e^{-iω p_i} · sin(ω m_i / 2) / sin(ω / 2)
//! ```
//!
//! the discrete counterpart of a sum of shifted sinc kernels.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{lru_init, LruDims, LruInitConfig, RingConfig};
use crate::numerics::{dft, dft_complex, Spectrum, C64};
use crate::recurrence::{lru_forward, ExecMode, SequenceBatch};
use crate::rng::{self, Rng};

pub fn relu(u: &[f64]) -> Vec<f64> {
    u.iter().map(|v| v.max(0.0)).collect()
}

/// Fraction of energy outside bins `{0, freq, L - freq}`.
pub fn offband_ratio(spectrum: &Spectrum, freq: usize) -> f64 {
    let l = spectrum.len();
    let total = spectrum.total();
    if total == 0.0 {
        return 0.0;
    }
    let in_band: f64 = [0, freq % l, (l - freq % l) % l]
        .iter()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|k| spectrum.power[k])
        .sum();
    ((total - in_band) / total).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeakageResult {
    pub before: Spectrum,
    pub after: Spectrum,
    pub offband_before: f64,
    pub offband_ratio: f64,
}

/// DFT of `sin(2π·freq·k/L)` before and after a ReLU.
pub fn leakage_demo(freq: usize, len: usize) -> Result<LeakageResult> {
    if !len.is_power_of_two() || len < 4 {
        return Err(Error::InvalidInput(format!(
            "length must be a power of two >= 4, got {len}"
        )));
    }
    if freq == 0 || freq >= len / 2 {
        return Err(Error::InvalidInput(format!(
            "frequency bin must lie in [1, {}), got {freq}",
            len / 2
        )));
    }
    let tone = sine(freq, len);
    let before = dft(&tone)?;
    let after = dft(&relu(&tone))?;
    Ok(LeakageResult {
        offband_before: offband_ratio(&before, freq),
        offband_ratio: offband_ratio(&after, freq),
        before,
        after,
    })
}

fn sine(freq: usize, len: usize) -> Vec<f64> {
    (0..len)
        .map(|k| (TAU * freq as f64 * k as f64 / len as f64).sin())
        .collect()
}

/// A maximal run of strictly positive samples (cyclically).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationInterval {
    pub start: usize,
    pub len: usize,
    /// `start + (len-1)/2`, possibly beyond `L` for wrapping runs.
    pub center: f64,
    /// Zero crossings found by linear interpolation; descriptive only.
    pub left_crossing: f64,
    pub right_crossing: f64,
}

/// Maximal cyclic runs where `u > 0`.
pub fn activation_intervals(u: &[f64]) -> Vec<ActivationInterval> {
    let l = u.len();
    let pos: Vec<bool> = u.iter().map(|&v| v > 0.0).collect();
    if pos.iter().all(|&p| p) {
        return vec![ActivationInterval {
            start: 0,
            len: l,
            center: (l as f64 - 1.0) / 2.0,
            left_crossing: 0.0,
            right_crossing: l as f64,
        }];
    }
    // start scanning right after a non-positive sample so runs never split
    let anchor = pos.iter().position(|&p| !p).unwrap_or(0);
    let mut out = Vec::new();
    let mut k = 0;
    while k < l {
        let i = (anchor + 1 + k) % l;
        if !pos[i] {
            k += 1;
            continue;
        }
        let mut m = 0;
        while k + m < l && pos[(anchor + 1 + k + m) % l] {
            m += 1;
        }
        let prev = u[(i + l - 1) % l];
        let last = (i + m - 1) % l;
        let next = u[(last + 1) % l];
        let left = i as f64 - u[i] / (u[i] - prev);
        let right = (i + m - 1) as f64 + u[last] / (u[last] - next);
        out.push(ActivationInterval {
            start: i,
            len: m,
            center: i as f64 + (m as f64 - 1.0) / 2.0,
            left_crossing: left,
            right_crossing: right,
        });
        k += m;
    }
    out
}

/// `K_j = Σ_i e^{-iω_j p_i} · D_{m_i}(ω_j)` with `ω_j = 2πj/L`.
pub fn interval_kernel(intervals: &[ActivationInterval], len: usize) -> Vec<C64> {
    (0..len)
        .map(|j| {
            let w = TAU * j as f64 / len as f64;
            intervals
                .iter()
                .map(|iv| {
                    let dirichlet = if j == 0 {
                        iv.len as f64
                    } else {
                        (w * iv.len as f64 / 2.0).sin() / (w / 2.0).sin()
                    };
                    C64::from_polar(dirichlet, -w * iv.center)
                })
                .sum()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub intervals: usize,
    /// `max_j |direct_j - construction_j| / max_j |direct_j|`.
    pub relative_error: f64,
}

/// Compares the DFT of `ReLU(u)` with `(1/L)·(U ⊛ K)`.
pub fn relu_spectrum_identity(u: &[f64]) -> Result<IdentityCheck> {
    let l = u.len();
    if l == 0 {
        return Err(Error::InvalidInput("empty signal".into()));
    }
    let zeros = vec![0.0; l];
    let direct = dft_complex(&relu(u), &zeros)?;
    let spec_u = dft_complex(u, &zeros)?;
    let intervals = activation_intervals(u);
    let kernel = interval_kernel(&intervals, l);
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    for j in 0..l {
        let conv: C64 = (0..l).map(|k| spec_u[k] * kernel[(j + l - k) % l]).sum::<C64>() / l as f64;
        err = err.max((conv - direct[j]).norm());
        scale = scale.max(direct[j].norm());
    }
    Ok(IdentityCheck {
        intervals: intervals.len(),
        relative_error: if scale == 0.0 { err } else { err / scale },
    })
}

/// Random piecewise-linear signal with `pieces` segments crossing zero.
pub fn random_piecewise_signal(len: usize, pieces: usize, rng: &mut Rng) -> Vec<f64> {
    use rand::Rng as _;
    let pieces = pieces.clamp(1, len.max(1));
    let mut knots: Vec<usize> = (0..pieces - 1).map(|_| rng.random_range(1..len.max(2))).collect();
    knots.push(0);
    knots.push(len);
    knots.sort_unstable();
    knots.dedup();
    let mut out = vec![0.0; len];
    for w in knots.windows(2) {
        let level = rng.random_range(-1.0..1.0);
        let slope = rng.random_range(-0.1..0.1);
        for (t, v) in out[w[0]..w[1]].iter_mut().enumerate() {
            *v = level + slope * t as f64;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToneResponse {
    pub warmup: usize,
    pub offband_ratio: f64,
}

/// Off-band energy of a single-channel linear LRU driven by a pure tone,
/// measured on the last `len` samples after a warm-up long enough for
/// `r_max^warmup < 1e-9`.
pub fn linear_lru_tone_leakage(freq: usize, len: usize, n: usize, ring: RingConfig, seed: u64) -> Result<ToneResponse> {
    ring.validate()?;
    if ring.r_max >= 1.0 {
        return Err(Error::Unstable(ring.r_max));
    }
    let cfg = LruInitConfig {
        ring,
        ..Default::default()
    };
    let params = lru_init(&cfg, LruDims::square(1, n), &mut rng::root(seed))?;
    let warmup = if ring.r_max == 0.0 {
        1
    } else {
        ((1e-9f64).ln() / ring.r_max.ln()).ceil() as usize
    };
    let total = warmup + len;
    let u = SequenceBatch::from_fn(1, total, 1, |_, t, _| (TAU * freq as f64 * t as f64 / len as f64).sin());
    let (y, _) = lru_forward(&params, &u, ExecMode::Sequential)?;
    let tail = &y.data[warmup..];
    Ok(ToneResponse {
        warmup,
        offband_ratio: offband_ratio(&dft(tail)?, freq),
    })
}
