//! Forward-pass gain of the un-normalized recurrence `x_k = λ ⊙ x_{k-1} + B u_k`
//! with eigenvalues drawn uniformly on a ring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::experiments::stats::{mean, percentile};
use crate::init::{glorot_complex, sample_ring, RingConfig};
use crate::numerics::C64;
use crate::report::ExperimentReport;
use crate::rng;

/// Expected `‖x_∞‖² / E‖Bu‖²` for eigenvalues uniform on the ring
/// `r_min ≤ |λ| ≤ r_max`:
///
/// ```text
/// (1/(r_max² - r_min²)) · ln((1 - r_min²)/(1 - r_max²))
/// ```
///
/// which tends to `1/(1 - r²)` as the ring collapses to radius `r`.
pub fn gain_formula(r_min: f64, r_max: f64) -> Result<f64> {
    if !(0.0 <= r_min && r_min <= r_max) || r_max.is_nan() {
        return Err(Error::InvalidInput(format!(
            "gain needs 0 <= r_min <= r_max, got [{r_min}, {r_max}]"
        )));
    }
    if r_max >= 1.0 {
        return Err(Error::Unstable(r_max));
    }
    let (a, b) = (r_min * r_min, r_max * r_max);
    let eps = b - a;
    if eps < 1e-8 {
        // ln(1 + eps/rho)/eps expanded around eps = 0
        let rho = 1.0 - b;
        return Ok(1.0 / rho * (1.0 - eps / (2.0 * rho) + eps * eps / (3.0 * rho * rho)));
    }
    Ok(((-a).ln_1p() - (-b).ln_1p()) / eps)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    Constant,
    #[default]
    WhiteNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
    pub len: usize,
    /// Input dimension of `B` (`n × input_dim`).
    pub input_dim: usize,
    pub mode: InputMode,
    pub trials: usize,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            r_min: 0.9,
            r_max: 0.99,
            n: 500,
            len: 10_000,
            input_dim: 128,
            mode: InputMode::WhiteNoise,
            trials: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainResult {
    pub r_min: f64,
    pub r_max: f64,
    pub mode: InputMode,
    pub closed_form: f64,
    /// Mean over trials of `‖x_L‖² / E‖Bu‖²`.
    pub monte_carlo: f64,
    pub mc_quantiles: (f64, f64),
    pub per_trial: Vec<f64>,
    pub n: usize,
    pub len: usize,
    /// `r_max^L`; the finite-length bias is of this order.
    pub residual: f64,
}

impl GainResult {
    pub fn relative_error(&self) -> f64 {
        (self.monte_carlo / self.closed_form - 1.0).abs()
    }

    pub fn formula_in_band(&self) -> bool {
        self.mc_quantiles.0 <= self.closed_form && self.closed_form <= self.mc_quantiles.1
    }
}

/// Simulates the recurrence from `x_0 = 0` for `len` steps, `trials` times.
///
/// Each trial draws fresh eigenvalues on the ring (phase on `[0, 2π]`) and a
/// fresh complex Glorot `B`. Constant mode feeds `u_k = 1` in every input
/// channel and normalizes by `‖B 1‖²`; white-noise mode feeds i.i.d.
/// `N(0, 1)` inputs and normalizes by `E‖Bu‖² = ‖B‖²_F`. Trials run in
/// parallel on independent streams.
pub fn gain_monte_carlo(cfg: &GainConfig, seed: u64) -> Result<GainResult> {
    let GainConfig {
        r_min,
        r_max,
        n,
        len,
        input_dim: h,
        mode,
        trials,
    } = *cfg;
    let closed_form = gain_formula(r_min, r_max)?;
    if n == 0 || len == 0 || h == 0 || trials == 0 {
        return Err(Error::InvalidInput(
            "gain simulation needs n, len, input_dim, trials >= 1".into(),
        ));
    }
    let ring = RingConfig::new(r_min, r_max);
    if r_max > 0.0 {
        ring.validate()?;
    }
    let per_trial = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t as u64);
            let lambda: Vec<C64> = if r_max == 0.0 {
                vec![C64::new(0.0, 0.0); n]
            } else {
                let (nu, theta) = sample_ring(&ring, n, &mut r)?;
                nu.iter()
                    .zip(&theta)
                    .map(|(&v, &th)| C64::from_polar((-v).exp(), th))
                    .collect()
            };
            let b = glorot_complex(n, h, &mut r);
            let project = |u: &[f64], out: &mut [C64]| {
                for (i, o) in out.iter_mut().enumerate() {
                    let row = i * h;
                    let (mut re, mut im) = (0.0, 0.0);
                    for (j, &uj) in u.iter().enumerate() {
                        re += b.re[row + j] * uj;
                        im += b.im[row + j] * uj;
                    }
                    *o = C64::new(re, im);
                }
            };
            let mut bu = vec![C64::new(0.0, 0.0); n];
            let mut u = vec![1.0; h];
            let denom = match mode {
                InputMode::Constant => {
                    project(&u, &mut bu);
                    bu.iter().map(|v| v.norm_sqr()).sum::<f64>()
                }
                InputMode::WhiteNoise => b.norm_sqr(),
            };
            let mut x = vec![C64::new(0.0, 0.0); n];
            for _ in 0..len {
                if mode == InputMode::WhiteNoise {
                    u.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut r));
                    project(&u, &mut bu);
                }
                for ((xi, &li), &bi) in x.iter_mut().zip(&lambda).zip(&bu) {
                    *xi = li * *xi + bi;
                }
            }
            let x_norm: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            Ok(x_norm / denom)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(GainResult {
        r_min,
        r_max,
        mode,
        closed_form,
        monte_carlo: mean(&per_trial),
        mc_quantiles: (percentile(&per_trial, 5.0), percentile(&per_trial, 95.0)),
        per_trial,
        n,
        len,
        residual: r_max.powf(len as f64),
    })
}

pub fn gain_report(result: &GainResult, seed: u64) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("gain", seed, &["run", "gain_mc", "gain_formula"]);
    report.config = serde_json::json!({
        "r_min": result.r_min,
        "r_max": result.r_max,
        "n": result.n,
        "len": result.len,
        "trials": result.per_trial.len(),
        "input": result.mode,
    });
    for (i, g) in result.per_trial.iter().enumerate() {
        report.push_row(vec![i as f64, *g, result.closed_form])?;
    }
    report.metric("gain_formula", result.closed_form);
    report.metric("gain_mc_mean", result.monte_carlo);
    report.metric("gain_mc_p5", result.mc_quantiles.0);
    report.metric("gain_mc_p95", result.mc_quantiles.1);
    report.metric("relative_error", result.relative_error());
    if result.residual > 1e-3 {
        report.notes.push(format!(
            "r_max^L = {:.3e} is not negligible; the finite-length gain is biased low",
            result.residual
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        // (1/(0.9801 - 0.81)) · ln(0.19/0.0199)
        let expected = (0.19f64 / 0.0199).ln() / (0.9801 - 0.81);
        let g = gain_formula(0.9, 0.99).unwrap();
        assert!((g - expected).abs() < 1e-12);
        assert!((g - 13.265).abs() < 1e-3);
        assert!((gain_formula(0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((gain_formula(0.5, 0.5).unwrap() - 1.0 / 0.75).abs() < 1e-15);
        assert!(gain_formula(0.0, 1.0).is_err());
        assert!(gain_formula(0.6, 0.5).is_err());
    }

    #[test]
    fn limit_branch_is_continuous() {
        let r = 0.95;
        let near = gain_formula(r - 1e-6, r).unwrap();
        let exact = gain_formula(r, r).unwrap();
        assert!((near - exact).abs() / exact < 1e-5);
        let tiny = gain_formula(r - 1e-10, r).unwrap();
        assert!((tiny - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn zero_eigenvalues_have_unit_gain() {
        let cfg = GainConfig {
            r_min: 0.0,
            r_max: 0.0,
            n: 16,
            len: 50,
            input_dim: 3,
            mode: InputMode::Constant,
            trials: 3,
        };
        let g = gain_monte_carlo(&cfg, 1).unwrap();
        for v in &g.per_trial {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn small_simulation_is_close() {
        let cfg = GainConfig {
            r_min: 0.0,
            r_max: 0.5,
            n: 400,
            len: 200,
            input_dim: 64,
            mode: InputMode::WhiteNoise,
            trials: 8,
        };
        let g = gain_monte_carlo(&cfg, 2).unwrap();
        assert!(g.relative_error() < 0.15, "{g:?}");
    }
}
