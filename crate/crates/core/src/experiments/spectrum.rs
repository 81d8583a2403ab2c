//! Initialization spectra: exact ring samples, and estimators for the
//! spectrum of a dense Glorot matrix.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::stats::{chi_square_uniform, ks_statistic};
use crate::init::{glorot_dense, sample_ring, RingConfig};
use crate::numerics::{gelfand_spectral_radius, trace_moment, GelfandEstimate};
use crate::report::ExperimentReport;
use crate::rng;

pub const PHASE_BINS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumSource {
    Ring(RingConfig),
    Dense { gelfand_k: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingCheck {
    /// KS statistic of `|λ|²` against `(s - r_min²)/(r_max² - r_min²)`.
    pub ks_modulus_sq: f64,
    pub phase_chi2: f64,
    pub phase_p_value: f64,
    pub in_sector: bool,
}

/// Samples `n` ring eigenvalues and tests them against the closed-form
/// distribution: `|λ|²` uniform on `[r_min², r_max²]`, phase uniform on
/// `[phase_min, phase_max]`.
pub fn ring_check(cfg: &RingConfig, n: usize, seed: u64) -> Result<(RingCheck, Vec<f64>, Vec<f64>)> {
    let (nu, theta) = sample_ring(cfg, n, &mut rng::root(seed))?;
    let (a, b) = (cfg.r_min * cfg.r_min, cfg.r_max * cfg.r_max);
    let modulus_sq: Vec<f64> = nu.iter().map(|v| (-2.0 * v).exp()).collect();
    let ks = if b > a {
        ks_statistic(&modulus_sq, |s| ((s - a) / (b - a)).clamp(0.0, 1.0))?
    } else {
        0.0
    };
    let (chi2, p) = if cfg.phase_max > cfg.phase_min {
        chi_square_uniform(&theta, cfg.phase_min, cfg.phase_max, PHASE_BINS)?
    } else {
        (0.0, 1.0)
    };
    let slack = 1e-12;
    let in_sector = modulus_sq.iter().zip(&theta).all(|(&s, &t)| {
        let r = s.sqrt();
        r >= cfg.r_min - slack && r <= cfg.r_max + slack && t >= cfg.phase_min - slack && t <= cfg.phase_max + slack
    });
    Ok((
        RingCheck {
            ks_modulus_sq: ks,
            phase_chi2: chi2,
            phase_p_value: p,
            in_sector,
        },
        nu,
        theta,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularLawCheck {
    pub n: usize,
    pub gelfand: GelfandEstimate,
    /// `(1/N) tr(A^k)` for `k = 1..=8`.
    pub trace_moments: Vec<f64>,
}

pub fn circular_law_check(n: usize, gelfand_k: u32, seed: u64) -> Result<CircularLawCheck> {
    let a = glorot_dense(n, &mut rng::root(seed))?;
    let gelfand = gelfand_spectral_radius(&a, gelfand_k)?;
    let trace_moments = (1..=8).map(|k| trace_moment(&a, k)).collect::<Result<Vec<_>>>()?;
    Ok(CircularLawCheck {
        n,
        gelfand,
        trace_moments,
    })
}

pub fn spectrum_report(source: &SpectrumSource, n: usize, seed: u64) -> Result<ExperimentReport> {
    match source {
        SpectrumSource::Ring(cfg) => {
            let (check, nu, theta) = ring_check(cfg, n, seed)?;
            let mut report = ExperimentReport::new("spectrum", seed, &["index", "re", "im", "modulus", "phase"]);
            for (i, (v, t)) in nu.iter().zip(&theta).enumerate() {
                let r = (-v).exp();
                report.push_row(vec![i as f64, r * t.cos(), r * t.sin(), r, *t])?;
            }
            report.metric("ks_modulus_sq", check.ks_modulus_sq);
            report.metric("phase_chi2", check.phase_chi2);
            report.metric("phase_p_value", check.phase_p_value);
            report.metric("in_sector", f64::from(u8::from(check.in_sector)));
            report.metric("max_modulus", nu.iter().map(|v| (-v).exp()).fold(0.0, f64::max));
            Ok(report)
        }
        SpectrumSource::Dense { gelfand_k } => {
            let check = circular_law_check(n, *gelfand_k, seed)?;
            let mut report = ExperimentReport::new("spectrum", seed, &["k", "trace_moment"]);
            for (k, m) in check.trace_moments.iter().enumerate() {
                report.push_row(vec![(k + 1) as f64, *m])?;
            }
            report.metric("gelfand_radius", check.gelfand.radius);
            report.metric("gelfand_radius_half", check.gelfand.radius_half);
            report.metric("gelfand_k", f64::from(check.gelfand.k));
            Ok(report)
        }
    }
}

/// Phase range of the full circle, for convenience in callers.
pub const FULL_PHASE: (f64, f64) = (0.0, TAU);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::long_range_ring;

    #[test]
    fn unit_disk_samples_pass_ks() {
        let (check, _, _) = ring_check(&RingConfig::default(), 20_000, 1).unwrap();
        assert!(check.ks_modulus_sq < 0.015, "{check:?}");
        assert!(check.phase_p_value > 1e-3);
        assert!(check.in_sector);
    }

    #[test]
    fn long_range_sector_contains_samples() {
        let (check, _, theta) = ring_check(&long_range_ring(), 5000, 2).unwrap();
        assert!(check.in_sector);
        assert!(theta.iter().all(|&t| t <= std::f64::consts::PI / 10.0));
    }

    #[test]
    fn wrong_cdf_is_detected() {
        // radii uniform on [0, 1] is not the disk distribution
        let rs: Vec<f64> = (0..5000).map(|i| ((i as f64 + 0.5) / 5000.0).powi(2)).collect();
        assert!(ks_statistic(&rs, |s| s).unwrap() > 0.1);
    }

    #[test]
    fn dense_one_by_one_radius_is_entry_magnitude() {
        let a = glorot_dense(1, &mut rng::root(5)).unwrap();
        let report = spectrum_report(&SpectrumSource::Dense { gelfand_k: 64 }, 1, 5).unwrap();
        assert!((report.metrics["gelfand_radius"] - a.data[0].abs()).abs() < 1e-12);
    }
}
