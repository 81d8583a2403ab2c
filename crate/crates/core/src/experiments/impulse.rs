//! Impulse responses for small-phase and full-circle initializations, and a
//! comparison of exact versus first-order ZOH input matrices.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::init::{lru_init, LruDims, LruInitConfig, PhaseParam, RingConfig};
use crate::numerics::{ComplexVec, C64};
use crate::recurrence::{count_sign_changes, impulse_response, s4d_lin, zoh_discretize, ZohMode, ZohSystem};
use crate::report::ExperimentReport;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpulseConfig {
    pub nu: f64,
    pub phase_max: f64,
    pub len: usize,
    pub channels: usize,
}

impl Default for ImpulseConfig {
    fn default() -> Self {
        Self {
            nu: 5e-5,
            phase_max: PI / 50.0,
            len: 16384,
            channels: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResult {
    pub theta: Vec<f64>,
    pub sign_changes: Vec<usize>,
    /// `L θ_max / π + 1`: zeros of `cos(θk)` are `π/θ` apart.
    pub bound: f64,
    pub traces: Vec<Vec<f64>>,
}

/// Impulse responses `Re(λ_j^k)` with `ν_j = nu` and phases uniform on `[0, phase_max]`.
pub fn impulse_experiment(cfg: &ImpulseConfig, seed: u64) -> Result<ImpulseResult> {
    let ring = RingConfig::new((-cfg.nu).exp(), (-cfg.nu).exp()).with_phase(0.0, cfg.phase_max);
    let init = LruInitConfig {
        ring,
        phase: PhaseParam::Direct,
        ..Default::default()
    };
    let params = lru_init(&init, LruDims::square(1, cfg.channels), &mut rng::root(seed))?;
    let mut traces = Vec::with_capacity(cfg.channels);
    let mut sign_changes = Vec::with_capacity(cfg.channels);
    for c in 0..cfg.channels {
        let trace = impulse_response(&params, cfg.len, c)?;
        sign_changes.push(count_sign_changes(&trace));
        traces.push(trace);
    }
    Ok(ImpulseResult {
        theta: (0..cfg.channels).map(|c| params.theta(c)).collect(),
        sign_changes,
        bound: cfg.len as f64 * cfg.phase_max / PI + 1.0,
        traces,
    })
}

pub fn impulse_report(cfg: &ImpulseConfig, seed: u64) -> Result<ExperimentReport> {
    let result = impulse_experiment(cfg, seed)?;
    let mut header = vec!["k".to_string()];
    header.extend((0..cfg.channels).map(|c| format!("channel_{c}")));
    let mut report = ExperimentReport::new("impulse", seed, &[]);
    report.header = header;
    report.config = serde_json::to_value(cfg)?;
    for k in 0..cfg.len {
        let mut row = vec![k as f64];
        row.extend(result.traces.iter().map(|t| t[k]));
        report.push_row(row)?;
    }
    for (c, (n, th)) in result.sign_changes.iter().zip(&result.theta).enumerate() {
        report.metric(format!("sign_changes_{c}"), *n as f64);
        report.metric(format!("theta_{c}"), *th);
    }
    report.metric("sign_change_bound", result.bound);
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZohCompareConfig {
    pub n: usize,
    pub deltas: Vec<f64>,
}

impl Default for ZohCompareConfig {
    fn default() -> Self {
        Self {
            n: 64,
            deltas: vec![1e-4, 1e-3, 1e-2, 1e-1],
        }
    }
}

/// For S4D-Lin eigenvalues and unit `B̃`, reports `|λ|` and the relative gap
/// between the exact and first-order ZOH input matrices for each `Δ`.
pub fn zoh_compare_report(cfg: &ZohCompareConfig, seed: u64) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new(
        "zoh-compare",
        seed,
        &["delta", "max_modulus", "min_modulus", "max_rel_b_gap"],
    );
    report.config = serde_json::to_value(cfg)?;
    for &delta in &cfg.deltas {
        let sys = ZohSystem {
            a_tilde: s4d_lin(cfg.n),
            b_tilde: ComplexVec::from_complex(&vec![C64::new(1.0, 0.0); cfg.n]),
            h: 1,
            delta,
        };
        let (lambda, exact) = zoh_discretize(&sys, ZohMode::Exact)?;
        let (_, approx) = zoh_discretize(&sys, ZohMode::FirstOrder)?;
        let moduli: Vec<f64> = lambda.iter().map(|l| l.norm()).collect();
        let gap = (0..cfg.n)
            .map(|i| (exact.get(i) - approx.get(i)).norm() / exact.get(i).norm())
            .fold(0.0, f64::max);
        report.push_row(vec![
            delta,
            moduli.iter().cloned().fold(0.0, f64::max),
            moduli.iter().cloned().fold(f64::INFINITY, f64::min),
            gap,
        ])?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact count of sign changes of `cos(θk)` for `k = 0..len`.
    fn oracle_sign_changes(theta: f64, len: usize) -> usize {
        let mut count = 0;
        let mut prev = 1.0f64;
        for k in 1..len {
            let v = (theta * k as f64).cos();
            if v != 0.0 && (v > 0.0) != (prev > 0.0) {
                count += 1;
            }
            if v != 0.0 {
                prev = v;
            }
        }
        count
    }

    #[test]
    fn small_phase_has_few_oscillations() {
        let r = impulse_experiment(&ImpulseConfig::default(), 3).unwrap();
        for (c, &n) in r.sign_changes.iter().enumerate() {
            assert!((n as f64) <= r.bound);
            assert_eq!(n, oracle_sign_changes(r.theta[c], 16384));
        }
    }

    #[test]
    fn full_circle_oscillates() {
        let cfg = ImpulseConfig {
            phase_max: 2.0 * PI,
            channels: 16,
            ..Default::default()
        };
        let r = impulse_experiment(&cfg, 4).unwrap();
        let mean = r.sign_changes.iter().sum::<usize>() as f64 / r.sign_changes.len() as f64;
        assert!(mean > 16384.0 / 100.0);
    }

    #[test]
    fn real_eigenvalue_never_changes_sign() {
        let cfg = ImpulseConfig {
            nu: -(0.9f64).ln(),
            phase_max: 0.0,
            len: 200,
            channels: 1,
        };
        let r = impulse_experiment(&cfg, 0).unwrap();
        assert_eq!(r.sign_changes, vec![0]);
        assert!((r.traces[0][10] - 0.9f64.powi(10)).abs() < 1e-14);
    }

    #[test]
    fn zoh_gap_shrinks_with_delta() {
        let report = zoh_compare_report(&ZohCompareConfig::default(), 0).unwrap();
        let gaps = report.column("max_rel_b_gap").unwrap();
        assert!(gaps.windows(2).all(|w| w[0] < w[1]));
        let top = report.column("max_modulus").unwrap();
        assert!((top[1] - 0.9995).abs() < 1e-6);
    }
}
