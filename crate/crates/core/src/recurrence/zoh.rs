//! Zero-order-hold discretization of diagonal continuous-time systems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{ComplexVec, C64};

/// Continuous-time diagonal system `ẋ = diag(ã) x + B̃ u` with step `Δ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZohSystem {
    pub a_tilde: ComplexVec,
    /// `n × h`, row-major.
    pub b_tilde: ComplexVec,
    pub h: usize,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZohMode {
    /// `B = (λ - 1)/ã · B̃`
    #[default]
    Exact,
    /// `B = Δ · B̃`
    FirstOrder,
}

/// `ã_n = -1/2 + iπn` for `n = 0..count`.
pub fn s4d_lin(count: usize) -> ComplexVec {
    ComplexVec {
        re: vec![-0.5; count],
        im: (0..count).map(|n| PI * n as f64).collect(),
    }
}

/// Returns `(λ, B)` with `λ_i = exp(Δ ã_i)`.
pub fn zoh_discretize(sys: &ZohSystem, mode: ZohMode) -> Result<(ComplexVec, ComplexVec)> {
    let n = sys.a_tilde.len();
    check_dim("b_tilde entries", n * sys.h, sys.b_tilde.len())?;
    if !(sys.delta > 0.0 && sys.delta.is_finite()) {
        return Err(Error::InvalidInput(format!("Δ must be positive, got {}", sys.delta)));
    }
    let mut lambda = ComplexVec::zeros(n);
    let mut b = ComplexVec::zeros(n * sys.h);
    for i in 0..n {
        let a = sys.a_tilde.get(i);
        let l = (a * sys.delta).exp();
        lambda.set(i, l);
        let scale = match mode {
            ZohMode::Exact => {
                if a == C64::new(0.0, 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "ã_{i} = 0 has no exact ZOH input matrix; use first-order mode"
                    )));
                }
                // (e^{Δa} - 1)/a; expm1 keeps precision for small |Δa|
                expm1_complex(a * sys.delta) / a
            }
            ZohMode::FirstOrder => C64::new(sys.delta, 0.0),
        };
        for j in 0..sys.h {
            let k = i * sys.h + j;
            b.set(k, scale * sys.b_tilde.get(k));
        }
    }
    Ok((lambda, b))
}

fn expm1_complex(z: C64) -> C64 {
    // e^{x+iy} - 1 = (e^x cos y - 1) + i e^x sin y, with e^x cos y - 1 = expm1(x) cos y - 2 sin²(y/2)
    let (x, y) = (z.re, z.im);
    let half = (0.5 * y).sin();
    C64::new(x.exp_m1() * y.cos() - 2.0 * half * half, x.exp() * y.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(a: ComplexVec, delta: f64) -> ZohSystem {
        let n = a.len();
        ZohSystem {
            a_tilde: a,
            b_tilde: ComplexVec {
                re: vec![1.0; n],
                im: vec![0.5; n],
            },
            h: 1,
            delta,
        }
    }

    #[test]
    fn s4d_lin_magnitude() {
        let (lambda, _) = zoh_discretize(&system(s4d_lin(64), 1e-3), ZohMode::Exact).unwrap();
        for l in lambda.iter() {
            assert!((l.norm() - (-0.5e-3f64).exp()).abs() < 1e-15);
            assert!((l.norm() - 0.9995).abs() < 1e-6);
        }
    }

    #[test]
    fn small_step_limit() {
        let a = ComplexVec {
            re: vec![-1.0],
            im: vec![0.0],
        };
        let (lambda, b) = zoh_discretize(&system(a, 1e-12), ZohMode::Exact).unwrap();
        assert!((lambda.get(0) - C64::new(1.0, 0.0)).norm() < 1e-11);
        assert!(b.get(0).norm() < 1e-11);
    }

    #[test]
    fn zero_eigenvalue_needs_first_order_mode() {
        let a = ComplexVec::zeros(1);
        assert!(zoh_discretize(&system(a.clone(), 0.1), ZohMode::Exact).is_err());
        let (l, b) = zoh_discretize(&system(a, 0.1), ZohMode::FirstOrder).unwrap();
        assert_eq!(l.get(0), C64::new(1.0, 0.0));
        assert!((b.get(0) - C64::new(0.1, 0.05)).norm() < 1e-15);
    }

    #[test]
    fn first_order_error_is_linear_in_delta() {
        let a = ComplexVec {
            re: vec![-0.5, -2.0],
            im: vec![3.0, 1.0],
        };
        let rel = |delta: f64| {
            let sys = system(a.clone(), delta);
            let (_, exact) = zoh_discretize(&sys, ZohMode::Exact).unwrap();
            let (_, approx) = zoh_discretize(&sys, ZohMode::FirstOrder).unwrap();
            (0..exact.len())
                .map(|i| (exact.get(i) - approx.get(i)).norm() / exact.get(i).norm())
                .fold(0.0, f64::max)
        };
        let r1 = rel(1e-3);
        let r2 = rel(1e-4);
        assert!((r1 / r2 - 10.0).abs() < 0.1, "{r1} {r2}");
    }

    #[test]
    fn expm1_matches_direct_formula() {
        let z = C64::new(-0.3, 1.7);
        assert!((expm1_complex(z) - (z.exp() - 1.0)).norm() < 1e-15);
    }
}
