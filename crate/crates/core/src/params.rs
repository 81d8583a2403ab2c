//! Named views over parameter tensors, shared by the optimizer, the
//! finite-difference harness, and checkpointing.

use serde::{Deserialize, Serialize};

/// What a tensor is, so the optimizer can route it to a parameter group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRole {
    /// `ν^log`
    Nu,
    /// `θ^log` (or `θ` when the phase is not log-parameterized)
    Theta,
    /// `γ^log`
    Gamma,
    /// Input projection of a recurrence (`B`, real or imaginary part)
    InputProjection,
    /// Output projection of a recurrence (`C`)
    OutputProjection,
    /// Elementwise skip `D`
    Skip,
    /// Everything else (encoder, head, GLU, normalization, dense baselines)
    Other,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
}

impl TensorMeta {
    pub fn new(name: impl Into<String>, shape: &[usize], role: ParamRole) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            role,
        }
    }
}

/// A fixed, ordered collection of real tensors.
///
/// Gradients reuse the parameter type, so `visit` on a parameter set and on
/// its gradient yields tensors in the same order with the same shapes.
pub trait Parameters: Clone {
    fn visit(&self, f: &mut dyn FnMut(&TensorMeta, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&TensorMeta, &mut [f64]));

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, t| t.fill(0.0));
        z
    }

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn metas(&self) -> Vec<TensorMeta> {
        let mut out = Vec::new();
        self.visit(&mut |m, _| out.push(m.clone()));
        out
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        self.visit(&mut |_, t| out.extend_from_slice(t));
        out
    }

    /// Overwrite from a flat buffer in visiting order. Panics on length mismatch.
    fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(&mut |_, t| {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        });
        assert_eq!(offset, flat.len(), "flat buffer length mismatch");
    }

    /// `self += alpha * other`.
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        let flat = other.to_flat();
        let mut offset = 0;
        self.visit_mut(&mut |_, t| {
            let len = t.len();
            for (a, b) in t.iter_mut().zip(&flat[offset..offset + len]) {
                *a += alpha * b;
            }
            offset += len;
        });
    }

    fn scale(&mut self, alpha: f64) {
        self.visit_mut(&mut |_, t| t.iter_mut().for_each(|v| *v *= alpha));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.iter().all(|v| v.is_finite()));
        ok
    }
}
