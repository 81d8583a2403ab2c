//! Kernels and experiments for the Linear Recurrent Unit (LRU).
//!
//! An LRU layer is a linear recurrence with a complex diagonal transition:
//!
//! ```text
//! x_k = λ ⊙ x_{k-1} + γ ⊙ (B u_k)
//! y_k = Re[C x_k] + D ⊙ u_k
//! ```
//!
//! with `λ_j = exp(-exp(ν_j^log) + i·θ_j)`, so `|λ_j| < 1` holds for any real
//! `ν_j^log`. The crate provides initialization on a ring of the complex plane,
//! sequential and parallel-scan execution, hand-written reverse-mode gradients,
//! a small residual sequence model, AdamW training, and a set of desk-scale
//! numerical experiments.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod checkpoint;
pub mod error;
pub mod experiments;
pub mod gradients;
pub mod init;
pub mod model;
pub mod numerics;
pub mod params;
pub mod recurrence;
pub mod report;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
