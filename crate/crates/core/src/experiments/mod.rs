//! Desk-scale numerical experiments. Each returns plain results and, where
//! useful, an [`ExperimentReport`](crate::report::ExperimentReport) for the CLI.

pub mod conv_kernel;
pub mod gain;
pub mod impulse;
pub mod leakage;
pub mod powers;
pub mod spectrum;
pub mod stats;

pub use conv_kernel::{
    causal_convolve, conv_kernel, conv_kernel_comparison, conv_kernel_task, ConvComparisonConfig, ConvKernelConfig,
    ConvKernelData, ConvRun, DenseRnnTask,
};
pub use gain::{gain_formula, gain_monte_carlo, gain_report, GainConfig, GainResult, InputMode};
pub use impulse::{
    impulse_experiment, impulse_report, zoh_compare_report, ImpulseConfig, ImpulseResult, ZohCompareConfig,
};
pub use leakage::{
    activation_intervals, leakage_demo, linear_lru_tone_leakage, offband_ratio, random_piecewise_signal,
    relu_spectrum_identity, IdentityCheck, LeakageResult,
};
pub use powers::{
    powers_comparison, powers_task_run, PowersComparison, PowersComparisonConfig, PowersRun, PowersTaskConfig,
};
pub use spectrum::{circular_law_check, ring_check, spectrum_report, CircularLawCheck, RingCheck, SpectrumSource};
