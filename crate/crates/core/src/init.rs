//! Parameter initialization.
//!
//! Eigenvalues are drawn uniformly on a ring `{r_min <= |z| <= r_max}` (optionally
//! restricted to a phase slice) by inverse-CDF sampling of the exponential
//! parameterization `λ = exp(-ν + iθ)`. The learnable tensors store `ν^log = ln ν`
//! and, by default, `θ^log = ln θ`, which keeps `|λ| < 1` for any value the
//! optimizer produces.

use std::f64::consts::{PI, TAU};

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Open01, OpenClosed01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::numerics::{ComplexVec, DenseMatrix, C64};
use crate::params::{ParamRole, Parameters, TensorMeta};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub phase_min: f64,
    pub phase_max: f64,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self {
            r_min: 0.0,
            r_max: 1.0,
            phase_min: 0.0,
            phase_max: TAU,
        }
    }
}

impl RingConfig {
    pub fn new(r_min: f64, r_max: f64) -> Self {
        Self {
            r_min,
            r_max,
            ..Self::default()
        }
    }

    pub fn with_phase(mut self, phase_min: f64, phase_max: f64) -> Self {
        self.phase_min = phase_min;
        self.phase_max = phase_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.r_min, self.r_max, self.phase_min, self.phase_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("ring config"));
        }
        if !(0.0 <= self.r_min && self.r_min <= self.r_max && self.r_max <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "ring radii must satisfy 0 <= r_min <= r_max <= 1, got [{}, {}]",
                self.r_min, self.r_max
            )));
        }
        // small slack so that literal 2π from a JSON config is accepted
        if !(0.0 <= self.phase_min && self.phase_min <= self.phase_max && self.phase_max <= TAU + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "phase range must satisfy 0 <= phase_min <= phase_max <= 2π, got [{}, {}]",
                self.phase_min, self.phase_max
            )));
        }
        if self.r_max == 0.0 {
            return Err(Error::DegenerateRing);
        }
        Ok(())
    }
}

/// Inverse-CDF map from two uniforms to `(ν, θ)`.
///
/// `ν = -½ ln(u1 (r_max² - r_min²) + r_min²)` and `θ = phase_min + u2 (phase_max - phase_min)`.
pub fn ring_point(cfg: &RingConfig, u1: f64, u2: f64) -> (f64, f64) {
    let r2 = u1 * (cfg.r_max * cfg.r_max - cfg.r_min * cfg.r_min) + cfg.r_min * cfg.r_min;
    let nu = -0.5 * r2.ln();
    let theta = cfg.phase_min + u2 * (cfg.phase_max - cfg.phase_min);
    (nu, theta)
}

/// Sample `n` eigenvalues uniformly on the configured ring sector.
///
/// `u1` is drawn from the open interval (0, 1) and `u2` from (0, 1], so
/// `θ > phase_min` and `ν` is finite whenever `r_max > 0`.
pub fn sample_ring(cfg: &RingConfig, n: usize, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let mut nu = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for _ in 0..n {
        let u1: f64 = Open01.sample(rng);
        let u2: f64 = OpenClosed01.sample(rng);
        let (v, t) = ring_point(cfg, u1, u2);
        if !v.is_finite() {
            return Err(Error::DegenerateRing);
        }
        nu.push(v);
        theta.push(t);
    }
    Ok((nu, theta))
}

/// `γ^log_i = ln √(1 - |λ_i|²)` with `|λ_i| = exp(-ν_i)`.
pub fn gamma_init(nu: &[f64]) -> Result<Vec<f64>> {
    nu.iter()
        .map(|&v| {
            if v.is_nan() {
                return Err(Error::NonFinite("gamma_init"));
            }
            if v <= 0.0 {
                return Err(Error::Unstable((-v).exp()));
            }
            // 1 - e^{-2ν} without cancellation near ν = 0
            Ok(0.5 * (-(-2.0 * v).exp_m1()).ln())
        })
        .collect()
}

/// Complex Glorot: real and imaginary parts i.i.d. `N(0, 1/(rows+cols))`, for
/// a total per-entry complex variance of `2/(rows+cols)`. Row-major.
pub fn glorot_complex(rows: usize, cols: usize, rng: &mut Rng) -> ComplexVec {
    glorot_complex_scaled(rows, cols, 1.0, rng)
}

fn glorot_complex_scaled(rows: usize, cols: usize, var_scale: f64, rng: &mut Rng) -> ComplexVec {
    let std = (var_scale / (rows + cols) as f64).sqrt();
    let len = rows * cols;
    let mut out = ComplexVec::zeros(len);
    for i in 0..len {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        out.re[i] = std * re;
        out.im[i] = std * im;
    }
    out
}

/// Real Glorot-normal matrix, `N(0, 2/(rows+cols))`, row-major.
pub fn glorot_real(rows: usize, cols: usize, rng: &mut Rng) -> Vec<f64> {
    let dist = Normal::new(0.0, (2.0 / (rows + cols) as f64).sqrt()).unwrap();
    (0..rows * cols).map(|_| dist.sample(rng)).collect()
}

/// Square matrix with i.i.d. `N(0, 1/n)` entries.
pub fn glorot_dense(n: usize, rng: &mut Rng) -> Result<DenseMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("matrix dimension must be >= 1".into()));
    }
    let std = (1.0 / n as f64).sqrt();
    let data = (0..n * n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            std * z
        })
        .collect();
    DenseMatrix::from_vec(n, data)
}

/// Whether the stored phase tensor holds `ln θ` or `θ` itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseParam {
    #[default]
    Log,
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LruDims {
    pub h_in: usize,
    pub n: usize,
    pub h_out: usize,
}

impl LruDims {
    pub fn new(h_in: usize, n: usize, h_out: usize) -> Self {
        Self { h_in, n, h_out }
    }

    pub fn square(h: usize, n: usize) -> Self {
        Self::new(h, n, h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LruInitConfig {
    pub ring: RingConfig,
    /// Multiplier on the per-entry variance of `B` relative to complex Glorot.
    pub b_scale: f64,
    pub phase: PhaseParam,
}

impl Default for LruInitConfig {
    fn default() -> Self {
        Self {
            ring: RingConfig::default(),
            b_scale: 2.0,
            phase: PhaseParam::Log,
        }
    }
}

/// All learnable tensors of one LRU layer.
///
/// `B` is `n × h_in` and `C` is `h_out × n`, both row-major with split real and
/// imaginary parts. `D` has length `h_out` when `h_in == h_out` and is empty
/// otherwise (the elementwise skip needs matching widths).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LruParams {
    pub dims: LruDims,
    pub phase: PhaseParam,
    pub nu_log: Vec<f64>,
    pub theta_log: Vec<f64>,
    pub gamma_log: Vec<f64>,
    pub b_re: Vec<f64>,
    pub b_im: Vec<f64>,
    pub c_re: Vec<f64>,
    pub c_im: Vec<f64>,
    pub d: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type LruGrads = LruParams;

impl LruParams {
    /// All-zero tensors of the right shapes (λ = e^{-1}, γ = 1).
    pub fn zeros(dims: LruDims, phase: PhaseParam) -> Self {
        let LruDims { h_in, n, h_out } = dims;
        Self {
            dims,
            phase,
            nu_log: vec![0.0; n],
            theta_log: vec![0.0; n],
            gamma_log: vec![0.0; n],
            b_re: vec![0.0; n * h_in],
            b_im: vec![0.0; n * h_in],
            c_re: vec![0.0; h_out * n],
            c_im: vec![0.0; h_out * n],
            d: if h_in == h_out { vec![0.0; h_out] } else { Vec::new() },
        }
    }

    /// Build parameters that realize the given eigenvalues exactly (used by
    /// tests and experiments that need a planted spectrum). Eigenvalues must
    /// satisfy `0 < |λ| < 1`; a zero phase is only representable with
    /// [`PhaseParam::Direct`].
    pub fn with_lambdas(dims: LruDims, phase: PhaseParam, lambdas: &[C64]) -> Result<Self> {
        check_dim("eigenvalue count", dims.n, lambdas.len())?;
        let mut p = Self::zeros(dims, phase);
        for (i, l) in lambdas.iter().enumerate() {
            let r = l.norm();
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Unstable(r));
            }
            p.nu_log[i] = (-r.ln()).ln();
            let mut theta = l.arg();
            if theta < 0.0 {
                theta += TAU;
            }
            p.theta_log[i] = match phase {
                PhaseParam::Log => {
                    if theta <= 0.0 {
                        return Err(Error::InvalidInput(
                            "zero phase is not representable in log-phase form".into(),
                        ));
                    }
                    theta.ln()
                }
                PhaseParam::Direct => theta,
            };
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.dims.n
    }

    pub fn has_skip(&self) -> bool {
        !self.d.is_empty()
    }

    #[inline]
    pub fn theta(&self, i: usize) -> f64 {
        match self.phase {
            PhaseParam::Log => self.theta_log[i].exp(),
            PhaseParam::Direct => self.theta_log[i],
        }
    }

    #[inline]
    pub fn lambda(&self, i: usize) -> C64 {
        let magnitude = (-self.nu_log[i].exp()).exp();
        C64::from_polar(magnitude, self.theta(i))
    }

    pub fn lambdas(&self) -> Vec<C64> {
        (0..self.n()).map(|i| self.lambda(i)).collect()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.gamma_log.iter().map(|g| g.exp()).collect()
    }

    pub fn max_lambda_abs(&self) -> f64 {
        self.nu_log.iter().map(|v| (-v.exp()).exp()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let LruDims { h_in, n, h_out } = self.dims;
        check_dim("nu_log", n, self.nu_log.len())?;
        check_dim("theta_log", n, self.theta_log.len())?;
        check_dim("gamma_log", n, self.gamma_log.len())?;
        check_dim("B (re)", n * h_in, self.b_re.len())?;
        check_dim("B (im)", n * h_in, self.b_im.len())?;
        check_dim("C (re)", h_out * n, self.c_re.len())?;
        check_dim("C (im)", h_out * n, self.c_im.len())?;
        if !self.d.is_empty() {
            if h_in != h_out {
                return Err(Error::InvalidInput("elementwise skip D requires h_in == h_out".into()));
            }
            check_dim("D", h_out, self.d.len())?;
        }
        if !self.all_finite() {
            return Err(Error::NonFinite("LRU parameters"));
        }
        Ok(())
    }
}

impl Parameters for LruParams {
    fn visit(&self, f: &mut dyn FnMut(&TensorMeta, &[f64])) {
        let LruDims { h_in, n, h_out } = self.dims;
        f(&TensorMeta::new("nu_log", &[n], ParamRole::Nu), &self.nu_log);
        f(&TensorMeta::new("theta_log", &[n], ParamRole::Theta), &self.theta_log);
        f(&TensorMeta::new("gamma_log", &[n], ParamRole::Gamma), &self.gamma_log);
        f(
            &TensorMeta::new("b_re", &[n, h_in], ParamRole::InputProjection),
            &self.b_re,
        );
        f(
            &TensorMeta::new("b_im", &[n, h_in], ParamRole::InputProjection),
            &self.b_im,
        );
        f(
            &TensorMeta::new("c_re", &[h_out, n], ParamRole::OutputProjection),
            &self.c_re,
        );
        f(
            &TensorMeta::new("c_im", &[h_out, n], ParamRole::OutputProjection),
            &self.c_im,
        );
        f(&TensorMeta::new("d", &[self.d.len()], ParamRole::Skip), &self.d);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&TensorMeta, &mut [f64])) {
        let LruDims { h_in, n, h_out } = self.dims;
        let dl = self.d.len();
        f(&TensorMeta::new("nu_log", &[n], ParamRole::Nu), &mut self.nu_log);
        f(
            &TensorMeta::new("theta_log", &[n], ParamRole::Theta),
            &mut self.theta_log,
        );
        f(
            &TensorMeta::new("gamma_log", &[n], ParamRole::Gamma),
            &mut self.gamma_log,
        );
        f(
            &TensorMeta::new("b_re", &[n, h_in], ParamRole::InputProjection),
            &mut self.b_re,
        );
        f(
            &TensorMeta::new("b_im", &[n, h_in], ParamRole::InputProjection),
            &mut self.b_im,
        );
        f(
            &TensorMeta::new("c_re", &[h_out, n], ParamRole::OutputProjection),
            &mut self.c_re,
        );
        f(
            &TensorMeta::new("c_im", &[h_out, n], ParamRole::OutputProjection),
            &mut self.c_im,
        );
        f(&TensorMeta::new("d", &[dl], ParamRole::Skip), &mut self.d);
    }
}

/// Initialize one LRU layer.
pub fn lru_init(cfg: &LruInitConfig, dims: LruDims, rng: &mut Rng) -> Result<LruParams> {
    if dims.h_in == 0 || dims.n == 0 || dims.h_out == 0 {
        return Err(Error::InvalidInput(format!("LRU dims must be >= 1, got {dims:?}")));
    }
    if !(cfg.b_scale > 0.0 && cfg.b_scale.is_finite()) {
        return Err(Error::InvalidInput("b_scale must be positive".into()));
    }
    if cfg.phase == PhaseParam::Log && cfg.ring.phase_max <= 0.0 {
        return Err(Error::InvalidInput(
            "log-phase parameterization needs phase_max > 0".into(),
        ));
    }
    let (nu, theta) = sample_ring(&cfg.ring, dims.n, rng)?;
    let gamma_log = gamma_init(&nu)?;
    let nu_log: Vec<f64> = nu.iter().map(|v| v.ln()).collect();
    let theta_log: Vec<f64> = match cfg.phase {
        PhaseParam::Log => theta.iter().map(|t| t.ln()).collect(),
        PhaseParam::Direct => theta,
    };
    check_finite("theta_log", &theta_log)?;
    let b = glorot_complex_scaled(dims.n, dims.h_in, cfg.b_scale, rng);
    let c = glorot_complex(dims.h_out, dims.n, rng);
    let d = if dims.h_in == dims.h_out {
        (0..dims.h_out).map(|_| StandardNormal.sample(rng)).collect()
    } else {
        Vec::new()
    };
    let params = LruParams {
        dims,
        phase: cfg.phase,
        nu_log,
        theta_log,
        gamma_log,
        b_re: b.re,
        b_im: b.im,
        c_re: c.re,
        c_im: c.im,
        d,
    };
    params.validate()?;
    Ok(params)
}

/// Uniform draw on `[lo, hi)`; small helper for tasks and experiments.
pub fn uniform(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// `[0, π/10]` phase slice with radii `[0.999, 0.9999]`, the long-range
/// (PathX-style) initialization.
pub fn long_range_ring() -> RingConfig {
    RingConfig::new(0.999, 0.9999).with_phase(0.0, PI / 10.0)
}
