//! Dense real matrices, split-storage complex vectors, the DFT, and the
//! spectral estimators used by the circular-law and leakage checks.
//!
//! Everything is `f64`. Complex quantities are stored as separate real and
//! imaginary arrays; scalar arithmetic goes through [`C64`].

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, Error, Result};

pub type C64 = Complex64;

/// Complex vector stored as two real arrays of equal length.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComplexVec {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexVec {
    pub fn zeros(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_parts(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        check_dim("imaginary part length", re.len(), im.len())?;
        check_finite("complex vector (re)", &re)?;
        check_finite("complex vector (im)", &im)?;
        Ok(Self { re, im })
    }

    pub fn from_complex(values: &[C64]) -> Self {
        Self {
            re: values.iter().map(|z| z.re).collect(),
            im: values.iter().map(|z| z.im).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> C64 {
        C64::new(self.re[i], self.im[i])
    }

    #[inline]
    pub fn set(&mut self, i: usize, z: C64) {
        self.re[i] = z.re;
        self.im[i] = z.im;
    }

    pub fn iter(&self) -> impl Iterator<Item = C64> + '_ {
        self.re.iter().zip(&self.im).map(|(&re, &im)| C64::new(re, im))
    }

    pub fn to_complex(&self) -> Vec<C64> {
        self.iter().collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Square real matrix, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub n: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("matrix dimension must be >= 1".into()));
        }
        check_dim("matrix entries", n * n, data.len())?;
        check_finite("matrix", &data)?;
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, &v) in d.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    /// Frobenius norm, scaled by the largest entry so it does not overflow
    /// before the result does.
    pub fn frobenius(&self) -> f64 {
        let max = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max == 0.0 || !max.is_finite() {
            return max;
        }
        max * self.data.iter().map(|v| (v / max).powi(2)).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.get(j, i))
    }

    /// `self · other`, rows computed in parallel.
    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n, other.n, "matmul dimension mismatch");
        let n = self.n;
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                let b = &other.data[k * n..(k + 1) * n];
                for (o, &bv) in row.iter_mut().zip(b) {
                    *o += a * bv;
                }
            }
        });
        DenseMatrix { n, data: out }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n, x.len(), "matvec dimension mismatch");
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<DenseMatrix> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv = DenseMatrix::identity(n).data;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r1, &r2| a[r1 * n + col].abs().total_cmp(&a[r2 * n + col].abs()))
                .unwrap();
            let p = a[pivot * n + col];
            if p.abs() < 1e-300 {
                return Err(Error::InvalidInput("matrix is singular".into()));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                    inv.swap(pivot * n + j, col * n + j);
                }
            }
            let scale = 1.0 / p;
            for j in 0..n {
                a[col * n + j] *= scale;
                inv[col * n + j] *= scale;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] -= f * a[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
        Ok(DenseMatrix { n, data: inv })
    }
}

/// Power per DFT bin; `freqs[j] = j / L` in cycles per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }
}

/// Dot product with four independent accumulators, so the compiler can
/// vectorize it.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lengths up to this use the direct transform.
pub const DIRECT_DFT_MAX_LEN: usize = 4096;

/// Power spectrum `|X_j|²` of a real signal.
pub fn dft(signal: &[f64]) -> Result<Spectrum> {
    if signal.is_empty() {
        return Err(Error::InvalidInput("dft of an empty signal".into()));
    }
    check_finite("dft input", signal)?;
    let l = signal.len();
    let spec = dft_complex(signal, &vec![0.0; l])?;
    Ok(Spectrum {
        freqs: (0..l).map(|j| j as f64 / l as f64).collect(),
        power: spec.iter().map(|z| z.norm_sqr()).collect(),
    })
}

/// Forward DFT `X_j = Σ_n x_n e^{-2πi jn/L}` of a complex signal.
pub fn dft_complex(re: &[f64], im: &[f64]) -> Result<Vec<C64>> {
    check_dim("dft imaginary part", re.len(), im.len())?;
    if re.is_empty() {
        return Err(Error::InvalidInput("dft of an empty signal".into()));
    }
    let l = re.len();
    let input: Vec<C64> = re.iter().zip(im).map(|(&a, &b)| C64::new(a, b)).collect();
    if l > DIRECT_DFT_MAX_LEN && l.is_power_of_two() {
        Ok(fft_radix2(input))
    } else {
        Ok(dft_direct(&input))
    }
}

fn dft_direct(input: &[C64]) -> Vec<C64> {
    let l = input.len();
    let twiddle: Vec<C64> = (0..l)
        .map(|m| {
            let angle = -2.0 * std::f64::consts::PI * m as f64 / l as f64;
            C64::new(angle.cos(), angle.sin())
        })
        .collect();
    (0..l)
        .into_par_iter()
        .map(|j| {
            let mut acc = C64::new(0.0, 0.0);
            let mut idx = 0usize;
            for x in input {
                acc += x * twiddle[idx];
                idx += j;
                if idx >= l {
                    idx -= l;
                }
            }
            acc
        })
        .collect()
}

fn fft_radix2(mut a: Vec<C64>) -> Vec<C64> {
    let n = a.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            a.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let w: Vec<C64> = (0..half)
            .map(|k| {
                let angle = -2.0 * std::f64::consts::PI * k as f64 / len as f64;
                C64::new(angle.cos(), angle.sin())
            })
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let u = a[start + k];
                let v = a[start + k + half] * w[k];
                a[start + k] = u + v;
                a[start + k + half] = u - v;
            }
        }
        len <<= 1;
    }
    a
}

/// Gelfand-style spectral radius estimate at the final power and at half of it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GelfandEstimate {
    pub k: u32,
    pub radius: f64,
    pub radius_half: f64,
}

/// `‖A^k‖_F^(1/k)`, with `‖A^(k/2)‖_F^(2/k)` as a convergence diagnostic.
pub fn gelfand_spectral_radius(a: &DenseMatrix, k: u32) -> Result<GelfandEstimate> {
    if k < 8 {
        return Err(Error::InvalidInput(format!(
            "gelfand power count must be >= 8, got {k}"
        )));
    }
    Ok(GelfandEstimate {
        k,
        radius: log_frobenius_of_power(a, k)?.map_or(0.0, |l| (l / k as f64).exp()),
        radius_half: log_frobenius_of_power(a, k / 2)?.map_or(0.0, |l| (l / (k / 2) as f64).exp()),
    })
}

/// `ln ‖A^k‖_F` by repeated squaring with per-product renormalization.
/// `None` when the power is exactly zero.
fn log_frobenius_of_power(a: &DenseMatrix, k: u32) -> Result<Option<f64>> {
    let norm = a.frobenius();
    if !norm.is_finite() {
        return Err(Error::Overflow("gelfand_spectral_radius"));
    }
    if norm == 0.0 {
        return Ok(None);
    }
    let mut base = a.clone();
    base.scale(1.0 / norm);
    let mut base_log = norm.ln();
    let mut acc: Option<(DenseMatrix, f64)> = None;
    let mut e = k;
    loop {
        if e & 1 == 1 {
            acc = match acc {
                None => Some((base.clone(), base_log)),
                Some((m, log)) => {
                    let mut p = m.matmul(&base);
                    let pn = p.frobenius();
                    if pn == 0.0 {
                        return Ok(None);
                    }
                    if !pn.is_finite() {
                        return Err(Error::Overflow("gelfand_spectral_radius"));
                    }
                    p.scale(1.0 / pn);
                    Some((p, log + base_log + pn.ln()))
                }
            };
        }
        e >>= 1;
        if e == 0 {
            break;
        }
        let mut sq = base.matmul(&base);
        let sn = sq.frobenius();
        if sn == 0.0 {
            return Ok(None);
        }
        if !sn.is_finite() {
            return Err(Error::Overflow("gelfand_spectral_radius"));
        }
        sq.scale(1.0 / sn);
        base = sq;
        base_log = 2.0 * base_log + sn.ln();
    }
    Ok(acc.map(|(_, log)| log))
}

/// `(1/N) · trace(A^k)` for `1 <= k <= 8`.
pub fn trace_moment(a: &DenseMatrix, k: u32) -> Result<f64> {
    if !(1..=8).contains(&k) {
        return Err(Error::InvalidInput(format!(
            "trace moment power must be in 1..=8, got {k}"
        )));
    }
    let mut p = a.clone();
    for _ in 1..k {
        p = p.matmul(a);
    }
    let t = p.trace() / a.n as f64;
    if !t.is_finite() {
        return Err(Error::NonFinite("trace_moment"));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(l: usize, bin: usize) -> Vec<f64> {
        (0..l)
            .map(|k| (2.0 * PI * bin as f64 * k as f64 / l as f64).sin())
            .collect()
    }

    #[test]
    fn dft_constant_signal_is_dc_only() {
        let s = dft(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((s.power[0] - 16.0).abs() < 1e-12);
        for p in &s.power[1..] {
            assert!(p.abs() < 1e-24);
        }
    }

    #[test]
    fn dft_single_tone_has_two_bins() {
        let s = dft(&tone(256, 8)).unwrap();
        for (j, p) in s.power.iter().enumerate() {
            if j == 8 || j == 248 {
                assert!((p - 128.0 * 128.0).abs() < 1e-6, "bin {j}: {p}");
            } else {
                assert!(*p < 1e-18, "bin {j}: {p}");
            }
        }
    }

    #[test]
    fn dft_rejects_empty() {
        assert!(matches!(dft(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn radix2_matches_direct() {
        let l = 8192;
        let x: Vec<f64> = (0..l).map(|k| ((k * 7919) % 101) as f64 / 101.0 - 0.5).collect();
        let zero = vec![0.0; l];
        let fast = dft_complex(&x, &zero).unwrap();
        let input: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        let slow = dft_direct(&input);
        let scale = slow.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() / scale < 1e-11);
        }
    }

    #[test]
    fn gelfand_diagonal_closed_form() {
        let a = DenseMatrix::diagonal(&[0.5; 4]);
        let est = gelfand_spectral_radius(&a, 32).unwrap();
        let expected = 0.5 * 4f64.powf(1.0 / 64.0);
        assert!((est.radius - expected).abs() < 1e-12);
        assert!((expected - 0.5109).abs() < 1e-4);
    }

    #[test]
    fn gelfand_zero_matrix() {
        let est = gelfand_spectral_radius(&DenseMatrix::zeros(3), 16).unwrap();
        assert_eq!(est.radius, 0.0);
        assert_eq!(est.radius_half, 0.0);
    }

    #[test]
    fn gelfand_nilpotent_is_zero() {
        let mut a = DenseMatrix::zeros(3);
        a.set(0, 1, 1.0);
        a.set(1, 2, 1.0);
        assert_eq!(gelfand_spectral_radius(&a, 8).unwrap().radius, 0.0);
    }

    #[test]
    fn gelfand_handles_large_entries_without_overflow() {
        let a = DenseMatrix::diagonal(&[1e200, 3.0]);
        let est = gelfand_spectral_radius(&a, 64).unwrap();
        assert!((est.radius / 1e200 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gelfand_rejects_small_k() {
        assert!(gelfand_spectral_radius(&DenseMatrix::identity(2), 4).is_err());
    }

    #[test]
    fn gelfand_diagonal_converges_to_max_entry() {
        for n in [2usize, 5, 16] {
            let d: Vec<f64> = (0..n).map(|i| 0.3 + 0.6 * i as f64 / n as f64).collect();
            let max = d.iter().cloned().fold(0.0, f64::max);
            let est = gelfand_spectral_radius(&DenseMatrix::diagonal(&d), 64).unwrap();
            assert!((est.radius / max - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn trace_moment_examples() {
        assert!((trace_moment(&DenseMatrix::identity(5), 3).unwrap() - 1.0).abs() < 1e-15);
        let a = DenseMatrix::diagonal(&[0.5, -0.5]);
        assert_eq!(trace_moment(&a, 1).unwrap(), 0.0);
        assert!(trace_moment(&a, 0).is_err());
        assert!(trace_moment(&a, 9).is_err());
    }

    #[test]
    fn inverse_roundtrip() {
        let a = DenseMatrix::from_fn(4, |i, j| if i == j { 3.0 } else { (i + 2 * j) as f64 * 0.1 });
        let p = a.matmul(&a.inverse().unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p.get(i, j) - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singular_inverse_fails() {
        assert!(DenseMatrix::zeros(2).inverse().is_err());
    }
}
