//! Affine-map monoid for diagonal linear recurrences and the scan kernels.
//!
//! An element `(a, b)` stands for the map `x ↦ a ⊙ x + b`. Composition
//! "first `e1`, then `e2`" is `(e2.a ⊙ e1.a, e2.a ⊙ e1.b + e2.b)`, which is
//! associative with identity `(1, 0)`.

use rayon::prelude::*;

use crate::error::{check_dim, Result};
use crate::numerics::{ComplexVec, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct ScanElement {
    pub a: ComplexVec,
    pub b: ComplexVec,
}

impl ScanElement {
    pub fn identity(n: usize) -> Self {
        Self {
            a: ComplexVec {
                re: vec![1.0; n],
                im: vec![0.0; n],
            },
            b: ComplexVec::zeros(n),
        }
    }

    pub fn new(a: ComplexVec, b: ComplexVec) -> Result<Self> {
        check_dim("scan element b", a.len(), b.len())?;
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Apply the affine map to a state.
    pub fn apply(&self, x: &ComplexVec) -> ComplexVec {
        let mut out = ComplexVec::zeros(x.len());
        for i in 0..x.len() {
            out.set(i, self.a.get(i) * x.get(i) + self.b.get(i));
        }
        out
    }
}

/// Compose `e1` followed by `e2`.
pub fn scan_combine(e1: &ScanElement, e2: &ScanElement) -> Result<ScanElement> {
    check_dim("scan element a", e1.len(), e2.len())?;
    check_dim("scan element b", e1.len(), e2.b.len())?;
    check_dim("scan element b", e1.len(), e1.b.len())?;
    let n = e1.len();
    let mut a = ComplexVec::zeros(n);
    let mut b = ComplexVec::zeros(n);
    for i in 0..n {
        let a2 = e2.a.get(i);
        a.set(i, a2 * e1.a.get(i));
        b.set(i, a2 * e1.b.get(i) + e2.b.get(i));
    }
    Ok(ScanElement { a, b })
}

/// Inclusive prefix compositions by a Blelloch up-sweep/down-sweep over a
/// power-of-two padded array. Each level combines its pairs in parallel.
///
/// Returns `out[t] = elems[0] ∘ … ∘ elems[t]` (first applied first).
pub fn tree_scan(elems: &[ScanElement]) -> Result<Vec<ScanElement>> {
    if elems.is_empty() {
        return Ok(Vec::new());
    }
    let n = elems[0].len();
    for e in elems {
        check_dim("scan element", n, e.len())?;
    }
    let len = elems.len();
    let size = len.next_power_of_two();
    let mut tree: Vec<ScanElement> = elems.to_vec();
    tree.resize(size, ScanElement::identity(n));

    // up-sweep: tree[i] holds the composition of its left-to-right block
    let mut stride = 1;
    while stride < size {
        let step = stride * 2;
        let updates: Vec<(usize, ScanElement)> = (0..size / step)
            .into_par_iter()
            .map(|k| {
                let right = k * step + step - 1;
                let left = right - stride;
                (right, compose(&tree[left], &tree[right]))
            })
            .collect();
        for (i, e) in updates {
            tree[i] = e;
        }
        stride = step;
    }

    // down-sweep to an exclusive scan
    tree[size - 1] = ScanElement::identity(n);
    let mut stride = size / 2;
    while stride >= 1 {
        let step = stride * 2;
        let updates: Vec<(usize, ScanElement, usize, ScanElement)> = (0..size / step)
            .into_par_iter()
            .map(|k| {
                let right = k * step + step - 1;
                let left = right - stride;
                let carry = tree[right].clone();
                let combined = compose(&carry, &tree[left]);
                (left, carry, right, combined)
            })
            .collect();
        for (l, le, r, re) in updates {
            tree[l] = le;
            tree[r] = re;
        }
        stride /= 2;
    }

    Ok(tree
        .into_iter()
        .zip(elems)
        .map(|(prefix, e)| compose(&prefix, e))
        .collect())
}

fn compose(e1: &ScanElement, e2: &ScanElement) -> ScanElement {
    scan_combine(e1, e2).expect("dimensions checked by caller")
}

/// Sequential diagonal recurrence `x_t = λ ⊙ x_{t-1} + v_t` in place over a
/// time-major `[len, n]` buffer, starting from `x0`.
pub(crate) fn scan_in_place(lambda: &[C64], x0: Option<&[C64]>, re: &mut [f64], im: &mut [f64]) {
    let n = lambda.len();
    let mut state: Vec<C64> = match x0 {
        Some(x) => x.to_vec(),
        None => vec![C64::new(0.0, 0.0); n],
    };
    for (row_re, row_im) in re.chunks_mut(n).zip(im.chunks_mut(n)) {
        for i in 0..n {
            let x = lambda[i] * state[i] + C64::new(row_re[i], row_im[i]);
            state[i] = x;
            row_re[i] = x.re;
            row_im[i] = x.im;
        }
    }
}

/// Add `λ^{j+1} ⊙ carry` to row `j` of a time-major `[len, n]` buffer.
pub(crate) fn apply_carry(lambda: &[C64], carry: &[C64], re: &mut [f64], im: &mut [f64]) {
    let n = lambda.len();
    let mut p: Vec<C64> = lambda.iter().zip(carry).map(|(l, c)| l * c).collect();
    for (row_re, row_im) in re.chunks_mut(n).zip(im.chunks_mut(n)) {
        for i in 0..n {
            row_re[i] += p[i].re;
            row_im[i] += p[i].im;
            p[i] *= lambda[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_element(n: usize, r: &mut crate::rng::Rng) -> ScanElement {
        let mut v = || -> Vec<f64> { (0..n).map(|_| r.random::<f64>() * 2.0 - 1.0).collect() };
        ScanElement {
            a: ComplexVec { re: v(), im: v() },
            b: ComplexVec { re: v(), im: v() },
        }
    }

    fn max_diff(x: &ScanElement, y: &ScanElement) -> f64 {
        let mut m = 0.0f64;
        for i in 0..x.len() {
            m = m.max((x.a.get(i) - y.a.get(i)).norm());
            m = m.max((x.b.get(i) - y.b.get(i)).norm());
        }
        m
    }

    #[test]
    fn identity_is_neutral() {
        let mut r = rng::root(0);
        let e = random_element(5, &mut r);
        let id = ScanElement::identity(5);
        assert_eq!(scan_combine(&e, &id).unwrap(), e);
        assert_eq!(scan_combine(&id, &e).unwrap(), e);
    }

    #[test]
    fn associativity_on_random_triples() {
        let mut r = rng::root(1);
        for _ in 0..1000 {
            let x = random_element(3, &mut r);
            let y = random_element(3, &mut r);
            let z = random_element(3, &mut r);
            let left = scan_combine(&scan_combine(&x, &y).unwrap(), &z).unwrap();
            let right = scan_combine(&x, &scan_combine(&y, &z).unwrap()).unwrap();
            assert!(max_diff(&left, &right) < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(scan_combine(&ScanElement::identity(2), &ScanElement::identity(3)).is_err());
    }

    #[test]
    fn scalar_chain_prefix_states() {
        let e = |b: f64| ScanElement {
            a: ComplexVec {
                re: vec![0.5],
                im: vec![0.0],
            },
            b: ComplexVec {
                re: vec![b],
                im: vec![0.0],
            },
        };
        let prefixes = tree_scan(&[e(1.0), e(1.0), e(1.0)]).unwrap();
        let states: Vec<f64> = prefixes.iter().map(|p| p.b.re[0]).collect();
        assert_eq!(states, vec![1.0, 1.5, 1.75]);
    }

    #[test]
    fn tree_scan_matches_left_fold() {
        let mut r = rng::root(2);
        for len in [1usize, 2, 3, 7, 16, 33] {
            let elems: Vec<_> = (0..len).map(|_| random_element(4, &mut r)).collect();
            let scanned = tree_scan(&elems).unwrap();
            let mut acc = elems[0].clone();
            assert!(max_diff(&scanned[0], &acc) < 1e-14);
            for t in 1..len {
                acc = scan_combine(&acc, &elems[t]).unwrap();
                assert!(max_diff(&scanned[t], &acc) < 1e-12);
            }
        }
    }

    #[test]
    fn carry_fixup_matches_full_scan() {
        let lambda = vec![C64::new(0.3, 0.4), C64::new(-0.9, 0.1)];
        let v_re: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let v_im: Vec<f64> = (0..20).map(|i| (i as f64 * 0.11).cos()).collect();
        let (mut full_re, mut full_im) = (v_re.clone(), v_im.clone());
        scan_in_place(&lambda, None, &mut full_re, &mut full_im);

        let (mut re, mut im) = (v_re.clone(), v_im.clone());
        let (head_re, tail_re) = re.split_at_mut(8);
        let (head_im, tail_im) = im.split_at_mut(8);
        scan_in_place(&lambda, None, head_re, head_im);
        scan_in_place(&lambda, None, tail_re, tail_im);
        let carry = [C64::new(head_re[6], head_im[6]), C64::new(head_re[7], head_im[7])];
        apply_carry(&lambda, &carry, tail_re, tail_im);
        for i in 0..20 {
            assert!((re[i] - full_re[i]).abs() < 1e-14);
            assert!((im[i] - full_im[i]).abs() < 1e-14);
        }
    }
}
