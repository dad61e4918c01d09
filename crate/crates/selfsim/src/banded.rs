//! Banded LU factorization with partial pivoting.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Square band matrix with `kl` sub- and `ku` superdiagonals, stored by
/// columns with `kl` extra rows for pivoting fill-in.
#[derive(Clone, Debug)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    a: Vec<T>,
}

impl<T: Real> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self { n, kl, ku, ld, a: vec![T::zero(); ld * n] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ld
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if self.in_band(i, j) {
            self.a[self.idx(i, j)]
        } else {
            T::zero()
        }
    }

    /// Adds `v` at `(i, j)`; panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside the band");
        let k = self.idx(i, j);
        self.a[k] += v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                y[i] += self.a[self.idx(i, j)] * x[j];
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.ku, self.kl);
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                t.add(j, i, self.get(i, j));
            }
        }
        t
    }

    /// Subtracts `s` from the diagonal.
    pub fn shift(&mut self, s: T) {
        for i in 0..self.n {
            let k = self.idx(i, i);
            self.a[k] -= s;
        }
    }

    /// In-place LU factorization.
    pub fn lu(mut self) -> Result<BandLu<T>> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = 0;
            let mut best = self.a[self.idx(j, j)].abs();
            for k in 1..=km {
                let v = self.a[self.idx(j + k, j)].abs();
                if v > best {
                    best = v;
                    p = k;
                }
            }
            piv[j] = j + p;
            if best == T::zero() {
                return Err(Error::Eigensolver(format!("band matrix is singular at column {j}")));
            }
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let (r0, r1) = (self.idx(j, c), self.idx(j + p, c));
                    self.a.swap(r0, r1);
                }
            }
            let pivot = self.a[self.idx(j, j)];
            for k in 1..=km {
                let i = self.idx(j + k, j);
                self.a[i] /= pivot;
            }
            for c in (j + 1)..=ju {
                let ajc = self.a[self.idx(j, c)];
                if ajc != T::zero() {
                    for k in 1..=km {
                        let l = self.a[self.idx(j + k, j)];
                        let t = self.idx(j + k, c);
                        self.a[t] -= l * ajc;
                    }
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }
}

/// Factorization produced by [`BandMatrix::lu`].
#[derive(Clone, Debug)]
pub struct BandLu<T> {
    m: BandMatrix<T>,
    piv: Vec<usize>,
}

impl<T: Real> BandLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let m = &self.m;
        let n = m.n;
        let mut x = b.to_vec();
        for j in 0..n {
            x.swap(j, self.piv[j]);
            let km = m.kl.min(n - 1 - j);
            let xj = x[j];
            for k in 1..=km {
                x[j + k] -= m.a[m.idx(j + k, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            x[j] /= m.a[m.idx(j, j)];
            let xj = x[j];
            let lo = j.saturating_sub(m.kl + m.ku);
            for i in lo..j {
                x[i] -= m.a[m.idx(i, j)] * xj;
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn solves_random_band_systems(
            n in 5usize..40,
            kl in 0usize..4,
            ku in 0usize..4,
            seed in prop::collection::vec(-1.0f64..1.0, 400),
        ) {
            let mut m = BandMatrix::zeros(n, kl, ku);
            let mut k = 0;
            for i in 0..n {
                for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                    m.add(i, j, seed[k % seed.len()] + if i == j { 0.1 } else { 0.0 });
                    k += 1;
                }
            }
            let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let b = m.mul_vec(&x);
            if let Ok(lu) = m.clone().lu() {
                let y = lu.solve(&b);
                let r = m.mul_vec(&y);
                let err = r.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
                // Backward error, which partial pivoting keeps small.
                prop_assert!(err < 1e-8 * scale, "{err}");
            }
        }
    }

    #[test]
    fn transpose_and_shift() {
        let mut m = BandMatrix::<f64>::zeros(4, 1, 2);
        m.add(1, 0, 3.0);
        m.add(0, 2, 5.0);
        let t = m.transpose();
        assert_eq!(t.get(0, 1), 3.0);
        assert_eq!(t.get(2, 0), 5.0);
        m.shift(1.0);
        assert_eq!(m.get(3, 3), -1.0);
    }
}
