//! Truncated power series arithmetic.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Coefficients `c[k]` of `Σ c[k] x^k`, truncated at `len() - 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jet<T> {
    pub c: Vec<T>,
}

impl<T: Real> Jet<T> {
    pub fn zeros(len: usize) -> Self {
        Self { c: vec![T::zero(); len] }
    }

    pub fn from_coeffs(c: Vec<T>) -> Self {
        Self { c }
    }

    pub fn constant(v: T, len: usize) -> Self {
        let mut j = Self::zeros(len);
        if len > 0 {
            j.c[0] = v;
        }
        j
    }

    /// The series of `x0 + x`.
    pub fn variable(x0: T, len: usize) -> Self {
        let mut j = Self::constant(x0, len);
        if len > 1 {
            j.c[1] = T::one();
        }
        j
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Horner evaluation at offset `x` from the expansion point.
    pub fn eval(&self, x: T) -> T {
        self.c.iter().rev().fold(T::zero(), |acc, &a| acc * x + a)
    }

    /// Value and the first `k` derivatives at offset `x`.
    pub fn eval_derivs(&self, x: T, k: usize) -> Vec<T> {
        eval_derivs(&self.c, x, k)
    }

    pub fn derivative(&self) -> Self {
        if self.c.len() <= 1 {
            return Self::zeros(self.c.len().max(1) - 1);
        }
        Self {
            c: (1..self.c.len()).map(|k| self.c[k] * T::of_usize(k)).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { c: self.c.iter().map(|&a| a * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.len().max(other.len());
        let get = |j: &Self, k: usize| j.c.get(k).copied().unwrap_or_else(T::zero);
        Self { c: (0..n).map(|k| get(self, k) + get(other, k)).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    /// Cauchy product truncated to the shorter length.
    pub fn mul(&self, other: &Self) -> Self {
        let n = self.len().min(other.len());
        let mut c = vec![T::zero(); n];
        for (i, &a) in self.c.iter().take(n).enumerate() {
            if a == T::zero() {
                continue;
            }
            for (j, &b) in other.c.iter().take(n - i).enumerate() {
                c[i + j] += a * b;
            }
        }
        Self { c }
    }

    /// Reciprocal series; requires a nonzero constant term.
    pub fn recip(&self) -> Self {
        let n = self.len();
        let mut r = vec![T::zero(); n];
        if n == 0 {
            return Self { c: r };
        }
        let a0 = self.c[0];
        r[0] = T::one() / a0;
        for k in 1..n {
            let mut s = T::zero();
            for j in 1..=k {
                s += self.c[j] * r[k - j];
            }
            r[k] = -s / a0;
        }
        Self { c: r }
    }

    /// `outer(inner)` where `outer` holds Taylor coefficients about `inner.c[0]`.
    pub fn compose(outer: &[T], inner: &Self) -> Self {
        let n = inner.len();
        let mut g = inner.clone();
        if n > 0 {
            g.c[0] = T::zero();
        }
        let mut acc = Self::zeros(n);
        for &o in outer.iter().rev() {
            acc = acc.mul(&g);
            if n > 0 {
                acc.c[0] += o;
            }
        }
        acc
    }

    /// Re-expands the polynomial about `x0` (offset from the current center).
    pub fn shift(&self, x0: T) -> Self {
        let n = self.len();
        let mut c = self.c.clone();
        // Repeated synthetic division.
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                let t = c[j + 1] * x0;
                c[j] += t;
            }
        }
        Self { c }
    }
}

/// Value and the first `k` derivatives of `Σ c[m] x^m`.
pub fn eval_derivs<T: Real>(c: &[T], x: T, k: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k + 1];
    let n = c.len();
    for (r, o) in out.iter_mut().enumerate() {
        if r >= n {
            break;
        }
        // Σ_{m≥r} c_m m!/(m-r)! x^{m-r}
        let mut acc = T::zero();
        for m in (r..n).rev() {
            acc = acc * x + c[m] * falling(m, r);
        }
        *o = acc;
    }
    out
}

/// m (m-1) ... (m-r+1)
fn falling<T: Real>(m: usize, r: usize) -> T {
    (0..r).fold(T::one(), |acc, i| acc * T::of_usize(m - i))
}
