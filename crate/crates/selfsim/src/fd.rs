//! Uniform-grid radial finite differences.
//!
//! Fourth-order centered stencils in the interior, even-parity ghost points at
//! the origin, and six-point one-sided closures at the outer edge, where every
//! characteristic leaves the grid.

use crate::scalar::Real;

/// Finite-difference weights of Fornberg's algorithm: `w[k][j]` is the weight
/// of node `xs[j]` in the `k`-th derivative at `x0`.
pub fn fornberg_weights<T: Real>(x0: T, xs: &[T], m: usize) -> Vec<Vec<T>> {
    let n = xs.len();
    let mut c = vec![vec![T::zero(); n]; m + 1];
    c[0][0] = T::one();
    let mut c1 = T::one();
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = T::one();
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (T::of_usize(k) * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - T::of_usize(k) * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// One stencil row: `(node, first-derivative weight, second-derivative weight)`.
pub type Row<T> = Vec<(usize, T, T)>;

/// Derivative stencils on `ρ_i = i h`, `i = 0..=m`.
#[derive(Clone, Debug)]
pub struct RadialFd<T> {
    pub h: T,
    pub intervals: usize,
    /// Spatial dimension entering the radial Laplacian.
    pub dim: usize,
    edge: [Row<T>; 4],
}

const CLOSURE: usize = 6;

impl<T: Real> RadialFd<T> {
    pub fn new(radius: T, intervals: usize, dim: usize) -> Self {
        assert!(intervals >= 8, "grid too coarse for the stencils");
        let h = radius / T::of_usize(intervals);
        let m = intervals;
        let interior = |i: usize| -> Row<T> {
            let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
            let d2 = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
            let mut row: Row<T> = Vec::new();
            for k in 0..5 {
                let j = (i as isize + k as isize - 2).unsigned_abs();
                match row.iter_mut().find(|e| e.0 == j) {
                    Some(e) => {
                        e.1 += T::of(d1[k]) / h;
                        e.2 += T::of(d2[k]) / (h * h);
                    }
                    None => row.push((j, T::of(d1[k]) / h, T::of(d2[k]) / (h * h))),
                }
            }
            row.sort_by_key(|e| e.0);
            row
        };
        let closure = |i: usize| -> Row<T> {
            let first = m + 1 - CLOSURE;
            let xs: Vec<T> = (first..=m).map(T::of_usize).collect();
            let w = fornberg_weights(T::of_usize(i), &xs, 2);
            (0..CLOSURE).map(|k| (first + k, w[1][k] / h, w[2][k] / (h * h))).collect()
        };
        let mut edge = [interior(0), interior(1), closure(m - 1), closure(m)];
        // Odd derivative of an even function vanishes at the origin.
        for e in edge[0].iter_mut() {
            e.1 = T::zero();
        }
        Self { h, intervals, dim, edge }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.intervals).map(|i| T::of_usize(i) * self.h).collect()
    }

    pub fn radius(&self) -> T {
        T::of_usize(self.intervals) * self.h
    }

    /// Stencil row at node `i`, with the ghost points folded in.
    pub fn row(&self, i: usize) -> Row<T> {
        let m = self.intervals;
        match i {
            0 => self.edge[0].clone(),
            1 => self.edge[1].clone(),
            _ if i == m - 1 => self.edge[2].clone(),
            _ if i == m => self.edge[3].clone(),
            _ => {
                let h = self.h;
                let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
                let d2 = [-1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0];
                (0..5).map(|k| (i + k - 2, T::of(d1[k]) / h, T::of(d2[k]) / (h * h))).collect()
            }
        }
    }

    /// First and second derivatives of `f` at every node.
    pub fn derivatives(&self, f: &[T], d1: &mut [T], d2: &mut [T]) {
        let m = self.intervals;
        let h = self.h;
        let a1 = T::one() / (T::of(12.0) * h);
        let a2 = T::one() / (T::of(12.0) * h * h);
        let (c8, c16, c30) = (T::of(8.0), T::of(16.0), T::of(30.0));
        for i in 2..m - 1 {
            let (fm2, fm1, f0, fp1, fp2) = (f[i - 2], f[i - 1], f[i], f[i + 1], f[i + 2]);
            d1[i] = (fm2 - fp2 + c8 * (fp1 - fm1)) * a1;
            d2[i] = (c16 * (fp1 + fm1) - fm2 - fp2 - c30 * f0) * a2;
        }
        for (slot, i) in [(0, 0), (1, 1), (2, m - 1), (3, m)] {
            let (mut s1, mut s2) = (T::zero(), T::zero());
            for &(j, w1, w2) in &self.edge[slot] {
                s1 += w1 * f[j];
                s2 += w2 * f[j];
            }
            d1[i] = s1;
            d2[i] = s2;
        }
    }

    /// Adds sixth-difference Kreiss–Oliger dissipation `σ(1+ρ)/(64h) δ⁶f` to
    /// `out`, scaled by the bound `1+ρ` on the local characteristic speeds.
    /// Even ghosts close the origin; the last three nodes are left undamped.
    pub fn add_dissipation(&self, sigma: T, f: &[T], out: &mut [T]) {
        if sigma == T::zero() {
            return;
        }
        let m = self.intervals;
        let c = sigma / (T::of(64.0) * self.h);
        let (c6, c15, c20) = (T::of(6.0), T::of(15.0), T::of(20.0));
        let at = |j: isize| f[j.unsigned_abs()];
        for i in 0..m - 2 {
            let k = i as isize;
            let d6 = at(k - 3) + at(k + 3) - c6 * (at(k - 2) + at(k + 2)) + c15 * (at(k - 1) + at(k + 1)) - c20 * f[i];
            out[i] += c * (T::one() + T::of_usize(i) * self.h) * d6;
        }
    }

    /// Weights of the dissipation operator at node `i`, ghosts folded in.
    pub fn dissipation_row(&self, sigma: T, i: usize) -> Vec<(usize, T)> {
        let mut row: Vec<(usize, T)> = Vec::new();
        if i + 2 >= self.intervals || sigma == T::zero() {
            return row;
        }
        let c = sigma * (T::one() + T::of_usize(i) * self.h) / (T::of(64.0) * self.h);
        let w = [1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0];
        for (k, wk) in w.iter().enumerate() {
            let j = (i as isize + k as isize - 3).unsigned_abs();
            match row.iter_mut().find(|e| e.0 == j) {
                Some(e) => e.1 += c * T::of(*wk),
                None => row.push((j, c * T::of(*wk))),
            }
        }
        row
    }

    /// Radial Laplacian from precomputed derivatives; `n f″(0)` at the origin.
    #[inline]
    pub fn laplacian_at(&self, i: usize, d1: T, d2: T) -> T {
        if i == 0 {
            T::of_usize(self.dim) * d2
        } else {
            d2 + T::of_usize(self.dim - 1) * d1 / (T::of_usize(i) * self.h)
        }
    }
}
