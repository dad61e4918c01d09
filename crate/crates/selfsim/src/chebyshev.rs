//! Chebyshev points of the first kind on an interval, barycentric interpolation,
//! differentiation matrices and Fejér quadrature.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// First-kind (Gauss) Chebyshev nodes on `(lo, hi)`, in increasing order.
///
/// The nodes exclude the endpoints, so singular coefficients at either end are
/// never evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevGrid<T> {
    pub lo: T,
    pub hi: T,
    pub nodes: Vec<T>,
    /// Barycentric weights (up to a common factor).
    pub weights: Vec<T>,
}

impl<T: Real> ChebyshevGrid<T> {
    pub fn new(n: usize, lo: T, hi: T) -> Self {
        assert!(n >= 2, "need at least two nodes");
        let half = T::of(0.5);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for j in 0..n {
            // θ decreasing so that x = cos θ increases with j
            let theta = T::PI() * T::of((2 * (n - 1 - j) + 1) as f64) / T::of((2 * n) as f64);
            let x = theta.cos();
            nodes.push(lo + (hi - lo) * half * (x + T::one()));
            let sign = if (n - 1 - j) % 2 == 0 { T::one() } else { -T::one() };
            weights.push(sign * theta.sin());
        }
        Self { lo, hi, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Row-major first-derivative matrix.
    pub fn diff_matrix(&self) -> Vec<T> {
        let n = self.len();
        let mut d = vec![T::zero(); n * n];
        for i in 0..n {
            let mut diag = T::zero();
            for j in 0..n {
                if i != j {
                    let v = (self.weights[j] / self.weights[i]) / (self.nodes[i] - self.nodes[j]);
                    d[i * n + j] = v;
                    diag -= v;
                }
            }
            d[i * n + i] = diag;
        }
        d
    }

    /// Barycentric interpolation of nodal `values` at `x`.
    pub fn interpolate(&self, values: &[T], x: T) -> T {
        let mut num = T::zero();
        let mut den = T::zero();
        for (j, (&xj, &wj)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let dx = x - xj;
            if dx == T::zero() {
                return values[j];
            }
            let c = wj / dx;
            num += c * values[j];
            den += c;
        }
        num / den
    }

    /// Fejér (first rule) quadrature weights for the nodes.
    pub fn fejer_weights(&self) -> Vec<T> {
        let n = self.len();
        let half_len = (self.hi - self.lo) * T::of(0.5);
        (0..n)
            .map(|j| {
                let theta = T::PI() * T::of((2 * (n - 1 - j) + 1) as f64) / T::of((2 * n) as f64);
                let mut s = T::zero();
                for k in 1..=(n / 2) {
                    let kf = T::of_usize(k);
                    s += (T::of(2.0) * kf * theta).cos() / (T::of(4.0) * kf * kf - T::one());
                }
                half_len * T::of(2.0) / T::of_usize(n) * (T::one() - T::of(2.0) * s)
            })
            .collect()
    }
}

/// `y = A x` for a row-major square matrix.
pub fn mat_vec<T: Real>(a: &[T], x: &[T]) -> Vec<T> {
    let n = x.len();
    (0..n).map(|i| a[i * n..(i + 1) * n].iter().zip(x).map(|(&aij, &xj)| aij * xj).sum()).collect()
}
