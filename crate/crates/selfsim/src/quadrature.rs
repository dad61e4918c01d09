//! Quadrature rules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Weights of the trapezoid rule on uniform nodes with fourth-order Gregory
/// corrections at the right end. The left end is left uncorrected: radial
/// integrands `F(ρ)ρⁿ⁻¹` with even `F` have vanishing low odd derivatives there.
pub fn gregory_weights(len: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; len];
    w[0] = 0.5 * h;
    if len >= 8 {
        let c = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
        for (k, ck) in c.iter().enumerate() {
            w[len - 1 - k] = ck * h;
        }
    } else if len >= 2 {
        w[len - 1] = 0.5 * h;
    }
    w
}

/// Weights integrating the piecewise cubic interpolant of data on arbitrary
/// increasing nodes.
pub fn cubic_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    if n < 4 {
        for i in 0..n.saturating_sub(1) {
            let h = x[i + 1] - x[i];
            w[i] += 0.5 * h;
            w[i + 1] += 0.5 * h;
        }
        return w;
    }
    let g = 0.5 / 3f64.sqrt();
    for i in 0..n - 1 {
        let lo = i.saturating_sub(1).min(n - 4);
        let idx = [lo, lo + 1, lo + 2, lo + 3];
        let h = x[i + 1] - x[i];
        for t in [0.5 - g, 0.5 + g] {
            let z = x[i] + t * h;
            for (a, &ia) in idx.iter().enumerate() {
                let mut l = 1.0;
                for (b, &ib) in idx.iter().enumerate() {
                    if a != b {
                        l *= (z - x[ib]) / (x[ia] - x[ib]);
                    }
                }
                w[ia] += 0.5 * h * l;
            }
        }
    }
    w
}

/// Detects `x_i = i h` and returns `h`.
pub fn uniform_spacing(x: &[f64]) -> Option<f64> {
    if x.len() < 2 || x[0] != 0.0 {
        return None;
    }
    let h = x[x.len() - 1] / (x.len() - 1) as f64;
    x.iter().enumerate().all(|(i, &v)| (v - i as f64 * h).abs() <= 1e-9 * h).then_some(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert_relative_eq!(s, 2.0 / 13.0, epsilon = 1e-14);
    }

    #[test]
    fn gregory_and_cubic_rules() {
        let x: Vec<f64> = (0..=200).map(|i| i as f64 * 0.02).collect();
        let f = |r: f64| r.powi(4) * (-r * r).exp();
        let (gx, gw) = gauss_legendre(60);
        let exact: f64 = gx.iter().zip(&gw).map(|(t, w)| 2.0 * w * f(2.0 * (t + 1.0))).sum();
        let g: f64 = gregory_weights(x.len(), 0.02).iter().zip(&x).map(|(w, &r)| w * f(r)).sum();
        let c: f64 = cubic_weights(&x).iter().zip(&x).map(|(w, &r)| w * f(r)).sum();
        assert_relative_eq!(g, exact, max_relative = 1e-8);
        assert_relative_eq!(c, exact, max_relative = 1e-7);
    }
}
