//! Warped targets `du² + w(u)² dΩ²` with `w(u) = sin u · (1 + ε α(u))`.
//!
//! The perturbation `α` is a nonnegative combination of `1 − cos 2mu`, so `w`,
//! the product `F = w w′` and the kernel `η(y) = y − F(y)` are all finite sine
//! series and can be differentiated exactly to any order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::series::Jet;

/// Default cap on pointwise derivative orders.
pub const DEFAULT_K_MAX: usize = 8;
/// Default cap on Taylor jet length.
pub const DEFAULT_JET_CAP: usize = 64;

/// Coefficients `c_m ≥ 0` of `α(u) = Σ c_m (1 − cos 2mu)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBasis<T> {
    terms: Vec<(u32, T)>,
}

impl<T: Real> PerturbationBasis<T> {
    /// Merges repeated modes and rejects negative or all-zero coefficients.
    pub fn new(terms: Vec<(u32, T)>) -> Result<Self> {
        let mut merged: Vec<(u32, T)> = Vec::new();
        for (m, c) in terms {
            if m == 0 {
                return Err(Error::InvalidTarget("basis modes must be positive".into()));
            }
            if !(c >= T::zero()) || !c.is_finite() {
                return Err(Error::InvalidTarget(format!("coefficient for mode {m} must be finite and nonnegative")));
            }
            match merged.iter_mut().find(|(k, _)| *k == m) {
                Some(slot) => slot.1 += c,
                None => merged.push((m, c)),
            }
        }
        merged.retain(|&(_, c)| c > T::zero());
        if merged.is_empty() {
            return Err(Error::InvalidTarget("perturbation basis is identically zero".into()));
        }
        merged.sort_by_key(|&(m, _)| m);
        Ok(Self { terms: merged })
    }

    /// `α = sin² u`, i.e. the single coefficient `c₁ = 1/2`.
    pub fn sin_squared() -> Self {
        Self { terms: vec![(1, T::of(0.5))] }
    }

    pub fn terms(&self) -> &[(u32, T)] {
        &self.terms
    }

    /// `α^{(order)}(u)`, termwise.
    pub fn eval(&self, u: T, order: usize) -> T {
        let mut s = T::zero();
        for &(m, c) in &self.terms {
            let k = T::of(2.0 * m as f64);
            if order == 0 {
                s += c * (T::one() - (k * u).cos());
            } else {
                s -= c * k.powi(order as i32) * cos_shifted(k * u, order);
            }
        }
        s
    }

    /// `max_{[0, π]} α`, by dense sampling followed by golden-section refinement.
    pub fn max_alpha(&self) -> T {
        let samples = 10_000;
        let h = T::PI() / T::of_usize(samples);
        let (mut best_i, mut best) = (0, T::neg_infinity());
        for i in 0..=samples {
            let v = self.eval(h * T::of_usize(i), 0);
            if v > best {
                best = v;
                best_i = i;
            }
        }
        let centre = h * T::of_usize(best_i);
        let (mut lo, mut hi) = (centre - h, centre + h);
        let g = T::of(0.618_033_988_749_894_9);
        for _ in 0..80 {
            let x1 = hi - g * (hi - lo);
            let x2 = lo + g * (hi - lo);
            if self.eval(x1, 0) < self.eval(x2, 0) {
                lo = x1;
            } else {
                hi = x2;
            }
        }
        best.max(self.eval((lo + hi) / T::of(2.0), 0))
    }

    /// `ε₀ = 1 / max α`.
    pub fn epsilon0(&self) -> T {
        T::one() / self.max_alpha()
    }
}

/// `cos(x + rπ/2)`.
#[inline]
fn cos_shifted<T: Real>(x: T, r: usize) -> T {
    match r % 4 {
        0 => x.cos(),
        1 => -x.sin(),
        2 => -x.cos(),
        _ => x.sin(),
    }
}

/// `sin(x + rπ/2)`.
#[inline]
fn sin_shifted<T: Real>(x: T, r: usize) -> T {
    match r % 4 {
        0 => x.sin(),
        1 => x.cos(),
        2 => -x.sin(),
        _ => -x.cos(),
    }
}

/// `sin x − x`, given `sin(x/2)` and `cos(x/2)`.
fn sin_minus_identity<T: Real>(x: T, sh: T, ch: T) -> T {
    if x.abs() < T::of(0.5) {
        let x2 = x * x;
        let mut term = -x * x2 / T::of(6.0);
        let mut acc = term;
        for j in 2..10 {
            term = -term * x2 / T::of_usize((2 * j) * (2 * j + 1));
            acc += term;
        }
        acc
    } else {
        T::of(2.0) * sh * ch - x
    }
}

/// `Σ a_k sin(k u)` with positive integer frequencies in increasing order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineSeries<T> {
    terms: Vec<(u32, T)>,
}

impl<T: Real> SineSeries<T> {
    pub fn new(mut terms: Vec<(u32, T)>) -> Self {
        terms.sort_by_key(|&(k, _)| k);
        let mut merged: Vec<(u32, T)> = Vec::with_capacity(terms.len());
        for (k, a) in terms {
            if k == 0 {
                continue;
            }
            match merged.last_mut() {
                Some(last) if last.0 == k => last.1 += a,
                _ => merged.push((k, a)),
            }
        }
        merged.retain(|&(_, a)| a != T::zero());
        Self { terms: merged }
    }

    pub fn terms(&self) -> &[(u32, T)] {
        &self.terms
    }

    pub fn max_frequency(&self) -> u32 {
        self.terms.last().map_or(0, |&(k, _)| k)
    }

    /// Value; harmonics come from the Chebyshev recurrence, one `sin_cos` call.
    pub fn eval(&self, u: T) -> T {
        let Some(&(kmax, _)) = self.terms.last() else {
            return T::zero();
        };
        let (s1, c1) = u.sin_cos();
        let two_c = c1 + c1;
        let (mut prev, mut cur) = (T::zero(), s1);
        let mut it = self.terms.iter().peekable();
        let mut acc = T::zero();
        for k in 1..=kmax {
            if let Some(&&(f, a)) = it.peek() {
                if f == k {
                    acc += a * cur;
                    it.next();
                }
            }
            let next = two_c * cur - prev;
            prev = cur;
            cur = next;
        }
        acc
    }

    /// `d^r/du^r` at `u`.
    pub fn deriv(&self, u: T, r: usize) -> T {
        if r == 0 {
            return self.eval(u);
        }
        let mut acc = T::zero();
        for &(k, a) in &self.terms {
            let kf = T::of(k as f64);
            acc += a * kf.powi(r as i32) * sin_shifted(kf * u, r);
        }
        acc
    }

    /// Taylor coefficients `f^{(j)}(center)/j!` for `j < len`.
    pub fn taylor(&self, center: T, len: usize) -> Vec<T> {
        let mut out = vec![T::zero(); len];
        for &(k, a) in &self.terms {
            let kf = T::of(k as f64);
            let (s, c) = (kf * center).sin_cos();
            let mut scale = a;
            for (j, o) in out.iter_mut().enumerate() {
                let phase = match j % 4 {
                    0 => s,
                    1 => c,
                    2 => -s,
                    _ => -c,
                };
                *o += scale * phase;
                scale = scale * kf / T::of_usize(j + 1);
            }
        }
        out
    }

    pub fn scale(&self, s: T) -> Self {
        Self::new(self.terms.iter().map(|&(k, a)| (k, a * s)).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut t = self.terms.clone();
        t.extend_from_slice(&other.terms);
        Self::new(t)
    }

    /// `f f′` for `f` this series, again a sine series.
    pub fn times_own_derivative(&self) -> Self {
        let quarter = T::of(0.25);
        let mut out = Vec::new();
        for &(j, sj) in &self.terms {
            for &(k, sk) in &self.terms {
                let p = sj * sk * quarter;
                out.push((j + k, p * T::of((j + k) as f64)));
                let diff = j.abs_diff(k);
                if diff > 0 {
                    out.push((diff, -p * T::of(diff as f64)));
                }
            }
        }
        Self::new(out)
    }
}

/// Number of Taylor coefficients kept for small-argument quotients.
const KERNEL_TAYLOR_LEN: usize = 64;

/// An odd function `λ y + Σ a_k sin(k y)` whose expansion at 0 starts at `y³`,
/// with cancellation-free evaluation of `g(y)/y³`, `g′(y)/y²` and `g″(y)/y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddKernel<T> {
    linear: T,
    sine: SineSeries<T>,
    taylor: Vec<T>,
    small: T,
}

impl<T: Real> OddKernel<T> {
    pub fn new(linear: T, sine: SineSeries<T>) -> Self {
        let mut taylor = sine.taylor(T::zero(), KERNEL_TAYLOR_LEN);
        taylor[1] += linear;
        // Below `small` the series converges fast; above it direct division loses
        // at most a few bits.
        let kmax = sine.max_frequency().max(1);
        let small = (T::of(2.0) / T::of(kmax as f64)).min(T::one());
        Self { linear, sine, taylor, small }
    }

    /// Taylor coefficients at 0.
    pub fn taylor_at_zero(&self) -> &[T] {
        &self.taylor
    }

    pub fn value(&self, y: T) -> T {
        self.linear * y + self.sine.eval(y)
    }

    pub fn deriv(&self, y: T, r: usize) -> T {
        match r {
            0 => self.value(y),
            1 => self.linear + self.sine.deriv(y, 1),
            _ => self.sine.deriv(y, r),
        }
    }

    /// `Σ_{k≥3} coef(k) t_k y^{k-3}` by Horner in `y`.
    fn small_series(&self, y: T, coef: impl Fn(usize) -> T) -> T {
        let mut acc = T::zero();
        for k in (3..KERNEL_TAYLOR_LEN).rev() {
            acc = acc * y + coef(k) * self.taylor[k];
        }
        acc
    }

    pub fn over_cube(&self, y: T) -> T {
        if y.abs() < self.small {
            self.small_series(y, |_| T::one())
        } else {
            self.value(y) / (y * y * y)
        }
    }

    pub fn deriv1_over_square(&self, y: T) -> T {
        if y.abs() < self.small {
            self.small_series(y, |k| T::of_usize(k))
        } else {
            self.deriv(y, 1) / (y * y)
        }
    }

    /// `g(a+h) − g(a) − g′(a)h` without cancellation for small `h`:
    /// each harmonic contributes `−2 sin(ka) sin²(kh/2) + cos(ka)(sin(kh) − kh)`.
    pub fn taylor_remainder(&self, a: T, h: T) -> T {
        let mut acc = T::zero();
        let half = T::of(0.5);
        for &(k, c) in self.sine.terms() {
            let kf = T::of(k as f64);
            let (sa, ca) = (kf * a).sin_cos();
            let x = kf * h;
            let (sh, ch) = (x * half).sin_cos();
            acc += c * (-(sa + sa) * sh * sh + ca * sin_minus_identity(x, sh, ch));
        }
        acc
    }

    pub fn deriv2_over_y(&self, y: T) -> T {
        if y.abs() < self.small {
            self.small_series(y, |k| T::of_usize(k * (k - 1)))
        } else {
            self.deriv(y, 2) / y
        }
    }
}

/// Taylor jets of the target functions about a common center.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetJet<T> {
    pub w: Jet<T>,
    pub ww: Jet<T>,
    pub eta: Jet<T>,
}

/// Serialized form of a [`WarpedTarget`]: the data needed to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec<T> {
    pub d: usize,
    pub epsilon: T,
    /// `(m, c_m)` pairs of the perturbation basis.
    pub basis: Vec<(u32, T)>,
    pub k_max: usize,
    pub jet_cap: usize,
}

/// Dimension, perturbation size and perturbation shape of the target sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "TargetSpec<T>",
    into = "TargetSpec<T>",
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>")
)]
pub struct WarpedTarget<T> {
    d: usize,
    epsilon: T,
    basis: PerturbationBasis<T>,
    w: SineSeries<T>,
    ww: SineSeries<T>,
    eta: Option<OddKernel<T>>,
    k_max: usize,
    jet_cap: usize,
}

impl<T: Real> TryFrom<TargetSpec<T>> for WarpedTarget<T> {
    type Error = Error;

    fn try_from(s: TargetSpec<T>) -> Result<Self> {
        WarpedTarget::with_limits(s.d, s.epsilon, PerturbationBasis::new(s.basis)?, s.k_max, s.jet_cap)
    }
}

impl<T: Real> From<WarpedTarget<T>> for TargetSpec<T> {
    fn from(t: WarpedTarget<T>) -> Self {
        TargetSpec { d: t.d, epsilon: t.epsilon, basis: t.basis.terms, k_max: t.k_max, jet_cap: t.jet_cap }
    }
}

impl<T: Real> SineSeries<T> {
    fn empty() -> Self {
        Self { terms: Vec::new() }
    }
}

impl<T: Real> WarpedTarget<T> {
    pub fn new(d: usize, epsilon: T, basis: PerturbationBasis<T>) -> Result<Self> {
        Self::with_limits(d, epsilon, basis, DEFAULT_K_MAX, DEFAULT_JET_CAP)
    }

    /// The round sphere `S^d`.
    pub fn sphere(d: usize) -> Result<Self> {
        Self::new(d, T::zero(), PerturbationBasis::sin_squared())
    }

    pub fn with_limits(d: usize, epsilon: T, basis: PerturbationBasis<T>, k_max: usize, jet_cap: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::InvalidTarget(format!("dimension d = {d} must be at least 3")));
        }
        if !epsilon.is_finite() {
            return Err(Error::InvalidTarget("epsilon must be finite".into()));
        }
        let eps0 = basis.epsilon0();
        if epsilon.abs() > eps0 * (T::one() + T::of(1e-12)) {
            return Err(Error::InvalidTarget(format!("|epsilon| = {} exceeds epsilon0 = {}", epsilon.abs(), eps0)));
        }
        if k_max < 6 || jet_cap < 40 {
            return Err(Error::InvalidTarget("derivative caps must be at least 6 (pointwise) and 40 (jets)".into()));
        }
        let mut t = Self {
            d,
            epsilon,
            basis,
            w: SineSeries::empty(),
            ww: SineSeries::empty(),
            eta: None,
            k_max,
            jet_cap,
        };
        t.rebuild();
        Ok(t)
    }

    fn rebuild(&mut self) {
        // sin u · (1 + ε Σ c_m (1 − cos 2mu)), using sin u cos 2mu = ½(sin(2m+1)u − sin(2m−1)u)
        let total: T = self.basis.terms.iter().map(|&(_, c)| c).sum();
        let mut terms = vec![(1, T::one() + self.epsilon * total)];
        for &(m, c) in &self.basis.terms {
            let h = self.epsilon * c * T::of(0.5);
            terms.push((2 * m + 1, -h));
            terms.push((2 * m - 1, h));
        }
        self.w = SineSeries::new(terms);
        self.ww = self.w.times_own_derivative();
        self.eta = Some(OddKernel::new(T::one(), self.ww.scale(-T::one())));
    }

    /// Same basis and dimension, different `ε`.
    pub fn with_epsilon(&self, epsilon: T) -> Result<Self> {
        Self::with_limits(self.d, epsilon, self.basis.clone(), self.k_max, self.jet_cap)
    }

    /// The same target in another scalar type.
    pub fn cast<U: Real>(&self) -> Result<WarpedTarget<U>> {
        let terms = self.basis.terms.iter().map(|&(m, c)| (m, U::of(c.to_f64_lossy()))).collect();
        WarpedTarget::with_limits(self.d, U::of(self.epsilon.to_f64_lossy()), PerturbationBasis::new(terms)?, self.k_max, self.jet_cap)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Lifted dimension `n = d + 2` of the radial wave equation.
    pub fn n(&self) -> usize {
        self.d + 2
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn basis(&self) -> &PerturbationBasis<T> {
        &self.basis
    }

    pub fn epsilon0(&self) -> T {
        self.basis.epsilon0()
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn jet_cap(&self) -> usize {
        self.jet_cap
    }

    /// `w` as a sine series.
    pub fn w_series(&self) -> &SineSeries<T> {
        &self.w
    }

    /// `F = w w′` as a sine series.
    pub fn ww_series(&self) -> &SineSeries<T> {
        &self.ww
    }

    /// `η(y) = y − w(y) w′(y)`.
    pub fn eta(&self) -> &OddKernel<T> {
        self.eta.as_ref().expect("target series are built on construction")
    }

    fn check_order(&self, order: usize) -> Result<()> {
        if order > self.k_max {
            Err(Error::UnsupportedOrder { order, max: self.k_max })
        } else {
            Ok(())
        }
    }

    pub fn alpha(&self, u: T, order: usize) -> Result<T> {
        self.check_order(order)?;
        Ok(self.basis.eval(u, order))
    }

    /// Leibniz rule on `sin u · (1 + εα)`, without the order cap.
    fn w_leibniz(&self, u: T, order: usize) -> T {
        let mut acc = T::zero();
        let mut binom = T::one();
        for i in 0..=order {
            let g = if order - i == 0 {
                T::one() + self.epsilon * self.basis.eval(u, 0)
            } else {
                self.epsilon * self.basis.eval(u, order - i)
            };
            acc += binom * sin_shifted(u, i) * g;
            binom = binom * T::of_usize(order - i) / T::of_usize(i + 1);
        }
        acc
    }

    pub fn w_deriv(&self, u: T, order: usize) -> Result<T> {
        self.check_order(order)?;
        Ok(self.w_leibniz(u, order))
    }

    /// `(w w′)^{(order)}` by the Leibniz rule.
    pub fn ww_deriv(&self, u: T, order: usize) -> Result<T> {
        self.check_order(order)?;
        let mut acc = T::zero();
        let mut binom = T::one();
        for i in 0..=order {
            acc += binom * self.w_leibniz(u, i) * self.w_leibniz(u, order - i + 1);
            binom = binom * T::of_usize(order - i) / T::of_usize(i + 1);
        }
        Ok(acc)
    }

    pub fn eta_deriv(&self, y: T, order: usize) -> Result<T> {
        let f = self.ww_deriv(y, order)?;
        Ok(match order {
            0 => y - f,
            1 => T::one() - f,
            _ => -f,
        })
    }

    /// Taylor jets of `w`, `w w′` and `η` about `center`, with `order + 1` coefficients.
    pub fn taylor_jet(&self, center: T, order: usize) -> Result<TargetJet<T>> {
        if order + 1 > self.jet_cap {
            return Err(Error::UnsupportedOrder { order, max: self.jet_cap - 1 });
        }
        let len = order + 1;
        let w = Jet::from_coeffs(self.w.taylor(center, len));
        let ww = Jet::from_coeffs(self.ww.taylor(center, len));
        let mut eta = ww.scale(-T::one());
        eta.c[0] += center;
        if len > 1 {
            eta.c[1] += T::one();
        }
        Ok(TargetJet { w, ww, eta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn target(d: usize, eps: f64) -> WarpedTarget<f64> {
        WarpedTarget::new(d, eps, PerturbationBasis::sin_squared()).unwrap()
    }

    #[test]
    fn alpha_default_basis() {
        let t = target(3, 0.3);
        assert_relative_eq!(t.alpha(FRAC_PI_2, 0).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(t.alpha(0.0, 0).unwrap(), 0.0);
        assert_relative_eq!(t.alpha(FRAC_PI_4, 1).unwrap(), 1.0, epsilon = 1e-15);
        let h = 1e-5;
        let fd = (t.alpha(FRAC_PI_4 + h, 0).unwrap() - t.alpha(FRAC_PI_4 - h, 0).unwrap()) / (2.0 * h);
        assert_relative_eq!(fd, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn order_cap_is_enforced() {
        let t = target(3, 0.0);
        assert!(matches!(t.alpha(0.1, 9), Err(Error::UnsupportedOrder { .. })));
        assert!(matches!(t.w_deriv(0.1, 9), Err(Error::UnsupportedOrder { .. })));
        assert!(t.eta_deriv(0.1, 8).is_ok());
    }

    #[test]
    fn w_values() {
        let t0 = target(3, 0.0);
        for &u in &[-2.0, 0.3, 1.7, 3.0] {
            assert_relative_eq!(t0.w_deriv(u, 0).unwrap(), f64::sin(u), epsilon = 1e-15);
        }
        for eps in [-1.0, -0.3, 0.0, 0.5, 1.0] {
            let t = target(4, eps);
            assert_relative_eq!(t.w_deriv(0.0, 1).unwrap(), 1.0, epsilon = 1e-15);
            assert_relative_eq!(t.w_deriv(PI, 1).unwrap(), -1.0, epsilon = 1e-14);
        }
        let t = target(3, 0.1);
        let direct = f64::sin(FRAC_PI_2) * (1.0 + 0.1 * f64::sin(FRAC_PI_2).powi(2));
        assert_relative_eq!(t.w_deriv(FRAC_PI_2, 0).unwrap(), 1.1, epsilon = 1e-15);
        assert_relative_eq!(direct, 1.1, epsilon = 1e-15);
    }

    #[test]
    fn eta_values() {
        let t = target(3, 0.7);
        for r in 0..3 {
            assert!(t.eta_deriv(0.0, r).unwrap().abs() < 1e-14);
        }
        let t0 = target(3, 0.0);
        assert_relative_eq!(t0.eta_deriv(FRAC_PI_2, 0).unwrap(), FRAC_PI_2, epsilon = 1e-15);
        for &y in &[0.2, 1.1, -2.5] {
            let expect = 1.0 - f64::cos(2.0 * y);
            assert_relative_eq!(t0.eta_deriv(y, 1).unwrap(), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn sine_series_matches_leibniz() {
        let basis = PerturbationBasis::new(vec![(1, 0.2), (3, 0.1)]).unwrap();
        let t = WarpedTarget::new(5, 0.8, basis).unwrap();
        for &u in &[-1.3, 0.0, 0.4, 2.9] {
            for r in 0..=8 {
                let a = t.w_deriv(u, r).unwrap();
                let b = t.w_series().deriv(u, r);
                assert_relative_eq!(a, b, epsilon = 1e-11, max_relative = 1e-12);
                let a = t.ww_deriv(u, r).unwrap();
                let b = t.ww_series().deriv(u, r);
                assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn jets_at_zero() {
        let t0 = target(3, 0.0);
        let j = t0.taylor_jet(0.0, 7).unwrap();
        assert_relative_eq!(j.eta.c[3], 2.0 / 3.0, epsilon = 1e-15);
        let sin = [0.0, 1.0, 0.0, -1.0 / 6.0, 0.0, 1.0 / 120.0];
        for (k, &s) in sin.iter().enumerate() {
            assert_relative_eq!(j.w.c[k], s, epsilon = 1e-16);
        }
        let t = target(3, 0.4);
        let j = t.taylor_jet(FRAC_PI_2, 0).unwrap();
        assert_relative_eq!(j.w.c[0], t.w_deriv(FRAC_PI_2, 0).unwrap(), epsilon = 1e-15);
        assert!(matches!(t.taylor_jet(0.0, 64), Err(Error::UnsupportedOrder { .. })));
    }

    #[test]
    fn kernel_quotients_are_continuous() {
        let t = target(3, 0.6);
        let k = t.eta();
        let y = k.small * 0.999_999;
        let z = k.small * 1.000_001;
        assert_relative_eq!(k.over_cube(y), k.over_cube(z), max_relative = 1e-5);
        assert_relative_eq!(k.deriv1_over_square(y), k.deriv1_over_square(z), max_relative = 1e-5);
        assert_relative_eq!(k.deriv2_over_y(y), k.deriv2_over_y(z), max_relative = 1e-5);
        let eta3 = t.eta_deriv(0.0, 3).unwrap();
        assert_relative_eq!(k.over_cube(0.0), eta3 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(k.deriv1_over_square(0.0), eta3 / 2.0, epsilon = 1e-14);
        assert_relative_eq!(k.deriv2_over_y(0.0), eta3, epsilon = 1e-14);
    }

    #[test]
    fn taylor_remainder_has_no_cancellation() {
        let k = target(5, 0.3).eta().clone();
        let a = 0.7;
        for h in [0.4, -0.25] {
            let direct = k.value(a + h) - k.value(a) - k.deriv(a, 1) * h;
            assert_relative_eq!(k.taylor_remainder(a, h), direct, max_relative = 1e-13);
        }
        // Small steps against the truncated Taylor series.
        let h = 1e-5;
        let series = k.deriv(a, 2) * h * h / 2.0 + k.deriv(a, 3) * h.powi(3) / 6.0 + k.deriv(a, 4) * h.powi(4) / 24.0;
        assert_relative_eq!(k.taylor_remainder(a, h), series, max_relative = 1e-12);
    }

    #[test]
    fn epsilon0_of_default_basis_is_one() {
        let b = PerturbationBasis::<f64>::sin_squared();
        assert_relative_eq!(b.epsilon0(), 1.0, epsilon = 1e-14);
        assert!(WarpedTarget::new(3, 1.01, b.clone()).is_err());
        assert!(WarpedTarget::new(2, 0.0, b).is_err());
    }

    #[test]
    fn basis_validation() {
        assert!(PerturbationBasis::new(vec![(1, -0.1)]).is_err());
        assert!(PerturbationBasis::new(vec![(0, 0.1)]).is_err());
        assert!(PerturbationBasis::<f64>::new(vec![(2, 0.0)]).is_err());
        let b = PerturbationBasis::new(vec![(2, 0.25), (2, 0.25)]).unwrap();
        assert_eq!(b.terms(), &[(2, 0.5)]);
    }

    #[test]
    fn single_precision_instantiation() {
        let t = WarpedTarget::<f32>::new(3, 0.5, PerturbationBasis::sin_squared()).unwrap();
        assert!((t.w_deriv(1.0f32, 0).unwrap() - 1.0f32.sin() * (1.0 + 0.5 * 1.0f32.sin().powi(2))).abs() < 1e-6);
        assert!((t.eta().over_cube(0.0f32) - t.eta_deriv(0.0f32, 3).unwrap() / 6.0).abs() < 1e-5);
    }
}
