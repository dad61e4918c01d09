//! Coefficient recurrences for `P(x) f″ + Q(x) f′ − K F(f) = 0`, `F = w w′`,
//! about ordinary and regular singular points.

use crate::error::{Error, Result};
use crate::geometry::WarpedTarget;
use crate::scalar::Real;
use crate::series::{eval_derivs, Jet};

/// Independent variable of a local expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variable {
    /// The similarity radius `ρ`.
    Rho,
    /// `s = 1/ρ`; infinity is an ordinary point in this variable.
    InvRho,
}

/// How the top coefficient enters the order-`k` equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PointKind {
    /// `P(0) ≠ 0`: order `k` determines `a_{k+2}`.
    Ordinary,
    /// `P(0) = 0`, `P′(0) ≠ 0`: order `k` determines `a_{k+1}`.
    SimpleZero,
    /// `P` has a double zero: order `k` determines `a_k`.
    DoubleZero,
}

impl PointKind {
    fn shift(self) -> usize {
        match self {
            PointKind::Ordinary => 2,
            PointKind::SimpleZero => 1,
            PointKind::DoubleZero => 0,
        }
    }
}

/// Polynomial coefficients of the ODE in the local offset `x`.
#[derive(Clone, Debug)]
pub(crate) struct LocalOde<T> {
    p: Vec<T>,
    q: Vec<T>,
    k: T,
}

impl<T: Real> LocalOde<T> {
    /// `(ρ² − ρ⁴) f″ + ((d−1)ρ − 2ρ³) f′ − (d−1) F(f) = 0` about `ρ = center`.
    pub fn radial(d: usize, center: T) -> Self {
        let rho = Jet::variable(center, 5);
        let r2 = rho.mul(&rho);
        let r3 = r2.mul(&rho);
        let r4 = r2.mul(&r2);
        let dm1 = T::of_usize(d - 1);
        Self {
            p: r2.sub(&r4).c,
            q: rho.scale(dm1).sub(&r3.scale(T::of(2.0))).c,
            k: dm1,
        }
    }

    /// `(s² − 1) h″ + (3−d) s h′ − (d−1) F(h) = 0` about `s = center`, where `f(ρ) = h(1/ρ)`.
    pub fn inverse(d: usize, center: T) -> Self {
        let s = Jet::variable(center, 3);
        let s2 = s.mul(&s);
        Self {
            p: s2.sub(&Jet::constant(T::one(), 3)).c,
            q: s.scale(T::of(3.0) - T::of_usize(d)).c,
            k: T::of_usize(d - 1),
        }
    }

    pub fn for_variable(var: Variable, d: usize, center: T) -> Self {
        match var {
            Variable::Rho => Self::radial(d, center),
            Variable::InvRho => Self::inverse(d, center),
        }
    }
}

/// Incremental composition `F(a₀ + g(x))` with `g = Σ_{k≥1} a_k x^k`.
struct Composer<T> {
    outer: Vec<T>,
    /// `pow[j][k]` is the `x^k` coefficient of `g^j`.
    pow: Vec<Vec<T>>,
    a: Vec<T>,
}

impl<T: Real> Composer<T> {
    fn new(outer: Vec<T>, len: usize) -> Self {
        let mut pow = vec![vec![T::zero(); len]; len];
        pow[0][0] = T::one();
        Self { outer, pow, a: vec![T::zero(); len] }
    }

    fn set(&mut self, k: usize, v: T) {
        if k >= 1 {
            self.a[k] = v;
            self.pow[1][k] = v;
        }
    }

    /// `[F∘f]_k`, using `a_k` as currently set.
    fn coefficient(&mut self, k: usize) -> T {
        if k == 0 {
            return self.outer[0];
        }
        let mut s = self.outer[1] * self.a[k];
        for j in 2..=k {
            let mut v = T::zero();
            for i in 1..=(k + 1 - j) {
                v += self.a[i] * self.pow[j - 1][k - i];
            }
            self.pow[j][k] = v;
            s += self.outer[j] * v;
        }
        s
    }
}

/// A vanishing top multiplier met while solving.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Resonance<T> {
    pub index: usize,
    /// Value of the order equation with the free coefficient removed.
    pub residual: T,
}

#[derive(Clone, Debug)]
pub(crate) struct Solved<T> {
    pub coeffs: Vec<T>,
    pub resonance: Option<Resonance<T>>,
}

/// Fills `len` coefficients from the `known` leading ones. A resonant
/// coefficient, if met, is set to `resonant_value`.
pub(crate) fn solve<T: Real>(
    ode: &LocalOde<T>,
    kind: PointKind,
    target: &WarpedTarget<T>,
    known: &[T],
    len: usize,
    resonant_value: T,
) -> Result<Solved<T>> {
    assert!(!known.is_empty() && known.len() <= len);
    let shift = kind.shift();
    let outer = target.taylor_jet(known[0], len - 1)?.ww.c;
    let mut comp = Composer::new(outer, len);
    let mut a = vec![T::zero(); len];
    for (k, &v) in known.iter().enumerate() {
        a[k] = v;
        comp.set(k, v);
    }
    let mut resonance = None;
    let huge = T::max_value().sqrt();
    let first = known.len() - shift;
    for k in first..len {
        let t = k + shift;
        if t >= len {
            break;
        }
        let fk = comp.coefficient(k);
        let (rest, scale) = order_terms(ode, &a, k, fk);
        let mut m = T::zero();
        if let Some(&pi) = ode.p.get(k + 2 - t) {
            m += pi * T::of_usize(t * t.saturating_sub(1));
        }
        if let Some(&qi) = (k + 1).checked_sub(t).and_then(|i| ode.q.get(i)) {
            m += qi * T::of_usize(t);
        }
        if t == k {
            m -= ode.k * comp.outer[1];
        }
        let mscale = T::one() + T::of_usize(t * t);
        a[t] = if m.abs() <= T::of(1e-10) * mscale {
            resonance = Some(Resonance { index: t, residual: rest / (T::one() + scale) });
            resonant_value
        } else {
            -rest / m
        };
        if !a[t].is_finite() || a[t].abs() > huge {
            return Err(Error::DivergedSeries { index: t });
        }
        comp.set(t, a[t]);
    }
    Ok(Solved { coeffs: a, resonance })
}

/// Value of the order-`k` equation with the current coefficients and the sum of
/// the absolute values of its terms.
fn order_terms<T: Real>(ode: &LocalOde<T>, a: &[T], k: usize, fk: T) -> (T, T) {
    let mut s = T::zero();
    let mut mag = T::zero();
    for (i, &pi) in ode.p.iter().enumerate() {
        if let Some(m) = (k + 2).checked_sub(i) {
            if m < a.len() && m >= 2 {
                let v = pi * T::of_usize(m * (m - 1)) * a[m];
                s += v;
                mag += v.abs();
            }
        }
    }
    for (i, &qi) in ode.q.iter().enumerate() {
        if let Some(m) = (k + 1).checked_sub(i) {
            if m < a.len() && m >= 1 {
                let v = qi * T::of_usize(m) * a[m];
                s += v;
                mag += v.abs();
            }
        }
    }
    let v = ode.k * fk;
    (s - v, mag + v.abs())
}

/// Relative residual of every order equation whose top coefficient is retained.
pub(crate) fn residuals<T: Real>(ode: &LocalOde<T>, kind: PointKind, target: &WarpedTarget<T>, a: &[T]) -> Result<Vec<T>> {
    let len = a.len();
    let outer = target.taylor_jet(a[0], len - 1)?.ww.c;
    let mut comp = Composer::new(outer, len);
    for (k, &v) in a.iter().enumerate() {
        comp.set(k, v);
    }
    let mut out = Vec::new();
    for k in 0..len.saturating_sub(kind.shift()) {
        let fk = comp.coefficient(k);
        let (r, mag) = order_terms(ode, a, k, fk);
        out.push(r.abs() / (mag + T::min_positive_value()));
    }
    Ok(out)
}

/// A Taylor polynomial valid on `[lo, hi]` of its variable.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Patch {
    pub variable: Variable,
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl Patch {
    /// Value and three derivatives with respect to the patch variable.
    pub fn derivs(&self, x: f64) -> [f64; 4] {
        let d = eval_derivs(&self.coeffs, x - self.center, 3);
        [d[0], d[1], d[2], d[3]]
    }
}

/// Step length keeping the dropped tail below `tol` relative to the leading terms.
fn step_length(c: &[f64], tol: f64) -> f64 {
    let n = c.len();
    let scale = c[0].abs().max(c[1].abs()).max(1e-300);
    let mut r = f64::INFINITY;
    for k in (n - 4)..n {
        if c[k] != 0.0 {
            r = r.min((tol * scale / c[k].abs()).powf(1.0 / k as f64));
        }
    }
    r
}

/// Settings of the Taylor-series integrator.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TaylorStepper {
    pub len: usize,
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for TaylorStepper {
    fn default() -> Self {
        Self { len: 31, tol: 1e-18, max_steps: 10_000 }
    }
}

impl TaylorStepper {
    /// Integrates from `(x0, f, f′)` to `x1`, returning the patches and the end state.
    pub fn run(&self, target: &WarpedTarget<f64>, var: Variable, x0: f64, x1: f64, f: f64, df: f64, singular: &[f64]) -> Result<(Vec<Patch>, f64, f64)> {
        let d = target.d();
        let dir = (x1 - x0).signum();
        let (mut x, mut f, mut df) = (x0, f, df);
        let mut patches = Vec::new();
        for _ in 0..self.max_steps {
            if (x1 - x) * dir <= 0.0 {
                return Ok((patches, f, df));
            }
            let ode = LocalOde::for_variable(var, d, x);
            let c = solve(&ode, PointKind::Ordinary, target, &[f, df], self.len, 0.0)?.coeffs;
            let dist = singular.iter().map(|&s| (s - x).abs()).fold(f64::INFINITY, f64::min);
            let mut h = step_length(&c, self.tol).min(0.5 * dist);
            if !(h > 1e-12 * (1.0 + x.abs())) {
                return Err(Error::NonConvergence {
                    stage: "Taylor integrator",
                    detail: format!("step collapsed at x = {x} with state ({f}, {df})"),
                });
            }
            let remaining = (x1 - x).abs();
            if h >= remaining || remaining - h < 1e-3 * h {
                h = remaining;
            }
            let xn = x + dir * h;
            let e = eval_derivs(&c, xn - x, 1);
            let (lo, hi) = if dir > 0.0 { (x, xn) } else { (xn, x) };
            patches.push(Patch { variable: var, center: x, lo, hi, coeffs: c });
            x = if h == remaining { x1 } else { xn };
            f = e[0];
            df = e[1];
        }
        Err(Error::NonConvergence { stage: "Taylor integrator", detail: format!("step budget exhausted at x = {x}") })
    }
}
