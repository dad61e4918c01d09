//! Pointwise static operators of the similarity-coordinate system
//!
//! ```text
//! ∂τ ψ₁ = ψ₂ − Λψ₁ − ψ₁
//! ∂τ ψ₂ = Δψ₁ − Λψ₂ − 2ψ₂ + (n−3) ρ⁻³ η(ρψ₁)
//! ```
//!
//! with `Λ = ρ∂ρ` and the radial Laplacian in `n = d + 2` dimensions. Every
//! quotient by a power of `ρ` is evaluated through the triple zero of `η` at the
//! origin, so all outputs are finite there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OddKernel, WarpedTarget};
use crate::profile::ProfileSolution;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    First,
    Second,
}

/// Samples of a radial function on nonnegative, strictly increasing nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialField<T> {
    pub nodes: Vec<T>,
    pub values: Vec<T>,
    pub parity: Parity,
    pub component: Component,
}

impl<T: Real> RadialField<T> {
    pub fn new(nodes: Vec<T>, values: Vec<T>, parity: Parity, component: Component) -> Result<Self> {
        if nodes.len() != values.len() {
            return Err(Error::Config(format!("{} nodes but {} values", nodes.len(), values.len())));
        }
        if nodes.first().is_some_and(|&r| r < T::zero()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("radial nodes must be nonnegative and strictly increasing".into()));
        }
        if parity == Parity::Odd && nodes.first() == Some(&T::zero()) && values[0] != T::zero() {
            return Err(Error::Config("odd field must vanish at the origin".into()));
        }
        Ok(Self { nodes, values, parity, component })
    }

    /// An even first-component field sampled from `f`.
    pub fn from_fn(nodes: &[T], f: impl Fn(T) -> T) -> Self {
        Self {
            nodes: nodes.to_vec(),
            values: nodes.iter().map(|&r| f(r)).collect(),
            parity: Parity::Even,
            component: Component::First,
        }
    }

    pub fn with_component(mut self, c: Component) -> Self {
        self.component = c;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Same nodes and metadata, new values from `(ρ, value)`.
    pub fn map(&self, f: impl Fn(T, T) -> T) -> Self {
        Self {
            nodes: self.nodes.clone(),
            values: self.nodes.iter().zip(&self.values).map(|(&r, &v)| f(r, v)).collect(),
            parity: self.parity,
            component: self.component,
        }
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T, T) -> T) -> Self {
        assert_eq!(self.nodes, other.nodes, "fields live on different nodes");
        Self {
            nodes: self.nodes.clone(),
            values: self.nodes.iter().zip(self.values.iter().zip(&other.values)).map(|(&r, (&a, &b))| f(r, a, b)).collect(),
            parity: self.parity,
            component: self.component,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |_, a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |_, a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |_, a, b| a * b)
    }
}

#[inline]
fn weight<T: Real>(target: &WarpedTarget<T>) -> T {
    T::of_usize(target.n() - 3)
}

/// `(n−3) ρ⁻³ η(ρu)` at one point.
#[inline]
pub fn nonlinearity_at<T: Real>(eta: &OddKernel<T>, n: usize, rho: T, u: T) -> T {
    T::of_usize(n - 3) * u * u * u * eta.over_cube(rho * u)
}

/// `(n−3) ρ⁻² η′(ρu)` at one point.
#[inline]
pub fn potential_at<T: Real>(eta: &OddKernel<T>, n: usize, rho: T, u: T) -> T {
    T::of_usize(n - 3) * u * u * eta.deriv1_over_square(rho * u)
}

/// `(n−3) ρ⁻³ [η(ρ(ψ+u)) − η(ρψ) − η′(ρψ) ρu]` at one point.
pub fn remainder_at<T: Real>(eta: &OddKernel<T>, n: usize, rho: T, psi: T, u: T) -> T {
    let w = T::of_usize(n - 3);
    let a = rho * psi;
    let h = rho * u;
    if rho == T::zero() {
        // Only the cubic Taylor term of η survives the division by ρ³.
        let t3 = eta.taylor_at_zero()[3];
        return w * t3 * u * u * (T::of(3.0) * psi + u);
    }
    w * eta.taylor_remainder(a, h) / (rho * rho * rho)
}

/// `N(ψ₁) = (n−3) ρ⁻³ η(ρψ₁)`; at the origin `(n−3) ψ₁(0)³ η‴(0)/6`.
pub fn apply_nonlinearity<T: Real>(target: &WarpedTarget<T>, psi1: &RadialField<T>) -> RadialField<T> {
    let n = target.n();
    psi1.map(|r, u| nonlinearity_at(target.eta(), n, r, u)).with_component(Component::Second)
}

/// Linearization potential `(n−3) ρ⁻² η′(ρψ₁)` about `base_psi1`.
pub fn potential<T: Real>(target: &WarpedTarget<T>, base_psi1: &RadialField<T>) -> RadialField<T> {
    let n = target.n();
    base_psi1.map(|r, u| potential_at(target.eta(), n, r, u)).with_component(Component::Second)
}

/// Quadratic Taylor remainder of the nonlinearity about `base_psi1`.
pub fn nonlinear_remainder<T: Real>(target: &WarpedTarget<T>, base_psi1: &RadialField<T>, u1: &RadialField<T>) -> RadialField<T> {
    let n = target.n();
    base_psi1.zip_with(u1, |r, p, u| remainder_at(target.eta(), n, r, p, u)).with_component(Component::Second)
}

/// Odd kernel `η_ε − η₀`.
fn epsilon_kernel<T: Real>(target: &WarpedTarget<T>) -> OddKernel<T> {
    let round = target.with_epsilon(T::zero()).expect("ε = 0 is always admissible");
    OddKernel::new(T::zero(), round.ww_series().add(&target.ww_series().scale(-T::one())))
}

/// Inhomogeneity `(n−3) ρ⁻³ (η_ε − η₀)(ρψ₀,₁)` about the round-sphere profile.
pub fn epsilon_remainder<T: Real>(target: &WarpedTarget<T>, base0_psi1: &RadialField<T>) -> RadialField<T> {
    let k = epsilon_kernel(target);
    let w = weight(target);
    base0_psi1.map(|r, u| w * u * u * u * k.over_cube(r * u)).with_component(Component::Second)
}

/// Potential shift `(n−3) ρ⁻² (η_ε′ − η₀′)(ρψ₀,₁)`.
pub fn potential_shift<T: Real>(target: &WarpedTarget<T>, base0_psi1: &RadialField<T>) -> RadialField<T> {
    let k = epsilon_kernel(target);
    let w = weight(target);
    base0_psi1.map(|r, u| w * u * u * k.deriv1_over_square(r * u)).with_component(Component::Second)
}

/// The pieces of `N_ε(Ψ₀ + Φ) − N₀(Ψ₀) = V₀Φ + V_εΦ + R_ε + Ñ_ε(Φ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticDecomposition<T> {
    /// `V₀(ψ₀,₁)`.
    pub potential0: RadialField<T>,
    /// `V_ε(ψ₀,₁)`.
    pub potential_shift: RadialField<T>,
    /// `R_ε(Ψ₀)`.
    pub remainder: RadialField<T>,
    /// `ψ₀,₁` on the same nodes.
    pub base: RadialField<T>,
}

impl<T: Real> StaticDecomposition<T> {
    pub fn new(target: &WarpedTarget<T>, base0_psi1: &RadialField<T>) -> Self {
        let round = target.with_epsilon(T::zero()).expect("ε = 0 is always admissible");
        Self {
            potential0: potential(&round, base0_psi1),
            potential_shift: potential_shift(target, base0_psi1),
            remainder: epsilon_remainder(target, base0_psi1),
            base: base0_psi1.clone(),
        }
    }

    /// `V_εΦ + R_ε + Ñ_ε(Φ)`, the right-hand side of the fixed-point map.
    pub fn forcing(&self, target: &WarpedTarget<T>, phi: &RadialField<T>) -> RadialField<T> {
        self.potential_shift
            .mul(phi)
            .add(&self.remainder)
            .add(&nonlinear_remainder(target, &self.base, phi))
    }
}

/// `L̃` at one point from `(ψ₁, ψ₁′, ψ₁″)` and `(ψ₂, ψ₂′)`; at `ρ = 0` the
/// Laplacian is `n ψ₁″(0)`.
pub fn free_operator_at<T: Real>(n: usize, rho: T, p1: [T; 3], p2: [T; 2]) -> (T, T) {
    let lap = if rho == T::zero() {
        T::of_usize(n) * p1[2]
    } else {
        p1[2] + T::of_usize(n - 1) / rho * p1[1]
    };
    (p2[0] - rho * p1[1] - p1[0], lap - rho * p2[1] - T::of(2.0) * p2[0])
}

/// Gauge mode `(ψ₁ + Λψ₁, 2ψ₁ + 3Λψ₁ + Λ²ψ₁)` of a profile, i.e. `(f′, 2f′ + ρf″)`.
pub fn gauge_mode(profile: &ProfileSolution, nodes: &[f64]) -> (RadialField<f64>, RadialField<f64>) {
    let mut g1 = Vec::with_capacity(nodes.len());
    let mut g2 = Vec::with_capacity(nodes.len());
    for &r in nodes {
        let d = profile.derivs(r);
        g1.push(d[1]);
        g2.push(2.0 * d[1] + r * d[2]);
    }
    (
        RadialField { nodes: nodes.to_vec(), values: g1, parity: Parity::Even, component: Component::First },
        RadialField { nodes: nodes.to_vec(), values: g2, parity: Parity::Even, component: Component::Second },
    )
}

/// `L̃Ψ + N(Ψ)` for the static state `(ψ₁, ψ₂) = (f/ρ, f′)` of a profile.
pub fn static_residual(profile: &ProfileSolution, nodes: &[f64]) -> (RadialField<f64>, RadialField<f64>) {
    let n = profile.target.n();
    let eta = profile.target.eta();
    let mut r1 = Vec::with_capacity(nodes.len());
    let mut r2 = Vec::with_capacity(nodes.len());
    for &r in nodes {
        let u = profile.psi1_derivs(r);
        let f = profile.derivs(r);
        let (a, b) = free_operator_at(n, r, u, [f[1], f[2]]);
        r1.push(a);
        r2.push(b + nonlinearity_at(eta, n, r, u[0]));
    }
    (
        RadialField { nodes: nodes.to_vec(), values: r1, parity: Parity::Even, component: Component::First },
        RadialField { nodes: nodes.to_vec(), values: r2, parity: Parity::Even, component: Component::Second },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PerturbationBasis;
    use approx::assert_relative_eq;

    fn target(d: usize, eps: f64) -> WarpedTarget<f64> {
        WarpedTarget::new(d, eps, PerturbationBasis::sin_squared()).unwrap()
    }

    fn ground_psi1(d: usize) -> impl Fn(f64) -> f64 {
        let c = ((d - 2) as f64).sqrt();
        move |r: f64| if r == 0.0 { 2.0 / c } else { 2.0 * (r / c).atan() / r }
    }

    fn nodes() -> Vec<f64> {
        (0..200).map(|i| i as f64 * 0.05).collect()
    }

    #[test]
    fn zero_inputs_give_zero() {
        let t = target(3, 0.4);
        let z = RadialField::from_fn(&nodes(), |_| 0.0);
        assert_eq!(apply_nonlinearity(&t, &z).sup_norm(), 0.0);
        assert_eq!(potential(&t, &z).sup_norm(), 0.0);
        let base = RadialField::from_fn(&nodes(), ground_psi1(3));
        assert_eq!(nonlinear_remainder(&t, &base, &z).sup_norm(), 0.0);
        assert_eq!(epsilon_remainder(&target(3, 0.0), &base).sup_norm(), 0.0);
    }

    #[test]
    fn origin_limits() {
        let t = target(5, 0.0);
        let n = t.n() as f64;
        let base = RadialField::from_fn(&[0.0, 1e-9], ground_psi1(5));
        let b = base.values[0];
        let nl = apply_nonlinearity(&t, &base);
        assert_relative_eq!(nl.values[0], (n - 3.0) * b.powi(3) * 4.0 / 6.0, epsilon = 1e-14);
        assert_relative_eq!(nl.values[1], nl.values[0], epsilon = 1e-12);
        let v = potential(&t, &base);
        assert_relative_eq!(v.values[0], (n - 3.0) * b * b * 4.0 / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn potential_at_unit_radius() {
        let t = target(5, 0.0);
        let f0 = 2.0 * (1.0 / 3f64.sqrt()).atan();
        let base = RadialField::from_fn(&[1.0], ground_psi1(5));
        let expect = 4.0 * (1.0 - (2.0 * f0).cos());
        assert_relative_eq!(potential(&t, &base).values[0], expect, epsilon = 1e-13);
    }

    #[test]
    fn remainder_scaling_limit() {
        let t = target(3, 0.3);
        let n = t.n() as f64;
        let ns = nodes();
        let base = RadialField::from_fn(&ns, ground_psi1(3));
        let u = RadialField::from_fn(&ns, |r| (-r * r).exp() * (1.0 + 0.3 * r));
        let s1 = 1e-4;
        let q = |s: f64| nonlinear_remainder(&t, &base, &u.map(|_, v| s * v)).map(|_, v| v / (s * s));
        let (a, b) = (q(s1), q(s1 / 2.0));
        for i in 0..ns.len() {
            let rich = 2.0 * b.values[i] - a.values[i];
            let r = ns[i];
            let psi = base.values[i];
            let expect = (n - 3.0) * psi * t.eta().deriv2_over_y(r * psi) * u.values[i].powi(2) / 2.0;
            assert_relative_eq!(rich, expect, epsilon = 1e-8, max_relative = 1e-7);
        }
    }

    #[test]
    fn decomposition_identity() {
        let t = target(4, 0.05);
        let round = target(4, 0.0);
        let ns = nodes();
        let base = RadialField::from_fn(&ns, ground_psi1(4));
        let phi = RadialField::from_fn(&ns, |r| 0.2 * (-(r - 1.0).powi(2)).exp() - 0.1);
        let dec = StaticDecomposition::new(&t, &base);
        let lhs = apply_nonlinearity(&t, &base.add(&phi)).sub(&apply_nonlinearity(&round, &base));
        let rhs = dec.potential0.mul(&phi).add(&dec.forcing(&t, &phi));
        for i in 0..ns.len() {
            assert_relative_eq!(lhs.values[i], rhs.values[i], epsilon = 1e-11);
        }
    }

    #[test]
    fn round_sphere_remainders_coincide() {
        let t = target(3, 0.0);
        let ns = nodes();
        let base = RadialField::from_fn(&ns, ground_psi1(3));
        let phi = RadialField::from_fn(&ns, |r| 0.05 / (1.0 + r * r));
        let dec = StaticDecomposition::new(&t, &base);
        let a = nonlinear_remainder(&t, &base, &phi);
        let b = dec.forcing(&t, &phi);
        for i in 0..ns.len() {
            assert_relative_eq!(a.values[i], b.values[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn field_validation() {
        assert!(RadialField::new(vec![0.0, 1.0], vec![1.0], Parity::Even, Component::First).is_err());
        assert!(RadialField::new(vec![1.0, 0.5], vec![1.0, 2.0], Parity::Even, Component::First).is_err());
        assert!(RadialField::new(vec![0.0, 0.5], vec![1.0, 2.0], Parity::Odd, Component::First).is_err());
    }
}
