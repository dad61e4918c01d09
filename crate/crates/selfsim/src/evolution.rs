//! Nonlinear evolution in similarity coordinates `τ = log(T/(T−t))`, `ρ = r/(T−t)`.
//!
//! Method of lines on a uniform grid over `[0, R]` with [`RadialFd`] stencils and
//! explicit Runge–Kutta stepping. The unknown is the perturbation `Φ = Ψ − Ψ₀`
//! of the sampled profile `Ψ₀`, advanced by
//! `∂_τΦ = L̃Φ + V Φ₁ + [N(Ψ₀ + Φ) − N(Ψ₀) − V Φ₁]` with the bracket evaluated
//! without cancellation. The profile is therefore an exact fixed point, and
//! rounding errors scale with `|Φ|` rather than with the profile, which keeps
//! runs on different outer radii identical inside the light cone.
//!
//! The unstable coefficient `a(τ) = ℓ·Φ(τ)` uses the discrete left eigenvector
//! `ℓ` of the linearization at the eigenvalue near 1, normalized against the
//! matching right eigenvector.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::fd::RadialFd;
use crate::geometry::{OddKernel, WarpedTarget};
use crate::norms::{linear_fit, sobolev_seminorm, NormSpec};
use crate::operators::{nonlinearity_at, potential_at, remainder_at, Component, Parity, RadialField};
use crate::profile::ProfileSolution;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// `exp(−((ρ−c)/w)²)`; off-center bumps must vanish near the origin.
    Gaussian { center: f64, width: f64 },
    /// `(1 − (ρ/r)²)⁶` inside `r`.
    Bump { radius: f64 },
    /// `exp(−(ρ/w)²) cos(kρ² + φ)`, phase `φ` drawn from the seed.
    Chirp { frequency: f64, width: f64 },
}

impl Shape {
    /// Radius beyond which the shape vanishes to double precision.
    pub fn extent(&self) -> f64 {
        match *self {
            Shape::Gaussian { center, width } => center + 6.0 * width,
            Shape::Bump { radius } => radius,
            Shape::Chirp { width, .. } => 6.0 * width,
        }
    }
}

/// Perturbation `v = (A₁ s(ρ), A₂ s(ρ))` of the initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub amplitude: [f64; 2],
    pub shape: Shape,
    /// Bound `R₀` on the support.
    pub support: f64,
    pub seed: u64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self { amplitude: [0.0, 0.0], shape: Shape::Gaussian { center: 0.0, width: 0.3 }, support: 2.0, seed: 0 }
    }
}

impl Perturbation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(amplitude: [f64; 2], shape: Shape) -> Self {
        Self { amplitude, shape, ..Self::default() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { amplitude: [s * self.amplitude[0], s * self.amplitude[1]], ..self.clone() }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == [0.0, 0.0]
    }

    pub fn validate(&self, radius: f64) -> Result<()> {
        if !(self.support > 0.0 && self.support < radius) {
            return Err(Error::Config(format!("support bound {} must lie in (0, {radius})", self.support)));
        }
        let positive = match self.shape {
            Shape::Gaussian { width, center } => width > 0.0 && center >= 0.0,
            Shape::Bump { radius } => radius > 0.0,
            Shape::Chirp { width, .. } => width > 0.0,
        };
        if !positive || self.amplitude.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config(format!("invalid perturbation shape {:?}", self.shape)));
        }
        let extent = self.shape.extent();
        if extent > self.support {
            return Err(Error::Config(format!("perturbation extends to {extent}, beyond the bound {}", self.support)));
        }
        if let Shape::Gaussian { center, width } = self.shape {
            if center != 0.0 && center < 6.0 * width {
                return Err(Error::Config("an off-center Gaussian must vanish at the origin to stay even".into()));
            }
        }
        Ok(())
    }

    fn phase(&self) -> f64 {
        ChaCha8Rng::seed_from_u64(self.seed).gen_range(0.0..TAU)
    }

    /// `(v₁(ρ), v₂(ρ))`.
    pub fn eval(&self, rho: f64) -> [f64; 2] {
        if self.is_zero() {
            return [0.0, 0.0];
        }
        let s = match self.shape {
            Shape::Gaussian { center, width } => (-((rho - center) / width).powi(2)).exp(),
            Shape::Bump { radius } => {
                if rho < radius {
                    (1.0 - (rho / radius).powi(2)).powi(6)
                } else {
                    0.0
                }
            }
            Shape::Chirp { frequency, width } => (-(rho / width).powi(2)).exp() * (frequency * rho * rho + self.phase()).cos(),
        };
        [self.amplitude[0] * s, self.amplitude[1] * s]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Three-stage strong-stability-preserving Runge–Kutta.
    Rk3,
    /// Classical fourth-order Runge–Kutta.
    Rk4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionConfig {
    /// Outer radius `R > 1`.
    pub radius: f64,
    /// Number of grid intervals on `[0, R]`.
    pub intervals: usize,
    /// `Δτ = cfl · Δρ/(R+1)` unless `time_step` is given.
    pub cfl: f64,
    pub time_step: Option<f64>,
    pub integrator: Integrator,
    pub tau_max: f64,
    pub perturbation: Perturbation,
    /// Blowup times are searched in `[1−δ, 1+δ]`.
    pub search_delta: f64,
    /// Tolerance on the blowup time.
    pub tune_tol: f64,
    pub max_tune_iterations: usize,
    /// Spacing in `τ` of recorded samples.
    pub record_interval: f64,
    /// `|a|` above which the linear regime is considered left.
    pub linear_amplitude: f64,
    /// Start of the growth fit window.
    pub growth_start: f64,
    /// End of the initial transient excluded from decay fits.
    pub transient: f64,
    /// Kreiss–Oliger dissipation strength.
    pub dissipation: f64,
    pub norms: NormSpec,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            radius: 8.0,
            intervals: 512,
            cfl: 0.4,
            time_step: None,
            integrator: Integrator::Rk4,
            tau_max: 8.0,
            perturbation: Perturbation::default(),
            search_delta: 0.05,
            tune_tol: 1e-12,
            max_tune_iterations: 60,
            record_interval: 0.05,
            linear_amplitude: 0.05,
            growth_start: 0.5,
            transient: 1.0,
            dissipation: 0.5,
            norms: NormSpec::default(),
        }
    }
}

impl EvolutionConfig {
    pub fn spacing(&self) -> f64 {
        self.radius / self.intervals as f64
    }

    /// Largest stable step `cfl · Δρ/(R+1)`.
    pub fn max_time_step(&self) -> f64 {
        self.cfl * self.spacing() / (self.radius + 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.radius > 1.0) {
            return bad(format!("outer radius {} must exceed the light cone", self.radius));
        }
        if self.intervals < 16 {
            return bad(format!("{} intervals are too few", self.intervals));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return bad(format!("CFL fraction {} outside (0, 1]", self.cfl));
        }
        if let Some(dt) = self.time_step {
            if !(dt > 0.0 && dt <= self.max_time_step() * (1.0 + 1e-12)) {
                return bad(format!("time step {dt} violates the CFL bound {}", self.max_time_step()));
            }
        }
        if !(self.tau_max > 0.0 && self.record_interval > 0.0) {
            return bad("tau_max and record_interval must be positive".into());
        }
        if !(self.search_delta > 0.0 && self.search_delta < 1.0) {
            return bad(format!("search interval half-width {} outside (0, 1)", self.search_delta));
        }
        self.norms.validate()?;
        self.perturbation.validate(self.radius)
    }
}

/// `Ψ(τ)` on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityState<T> {
    pub tau: T,
    pub psi1: RadialField<T>,
    pub psi2: RadialField<T>,
    pub spacing: T,
}

/// One recorded time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub tau: f64,
    /// Unstable coefficient `ℓ·Φ`.
    pub coefficient: f64,
    /// Seminorms of `Φ` in the order of [`DecayReport::norm_orders`].
    pub norms: Vec<f64>,
    /// Weighted sup norms of `Φ`.
    pub sup_norms: Vec<f64>,
    /// `ψ₁(τ, 0)`, equal to `(T−t) ∂ᵣu(t, 0)`.
    pub origin: f64,
}

/// Exponential fit `ln y ≈ c + rate·sign·τ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Result of the blowup-time search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tuning {
    pub t_star: f64,
    /// `a∞` at `t_star`.
    pub residual: f64,
    pub bracket: (f64, f64),
    /// `(T, a∞(T))` at every evaluation.
    pub history: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub d: usize,
    pub epsilon: f64,
    pub t_blowup: f64,
    pub tuning: Option<Tuning>,
    pub unstable_eigenvalue: f64,
    pub time_step: f64,
    pub norm_orders: Vec<usize>,
    pub sup_weights: Vec<f64>,
    pub samples: Vec<Sample>,
    /// Decay rate per seminorm order, fitted after the transient.
    pub decay_rates: Vec<Option<RateFit>>,
    /// Seminorms do not increase after the transient.
    pub monotone: Vec<bool>,
    /// Growth exponent of `|a(τ)|` in the linear regime.
    pub growth: Option<RateFit>,
    /// Last finite `τ` if the run left the representable range.
    pub blowup: Option<f64>,
    /// Seminorm accuracy warnings raised during the run.
    pub warnings: Vec<String>,
}

impl DecayReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,a");
        for j in &self.norm_orders {
            s.push_str(&format!(",norm{j}"));
        }
        for k in &self.sup_weights {
            s.push_str(&format!(",sup{k}"));
        }
        s.push_str(",t,origin_scaled_gradient\n");
        for (p, x) in self.samples.iter().zip(physical_diagnostics(self)) {
            s.push_str(&format!("{:.10e},{:.17e}", p.tau, p.coefficient));
            for v in p.norms.iter().chain(&p.sup_norms) {
                s.push_str(&format!(",{v:.17e}"));
            }
            s.push_str(&format!(",{:.17e},{:.17e}\n", x.t, x.scaled_gradient));
        }
        s
    }
}

/// Physical-time reconstruction at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalSample {
    pub tau: f64,
    /// `t = T(1 − e^{−τ})`.
    pub t: f64,
    /// `∂ᵣu(t, 0)`.
    pub gradient: f64,
    /// `(T−t)|∂ᵣu(t, 0)|`.
    pub scaled_gradient: f64,
}

pub fn physical_diagnostics(report: &DecayReport) -> Vec<PhysicalSample> {
    let tb = report.t_blowup;
    report
        .samples
        .iter()
        .map(|p| {
            let remaining = tb * (-p.tau).exp();
            PhysicalSample { tau: p.tau, t: tb - remaining, gradient: p.origin / remaining, scaled_gradient: p.origin.abs() }
        })
        .collect()
}

fn interleave(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).flat_map(|(&x, &y)| [x, y]).collect()
}

fn split(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (x.iter().step_by(2).copied().collect(), x.iter().skip(1).step_by(2).copied().collect())
}

/// Scratch derivatives for the right-hand side.
struct Scratch<T> {
    d1a: Vec<T>,
    d2a: Vec<T>,
    d1b: Vec<T>,
    d2b: Vec<T>,
}

impl<T: Real> Scratch<T> {
    fn new(len: usize) -> Self {
        Self { d1a: vec![T::zero(); len], d2a: vec![T::zero(); len], d1b: vec![T::zero(); len], d2b: vec![T::zero(); len] }
    }
}

/// `L̃Ψ + N(Ψ)` on the grid.
fn rhs<T: Real>(fd: &RadialFd<T>, eta: &OddKernel<T>, sigma: T, p: [&[T]; 2], out: [&mut [T]; 2], s: &mut Scratch<T>) {
    let n = fd.dim;
    fd.derivatives(p[0], &mut s.d1a, &mut s.d2a);
    fd.derivatives(p[1], &mut s.d1b, &mut s.d2b);
    let two = T::of(2.0);
    let [o1, o2] = out;
    for i in 0..=fd.intervals {
        let r = T::of_usize(i) * fd.h;
        let lap = fd.laplacian_at(i, s.d1a[i], s.d2a[i]);
        o1[i] = p[1][i] - r * s.d1a[i] - p[0][i];
        o2[i] = lap - r * s.d1b[i] - two * p[1][i] + nonlinearity_at(eta, n, r, p[0][i]);
    }
    fd.add_dissipation(sigma, p[0], o1);
    fd.add_dissipation(sigma, p[1], o2);
}

/// Jacobian of [`rhs`] at `ψ₁`, unknowns interleaved as `(ψ₁ᵢ, ψ₂ᵢ)`.
fn jacobian(fd: &RadialFd<f64>, eta: &OddKernel<f64>, sigma: f64, psi1: &[f64]) -> BandMatrix<f64> {
    let n = fd.dim;
    let size = 2 * (fd.intervals + 1);
    let mut j = BandMatrix::zeros(size, 11, 11);
    for i in 0..=fd.intervals {
        let r = i as f64 * fd.h;
        let (a, b) = (2 * i, 2 * i + 1);
        j.add(a, a, -1.0);
        j.add(a, b, 1.0);
        j.add(b, b, -2.0);
        j.add(b, a, potential_at(eta, n, r, psi1[i]));
        for (k, w1, w2) in fd.row(i) {
            let lap = if i == 0 { n as f64 * w2 } else { w2 + (n - 1) as f64 / r * w1 };
            j.add(a, 2 * k, -r * w1);
            j.add(b, 2 * k, lap);
            j.add(b, 2 * k + 1, -r * w1);
        }
        for (k, w) in fd.dissipation_row(sigma, i) {
            j.add(a, 2 * k, w);
            j.add(b, 2 * k + 1, w);
        }
    }
    j
}

fn residual_f64(fd: &RadialFd<f64>, eta: &OddKernel<f64>, sigma: f64, x: &[f64]) -> Vec<f64> {
    let (p1, p2) = split(x);
    let len = p1.len();
    let (mut o1, mut o2) = (vec![0.0; len], vec![0.0; len]);
    rhs(fd, eta, sigma, [&p1, &p2], [&mut o1, &mut o2], &mut Scratch::new(len));
    interleave(&o1, &o2)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Inverse iteration with a fixed shift; returns the eigenvector and its Rayleigh quotient.
fn inverse_iteration(m: &BandMatrix<f64>, shift: f64, start: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut a = m.clone();
    a.shift(shift);
    let lu = a.lu()?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s0 = norm(start);
    let mut x: Vec<f64> = start.iter().map(|v| v / s0).collect();
    for _ in 0..200 {
        let mut y = lu.solve(&x);
        let dot: f64 = y.iter().zip(&x).map(|(a, b)| a * b).sum();
        let s = norm(&y) * dot.signum();
        y.iter_mut().for_each(|v| *v /= s);
        let change = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = y;
        if change < 1e-14 {
            break;
        }
    }
    let mx = m.mul_vec(&x);
    let lambda = mx.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|v| v * v).sum::<f64>();
    Ok((x, lambda))
}

/// Everything needed to evolve perturbations of one profile on one grid.
#[derive(Clone, Debug)]
pub struct Evolution<T> {
    profile: ProfileSolution,
    config: EvolutionConfig,
    eta: OddKernel<T>,
    fd: RadialFd<T>,
    nodes: Vec<T>,
    dt: f64,
    base: [Vec<T>; 2],
    left: [Vec<T>; 2],
    right: [Vec<T>; 2],
    eigenvalue: f64,
    equilibrium_residual: f64,
    sigma: T,
    /// `N′(ψ₀₁)` at the nodes.
    potential: Vec<T>,
}

struct Workspace<T> {
    k: [[Vec<T>; 2]; 4],
    tmp: [Vec<T>; 2],
    scratch: Scratch<T>,
}

impl<T: Real> Workspace<T> {
    fn new(len: usize) -> Self {
        let z = || vec![T::zero(); len];
        Self { k: [[z(), z()], [z(), z()], [z(), z()], [z(), z()]], tmp: [z(), z()], scratch: Scratch::new(len) }
    }
}

struct RunLog<T> {
    samples: Vec<Sample>,
    blowup: Option<f64>,
    warnings: Vec<String>,
    state: [Vec<T>; 2],
}

impl<T: Real> Evolution<T> {
    pub fn new(profile: &ProfileSolution, config: &EvolutionConfig) -> Result<Self> {
        config.validate()?;
        let target: &WarpedTarget<f64> = &profile.target;
        let n = target.n();
        let fd64 = RadialFd::<f64>::new(config.radius, config.intervals, n);
        let nodes64 = fd64.nodes();
        let p1: Vec<f64> = nodes64.iter().map(|&r| profile.psi1_derivs(r)[0]).collect();
        let p2: Vec<f64> = nodes64.iter().map(|&r| profile.derivs(r)[1]).collect();
        let sigma = config.dissipation;
        let equilibrium_residual = sup(&residual_f64(&fd64, target.eta(), sigma, &interleave(&p1, &p2)));
        let (b1, b2) = (p1, p2);

        let jac = jacobian(&fd64, target.eta(), sigma, &b1);
        let g1: Vec<f64> = nodes64.iter().map(|&r| profile.derivs(r)[1]).collect();
        let g2: Vec<f64> = nodes64.iter().map(|&r| {
            let f = profile.derivs(r);
            2.0 * f[1] + r * f[2]
        }).collect();
        let g = interleave(&g1, &g2);
        let shift = 1.05;
        let (mut right, lambda) = inverse_iteration(&jac, shift, &g)?;
        if (lambda - 1.0).abs() > 1e-3 {
            return Err(Error::Eigensolver(format!("discrete eigenvalue nearest 1 is {lambda}")));
        }
        let (mut left, lambda_left) = inverse_iteration(&jac.transpose(), shift, &g)?;
        if (lambda_left - lambda).abs() > 1e-8 {
            return Err(Error::Eigensolver(format!("left and right eigenvalues differ: {lambda_left} vs {lambda}")));
        }
        // Scale the right vector to the gauge mode, then pair.
        let scale = profile.b / right[0];
        right.iter_mut().for_each(|v| *v *= scale);
        let pairing: f64 = left.iter().zip(&right).map(|(a, b)| a * b).sum();
        if pairing.abs() < 1e-12 {
            return Err(Error::Degeneracy("left and right unstable vectors are orthogonal".into()));
        }
        left.iter_mut().for_each(|v| *v /= pairing);

        let cast = |v: Vec<f64>| -> Vec<T> { v.into_iter().map(T::of).collect() };
        let (l1, l2) = split(&left);
        let (r1, r2) = split(&right);
        let potential = b1.iter().zip(&nodes64).map(|(&u, &r)| T::of(potential_at(target.eta(), n, r, u))).collect();
        Ok(Self {
            profile: profile.clone(),
            config: config.clone(),
            eta: target.cast::<T>()?.eta().clone(),
            fd: RadialFd::new(T::of(config.radius), config.intervals, n),
            nodes: cast(nodes64),
            dt: config.time_step.unwrap_or_else(|| config.max_time_step()),
            base: [cast(b1), cast(b2)],
            left: [cast(l1), cast(l2)],
            right: [cast(r1), cast(r2)],
            eigenvalue: lambda,
            equilibrium_residual,
            sigma: T::of(sigma),
            potential,
        })
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn profile(&self) -> &ProfileSolution {
        &self.profile
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn time_step(&self) -> f64 {
        self.dt
    }

    /// Discrete eigenvalue approximating the gauge eigenvalue 1.
    pub fn unstable_eigenvalue(&self) -> f64 {
        self.eigenvalue
    }

    /// Sup norm of the scheme's right-hand side at the sampled profile.
    pub fn equilibrium_residual(&self) -> f64 {
        self.equilibrium_residual
    }

    /// Discrete gauge mode, scaled to `f′(0)` at the origin.
    pub fn unstable_mode(&self) -> [&[T]; 2] {
        [&self.right[0], &self.right[1]]
    }

    fn state(&self, tau: T, p: [Vec<T>; 2]) -> SimilarityState<T> {
        let [a, b] = p;
        SimilarityState {
            tau,
            psi1: RadialField { nodes: self.nodes.clone(), values: a, parity: Parity::Even, component: Component::First },
            psi2: RadialField { nodes: self.nodes.clone(), values: b, parity: Parity::Even, component: Component::Second },
            spacing: self.fd.h,
        }
    }

    /// The sampled profile as a state at `τ = 0`.
    pub fn equilibrium(&self) -> SimilarityState<T> {
        self.state(T::zero(), self.base.clone())
    }

    /// `Φ(0) = (Tv₁(T·) + Tψ₁(T·) − ψ₁, T²v₂(T·) + T²ψ₂(T·) − ψ₂)`.
    pub fn initial_perturbation(&self, t_blowup: f64, v: &Perturbation) -> Result<[Vec<T>; 2]> {
        let delta = self.config.search_delta;
        if !(t_blowup >= 1.0 - delta && t_blowup <= 1.0 + delta) {
            return Err(Error::Config(format!("blowup time {t_blowup} outside [1 − {delta}, 1 + {delta}]")));
        }
        v.validate(self.config.radius)?;
        let (mut a, mut b) = (Vec::with_capacity(self.nodes.len()), Vec::with_capacity(self.nodes.len()));
        let p = &self.profile;
        for r in self.nodes.iter().map(|r| r.to_f64_lossy()) {
            let s = t_blowup * r;
            let vs = v.eval(s);
            let t2 = t_blowup * t_blowup;
            a.push(T::of(t_blowup * vs[0] + (t_blowup * p.psi1_derivs(s)[0] - p.psi1_derivs(r)[0])));
            b.push(T::of(t2 * vs[1] + (t2 * p.derivs(s)[1] - p.derivs(r)[1])));
        }
        Ok([a, b])
    }

    /// `Ψ(0) = Ψ₀ + Φ(0)`.
    pub fn initial_data(&self, t_blowup: f64, v: &Perturbation) -> Result<SimilarityState<T>> {
        let [mut a, mut b] = self.initial_perturbation(t_blowup, v)?;
        for i in 0..a.len() {
            a[i] += self.base[0][i];
            b[i] += self.base[1][i];
        }
        Ok(self.state(T::zero(), [a, b]))
    }

    /// `∂_τΦ` at `src = Φ`.
    fn eval(&self, src: [&[T]; 2], out: &mut [Vec<T>; 2], s: &mut Scratch<T>) {
        let fd = &self.fd;
        let n = fd.dim;
        fd.derivatives(src[0], &mut s.d1a, &mut s.d2a);
        fd.derivatives(src[1], &mut s.d1b, &mut s.d2b);
        let two = T::of(2.0);
        let [o1, o2] = out;
        for i in 0..=fd.intervals {
            let r = self.nodes[i];
            let u = src[0][i];
            let lap = fd.laplacian_at(i, s.d1a[i], s.d2a[i]);
            o1[i] = src[1][i] - r * s.d1a[i] - u;
            o2[i] = lap - r * s.d1b[i] - two * src[1][i] + self.potential[i] * u
                + remainder_at(&self.eta, n, r, self.base[0][i], u);
        }
        fd.add_dissipation(self.sigma, src[0], o1);
        fd.add_dissipation(self.sigma, src[1], o2);
    }

    fn advance(&self, y: &mut [Vec<T>; 2], dt: T, w: &mut Workspace<T>) {
        let len = y[0].len();
        let Workspace { k, tmp, scratch } = w;
        let combine = |dst: &mut [Vec<T>; 2], a: T, x: &[Vec<T>; 2], b: T, z: &[Vec<T>; 2], c: T, kk: &[Vec<T>; 2]| {
            for q in 0..2 {
                for i in 0..len {
                    dst[q][i] = a * x[q][i] + b * z[q][i] + c * kk[q][i];
                }
            }
        };
        let (zero, one) = (T::zero(), T::one());
        match self.config.integrator {
            Integrator::Rk4 => {
                let half = dt * T::of(0.5);
                self.eval([&y[0], &y[1]], &mut k[0], scratch);
                combine(tmp, one, y, zero, y, half, &k[0]);
                self.eval([&tmp[0], &tmp[1]], &mut k[1], scratch);
                combine(tmp, one, y, zero, y, half, &k[1]);
                self.eval([&tmp[0], &tmp[1]], &mut k[2], scratch);
                combine(tmp, one, y, zero, y, dt, &k[2]);
                self.eval([&tmp[0], &tmp[1]], &mut k[3], scratch);
                let sixth = dt / T::of(6.0);
                let two = T::of(2.0);
                for c in 0..2 {
                    for i in 0..len {
                        y[c][i] += sixth * (k[0][c][i] + two * (k[1][c][i] + k[2][c][i]) + k[3][c][i]);
                    }
                }
            }
            Integrator::Rk3 => {
                // Shu–Osher form.
                self.eval([&y[0], &y[1]], &mut k[0], scratch);
                combine(tmp, one, y, zero, y, dt, &k[0]);
                self.eval([&tmp[0], &tmp[1]], &mut k[1], scratch);
                let stage = tmp.clone();
                combine(tmp, T::of(0.75), y, T::of(0.25), &stage, T::of(0.25) * dt, &k[1]);
                self.eval([&tmp[0], &tmp[1]], &mut k[2], scratch);
                let stage = tmp.clone();
                let copy = y.clone();
                combine(y, T::of(1.0 / 3.0), &copy, T::of(2.0 / 3.0), &stage, T::of(2.0 / 3.0) * dt, &k[2]);
            }
        }
    }

    /// One time step of size `dt`.
    pub fn step(&self, state: &SimilarityState<T>, dt: T) -> Result<SimilarityState<T>> {
        if dt.to_f64_lossy() > self.config.max_time_step() * (1.0 + 1e-12) {
            return Err(Error::Config(format!("time step {dt} violates the CFL bound {}", self.config.max_time_step())));
        }
        let (phi1, phi2) = self.perturbation(state);
        let mut y = [phi1.values, phi2.values];
        let mut w = Workspace::new(y[0].len());
        self.advance(&mut y, dt, &mut w);
        let y = self.full(y);
        if !finite(&y) {
            return Err(Error::BlowupDetected { tau: state.tau.to_f64_lossy() });
        }
        Ok(self.state(state.tau + dt, y))
    }

    /// `Ψ₀ + Φ`.
    fn full(&self, mut y: [Vec<T>; 2]) -> [Vec<T>; 2] {
        for (c, b) in y.iter_mut().zip(&self.base) {
            for (v, &bv) in c.iter_mut().zip(b) {
                *v += bv;
            }
        }
        y
    }

    /// `ℓ·(Ψ − Ψ₀)`.
    pub fn coefficient(&self, state: &SimilarityState<T>) -> T {
        let (a, b) = self.perturbation(state);
        self.coefficient_of([&a.values, &b.values])
    }

    fn coefficient_of(&self, phi: [&[T]; 2]) -> T {
        let mut s = T::zero();
        for c in 0..2 {
            for i in 0..phi[c].len() {
                s += self.left[c][i] * phi[c][i];
            }
        }
        s
    }

    /// `Φ = Ψ − Ψ₀`.
    pub fn perturbation(&self, state: &SimilarityState<T>) -> (RadialField<T>, RadialField<T>) {
        (
            RadialField {
                nodes: self.nodes.clone(),
                values: state.psi1.values.iter().zip(&self.base[0]).map(|(a, b)| *a - *b).collect(),
                parity: Parity::Even,
                component: Component::First,
            },
            RadialField {
                nodes: self.nodes.clone(),
                values: state.psi2.values.iter().zip(&self.base[1]).map(|(a, b)| *a - *b).collect(),
                parity: Parity::Even,
                component: Component::Second,
            },
        )
    }

    fn sample(&self, tau: f64, y: &[Vec<T>; 2], with_norms: bool, warnings: &mut Vec<String>) -> Sample {
        let mut norms = Vec::new();
        let mut sup_norms = Vec::new();
        if with_norms {
            let field = |v: &Vec<T>, c| RadialField { nodes: self.nodes.clone(), values: v.clone(), parity: Parity::Even, component: c };
            let (phi1, phi2) = (field(&y[0], Component::First), field(&y[1], Component::Second));
            let n = self.fd.dim;
            for &j in &self.config.norms.orders {
                let mut total = 0.0;
                for phi in [&phi1, &phi2] {
                    match sobolev_seminorm(phi, n, j) {
                        Ok(v) => {
                            total += v.value.to_f64_lossy().powi(2);
                            if let Some(w) = v.warning {
                                if warnings.len() < 20 {
                                    warnings.push(format!("tau = {tau:.3}, order {j}: {w}"));
                                }
                            }
                        }
                        Err(e) => warnings.push(e.to_string()),
                    }
                }
                norms.push(total.sqrt());
            }
            for &k in &self.config.norms.sup_weights {
                let kk = T::of(k);
                sup_norms.push(crate::norms::weighted_sup(&phi1, kk).max(crate::norms::weighted_sup(&phi2, kk)).to_f64_lossy());
            }
        }
        Sample {
            tau,
            coefficient: self.coefficient_of([&y[0], &y[1]]).to_f64_lossy(),
            norms,
            sup_norms,
            origin: (self.base[0][0] + y[0][0]).to_f64_lossy(),
        }
    }

    fn integrate(&self, t_blowup: f64, v: &Perturbation, tau_max: f64, stop: Option<f64>, with_norms: bool) -> Result<RunLog<T>> {
        let mut y = self.initial_perturbation(t_blowup, v)?;
        let steps = (tau_max / self.dt).ceil().max(1.0) as usize;
        let dt = tau_max / steps as f64;
        let every = ((self.config.record_interval / dt).round() as usize).max(1);
        let mut w = Workspace::new(y[0].len());
        let mut warnings = Vec::new();
        let mut samples = vec![self.sample(0.0, &y, with_norms, &mut warnings)];
        let mut blowup = None;
        let mut last = y.clone();
        for s in 1..=steps {
            self.advance(&mut y, T::of(dt), &mut w);
            if s % every == 0 || s == steps {
                let tau = s as f64 * dt;
                if !finite(&y) {
                    blowup = Some(samples.last().map_or(0.0, |p| p.tau));
                    y = last;
                    break;
                }
                let p = self.sample(tau, &y, with_norms, &mut warnings);
                let leave = stop.is_some_and(|cap| p.coefficient.abs() > cap);
                samples.push(p);
                last.clone_from(&y);
                if leave {
                    break;
                }
            }
        }
        Ok(RunLog { samples, blowup, warnings, state: y })
    }

    /// Runs the configured perturbation with blowup time `t_blowup` to `tau_max`.
    /// A run that leaves the representable range returns a partial report.
    pub fn evolve(&self, t_blowup: f64) -> Result<DecayReport> {
        let log = self.integrate(t_blowup, &self.config.perturbation, self.config.tau_max, None, true)?;
        Ok(self.report(t_blowup, None, log))
    }

    /// The final state of a run, for inspection.
    pub fn final_state(&self, t_blowup: f64, v: &Perturbation, tau_max: f64) -> Result<SimilarityState<T>> {
        let log = self.integrate(t_blowup, v, tau_max, None, false)?;
        if let Some(tau) = log.blowup {
            return Err(Error::BlowupDetected { tau });
        }
        Ok(self.state(T::of(tau_max), self.full(log.state)))
    }

    fn report(&self, t_blowup: f64, tuning: Option<Tuning>, log: RunLog<T>) -> DecayReport {
        let cfg = &self.config;
        let samples = log.samples;
        // Linear regime ends where the unstable coefficient grows past the cap.
        let end = samples
            .iter()
            .position(|p| p.tau > cfg.transient && p.coefficient.abs() > cfg.linear_amplitude)
            .unwrap_or(samples.len());
        let window: Vec<&Sample> = samples[..end].iter().filter(|p| p.tau >= cfg.transient).collect();
        let mut decay_rates = Vec::new();
        let mut monotone = Vec::new();
        for k in 0..cfg.norms.orders.len() {
            let pts: Vec<(f64, f64)> =
                window.iter().filter(|p| p.norms[k] > 0.0).map(|p| (p.tau, p.norms[k].ln())).collect();
            decay_rates.push(rate_fit(&pts, -1.0));
            monotone.push(window.windows(2).all(|w| w[1].norms[k] <= w[0].norms[k] * (1.0 + 1e-9)));
        }
        let growth_pts: Vec<(f64, f64)> = samples
            .iter()
            .filter(|p| p.tau >= cfg.growth_start && p.coefficient != 0.0 && p.coefficient.abs() <= cfg.linear_amplitude)
            .map(|p| (p.tau, p.coefficient.abs().ln()))
            .collect();
        DecayReport {
            d: self.profile.target.d(),
            epsilon: self.profile.target.epsilon(),
            t_blowup,
            tuning,
            unstable_eigenvalue: self.eigenvalue,
            time_step: self.dt,
            norm_orders: cfg.norms.orders.clone(),
            sup_weights: cfg.norms.sup_weights.clone(),
            samples,
            decay_rates,
            monotone,
            growth: rate_fit(&growth_pts, 1.0),
            blowup: log.blowup,
            warnings: log.warnings,
        }
    }

    /// `a∞ = lim e^{−τ} a(τ)`, fitted on the last unit of `τ` before `|a|`
    /// leaves the linear regime or the run ends.
    pub fn asymptotic_amplitude(&self, t_blowup: f64, v: &Perturbation) -> Result<f64> {
        let cap = self.config.linear_amplitude;
        let log = self.integrate(t_blowup, v, self.config.tau_max, Some(cap), false)?;
        let linear: Vec<&Sample> = log.samples.iter().filter(|p| p.coefficient.abs() <= cap).collect();
        let Some(last) = linear.last() else {
            return Ok(log.samples[0].coefficient);
        };
        let (mut num, mut den) = (0.0, 0.0);
        // Least squares for a = a∞ e^τ.
        for p in linear.iter().filter(|p| p.tau >= last.tau - 1.0) {
            let e = p.tau.exp();
            num += p.coefficient * e;
            den += e * e;
        }
        Ok(num / den)
    }

    /// Root of `a∞(T)` in `[1−δ, 1+δ]` by safeguarded false position.
    pub fn tune_blowup_time(&self, v: &Perturbation) -> Result<Tuning> {
        let delta = self.config.search_delta;
        let mut history = Vec::new();
        let eval = |t: f64, h: &mut Vec<(f64, f64)>| -> Result<f64> {
            let a = self.asymptotic_amplitude(t, v)?;
            h.push((t, a));
            Ok(a)
        };
        let a_one = eval(1.0, &mut history)?;
        if a_one == 0.0 {
            return Ok(Tuning { t_star: 1.0, residual: 0.0, bracket: (1.0, 1.0), history });
        }
        let (mut lo, mut hi) = (1.0 - delta, 1.0 + delta);
        let (mut f_lo, mut f_hi) = (eval(lo, &mut history)?, eval(hi, &mut history)?);
        if f_lo.signum() == f_hi.signum() {
            return Err(Error::NoSignChange { lo, hi, a_lo: f_lo, a_hi: f_hi });
        }
        // Narrow with the midpoint value already computed.
        if a_one.signum() == f_lo.signum() {
            lo = 1.0;
            f_lo = a_one;
        } else {
            hi = 1.0;
            f_hi = a_one;
        }
        let mut side = 0i8;
        let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
        for _ in 0..self.config.max_tune_iterations {
            if hi - lo <= self.config.tune_tol {
                break;
            }
            let mut t = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            if !(t > lo && t < hi) {
                t = 0.5 * (lo + hi);
            }
            let f = eval(t, &mut history)?;
            if f.abs() < best.1.abs() {
                best = (t, f);
            }
            if f == 0.0 {
                lo = t;
                hi = t;
                break;
            }
            if f.signum() == f_hi.signum() {
                hi = t;
                f_hi = f;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            } else {
                lo = t;
                f_lo = f;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            }
            // False position may leave one end fixed; the step above halves it.
        }
        if hi - lo > self.config.tune_tol && best.1.abs() > 1e-14 {
            return Err(Error::NonConvergence {
                stage: "blowup time search",
                detail: format!("bracket [{lo}, {hi}] after {} evaluations", history.len()),
            });
        }
        Ok(Tuning { t_star: best.0, residual: best.1, bracket: (lo, hi), history })
    }

    /// Tunes the blowup time for the configured perturbation and evolves with it.
    pub fn tune_and_evolve(&self) -> Result<DecayReport> {
        let tuning = self.tune_blowup_time(&self.config.perturbation)?;
        let log = self.integrate(tuning.t_star, &self.config.perturbation, self.config.tau_max, None, true)?;
        Ok(self.report(tuning.t_star, Some(tuning), log))
    }
}

fn finite<T: Real>(y: &[Vec<T>; 2]) -> bool {
    let cap = T::of(1e8);
    y.iter().all(|c| c.iter().all(|v| v.is_finite() && v.abs() < cap))
}

fn rate_fit(pts: &[(f64, f64)], sign: f64) -> Option<RateFit> {
    if pts.len() < 3 {
        return None;
    }
    let fit = linear_fit(pts);
    Some(RateFit {
        rate: sign * fit.slope,
        stderr: fit.slope_stderr,
        window: (pts[0].0, pts[pts.len() - 1].0),
        points: pts.len(),
    })
}
