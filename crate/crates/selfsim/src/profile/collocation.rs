//! Global Chebyshev collocation of the `u = f/ρ` equation in `y = ρ/(1+ρ)`.
//!
//! In `y` the equation reads
//!
//! ```text
//! (1−2y)[(1−y)²u_yy − 2(1−y)u_y] + ((n−1)(1−y)³/y − 4y(1−y))u_y − 2u + (n−3)ρ⁻³η(ρu) = 0.
//! ```
//!
//! All three singular points `y = 0, ½, 1` are regular for the sought solution,
//! so Gauss–Chebyshev nodes need no boundary rows. Rows are multiplied by `y`
//! to keep the `1/y` coefficient from amplifying rounding near the origin.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::frobenius::{self, lightcone_resonance};
use super::{ground_state, ChebyshevProfile, GridSpec, ProfileSolution, Representation, SolverInfo};
use crate::chebyshev::{mat_vec, ChebyshevGrid};
use crate::error::{Error, Result};
use crate::geometry::WarpedTarget;
use crate::operators::{nonlinearity_at, potential_at, Component, Parity, RadialField, StaticDecomposition};
use crate::series::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IterationMode {
    /// Damped Newton on the full linearization.
    Newton,
    /// Fixed-point iteration with the linearization frozen at the round-sphere profile.
    Picard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollocationConfig {
    pub nodes: usize,
    pub mode: IterationMode,
    /// Sup-norm bound on the final update of `u`.
    pub tol: f64,
    pub max_iter: usize,
    pub series_order: usize,
    pub r_max: f64,
    pub grid: GridSpec,
}

impl Default for CollocationConfig {
    fn default() -> Self {
        Self {
            nodes: 64,
            mode: IterationMode::Newton,
            tol: 1e-13,
            max_iter: 60,
            series_order: 60,
            r_max: 128.0,
            grid: GridSpec::default(),
        }
    }
}

/// Starting point of the iteration.
#[derive(Clone, Debug)]
pub enum InitialGuess {
    /// `f₀ = 2 arctan(ρ/√(d−2))`.
    GroundState,
    /// `s · f₀`.
    ScaledGroundState(f64),
    /// Samples of `ψ₁ = f/ρ`, linearly interpolated and continued as `C/ρ` beyond the last node.
    Psi1(RadialField<f64>),
    Profile(Box<ProfileSolution>),
}

/// Gauss–Chebyshev nodes on `(0, 1)` in `y = ρ/(1+ρ)`.
pub fn collocation_nodes(n: usize) -> ChebyshevGrid<f64> {
    ChebyshevGrid::new(n, 0.0, 1.0)
}

fn rho_of(y: f64) -> f64 {
    y / (1.0 - y)
}

fn ground_u(d: usize, rho: f64) -> f64 {
    let c = ((d - 2) as f64).sqrt();
    if rho < 1e-8 {
        2.0 / c
    } else {
        ground_state(d, rho)[0] / rho
    }
}

fn initial_values(guess: &InitialGuess, d: usize, grid: &ChebyshevGrid<f64>) -> Vec<f64> {
    let rhos: Vec<f64> = grid.nodes.iter().map(|&y| rho_of(y)).collect();
    match guess {
        InitialGuess::GroundState => rhos.iter().map(|&r| ground_u(d, r)).collect(),
        InitialGuess::ScaledGroundState(s) => rhos.iter().map(|&r| s * ground_u(d, r)).collect(),
        InitialGuess::Profile(p) => rhos.iter().map(|&r| p.psi1_derivs(r)[0]).collect(),
        InitialGuess::Psi1(field) => rhos.iter().map(|&r| interpolate_field(field, r)).collect(),
    }
}

fn interpolate_field(field: &RadialField<f64>, r: f64) -> f64 {
    let (x, v) = (&field.nodes, &field.values);
    let last = x.len() - 1;
    if r >= x[last] {
        return v[last] * x[last] / r;
    }
    if r <= x[0] {
        return v[0];
    }
    let i = x.partition_point(|&t| t <= r) - 1;
    let w = (r - x[i]) / (x[i + 1] - x[i]);
    v[i] * (1.0 - w) + v[i + 1] * w
}

/// The discretized operator: `G(u) = y·[A u + N(u)]` with dense `A`.
struct Discretization {
    grid: ChebyshevGrid<f64>,
    d1: Vec<f64>,
    /// Scaled linear part, row-major.
    lin: DMatrix<f64>,
    rho: Vec<f64>,
    n: usize,
}

impl Discretization {
    fn new(target: &WarpedTarget<f64>, nodes: usize) -> Self {
        let grid = collocation_nodes(nodes);
        let d1 = grid.diff_matrix();
        let d2 = mat_mul(&d1, &d1, nodes);
        let n = target.n();
        let nf = n as f64;
        let mut lin = DMatrix::zeros(nodes, nodes);
        for i in 0..nodes {
            let y = grid.nodes[i];
            let z = 1.0 - y;
            let c2 = y * (1.0 - 2.0 * y) * z * z;
            let c1 = y * (-2.0 * (1.0 - 2.0 * y) * z - 4.0 * y * z) + (nf - 1.0) * z * z * z;
            for j in 0..nodes {
                lin[(i, j)] = c2 * d2[i * nodes + j] + c1 * d1[i * nodes + j];
            }
            lin[(i, i)] -= 2.0 * y;
        }
        let rho = grid.nodes.iter().map(|&y| rho_of(y)).collect();
        Self { grid, d1, lin, rho, n }
    }

    fn residual(&self, target: &WarpedTarget<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut r = &self.lin * u;
        for i in 0..u.len() {
            r[i] += self.grid.nodes[i] * nonlinearity_at(target.eta(), self.n, self.rho[i], u[i]);
        }
        r
    }

    fn jacobian(&self, target: &WarpedTarget<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.lin.clone();
        for i in 0..u.len() {
            j[(i, i)] += self.grid.nodes[i] * potential_at(target.eta(), self.n, self.rho[i], u[i]);
        }
        j
    }
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

fn sup(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn solve_linear(j: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = j.clone().lu();
    match lu.solve(rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => {
            let nearest = j
                .complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(f64::INFINITY, f64::min);
            Err(Error::SingularJacobian { nearest })
        }
    }
}

/// Solves the profile equation by collocation from `initial_guess`.
pub fn newton_collocation(target: &WarpedTarget<f64>, initial_guess: &InitialGuess, cfg: &CollocationConfig) -> Result<ProfileSolution> {
    let disc = Discretization::new(target, cfg.nodes);
    let mut u = DVector::from_vec(initial_values(initial_guess, target.d(), &disc.grid));
    let (iterations, final_update) = match cfg.mode {
        IterationMode::Newton => newton_loop(target, &disc, &mut u, cfg)?,
        IterationMode::Picard => picard_loop(target, &disc, &mut u, cfg)?,
    };
    let discrete_residual = sup(&disc.residual(target, &u));
    build_solution(target, &disc, u.as_slice().to_vec(), cfg, iterations, final_update, discrete_residual)
}

fn newton_loop(target: &WarpedTarget<f64>, disc: &Discretization, u: &mut DVector<f64>, cfg: &CollocationConfig) -> Result<(usize, f64)> {
    let mut r = disc.residual(target, u);
    for it in 1..=cfg.max_iter {
        let delta = solve_linear(disc.jacobian(target, u), &(-&r))?;
        let step = sup(&delta);
        // Backtrack only while the residual is above its rounding floor.
        let r0 = sup(&r);
        let mut lambda = 1.0;
        loop {
            let trial = &*u + &delta * lambda;
            let rt = disc.residual(target, &trial);
            if r0 < 1e-10 || sup(&rt) < (1.0 - 0.25 * lambda) * r0 || lambda < 1.0 / 64.0 {
                *u = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
        if step * lambda < cfg.tol * (1.0 + sup(u)) {
            return Ok((it, step * lambda));
        }
    }
    Err(Error::NonConvergence { stage: "collocation Newton", detail: format!("no convergence in {} iterations", cfg.max_iter) })
}

/// `(A + V₀) φ_{k+1} = −(R₀ + V_ε φ_k + R_ε + Ñ_ε(φ_k))`, where `R₀` is the
/// discrete residual of the round-sphere profile (zero up to truncation error).
fn picard_loop(target: &WarpedTarget<f64>, disc: &Discretization, u: &mut DVector<f64>, cfg: &CollocationConfig) -> Result<(usize, f64)> {
    let d = target.d();
    let round = target.with_epsilon(0.0)?;
    let y = &disc.grid.nodes;
    let base_vals: Vec<f64> = disc.rho.iter().map(|&r| ground_u(d, r)).collect();
    let base = DVector::from_vec(base_vals.clone());
    let field = |v: Vec<f64>| RadialField { nodes: disc.rho.clone(), values: v, parity: Parity::Even, component: Component::First };
    let base_field = field(base_vals);
    let dec = StaticDecomposition::new(target, &base_field);
    let r0 = disc.residual(&round, &base);
    let lu = disc.jacobian(&round, &base).lu();

    let mut phi = &*u - &base;
    let mut prev_update = f64::INFINITY;
    let mut worst_ratio: f64 = 0.0;
    for it in 1..=cfg.max_iter {
        let forcing = dec.forcing(target, &field(phi.as_slice().to_vec()));
        let rhs = DVector::from_fn(phi.len(), |i, _| -(r0[i] + y[i] * forcing.values[i]));
        let next = lu.solve(&rhs).ok_or(Error::SingularJacobian { nearest: 0.0 })?;
        let update = sup(&(&next - &phi));
        phi = next;
        if !update.is_finite() {
            return Err(Error::ContractionFailure { epsilon: target.epsilon(), ratio: f64::INFINITY });
        }
        if it >= 3 && prev_update.is_finite() && prev_update > 0.0 {
            let ratio = update / prev_update;
            worst_ratio = worst_ratio.max(ratio);
            if ratio >= 1.0 && update > cfg.tol {
                return Err(Error::ContractionFailure { epsilon: target.epsilon(), ratio });
            }
        }
        if update < cfg.tol * (1.0 + sup(&phi)) {
            *u = &base + &phi;
            return Ok((it, update));
        }
        prev_update = update;
    }
    Err(Error::ContractionFailure { epsilon: target.epsilon(), ratio: worst_ratio })
}

fn build_solution(
    target: &WarpedTarget<f64>,
    disc: &Discretization,
    u: Vec<f64>,
    cfg: &CollocationConfig,
    iterations: usize,
    final_update: f64,
    discrete_residual: f64,
) -> Result<ProfileSolution> {
    let n = u.len();
    let du = mat_vec(&disc.d1, &u);
    let d2u = mat_vec(&disc.d1, &du);
    let d3u = mat_vec(&disc.d1, &d2u);
    let cheb = ChebyshevProfile { grid: disc.grid.clone(), u, du, d2u, d3u };

    let [u0, ..] = cheb.y_derivs(0.0);
    let b = u0;
    let mut a = cheb.y_derivs(0.5)[0];
    let [_, uy1, uyy1, _] = cheb.y_derivs(1.0);
    let c1 = -uy1;
    let ctilde1 = -uy1 - 0.5 * uyy1;

    let order = cfg.series_order;
    let series0 = frobenius::series_at_origin(target, b, order)?;
    let series1 = match lightcone_resonance(target.d()) {
        Some(t) => {
            // `a` is pinned by compatibility; the collocation value seeds the root.
            a = frobenius::lightcone_value(target, a)?;
            let p = lightcone_coefficients(&cheb, t)[t];
            frobenius::series_at_lightcone_with(target, a, p, order)?
        }
        None => frobenius::series_at_lightcone(target, a, order)?,
    };
    let series_inf = frobenius::series_at_infinity(target, c1, ctilde1, order)?;

    let mut sol = ProfileSolution {
        target: target.clone(),
        b,
        a,
        grid: Vec::new(),
        f: Vec::new(),
        df: Vec::new(),
        series0,
        series1,
        series_inf,
        c1,
        ctilde1,
        residual_norm: 0.0,
        solver: SolverInfo::Collocation {
            nodes: n,
            iterations,
            picard: cfg.mode == IterationMode::Picard,
            final_update,
            discrete_residual,
        },
        repr: Representation::Collocation(cheb),
    };
    sol.sample(cfg.grid.nodes(cfg.r_max));
    Ok(sol)
}

/// Taylor coefficients of `f(1+x) = (1+x) u(y(1+x))` up to `x^t`.
fn lightcone_coefficients(cheb: &ChebyshevProfile, t: usize) -> Vec<f64> {
    let len = t + 1;
    // u's Taylor coefficients in y about ½ from repeated differentiation.
    let d = crate::chebyshev::ChebyshevGrid::diff_matrix(&cheb.grid);
    let mut cur = cheb.u.clone();
    let mut outer = Vec::with_capacity(len);
    let mut fact = 1.0;
    for k in 0..len {
        if k > 0 {
            cur = mat_vec(&d, &cur);
            fact *= k as f64;
        }
        outer.push(cheb.grid.interpolate(&cur, 0.5) / fact);
    }
    let rho = Jet::variable(1.0, len);
    let y = rho.mul(&rho.add(&Jet::constant(1.0, len)).recip());
    Jet::compose(&outer, &y).mul(&rho).c
}
