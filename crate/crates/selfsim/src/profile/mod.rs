//! Self-similar profiles `u(t, r) = f(r/(T−t))`.
//!
//! The profile solves
//!
//! ```text
//! (1−ρ²) f″ + ((d−1)/ρ − 2ρ) f′ − (d−1)/ρ² · w(f) w′(f) = 0,
//! ```
//!
//! regular at the origin (`f(0) = 0`), analytic across the light cone `ρ = 1`,
//! and bounded at infinity. Two independent solvers are provided: Frobenius
//! shooting with Taylor-series stepping ([`solve_profile`]) and global Chebyshev
//! collocation in `y = ρ/(1+ρ)` ([`newton_collocation`]).

mod collocation;
pub mod frobenius;
mod lipschitz;
pub mod recurrence;
mod shooting;

use serde::{Deserialize, Serialize};

use crate::chebyshev::ChebyshevGrid;
use crate::geometry::WarpedTarget;
use crate::series::eval_derivs;

pub use collocation::{collocation_nodes, newton_collocation, CollocationConfig, InitialGuess, IterationMode};
pub use frobenius::{
    lightcone_resonance, lightcone_value, series_at_infinity, series_at_lightcone, series_at_lightcone_with, series_at_origin,
    FreeCoefficient, FrobeniusSeries, SeriesCenter,
};
pub use lipschitz::{lipschitz_in_epsilon, LipschitzPair, LipschitzReport};
pub use recurrence::{Patch, Variable};
pub use shooting::{extend_exterior, ground_state_seed, shoot_interior, solve_profile, ExteriorExtension, LightConeData};

/// `f₀(ρ) = 2 arctan(ρ/√(d−2))` and its first three derivatives.
pub fn ground_state(d: usize, rho: f64) -> [f64; 4] {
    let c = ((d - 2) as f64).sqrt();
    let q = c * c + rho * rho;
    [
        2.0 * (rho / c).atan(),
        2.0 * c / q,
        -4.0 * c * rho / (q * q),
        4.0 * c * (3.0 * rho * rho - c * c) / (q * q * q),
    ]
}

/// Residual of the profile equation in the `f` variable (`ρ > 0`).
pub fn f_residual(target: &WarpedTarget<f64>, rho: f64, f: f64, df: f64, d2f: f64) -> f64 {
    let dm1 = (target.d() - 1) as f64;
    (1.0 - rho * rho) * d2f + (dm1 / rho - 2.0 * rho) * df - dm1 / (rho * rho) * target.ww_series().eval(f)
}

/// Residual of the profile equation in `u = f/ρ`:
/// `(1−ρ²)u″ + ((n−1)/ρ − 4ρ)u′ − 2u + (n−3)ρ⁻³η(ρu)`.
pub fn u_residual(target: &WarpedTarget<f64>, rho: f64, u: f64, du: f64, d2u: f64) -> f64 {
    let n = target.n() as f64;
    (1.0 - rho * rho) * d2u + ((n - 1.0) / rho - 4.0 * rho) * du - 2.0 * u
        + crate::operators::nonlinearity_at(target.eta(), target.n(), rho, u)
}

/// Output sampling: uniform on `[0, inner_radius]`, geometric beyond to `r_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub inner_radius: f64,
    pub inner_points: usize,
    pub outer_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { inner_radius: 2.0, inner_points: 401, outer_points: 400 }
    }
}

impl GridSpec {
    pub fn nodes(&self, r_max: f64) -> Vec<f64> {
        let h = self.inner_radius / (self.inner_points - 1) as f64;
        let mut v: Vec<f64> = (0..self.inner_points).map(|i| i as f64 * h).collect();
        if r_max > self.inner_radius {
            let ratio = (r_max / self.inner_radius).powf(1.0 / self.outer_points as f64);
            for i in 1..=self.outer_points {
                v.push(self.inner_radius * ratio.powi(i as i32));
            }
            *v.last_mut().unwrap() = r_max;
        }
        v
    }

    /// Same layout with twice the resolution.
    pub fn refined(&self) -> Self {
        Self { inner_radius: self.inner_radius, inner_points: 2 * self.inner_points - 1, outer_points: 2 * self.outer_points }
    }
}

/// Settings of the shooting solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    /// Length of the Frobenius series kept at each singular point.
    pub series_order: usize,
    /// Distance from each singular point at which the series hands over.
    pub rho_series: f64,
    pub rho_match: f64,
    pub r_max: f64,
    /// Tolerance on the ODE residual over the output grid.
    pub tol: f64,
    /// Tolerance on the shooting mismatch.
    pub newton_tol: f64,
    pub max_newton: usize,
    pub continuation_step: f64,
    pub min_continuation_step: f64,
    pub grid: GridSpec,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            series_order: 60,
            rho_series: 0.2,
            rho_match: 0.5,
            r_max: 128.0,
            tol: 1e-10,
            newton_tol: 1e-13,
            max_newton: 40,
            continuation_step: 0.01,
            min_continuation_step: 1e-4,
            grid: GridSpec::default(),
        }
    }
}

/// Collocation representation: `u = f/ρ` at Chebyshev nodes in `y = ρ/(1+ρ)`,
/// together with its first three `y`-derivatives at the nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChebyshevProfile {
    pub grid: ChebyshevGrid<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    pub d3u: Vec<f64>,
}

impl ChebyshevProfile {
    /// `u` and its first three `y`-derivatives at `y`.
    pub fn y_derivs(&self, y: f64) -> [f64; 4] {
        [
            self.grid.interpolate(&self.u, y),
            self.grid.interpolate(&self.du, y),
            self.grid.interpolate(&self.d2u, y),
            self.grid.interpolate(&self.d3u, y),
        ]
    }

    /// `u, u′, u″, u‴` in `ρ`.
    pub fn u_derivs(&self, rho: f64) -> [f64; 4] {
        let y = rho / (1.0 + rho);
        let z = 1.0 - y;
        let [u, uy, uyy, uyyy] = self.y_derivs(y);
        let z2 = z * z;
        let z3 = z2 * z;
        let z4 = z2 * z2;
        [
            u,
            z2 * uy,
            z4 * uyy - 2.0 * z3 * uy,
            z4 * z2 * uyyy - 6.0 * z4 * z * uyy + 6.0 * z4 * uy,
        ]
    }
}

/// Dense representation of a solved profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Representation {
    /// Taylor patches in `ρ` on `[0, r_max]` and in `1/ρ` beyond.
    Patches { rho: Vec<Patch>, inverse: Vec<Patch>, r_max: f64 },
    Collocation(ChebyshevProfile),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolverInfo {
    Shooting {
        newton_iterations: usize,
        mismatch: [f64; 2],
        /// `ε` values visited by continuation.
        continuation: Vec<f64>,
        /// `(c1, ctilde1)` from Richardson extrapolation of exterior checkpoints.
        richardson: [f64; 2],
    },
    Collocation {
        nodes: usize,
        iterations: usize,
        picard: bool,
        final_update: f64,
        /// Sup norm of the scaled collocation residual at the nodes.
        discrete_residual: f64,
    },
}

/// A computed profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub target: WarpedTarget<f64>,
    /// `f′(0)`.
    pub b: f64,
    /// `f(1)`.
    pub a: f64,
    pub grid: Vec<f64>,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    pub series0: FrobeniusSeries,
    pub series1: FrobeniusSeries,
    pub series_inf: FrobeniusSeries,
    /// `lim f` at infinity.
    pub c1: f64,
    /// `lim ρ² f′` at infinity.
    pub ctilde1: f64,
    /// Max over the grid of the ODE residual in both the `f` and `u` forms.
    pub residual_norm: f64,
    pub solver: SolverInfo,
    pub repr: Representation,
}

/// Radius below which `u = f/ρ` is taken from the origin series.
const ORIGIN_SERIES_RADIUS: f64 = 0.1;

impl ProfileSolution {
    /// `f, f′, f″, f‴` at `rho ≥ 0`.
    pub fn derivs(&self, rho: f64) -> [f64; 4] {
        match &self.repr {
            Representation::Patches { rho: patches, inverse, r_max } => {
                if rho <= *r_max {
                    find_patch(patches, rho).derivs(rho)
                } else {
                    let s = 1.0 / rho;
                    frobenius::inverse_chain(find_patch(inverse, s).derivs(s), s)
                }
            }
            Representation::Collocation(c) => {
                let [u, du, d2u, d3u] = c.u_derivs(rho);
                [rho * u, u + rho * du, 2.0 * du + rho * d2u, 3.0 * d2u + rho * d3u]
            }
        }
    }

    /// `ψ₁ = f/ρ` with its first two derivatives, regular at the origin.
    ///
    /// Near the origin the odd series is used, which avoids dividing
    /// rounding errors of the dense representation by powers of `ρ`.
    pub fn psi1_derivs(&self, rho: f64) -> [f64; 3] {
        if rho < ORIGIN_SERIES_RADIUS {
            let d = eval_derivs(&self.series0.coeffs[1..], rho, 2);
            return [d[0], d[1], d[2]];
        }
        match &self.repr {
            Representation::Collocation(c) => {
                let d = c.u_derivs(rho);
                [d[0], d[1], d[2]]
            }
            Representation::Patches { .. } => {
                let f = self.derivs(rho);
                let u = f[0] / rho;
                let du = (f[1] - u) / rho;
                let d2u = (f[2] - 2.0 * du) / rho;
                [u, du, d2u]
            }
        }
    }

    /// `f` at `rho`.
    pub fn eval(&self, rho: f64) -> f64 {
        self.derivs(rho)[0]
    }

    /// ODE residual at the grid nodes, max of the `f` and `u` forms.
    pub(crate) fn grid_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for &r in &self.grid {
            if r == 0.0 {
                continue;
            }
            let f = self.derivs(r);
            let u = self.psi1_derivs(r);
            let rf = f_residual(&self.target, r, f[0], f[1], f[2]);
            let ru = u_residual(&self.target, r, u[0], u[1], u[2]);
            worst = worst.max(rf.abs()).max(ru.abs());
        }
        worst
    }

    /// Fills `grid`, `f`, `df` and `residual_norm` from the dense representation.
    pub(crate) fn sample(&mut self, nodes: Vec<f64>) {
        self.f = nodes.iter().map(|&r| self.derivs(r)[0]).collect();
        self.df = nodes.iter().map(|&r| self.derivs(r)[1]).collect();
        self.grid = nodes;
        self.residual_norm = self.grid_residual();
    }

    /// `φ = f − f₀`.
    pub fn correction(&self, rho: f64) -> f64 {
        self.eval(rho) - ground_state(self.target.d(), rho)[0]
    }

    /// Writes `ρ, f, f′` rows as CSV text.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("rho,f,df\n");
        for i in 0..self.grid.len() {
            s.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", self.grid[i], self.f[i], self.df[i]));
        }
        s
    }
}

fn find_patch(patches: &[Patch], x: f64) -> &Patch {
    let i = patches.partition_point(|p| p.hi < x);
    &patches[i.min(patches.len() - 1)]
}
