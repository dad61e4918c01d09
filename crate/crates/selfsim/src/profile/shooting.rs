//! Frobenius shooting from the origin and the light cone, Taylor stepping
//! in between, and continuation in `ε` from the round sphere.

use serde::{Deserialize, Serialize};

use super::frobenius::{self, FrobeniusSeries};
use super::recurrence::{Patch, TaylorStepper, Variable};
use super::{ground_state, ProfileConfig, ProfileSolution, Representation, SolverInfo};
use crate::error::{Error, Result};
use crate::geometry::WarpedTarget;
use crate::series::{eval_derivs, Jet};

/// Data fixing the analytic branch at `ρ = 1`.
///
/// For even `d` the branch is parameterized by `a = f(1)`. For odd `d`, `a` is
/// pinned by the compatibility condition and the free parameter is the
/// coefficient at the resonant index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LightConeData {
    pub a: f64,
    pub resonant: Option<f64>,
}

impl LightConeData {
    fn parameter(&self) -> f64 {
        self.resonant.unwrap_or(self.a)
    }

    fn with_parameter(&self, x: f64) -> Self {
        match self.resonant {
            Some(_) => Self { a: self.a, resonant: Some(x) },
            None => Self { a: x, resonant: None },
        }
    }
}

/// `b` and light-cone data of the round-sphere profile `2 arctan(ρ/√(d−2))`.
pub fn ground_state_seed(d: usize) -> (f64, LightConeData) {
    let c = ((d - 2) as f64).sqrt();
    let a = ground_state(d, 1.0)[0];
    let resonant = frobenius::lightcone_resonance(d).map(|t| {
        // f₀′ = 2c/(c² + ρ²); expand about ρ = 1 and integrate termwise.
        let x = Jet::variable(1.0, t);
        let g = x.mul(&x).add(&Jet::constant(c * c, t)).recip().scale(2.0 * c);
        g.c[t - 1] / t as f64
    });
    (2.0 / c, LightConeData { a, resonant })
}

/// Both sides of the interior matching.
struct Interior {
    series0: FrobeniusSeries,
    series1: FrobeniusSeries,
    left: Vec<Patch>,
    right: Vec<Patch>,
    mismatch: [f64; 2],
}

fn integrate_interior(target: &WarpedTarget<f64>, b: f64, lc: LightConeData, cfg: &ProfileConfig) -> Result<Interior> {
    let order = cfg.series_order;
    let series0 = frobenius::series_at_origin(target, b, order)?;
    let series1 = match lc.resonant {
        Some(p) => frobenius::series_at_lightcone_with(target, lc.a, p, order)?,
        None => frobenius::series_at_lightcone(target, lc.a, order)?,
    };
    let stepper = TaylorStepper::default();
    let singular = [-1.0, 0.0, 1.0];
    let r0 = cfg.rho_series;
    let r1 = 1.0 - cfg.rho_series;
    let s0 = series0.derivs(r0);
    let (left, fl, dfl) = stepper.run(target, Variable::Rho, r0, cfg.rho_match, s0[0], s0[1], &singular)?;
    let s1 = series1.derivs(r1);
    let (mut right, fr, dfr) = stepper.run(target, Variable::Rho, r1, cfg.rho_match, s1[0], s1[1], &singular)?;
    right.reverse();
    Ok(Interior { series0, series1, left, right, mismatch: [fl - fr, dfl - dfr] })
}

/// Mismatch `(f₋ − f₊, f₋′ − f₊′)` at the matching radius between the branch
/// regular at the origin with slope `b` and the analytic light-cone branch `lc`.
pub fn shoot_interior(target: &WarpedTarget<f64>, b: f64, lc: LightConeData, cfg: &ProfileConfig) -> Result<[f64; 2]> {
    Ok(integrate_interior(target, b, lc, cfg)?.mismatch)
}

/// Newton iteration on `(b, light-cone parameter)`. Returns the converged
/// unknowns, the iteration count and the final mismatch.
fn newton(target: &WarpedTarget<f64>, b: f64, lc: LightConeData, cfg: &ProfileConfig) -> Result<(f64, LightConeData, usize, [f64; 2])> {
    let mut x = [b, lc.parameter()];
    let eval = |x: [f64; 2]| shoot_interior(target, x[0], lc.with_parameter(x[1]), cfg);
    let mut r = eval(x)?;
    for it in 0..cfg.max_newton {
        let norm = r[0].abs().max(r[1].abs());
        if norm < cfg.newton_tol {
            return Ok((x[0], lc.with_parameter(x[1]), it, r));
        }
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let h = 1e-6 * (1.0 + x[j].abs());
            let (mut xp, mut xm) = (x, x);
            xp[j] += h;
            xm[j] -= h;
            let (rp, rm) = (eval(xp)?, eval(xm)?);
            for i in 0..2 {
                jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::SingularJacobian { nearest: det });
        }
        let dx = [(jac[1][1] * r[0] - jac[0][1] * r[1]) / det, (jac[0][0] * r[1] - jac[1][0] * r[0]) / det];
        x[0] -= dx[0];
        x[1] -= dx[1];
        r = eval(x)?;
        if dx[0].abs().max(dx[1].abs()) < 1e-15 * (1.0 + x[0].abs().max(x[1].abs())) {
            return Ok((x[0], lc.with_parameter(x[1]), it + 1, r));
        }
    }
    let norm = r[0].abs().max(r[1].abs());
    if norm < cfg.newton_tol * 100.0 {
        return Ok((x[0], lc.with_parameter(x[1]), cfg.max_newton, r));
    }
    Err(Error::NonConvergence { stage: "shooting Newton", detail: format!("mismatch {norm:.3e} after {} iterations", cfg.max_newton) })
}

/// Exterior solution from the light-cone series out to infinity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExteriorExtension {
    pub rho_patches: Vec<Patch>,
    /// Patches in `s = 1/ρ`, ordered by increasing `s`.
    pub inverse_patches: Vec<Patch>,
    pub c1: f64,
    pub ctilde1: f64,
    /// `(c1, ctilde1)` from Richardson extrapolation of `f` and `ρ²f′` at dyadic radii.
    pub richardson: [f64; 2],
}

/// Continues the light-cone branch to `ρ = r_max` and then in `1/ρ` to infinity.
pub fn extend_exterior(target: &WarpedTarget<f64>, series1: &FrobeniusSeries, cfg: &ProfileConfig) -> Result<ExteriorExtension> {
    let stepper = TaylorStepper::default();
    let r0 = 1.0 + cfg.rho_series;
    let s = series1.derivs(r0);
    let (rho_patches, f, df) = stepper.run(target, Variable::Rho, r0, cfg.r_max, s[0], s[1], &[-1.0, 0.0, 1.0])?;
    let s_start = 1.0 / cfg.r_max;
    let (mut inverse_patches, h, dh) =
        stepper.run(target, Variable::InvRho, s_start, 0.0, f, -cfg.r_max * cfg.r_max * df, &[-1.0, 1.0])?;
    inverse_patches.reverse();

    // Richardson on checkpoints R, 2R, 4R, 8R ending at r_max.
    let radii: Vec<f64> = (0..4).map(|k| cfg.r_max / f64::powi(2.0, 3 - k)).collect();
    let eval = |r: f64| -> [f64; 4] {
        let i = rho_patches.partition_point(|p| p.hi < r).min(rho_patches.len() - 1);
        rho_patches[i].derivs(r)
    };
    let vals: Vec<f64> = radii.iter().map(|&r| eval(r)[0]).collect();
    let flux: Vec<f64> = radii.iter().map(|&r| r * r * eval(r)[1]).collect();
    Ok(ExteriorExtension {
        rho_patches,
        inverse_patches,
        c1: h,
        ctilde1: -dh,
        richardson: [richardson_in_inverse(&vals), richardson_in_inverse(&flux)],
    })
}

/// Extrapolates `g(R) = g∞ + Σ c_k R^{−k}` sampled at `R, 2R, 4R, …` to `R = ∞`.
fn richardson_in_inverse(samples: &[f64]) -> f64 {
    let mut t = samples.to_vec();
    for level in 1..t.len() {
        let factor = f64::powi(2.0, level as i32);
        for i in 0..t.len() - level {
            t[i] = (factor * t[i + 1] - t[i]) / (factor - 1.0);
        }
    }
    t[0]
}

/// Solves for the profile of `target` by continuation in `ε` from the round sphere.
pub fn solve_profile(target: &WarpedTarget<f64>, cfg: &ProfileConfig) -> Result<ProfileSolution> {
    let d = target.d();
    let goal = target.epsilon();
    let (mut b, mut lc) = ground_state_seed(d);
    let mut eps = 0.0;
    let mut visited = vec![0.0];
    let mut prev: Option<(f64, f64, LightConeData)> = None;
    let mut step = cfg.continuation_step.max(cfg.min_continuation_step);
    let mut iterations;
    let mut mismatch;

    // Converge at ε = 0 first; the seed is exact up to the series truncation.
    let round = target.with_epsilon(0.0)?;
    (b, lc, iterations, mismatch) = newton(&round, b, lc, cfg)?;
    let mut current = round;

    while eps != goal {
        let next = if (goal - eps).abs() <= step { goal } else { eps + step * (goal - eps).signum() };
        let trial_target = target.with_epsilon(next)?;
        // Secant predictor from the last two points on the branch.
        let (mut bg, mut lg) = (b, lc);
        if let Some((pe, pb, plc)) = prev {
            let s = (next - eps) / (eps - pe);
            bg = b + s * (b - pb);
            lg = lc.with_parameter(lc.parameter() + s * (lc.parameter() - plc.parameter()));
            lg.a = lc.a + s * (lc.a - plc.a);
        }
        let attempt = (|| -> Result<_> {
            if let Some(t) = frobenius::lightcone_resonance(d) {
                let _ = t;
                lg.a = frobenius::lightcone_value(&trial_target, lg.a)?;
            }
            newton(&trial_target, bg, lg, cfg)
        })();
        match attempt {
            Ok((nb, nlc, it, r)) => {
                prev = Some((eps, b, lc));
                eps = next;
                b = nb;
                lc = nlc;
                iterations = it;
                mismatch = r;
                visited.push(eps);
                current = trial_target;
                step = (step * 1.5).min(cfg.continuation_step.max(cfg.min_continuation_step));
            }
            Err(e) => {
                step *= 0.5;
                if step < cfg.min_continuation_step {
                    return Err(Error::NonConvergence { stage: "continuation in ε", detail: format!("stalled at ε = {eps}: {e}") });
                }
            }
        }
    }
    if b.abs() < 1e-8 {
        return Err(Error::DegenerateProfile { b });
    }
    assemble(&current, b, lc, cfg, iterations, mismatch, visited)
}

fn assemble(
    target: &WarpedTarget<f64>,
    b: f64,
    lc: LightConeData,
    cfg: &ProfileConfig,
    newton_iterations: usize,
    mismatch: [f64; 2],
    continuation: Vec<f64>,
) -> Result<ProfileSolution> {
    let interior = integrate_interior(target, b, lc, cfg)?;
    let ext = extend_exterior(target, &interior.series1, cfg)?;
    let series_inf = frobenius::series_at_infinity(target, ext.c1, ext.ctilde1, cfg.series_order)?;

    let mut rho = Vec::new();
    rho.push(series_patch(&interior.series0, 0.0, 0.0, cfg.rho_series));
    rho.extend(interior.left);
    rho.extend(interior.right);
    rho.push(series_patch(&interior.series1, 1.0, 1.0 - cfg.rho_series, 1.0 + cfg.rho_series));
    rho.extend(ext.rho_patches);

    let mut sol = ProfileSolution {
        target: target.clone(),
        b,
        a: lc.a,
        grid: Vec::new(),
        f: Vec::new(),
        df: Vec::new(),
        series0: interior.series0,
        series1: interior.series1,
        series_inf,
        c1: ext.c1,
        ctilde1: ext.ctilde1,
        residual_norm: 0.0,
        solver: SolverInfo::Shooting { newton_iterations, mismatch, continuation, richardson: ext.richardson },
        repr: Representation::Patches { rho, inverse: ext.inverse_patches, r_max: cfg.r_max },
    };
    sol.sample(cfg.grid.nodes(cfg.r_max));
    if !(sol.residual_norm <= cfg.tol) {
        return Err(Error::NonConvergence {
            stage: "profile residual",
            detail: format!("residual {:.3e} exceeds {:.1e}", sol.residual_norm, cfg.tol),
        });
    }
    Ok(sol)
}

fn series_patch(s: &FrobeniusSeries, center: f64, lo: f64, hi: f64) -> Patch {
    Patch { variable: Variable::Rho, center, lo, hi, coeffs: s.coeffs.clone() }
}

/// `f` and `f′` at `rho` from a patch list (used by tests and diagnostics).
#[allow(dead_code)]
pub(crate) fn patch_values(patches: &[Patch], rho: f64) -> [f64; 2] {
    let i = patches.partition_point(|p| p.hi < rho).min(patches.len() - 1);
    let d = eval_derivs(&patches[i].coeffs, rho - patches[i].center, 1);
    [d[0], d[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PerturbationBasis;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn round_sphere_is_reproduced() {
        for d in [3, 4, 5, 6] {
            let t = WarpedTarget::sphere(d).unwrap();
            let sol = solve_profile(&t, &ProfileConfig::default()).unwrap();
            let c = ((d - 2) as f64).sqrt();
            assert_relative_eq!(sol.b, 2.0 / c, epsilon = 1e-12);
            assert_relative_eq!(sol.c1, PI, epsilon = 1e-11);
            assert_relative_eq!(sol.ctilde1, 2.0 * c, epsilon = 1e-10);
            for r in [0.05, 0.3, 0.77, 1.0, 1.5, 9.0, 200.0] {
                assert_relative_eq!(sol.eval(r), ground_state(d, r)[0], epsilon = 1e-12);
                assert_relative_eq!(sol.derivs(r)[2], ground_state(d, r)[2], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn mismatch_vanishes_at_seed() {
        let (b, lc) = ground_state_seed(3);
        let t = WarpedTarget::sphere(3).unwrap();
        let m = shoot_interior(&t, b, lc, &ProfileConfig::default()).unwrap();
        assert!(m[0].abs() < 1e-13 && m[1].abs() < 1e-13, "{m:?}");
    }

    #[test]
    fn perturbed_profile_converges() {
        let t = WarpedTarget::new(4, 0.1, PerturbationBasis::sin_squared()).unwrap();
        let sol = solve_profile(&t, &ProfileConfig::default()).unwrap();
        assert!(sol.residual_norm < 1e-10);
        let SolverInfo::Shooting { richardson, .. } = &sol.solver else { panic!() };
        assert!((richardson[0] - sol.c1).abs() < 1e-5);
    }

    #[test]
    fn richardson_is_exact_on_low_order_tails() {
        let g = |r: f64| 2.0 - 3.0 / r + 0.5 / (r * r) + 0.25 / (r * r * r);
        let s: Vec<f64> = [10.0, 20.0, 40.0, 80.0].iter().map(|&r| g(r)).collect();
        assert_relative_eq!(richardson_in_inverse(&s), 2.0, epsilon = 1e-12);
    }
}
