//! Local power series of the profile at the origin, the light cone and infinity.

use serde::{Deserialize, Serialize};

use super::recurrence::{self, LocalOde, PointKind};
use crate::error::{Error, Result};
use crate::geometry::WarpedTarget;
use crate::series::{eval_derivs, Jet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesCenter {
    /// `f(ρ) = Σ a_k ρ^k`, odd powers only.
    Origin,
    /// `f(ρ) = Σ a_k (ρ − 1)^k`, the analytic branch.
    LightCone,
    /// `f(ρ) = Σ a_k ρ^{−k}`.
    Infinity,
}

/// A coefficient left undetermined by the recurrence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeCoefficient {
    pub index: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrobeniusSeries {
    pub center: SeriesCenter,
    /// Indicial exponents of the two local behaviors.
    pub exponents: [f64; 2],
    pub coeffs: Vec<f64>,
    /// Coefficient of a logarithmic term; the profile equation never produces one.
    pub log_coefficient: f64,
    /// Suggested radius of use in the local variable.
    pub radius: f64,
    pub free: Vec<FreeCoefficient>,
    /// Residual of the compatibility condition at a resonance, if one was met.
    pub compatibility_residual: Option<f64>,
}

impl FrobeniusSeries {
    /// Local variable at `rho`: `ρ`, `ρ − 1` or `1/ρ`.
    pub fn local(&self, rho: f64) -> f64 {
        match self.center {
            SeriesCenter::Origin => rho,
            SeriesCenter::LightCone => rho - 1.0,
            SeriesCenter::Infinity => 1.0 / rho,
        }
    }

    /// Value of `f` at `rho`.
    pub fn eval(&self, rho: f64) -> f64 {
        Jet::from_coeffs(self.coeffs.clone()).eval(self.local(rho))
    }

    /// `f`, `f′`, `f″`, `f‴` at `rho` (derivatives in `ρ`).
    pub fn derivs(&self, rho: f64) -> [f64; 4] {
        let x = self.local(rho);
        let h = eval_derivs(&self.coeffs, x, 3);
        match self.center {
            SeriesCenter::Infinity => inverse_chain([h[0], h[1], h[2], h[3]], x),
            _ => [h[0], h[1], h[2], h[3]],
        }
    }

    /// Relative residuals of the coefficient recurrence.
    pub fn recurrence_residuals(&self, target: &WarpedTarget<f64>) -> Result<Vec<f64>> {
        let (ode, kind) = local_problem(self.center, target.d());
        recurrence::residuals(&ode, kind, target, &self.coeffs)
    }
}

/// Converts `s`-derivatives of `h` to `ρ`-derivatives of `f(ρ) = h(1/ρ)`.
pub(crate) fn inverse_chain(h: [f64; 4], s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s2 * s2;
    [
        h[0],
        -s2 * h[1],
        s4 * h[2] + 2.0 * s3 * h[1],
        -(s4 * s2 * h[3] + 6.0 * s4 * s * h[2] + 6.0 * s4 * h[1]),
    ]
}

fn local_problem(center: SeriesCenter, d: usize) -> (LocalOde<f64>, PointKind) {
    match center {
        SeriesCenter::Origin => (LocalOde::radial(d, 0.0), PointKind::DoubleZero),
        SeriesCenter::LightCone => (LocalOde::radial(d, 1.0), PointKind::SimpleZero),
        SeriesCenter::Infinity => (LocalOde::inverse(d, 0.0), PointKind::Ordinary),
    }
}

/// Root-test estimate of the convergence radius from the tail coefficients.
fn radius_estimate(c: &[f64]) -> f64 {
    let n = c.len();
    let mut r = f64::INFINITY;
    for k in (n / 2).max(1)..n {
        if c[k] != 0.0 {
            r = r.min(c[k].abs().powf(-1.0 / k as f64));
        }
    }
    r
}

fn check_order(target: &WarpedTarget<f64>, order: usize) -> Result<()> {
    if order + 1 > target.jet_cap() {
        return Err(Error::UnsupportedOrder { order, max: target.jet_cap() - 1 });
    }
    Ok(())
}

/// Odd series `f = bρ + a₃ρ³ + …` regular at the origin.
pub fn series_at_origin(target: &WarpedTarget<f64>, b: f64, order: usize) -> Result<FrobeniusSeries> {
    check_order(target, order)?;
    let (ode, kind) = local_problem(SeriesCenter::Origin, target.d());
    let solved = recurrence::solve(&ode, kind, target, &[0.0, b], order + 1, b)?;
    let coeffs = solved.coeffs;
    Ok(FrobeniusSeries {
        center: SeriesCenter::Origin,
        exponents: [1.0, 1.0 - target.d() as f64],
        radius: 0.5 * radius_estimate(&coeffs).min(1.0),
        coeffs,
        log_coefficient: 0.0,
        free: vec![FreeCoefficient { index: 1, value: b }],
        compatibility_residual: None,
    })
}

/// Index of the resonant light-cone coefficient, present for odd `d`.
pub fn lightcone_resonance(d: usize) -> Option<usize> {
    (d % 2 == 1).then_some((d - 1) / 2)
}

/// Analytic branch at `ρ = 1` with `f(1) = a` and, for odd `d`, the resonant
/// coefficient set to `resonant`. The compatibility residual is reported, not checked.
pub(crate) fn lightcone_unchecked(target: &WarpedTarget<f64>, a: f64, resonant: f64, order: usize) -> Result<FrobeniusSeries> {
    check_order(target, order)?;
    let d = target.d();
    let (ode, kind) = local_problem(SeriesCenter::LightCone, d);
    let solved = recurrence::solve(&ode, kind, target, &[a], order + 1, resonant)?;
    let mut free = vec![FreeCoefficient { index: 0, value: a }];
    if let Some(r) = solved.resonance {
        free = vec![FreeCoefficient { index: r.index, value: resonant }];
    }
    Ok(FrobeniusSeries {
        center: SeriesCenter::LightCone,
        exponents: [0.0, 0.5 * (d as f64 - 1.0)],
        radius: 0.5 * radius_estimate(&solved.coeffs).min(1.0),
        coeffs: solved.coeffs,
        log_coefficient: 0.0,
        free,
        compatibility_residual: solved.resonance.map(|r| r.residual),
    })
}

/// Tolerance on the resonance compatibility condition.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Analytic branch at the light cone with the resonant coefficient (odd `d`) set to zero.
pub fn series_at_lightcone(target: &WarpedTarget<f64>, a: f64, order: usize) -> Result<FrobeniusSeries> {
    series_at_lightcone_with(target, a, 0.0, order)
}

/// Analytic branch at the light cone; for odd `d` the resonant coefficient is `resonant`.
///
/// For odd `d` the value `a` is constrained by a compatibility condition; a
/// violation beyond [`COMPATIBILITY_TOL`] means no analytic branch exists.
pub fn series_at_lightcone_with(target: &WarpedTarget<f64>, a: f64, resonant: f64, order: usize) -> Result<FrobeniusSeries> {
    let s = lightcone_unchecked(target, a, resonant, order)?;
    if let Some(r) = s.compatibility_residual {
        if r.abs() > COMPATIBILITY_TOL {
            return Err(Error::NoAnalyticBranch { residual: r });
        }
    }
    Ok(s)
}

/// Solves the light-cone compatibility condition for `a` (odd `d`), starting from `guess`.
pub fn lightcone_value(target: &WarpedTarget<f64>, guess: f64) -> Result<f64> {
    let Some(t) = lightcone_resonance(target.d()) else {
        return Ok(guess);
    };
    let g = |a: f64| -> Result<f64> {
        let s = lightcone_unchecked(target, a, 0.0, t)?;
        Ok(s.compatibility_residual.unwrap_or(0.0))
    };
    let mut a = guess;
    for _ in 0..60 {
        let r = g(a)?;
        if r.abs() < 1e-15 {
            return Ok(a);
        }
        let h = 1e-7 * (1.0 + a.abs());
        let slope = (g(a + h)? - g(a - h)?) / (2.0 * h);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let step = r / slope;
        a -= step;
        if step.abs() < 1e-15 * (1.0 + a.abs()) {
            return Ok(a);
        }
    }
    let r = g(a)?;
    if r.abs() < 1e-13 {
        Ok(a)
    } else {
        Err(Error::NoAnalyticBranch { residual: r })
    }
}

/// Series in `s = 1/ρ` from `f(∞) = c1` and `lim ρ² f′ = ctilde1`.
pub fn series_at_infinity(target: &WarpedTarget<f64>, c1: f64, ctilde1: f64, order: usize) -> Result<FrobeniusSeries> {
    check_order(target, order)?;
    let (ode, kind) = local_problem(SeriesCenter::Infinity, target.d());
    let solved = recurrence::solve(&ode, kind, target, &[c1, -ctilde1], order + 1, 0.0)?;
    Ok(FrobeniusSeries {
        center: SeriesCenter::Infinity,
        exponents: [0.0, 1.0],
        radius: 0.5 * radius_estimate(&solved.coeffs).min(1.0),
        coeffs: solved.coeffs,
        log_coefficient: 0.0,
        free: vec![FreeCoefficient { index: 0, value: c1 }, FreeCoefficient { index: 1, value: -ctilde1 }],
        compatibility_residual: None,
    })
}
