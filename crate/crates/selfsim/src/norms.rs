//! Discrete radial norms.
//!
//! Seminorms are computed without the area of the unit sphere:
//! `‖u‖²_{Ḣʲ} = ∫₀^R |Dʲu|² ρⁿ⁻¹ dρ` for a radial function on `ℝⁿ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::fornberg_weights;
use crate::operators::{Parity, RadialField};
use crate::quadrature::{cubic_weights, gauss_legendre, gregory_weights, uniform_spacing};
use crate::scalar::Real;

/// Which norms to record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormSpec {
    /// Integer seminorm orders.
    pub orders: Vec<usize>,
    /// Exponents `k` of the weighted sup norms `sup ⟨ρ⟩ᵏ|u|`.
    pub sup_weights: Vec<f64>,
    /// Optional fractional order evaluated through the Hankel transform.
    pub fractional: Option<f64>,
    /// Gauss–Legendre points per frequency panel of the Hankel quadrature.
    pub quadrature_points: usize,
}

impl Default for NormSpec {
    fn default() -> Self {
        Self { orders: vec![0, 1, 2], sup_weights: vec![1.0, 2.0], fractional: None, quadrature_points: 16 }
    }
}

/// Largest order the stencils support with meaningful accuracy.
pub const MAX_ORDER: usize = 4;

impl NormSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(&j) = self.orders.iter().find(|&&j| j > MAX_ORDER) {
            return Err(Error::Config(format!("seminorm order {j} exceeds {MAX_ORDER}")));
        }
        if let Some(s) = self.fractional {
            if !(0.0..=MAX_ORDER as f64).contains(&s) {
                return Err(Error::Config(format!("fractional order {s} outside [0, {MAX_ORDER}]")));
            }
        }
        if self.quadrature_points < 4 {
            return Err(Error::Config("at least 4 quadrature points per panel".into()));
        }
        Ok(())
    }
}

/// A norm value with an optional accuracy warning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Seminorm<T> {
    pub value: T,
    pub warning: Option<String>,
}

/// Quadrature weights for `∫₀^R g dρ` on the field's nodes.
pub fn quadrature_weights(nodes: &[f64]) -> Vec<f64> {
    match uniform_spacing(nodes) {
        Some(h) => gregory_weights(nodes.len(), h),
        None => cubic_weights(nodes),
    }
}

/// First and second derivatives at the nodes from seven-point local stencils,
/// with mirrored ghost nodes at the origin according to parity.
fn derivatives(x: &[f64], v: &[f64], parity: Parity) -> (Vec<f64>, Vec<f64>) {
    let width = 7.min(x.len());
    let sign = if parity == Parity::Even { 1.0 } else { -1.0 };
    let ghosts: Vec<usize> = if x[0] == 0.0 { (1..x.len()).take(3).rev().collect() } else { Vec::new() };
    let mut ex: Vec<f64> = ghosts.iter().map(|&k| -x[k]).collect();
    let mut ev: Vec<f64> = ghosts.iter().map(|&k| sign * v[k]).collect();
    let off = ex.len();
    ex.extend_from_slice(x);
    ev.extend_from_slice(v);
    let mut d1 = vec![0.0; x.len()];
    let mut d2 = vec![0.0; x.len()];
    for i in 0..x.len() {
        let c = i + off;
        let lo = c.saturating_sub(width / 2).min(ex.len() - width);
        let w = fornberg_weights(ex[c], &ex[lo..lo + width], 2);
        for k in 0..width {
            d1[i] += w[1][k] * ev[lo + k];
            d2[i] += w[2][k] * ev[lo + k];
        }
    }
    if x[0] == 0.0 && parity == Parity::Even {
        d1[0] = 0.0;
    }
    (d1, d2)
}

fn laplacian(x: &[f64], v: &[f64], parity: Parity, n: usize) -> Vec<f64> {
    let (d1, d2) = derivatives(x, v, parity);
    x.iter()
        .enumerate()
        .map(|(i, &r)| if r == 0.0 { n as f64 * d2[i] } else { d2[i] + (n - 1) as f64 * d1[i] / r })
        .collect()
}

/// `|Dʲu|²` at the nodes. For `j ≤ 2` the sum over all partial derivatives of
/// order `j` is assembled exactly; higher orders reduce to powers of the
/// Laplacian, which carry the same `Ḣʲ` content.
fn derivative_content(x: &[f64], v: &[f64], parity: Parity, n: usize, j: usize) -> Vec<f64> {
    match j {
        0 => v.iter().map(|a| a * a).collect(),
        1 => derivatives(x, v, parity).0.iter().map(|a| a * a).collect(),
        2 => {
            let (d1, d2) = derivatives(x, v, parity);
            x.iter()
                .enumerate()
                .map(|(i, &r)| {
                    let q = if r == 0.0 { d2[i] } else { d1[i] / r };
                    d2[i] * d2[i] + (n - 1) as f64 * q * q
                })
                .collect()
        }
        _ => {
            let mut w = v.to_vec();
            for _ in 0..j / 2 {
                w = laplacian(x, &w, parity, n);
            }
            if j % 2 == 1 {
                w = derivatives(x, &w, parity).0;
            }
            w.iter().map(|a| a * a).collect()
        }
    }
}

fn seminorm_f64(x: &[f64], v: &[f64], parity: Parity, n: usize, j: usize) -> f64 {
    let g = derivative_content(x, v, parity, n, j);
    let w = quadrature_weights(x);
    let s: f64 = (0..x.len()).map(|i| w[i] * g[i] * x[i].powi(n as i32 - 1)).sum();
    s.max(0.0).sqrt()
}

/// `‖u‖_{Ḣʲ}` of a radial field in `n` dimensions over its node range.
pub fn sobolev_seminorm<T: Real>(field: &RadialField<T>, n: usize, j: usize) -> Result<Seminorm<T>> {
    if field.len() < 8 {
        return Err(Error::Config(format!("{} nodes are too few for a seminorm", field.len())));
    }
    if j > MAX_ORDER {
        return Err(Error::Config(format!("seminorm order {j} exceeds {MAX_ORDER}")));
    }
    let x: Vec<f64> = field.nodes.iter().map(|v| v.to_f64_lossy()).collect();
    let v: Vec<f64> = field.values.iter().map(|v| v.to_f64_lossy()).collect();
    let value = seminorm_f64(&x, &v, field.parity, n, j);
    // Resolution check against every other node.
    let mut warning = None;
    if x.len() >= 32 && value > 0.0 {
        let xs: Vec<f64> = x.iter().step_by(2).copied().collect();
        let vs: Vec<f64> = v.iter().step_by(2).copied().collect();
        let coarse = if uniform_spacing(&x).is_some() && (x.len() - 1) % 2 != 0 {
            None
        } else {
            Some(seminorm_f64(&xs, &vs, field.parity, n, j))
        };
        if let Some(c) = coarse {
            let rel = (c - value).abs() / value;
            if rel > 1e-3 {
                warning = Some(format!("under-resolved: halving the grid changes the value by {rel:.1e}"));
            }
        }
    }
    if j > 3 && warning.is_none() {
        warning = Some(format!("order {j} relies on repeated numerical differentiation"));
    }
    Ok(Seminorm { value: T::of(value), warning })
}

/// `sup ⟨ρ⟩ᵏ |u|`.
pub fn weighted_sup<T: Real>(field: &RadialField<T>, k: T) -> T {
    field
        .nodes
        .iter()
        .zip(&field.values)
        .fold(T::zero(), |m, (&r, &v)| m.max((T::one() + r * r).powf(k / T::of(2.0)) * v.abs()))
}

/// Log-log least-squares fit of `|u| ≈ C ρᵖ` over a tail window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub log_constant: f64,
    pub points: usize,
    /// Standard error of the exponent.
    pub stderr: f64,
    /// The field changes sign in the window; the fit used `|u|`.
    pub sign_change: bool,
}

pub fn decay_exponent<T: Real>(field: &RadialField<T>, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let last = field.nodes.last().map(|v| v.to_f64_lossy()).unwrap_or(0.0);
    if last < lo {
        return Err(Error::Config(format!("field sampled to {last}, window starts at {lo}")));
    }
    let mut pts = Vec::new();
    let mut signs = (false, false);
    for (&r, &v) in field.nodes.iter().zip(&field.values) {
        let (r, v) = (r.to_f64_lossy(), v.to_f64_lossy());
        if r >= lo && r <= hi && v != 0.0 {
            pts.push((r.ln(), v.abs().ln()));
            if v > 0.0 {
                signs.0 = true;
            } else {
                signs.1 = true;
            }
        }
    }
    if pts.len() < 3 {
        return Err(Error::Config(format!("only {} nonzero samples in the decay window", pts.len())));
    }
    let fit = linear_fit(&pts);
    Ok(DecayFit {
        exponent: fit.slope,
        log_constant: fit.intercept,
        points: pts.len(),
        stderr: fit.slope_stderr,
        sign_change: signs.0 && signs.1,
    })
}

/// Ordinary least-squares line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

pub fn linear_fit(pts: &[(f64, f64)]) -> LineFit {
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let slope_stderr = if pts.len() > 2 && sxx > 0.0 { (sse / (m - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    LineFit { slope, intercept, slope_stderr }
}

/// `(∫₀^∞ k^{2s} |û(k)|² kⁿ⁻¹ dk)^{1/2}` with `û` the radial Fourier transform,
/// computed as a Hankel transform by quadrature on the field's nodes.
/// Integer `s` reproduces [`sobolev_seminorm`].
pub fn fractional_norm(field: &RadialField<f64>, n: usize, s: f64, panel_points: usize) -> Result<f64> {
    if !(0.0..=MAX_ORDER as f64).contains(&s) {
        return Err(Error::Config(format!("fractional order {s} outside [0, {MAX_ORDER}]")));
    }
    if field.parity != Parity::Even {
        return Err(Error::Config("Hankel transform expects an even field".into()));
    }
    let x = &field.nodes;
    let v = &field.values;
    let peak = field.sup_norm();
    if peak == 0.0 {
        return Ok(0.0);
    }
    let last = x.len() - 1;
    // The truncated transform is meaningful only if the field has decayed
    // well below ρ⁻¹ at the edge of its support.
    let tail = v[last].abs() * x[last].powf(n as f64 / 2.0);
    if tail > 1e-10 * peak {
        return Err(Error::Refused(format!(
            "field does not decay inside [0, {}]: |u(R)| R^(n/2) = {tail:.2e}",
            x[last]
        )));
    }
    let nu = n as f64 / 2.0 - 1.0;
    let w = quadrature_weights(x);
    let cw: Vec<f64> = (0..x.len()).map(|i| w[i] * v[i] * x[i].powf(nu + 1.0)).collect();
    let transform = |k: f64| -> f64 {
        let sum: f64 = (0..x.len()).filter(|&i| x[i] > 0.0).map(|i| cw[i] * puruspe::Jnu_Ynu(nu, k * x[i]).0).sum();
        sum * k.powf(-nu)
    };
    let h_max = x.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
    let k_limit = std::f64::consts::PI / h_max;
    let (gx, gw) = gauss_legendre(panel_points);
    let width = 0.5;
    let mut total = 0.0;
    let mut quiet = 0;
    let mut a = 0.0;
    while a < k_limit {
        let b = (a + width).min(k_limit);
        let mut panel = 0.0;
        for (t, wt) in gx.iter().zip(&gw) {
            let k = 0.5 * (a + b) + 0.5 * (b - a) * t;
            let u = transform(k);
            panel += 0.5 * (b - a) * wt * k.powf(2.0 * s + n as f64 - 1.0) * u * u;
        }
        total += panel;
        if panel <= 1e-17 * total {
            quiet += 1;
            if quiet >= 4 {
                break;
            }
        } else {
            quiet = 0;
        }
        a = b;
    }
    Ok(total.sqrt())
}
