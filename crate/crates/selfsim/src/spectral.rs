//! Spectrum of the operator linearized about a profile,
//!
//! ```text
//! L(ψ₁, ψ₂) = (ψ₂ − Λψ₁ − ψ₁,  Δψ₁ − Λψ₂ − 2ψ₂ + V ψ₁),   V = (n−3) ρ⁻² η′(ρ ψ_{ε,1}),
//! ```
//!
//! by Chebyshev collocation, with resolution-doubling filters against spurious
//! eigenvalues.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chebyshev::ChebyshevGrid;
use crate::error::{Error, Result};
use crate::operators::{gauge_mode, potential_at};
use crate::profile::ProfileSolution;

/// Where the operator is discretized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    /// All of `[0, ∞)` through `y = ρ/(1+ρ)`, with unknowns `p₁ = ψ₁/(1−y)`
    /// and `p₂ = ψ₂/(1−y)²`, which builds the decay `⟨ρ⟩⁻¹`, `⟨ρ⟩⁻²` into the basis.
    Compactified,
    /// `[0, R]` with `R > 1`; both characteristic speeds are outgoing at `ρ = R`,
    /// so no boundary rows are needed.
    Truncated { radius: f64 },
}

impl Default for Domain {
    fn default() -> Self {
        Domain::Compactified
    }
}

/// The discretized operator together with what is needed to interpret its vectors.
#[derive(Clone, Debug)]
pub struct SpectralProblem {
    pub profile: ProfileSolution,
    pub domain: Domain,
    /// Chebyshev grid in the collocation variable (`y` or `ρ`).
    pub grid: ChebyshevGrid<f64>,
    /// `ρ` at the nodes.
    pub rho: Vec<f64>,
    /// `ψ_k = basis[k][i] · unknown` at node `i`.
    pub basis: [Vec<f64>; 2],
    /// Quadrature weights of the discrete inner product.
    pub quadrature: Vec<f64>,
    /// `2N × 2N`, unknowns ordered `(p₁, p₂)`.
    pub matrix: DMatrix<f64>,
}

impl SpectralProblem {
    pub fn size(&self) -> usize {
        self.rho.len()
    }

    /// Converts an unknown vector to samples of `(ψ₁, ψ₂)` at the nodes.
    pub fn to_fields(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.size();
        ((0..n).map(|i| self.basis[0][i] * x[i]).collect(), (0..n).map(|i| self.basis[1][i] * x[n + i]).collect())
    }

    /// Inverse of [`to_fields`](Self::to_fields).
    pub fn from_fields(&self, psi1: &[f64], psi2: &[f64]) -> Vec<f64> {
        let n = self.size();
        (0..2 * n).map(|k| if k < n { psi1[k] / self.basis[0][k] } else { psi2[k - n] / self.basis[1][k - n] }).collect()
    }

    /// Discrete inner product of two unknown vectors.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.size();
        (0..2 * n).map(|k| self.quadrature[k % n] * a[k] * b[k]).sum()
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

/// Assembles the operator at `n_nodes` collocation points on `domain`.
pub fn assemble(profile: &ProfileSolution, n_nodes: usize, domain: Domain) -> Result<SpectralProblem> {
    let dim = profile.target.n();
    let eta = profile.target.eta().clone();
    let potential = move |r: f64| potential_at(&eta, dim, r, profile.psi1_derivs(r)[0]);
    assemble_with(profile, n_nodes, domain, potential)
}

/// Same as [`assemble`] with the potential term dropped.
pub fn assemble_free(profile: &ProfileSolution, n_nodes: usize, domain: Domain) -> Result<SpectralProblem> {
    assemble_with(profile, n_nodes, domain, |_| 0.0)
}

fn assemble_with(profile: &ProfileSolution, n_nodes: usize, domain: Domain, potential: impl Fn(f64) -> f64) -> Result<SpectralProblem> {
    if n_nodes < 8 {
        return Err(Error::Config(format!("need at least 8 collocation nodes, got {n_nodes}")));
    }
    let n = n_nodes;
    let nf = profile.target.n() as f64;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    let (grid, rho, basis) = match domain {
        Domain::Compactified => {
            let grid = ChebyshevGrid::new(n, 0.0, 1.0);
            let d1 = grid.diff_matrix();
            let d2 = mat_mul(&d1, &d1, n);
            let mut rho = Vec::with_capacity(n);
            let mut b1 = Vec::with_capacity(n);
            let mut b2 = Vec::with_capacity(n);
            for i in 0..n {
                let y = grid.nodes[i];
                let z = 1.0 - y;
                let r = y / z;
                let v = potential(r);
                rho.push(r);
                b1.push(z);
                b2.push(z * z);
                // λp₁ = z p₂ − y z p₁′ − z p₁
                m[(i, n + i)] += z;
                m[(i, i)] -= z;
                // λp₂ = z³p₁″ + (n−1−4y) z²/y p₁′ + (2z − (n−1)z/y + V/z) p₁ − y z p₂′ − 2z p₂
                let c1 = (nf - 1.0 - 4.0 * y) * z * z / y;
                for j in 0..n {
                    let (dij, d2ij) = (d1[i * n + j], d2[i * n + j]);
                    m[(i, j)] -= y * z * dij;
                    m[(n + i, j)] += z * z * z * d2ij + c1 * dij;
                    m[(n + i, n + j)] -= y * z * dij;
                }
                m[(n + i, i)] += 2.0 * z - (nf - 1.0) * z / y + v / z;
                m[(n + i, n + i)] -= 2.0 * z;
            }
            (grid, rho, [b1, b2])
        }
        Domain::Truncated { radius } => {
            if !(radius > 1.0) {
                return Err(Error::Config(format!("truncation radius must exceed the light cone, got {radius}")));
            }
            let grid = ChebyshevGrid::new(n, 0.0, radius);
            let d1 = grid.diff_matrix();
            let d2 = mat_mul(&d1, &d1, n);
            let rho = grid.nodes.clone();
            for i in 0..n {
                let r = rho[i];
                let v = potential(r);
                m[(i, n + i)] += 1.0;
                m[(i, i)] -= 1.0;
                for j in 0..n {
                    let (dij, d2ij) = (d1[i * n + j], d2[i * n + j]);
                    m[(i, j)] -= r * dij;
                    m[(n + i, j)] += d2ij + (nf - 1.0) / r * dij;
                    m[(n + i, n + j)] -= r * dij;
                }
                m[(n + i, i)] += v;
                m[(n + i, n + i)] -= 2.0;
            }
            (grid, rho, [vec![1.0; n], vec![1.0; n]])
        }
    };
    let quadrature = grid.fejer_weights();
    Ok(SpectralProblem { profile: profile.clone(), domain, grid, rho, basis, quadrature, matrix: m })
}

/// One computed eigenvalue with its resolution drift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    /// Distance to the nearest eigenvalue of the half-resolution problem,
    /// relative to `max(1, |λ|)`.
    pub drift: f64,
    pub converged: bool,
}

impl Eigenvalue {
    pub fn complex(&self) -> Complex<f64> {
        Complex::new(self.re, self.im)
    }
}

/// The eigenvalue at `λ ≈ 1` and its eigenvectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnstableMode {
    pub eigenvalue: Eigenvalue,
    /// Right eigenvector in unknown coordinates, scaled to match the gauge mode.
    pub right: Vec<f64>,
    /// Left eigenvector with `⟨left, right⟩ = 1` in the discrete inner product.
    pub left: Vec<f64>,
    /// Relative sup-norm distance between the scaled right eigenvector and the gauge mode.
    pub gauge_mismatch: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub domain: Domain,
    pub nodes: usize,
    pub epsilon: f64,
    pub d: usize,
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<Eigenvalue>,
    /// Empirical gap `−max{Re λ : λ ≠ 1 converged}`, if any other eigenvalue converged.
    pub gap: Option<f64>,
    pub unstable: Option<UnstableMode>,
    /// Residual of the gauge-mode ODE for the underlying profile.
    pub gauge_residual: f64,
}

impl SpectrumReport {
    /// Converged eigenvalues other than the unstable one.
    pub fn stable_converged(&self) -> Vec<Eigenvalue> {
        let skip = self.unstable.as_ref().map(|u| u.eigenvalue);
        self.eigenvalues.iter().copied().filter(|e| e.converged && Some(*e) != skip).collect()
    }

    /// Rows `re, im, drift, converged` as CSV text.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("re,im,drift,converged\n");
        for e in &self.eigenvalues {
            s.push_str(&format!("{:.17e},{:.17e},{:.3e},{}\n", e.re, e.im, e.drift, e.converged));
        }
        s
    }
}

/// Tolerance of the resolution-doubling filter.
pub const DRIFT_TOL: f64 = 1e-6;

/// Parlett–Reinsch diagonal balancing; leaves the spectrum unchanged and
/// reduces its sensitivity to rounding for badly scaled collocation matrices.
fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix * radix;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix * radix;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    let mut m = m.clone();
    balance(&mut m);
    let schur = Schur::try_new(m.clone(), 1e-15, 100_000).ok_or_else(|| {
        Error::Eigensolver(format!("QR iteration did not converge on a {}x{} matrix", m.nrows(), m.ncols()))
    })?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Dense eigensolve with the resolution filter against the half-size problem.
pub fn eigen(problem: &SpectralProblem) -> Result<SpectrumReport> {
    let fine = eigenvalues(&problem.matrix)?;
    let coarse_problem = assemble(&problem.profile, problem.size() / 2, problem.domain)?;
    let coarse = eigenvalues(&coarse_problem.matrix)?;
    let mut eigs: Vec<Eigenvalue> = fine
        .iter()
        .map(|&z| {
            let drift = coarse.iter().map(|&w| (z - w).norm()).fold(f64::INFINITY, f64::min) / z.norm().max(1.0);
            Eigenvalue { re: z.re, im: z.im, drift, converged: drift <= DRIFT_TOL }
        })
        .collect();
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));

    let unstable = eigs
        .iter()
        .copied()
        .filter(|e| e.im.abs() < 1e-8)
        .min_by(|a, b| (a.re - 1.0).abs().total_cmp(&(b.re - 1.0).abs()))
        .filter(|e| (e.re - 1.0).abs() < 1e-2)
        .map(|e| unstable_mode(problem, e))
        .transpose()?;
    let skip = unstable.as_ref().map(|u| u.eigenvalue);
    let gap = eigs
        .iter()
        .filter(|e| e.converged && Some(**e) != skip)
        .map(|e| e.re)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))))
        .map(|r| -r);
    Ok(SpectrumReport {
        domain: problem.domain,
        nodes: problem.size(),
        epsilon: problem.profile.target.epsilon(),
        d: problem.profile.target.d(),
        eigenvalues: eigs,
        gap,
        unstable,
        gauge_residual: verify_gauge_ode(&problem.profile),
    })
}

/// The gap at several resolutions and whether `λ = 1` is isolated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStudy {
    pub d: usize,
    pub epsilon: f64,
    /// `(N, ω̂)` per resolution, in the order requested.
    pub gaps: Vec<(usize, Option<f64>)>,
    /// `ω̂` at the finest resolution.
    pub gap: Option<f64>,
    /// `|ω̂_N − ω̂_{2N}| / ω̂_{2N}` between the two finest resolutions.
    pub relative_change: Option<f64>,
    /// Whether the converged eigenvalues with `Re λ ≥ −ω̂/2` reduce to the one at 1.
    pub isolated: bool,
}

/// Runs [`eigen`] at each resolution in `nodes` (increasing).
pub fn gap_study(profile: &ProfileSolution, nodes: &[usize], domain: Domain) -> Result<GapStudy> {
    if nodes.is_empty() {
        return Err(Error::Config("no resolutions given for the gap study".into()));
    }
    let mut gaps = Vec::with_capacity(nodes.len());
    let mut last = None;
    for &n in nodes {
        let report = eigen(&assemble(profile, n, domain)?)?;
        gaps.push((n, report.gap));
        last = Some(report);
    }
    let report = last.expect("at least one resolution");
    let gap = report.gap;
    let relative_change = match gaps.as_slice() {
        [.., (_, Some(a)), (_, Some(b))] => Some((a - b).abs() / b.abs()),
        _ => None,
    };
    let isolated = match (gap, &report.unstable) {
        (Some(g), Some(u)) if g > 0.0 && u.eigenvalue.converged => {
            report.eigenvalues.iter().filter(|e| e.converged && e.re >= -0.5 * g).count() == 1
        }
        _ => false,
    };
    Ok(GapStudy { d: report.d, epsilon: report.epsilon, gaps, gap, relative_change, isolated })
}

/// Inverse iteration for a real eigenvalue `lambda` of `m` (or of `mᵀ`).
fn inverse_iteration(m: &DMatrix<f64>, lambda: f64, transpose: bool) -> Result<DVector<f64>> {
    let n = m.nrows();
    let mut shifted = if transpose { m.transpose() } else { m.clone() };
    let shift = lambda + 1e-10 * lambda.abs().max(1.0);
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = shifted.lu();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.01 * ((i * 7919) % 101) as f64);
    for _ in 0..4 {
        x = lu.solve(&x).ok_or_else(|| Error::Eigensolver("shifted matrix is exactly singular".into()))?;
        let norm = x.amax();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Eigensolver("inverse iteration produced a non-finite vector".into()));
        }
        x /= norm;
    }
    Ok(x)
}

fn unstable_mode(problem: &SpectralProblem, eig: Eigenvalue) -> Result<UnstableMode> {
    let m = &problem.matrix;
    let right = inverse_iteration(m, eig.re, false)?;
    let left_t = inverse_iteration(m, eig.re, true)?;
    // mᵀ ℓ̂ = λ ℓ̂ in the Euclidean pairing; divide by the quadrature weights for ⟨·,·⟩.
    let n = problem.size();
    let mut left: Vec<f64> = (0..2 * n).map(|k| left_t[k] / problem.quadrature[k % n]).collect();

    let (g1, g2) = gauge_mode(&problem.profile, &problem.rho);
    let (r1, r2) = problem.to_fields(right.as_slice());
    let num: f64 = g1.values.iter().zip(&r1).chain(g2.values.iter().zip(&r2)).map(|(a, b)| a * b).sum();
    let den: f64 = r1.iter().chain(&r2).map(|b| b * b).sum();
    let scale = num / den;
    let right: Vec<f64> = right.iter().map(|v| v * scale).collect();
    let (r1, r2) = problem.to_fields(&right);
    let gsup = g1.values.iter().chain(&g2.values).fold(0.0f64, |m, v| m.max(v.abs()));
    let gauge_mismatch = g1
        .values
        .iter()
        .zip(&r1)
        .chain(g2.values.iter().zip(&r2))
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        / gsup;

    let pairing = problem.inner(&left, &right);
    if pairing == 0.0 || !pairing.is_finite() {
        return Err(Error::Degeneracy(format!("left and right eigenvectors are orthogonal at λ = {}", eig.re)));
    }
    left.iter_mut().for_each(|v| *v /= pairing);
    Ok(UnstableMode { eigenvalue: eig, right, left, gauge_mismatch })
}

/// Max-norm residual of
/// `(1−ρ²)w″ + ((n−1)/ρ − 6ρ)w′ − 6w + (n−3)ρ⁻²η′(ρψ₁)w` for `w = f′` on the profile grid.
pub fn verify_gauge_ode(profile: &ProfileSolution) -> f64 {
    let nodes: Vec<f64> = profile.grid.iter().copied().filter(|&r| r > 0.0).collect();
    gauge_ode_residual(profile, &nodes, |r| {
        let f = profile.derivs(r);
        [f[1], f[2], f[3]]
    })
}

/// Gauge-mode ODE residual for an arbitrary `w` given as `(w, w′, w″)`.
pub fn gauge_ode_residual(profile: &ProfileSolution, nodes: &[f64], w: impl Fn(f64) -> [f64; 3]) -> f64 {
    let n = profile.target.n();
    let nf = n as f64;
    let eta = profile.target.eta();
    nodes
        .iter()
        .map(|&r| {
            let [w0, w1, w2] = w(r);
            let v = potential_at(eta, n, r, profile.psi1_derivs(r)[0]);
            ((1.0 - r * r) * w2 + ((nf - 1.0) / r - 6.0 * r) * w1 - 6.0 * w0 + v * w0).abs()
        })
        .fold(0.0, f64::max)
}

/// Rank-one spectral projector `u ↦ ⟨ℓ, u⟩ r` onto the unstable eigenspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    pub right: Vec<f64>,
    pub left: Vec<f64>,
    pub quadrature: Vec<f64>,
}

impl Projector {
    pub fn coefficient(&self, u: &[f64]) -> f64 {
        let n = self.quadrature.len();
        (0..u.len()).map(|k| self.quadrature[k % n] * self.left[k] * u[k]).sum()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let c = self.coefficient(u);
        self.right.iter().map(|r| c * r).collect()
    }
}

/// The projector from a report whose unstable eigenvalue is simple and converged.
pub fn unstable_projection(report: &SpectrumReport, problem: &SpectralProblem) -> Result<Projector> {
    let mode = report.unstable.as_ref().ok_or_else(|| Error::Degeneracy("no eigenvalue near 1".into()))?;
    if !mode.eigenvalue.converged {
        return Err(Error::Degeneracy(format!("eigenvalue {} did not converge (drift {:e})", mode.eigenvalue.re, mode.eigenvalue.drift)));
    }
    let lam = mode.eigenvalue.complex();
    let neighbours = report.eigenvalues.iter().filter(|e| (e.complex() - lam).norm() < 1e-3).count();
    if neighbours != 1 {
        return Err(Error::Degeneracy(format!("{neighbours} eigenvalues within 1e-3 of {}", lam.re)));
    }
    Ok(Projector { right: mode.right.clone(), left: mode.left.clone(), quadrature: problem.quadrature.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WarpedTarget;
    use crate::profile::{solve_profile, ProfileConfig};
    use approx::assert_relative_eq;

    fn profile(d: usize) -> ProfileSolution {
        solve_profile(&WarpedTarget::sphere(d).unwrap(), &ProfileConfig::default()).unwrap()
    }

    #[test]
    fn free_operator_on_decaying_field() {
        // ψ₁ = 1/(1+ρ), ψ₂ = 0.
        let p = profile(3);
        let prob = assemble_free(&p, 24, Domain::Compactified).unwrap();
        let n = prob.size();
        let nf = p.target.n() as f64;
        let x: Vec<f64> = (0..2 * n).map(|k| if k < n { 1.0 } else { 0.0 }).collect();
        let y = &prob.matrix * DVector::from_vec(x);
        let (l1, l2) = prob.to_fields(y.as_slice());
        for i in 0..n {
            let r = prob.rho[i];
            let q = 1.0 + r;
            assert_relative_eq!(l1[i], -1.0 / (q * q), epsilon = 1e-10);
            let lap = 2.0 / q.powi(3) - (nf - 1.0) / (r * q * q);
            assert_relative_eq!(l2[i], lap, epsilon = 1e-8, max_relative = 1e-10);
        }
    }

    #[test]
    fn gauge_ode_for_ground_state() {
        let p = profile(3);
        assert!(verify_gauge_ode(&p) < 1e-9);
        assert_eq!(gauge_ode_residual(&p, &[0.5, 1.0], |_| [0.0; 3]), 0.0);
    }

    #[test]
    fn gauge_eigenvalue_and_projector() {
        let p = profile(5);
        let prob = assemble(&p, 64, Domain::Compactified).unwrap();
        let rep = eigen(&prob).unwrap();
        let u = rep.unstable.as_ref().unwrap();
        assert!((u.eigenvalue.re - 1.0).abs() < 1e-8);
        assert!(u.gauge_mismatch < 1e-7, "{}", u.gauge_mismatch);
        let proj = unstable_projection(&rep, &prob).unwrap();
        assert_relative_eq!(proj.coefficient(&proj.right), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn gap_is_resolved_on_the_truncated_domain() {
        let study = gap_study(&profile(3), &[64, 128], Domain::Truncated { radius: 2.0 }).unwrap();
        assert!(study.isolated);
        let g = study.gap.unwrap();
        assert!(g > 0.0 && study.relative_change.unwrap() < 1e-6, "{study:?}");
        assert!(gap_study(&profile(3), &[], Domain::Compactified).is_err());
    }
}
