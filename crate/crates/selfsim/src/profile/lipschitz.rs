//! Lipschitz dependence of the profile correction on `ε`.

use serde::{Deserialize, Serialize};

use super::ProfileSolution;

/// Difference quotients of one pair of profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzPair {
    pub epsilon: f64,
    pub kappa: f64,
    /// `sup |∂ᵏ((φ_ε − φ_κ)/ρ)| / |ε − κ|` for `k = 0, 1, 2`.
    pub quotients: [f64; 3],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub pairs: Vec<LipschitzPair>,
    /// Componentwise max over pairs; `None` when fewer than two profiles were given.
    pub max: Option<[f64; 3]>,
}

/// Difference quotients over all pairs of `profiles` on `nodes`.
///
/// Since `f₀` cancels, `(φ_ε − φ_κ)/ρ = ψ_{ε,1} − ψ_{κ,1}`, which is evaluated
/// through each profile's regular `f/ρ` evaluator.
pub fn lipschitz_in_epsilon(profiles: &[ProfileSolution], nodes: &[f64]) -> LipschitzReport {
    let samples: Vec<Vec<[f64; 3]>> = profiles.iter().map(|p| nodes.iter().map(|&r| p.psi1_derivs(r)).collect()).collect();
    let mut pairs = Vec::new();
    for i in 0..profiles.len() {
        for j in (i + 1)..profiles.len() {
            let (e, k) = (profiles[i].target.epsilon(), profiles[j].target.epsilon());
            let de = (e - k).abs();
            if de == 0.0 {
                continue;
            }
            let mut q = [0.0f64; 3];
            for (a, b) in samples[i].iter().zip(&samples[j]) {
                for m in 0..3 {
                    q[m] = q[m].max((a[m] - b[m]).abs() / de);
                }
            }
            pairs.push(LipschitzPair { epsilon: e, kappa: k, quotients: q });
        }
    }
    let max = (!pairs.is_empty()).then(|| {
        pairs.iter().fold([0.0f64; 3], |m, p| [m[0].max(p.quotients[0]), m[1].max(p.quotients[1]), m[2].max(p.quotients[2])])
    });
    LipschitzReport { pairs, max }
}
