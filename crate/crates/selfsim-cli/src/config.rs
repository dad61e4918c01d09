//! Experiment configuration: one file with a block per stage, TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use selfsim::evolution::EvolutionConfig;
use selfsim::geometry::{PerturbationBasis, WarpedTarget};
use selfsim::norms::NormSpec;
use selfsim::profile::ProfileConfig;
use selfsim::spectral::Domain;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetBlock {
    pub d: usize,
    pub epsilon: f64,
    /// Used instead of `epsilon` when nonempty.
    pub epsilon_grid: Vec<f64>,
    /// `(m, c_m)` pairs of `α(u) = Σ c_m (1 − cos 2mu)`.
    pub basis: Vec<(u32, f64)>,
}

impl Default for TargetBlock {
    fn default() -> Self {
        Self { d: 3, epsilon: 0.0, epsilon_grid: Vec::new(), basis: vec![(1, 0.5)] }
    }
}

impl TargetBlock {
    pub fn epsilons(&self) -> Vec<f64> {
        if self.epsilon_grid.is_empty() {
            vec![self.epsilon]
        } else {
            self.epsilon_grid.clone()
        }
    }

    pub fn target(&self, epsilon: f64) -> Result<WarpedTarget<f64>, CliError> {
        let basis = PerturbationBasis::new(self.basis.clone())?;
        Ok(WarpedTarget::new(self.d, epsilon, basis)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralBlock {
    /// Collocation sizes, increasing; each run is filtered against half its size.
    pub nodes: Vec<usize>,
    /// Domain for the gauge eigenvalue and eigenvector.
    pub gauge_domain: Domain,
    /// Domain for the gap estimate.
    pub gap_domain: Domain,
    /// Half-plane `Re λ ≥ −ω₀` that must contain only the gauge eigenvalue;
    /// half the measured gap when absent.
    pub omega0: Option<f64>,
}

impl Default for SpectralBlock {
    fn default() -> Self {
        Self { nodes: vec![64, 128], gauge_domain: Domain::Compactified, gap_domain: Domain::Truncated { radius: 2.0 }, omega0: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetBlock,
    pub profile: ProfileConfig,
    pub spectral: SpectralBlock,
    pub evolution: EvolutionConfig,
    /// Replaces `evolution.norms` when given.
    pub norms: Option<NormSpec>,
    pub output: PathBuf,
    /// Seeds the randomized perturbation phase.
    pub seed: u64,
    /// Concurrent jobs in a sweep; 0 uses every core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            target: TargetBlock::default(),
            profile: ProfileConfig::default(),
            spectral: SpectralBlock::default(),
            evolution: EvolutionConfig::default(),
            norms: None,
            output: PathBuf::from("selfsim-out"),
            seed: 0,
            workers: 0,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: Option<Vec<f64>>,
    pub d: Option<usize>,
    pub grid: Option<Vec<usize>>,
    pub tau_max: Option<f64>,
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    /// Applies overrides and pushes shared settings into the stage blocks.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(p) = &o.output {
            self.output = p.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(e) = &o.epsilon {
            if let Some(&first) = e.first() {
                self.target.epsilon = first;
            }
            self.target.epsilon_grid = e.clone();
        }
        if let Some(d) = o.d {
            self.target.d = d;
        }
        if let Some(g) = &o.grid {
            // One value sets the evolution grid; a list sets the collocation sizes.
            match g.as_slice() {
                [m] => self.evolution.intervals = *m,
                _ => self.spectral.nodes = g.clone(),
            }
        }
        if let Some(t) = o.tau_max {
            self.evolution.tau_max = t;
        }
        if let Some(n) = &self.norms {
            self.evolution.norms = n.clone();
        }
        self.evolution.perturbation.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for &e in &self.target.epsilons() {
            self.target.target(e)?;
        }
        let nodes = &self.spectral.nodes;
        if nodes.is_empty() || nodes.windows(2).any(|w| w[1] <= w[0]) || nodes[0] < 8 {
            return Err(CliError::Validation(format!("spectral node counts {nodes:?} must increase from at least 8")));
        }
        self.evolution.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, leaving out the output directory and
    /// worker count, which do not change results.
    pub fn hash(&self) -> String {
        let neutral = Self { output: PathBuf::new(), workers: 0, ..self.clone() };
        let json = serde_json::to_string(&neutral).expect("configuration serializes");
        format!("{:x}", Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_both_formats() {
        let c = ExperimentConfig::default();
        let t: ExperimentConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        let j: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(t, c);
        assert_eq!(j, c);
        let empty: ExperimentConfig = toml::from_str("").unwrap();
        assert_eq!(empty, c);
    }

    #[test]
    fn hash_ignores_output_location_only() {
        let c = ExperimentConfig::default();
        let moved = ExperimentConfig { output: "elsewhere".into(), workers: 8, ..c.clone() };
        assert_eq!(c.hash(), moved.hash());
        let reseeded = ExperimentConfig { seed: 1, ..c.clone() };
        assert_ne!(c.hash(), reseeded.hash());
    }

    #[test]
    fn overrides_take_precedence() {
        let o = Overrides { epsilon: Some(vec![-0.01, 0.01]), grid: Some(vec![256]), seed: Some(9), ..Default::default() };
        let c = ExperimentConfig::default().resolve(&o).unwrap();
        assert_eq!(c.target.epsilons(), [-0.01, 0.01]);
        assert_eq!(c.evolution.intervals, 256);
        assert_eq!(c.evolution.perturbation.seed, 9);
        let o = Overrides { grid: Some(vec![32, 64, 128]), ..Default::default() };
        assert_eq!(ExperimentConfig::default().resolve(&o).unwrap().spectral.nodes, [32, 64, 128]);
        let o = Overrides { grid: Some(vec![64, 32]), ..Default::default() };
        assert!(matches!(ExperimentConfig::default().resolve(&o), Err(CliError::Validation(_))));
    }

    #[test]
    fn shipped_configs_are_valid() {
        for text in [include_str!("../configs/stable_blowup.toml"), include_str!("../configs/sweep.toml")] {
            let c: ExperimentConfig = toml::from_str(text).unwrap();
            c.resolve(&Overrides::default()).unwrap();
        }
    }
}
