//! Artifact writing. Every JSON file embeds a [`Manifest`]; every CSV starts
//! with one `#` comment line carrying the same identification.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Thresholds that decide the exit status.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub static_residual: f64,
    pub gauge_ode_residual: f64,
    pub gauge_eigenvalue: f64,
    pub gauge_eigenvector: f64,
    pub gap_change: f64,
    pub tail_slope: f64,
    pub tail_drift: f64,
    pub blowup_time: f64,
    pub growth_rate: f64,
    pub plateau: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    static_residual: 1e-9,
    gauge_ode_residual: 1e-8,
    gauge_eigenvalue: 1e-6,
    gauge_eigenvector: 1e-6,
    gap_change: 0.1,
    tail_slope: 0.05,
    tail_drift: 1e-3,
    blowup_time: 0.05,
    growth_rate: 0.05,
    plateau: 0.01,
};

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub tolerances: Tolerances,
    pub config: ExperimentConfig,
}

#[derive(Serialize)]
struct Wrapped<'a, T> {
    manifest: &'a Manifest,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes into the output directory and remembers what it wrote.
pub struct Writer {
    dir: PathBuf,
    pub manifest: Manifest,
    pub files: Vec<PathBuf>,
}

impl Writer {
    pub fn new(command: &str, config: &ExperimentConfig) -> Result<Self, CliError> {
        let dir = config.output.clone();
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            tolerances: TOLERANCES,
            config: config.clone(),
        };
        Ok(Self { dir, manifest, files: Vec::new() })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(&Wrapped { manifest: &self.manifest, body })
            .map_err(|e| CliError::Validation(format!("cannot serialize {name}: {e}")))?;
        self.write(name, text + "\n")
    }

    /// `body` is complete CSV text with its header line.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let m = &self.manifest;
        self.write(name, format!("# selfsim {} {} config {}\n{body}", m.version, m.command, m.config_hash))
    }

    /// Serializes `rows` with a header taken from the row type.
    pub fn csv_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Validation(format!("cannot serialize {name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Validation(e.to_string()))?;
        self.csv(name, &String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    fn write(&mut self, name: &str, text: String) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    /// Index of everything written, as `manifest.json`.
    pub fn finish(mut self, passed: bool) -> Result<Vec<PathBuf>, CliError> {
        #[derive(Serialize)]
        struct Index {
            passed: bool,
            files: Vec<String>,
        }
        let files = self.files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
        self.json("manifest.json", &Index { passed, files })?;
        Ok(self.files)
    }
}

pub fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

/// `d3_eps+0.0200`.
pub fn tag(d: usize, epsilon: f64) -> String {
    format!("d{d}_eps{epsilon:+.4}")
}
