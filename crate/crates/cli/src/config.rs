//! Benchmark configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tabcluster_core::data::{synth_blobs, Dataset};
use tabcluster_core::embed::MethodConfig;
use tabcluster_core::eval::{ArchitectureConfig, BenchMethod, ProtocolOptions};
use tabcluster_core::numkit::Rng;

use crate::error::{BenchError, DataError};
use crate::manifest::{load_csv, DatasetManifest};

pub const UNSUPPORTED_METHODS: [&str; 2] = ["aecm", "dynae"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetSource {
    /// Path to a manifest JSON.
    Manifest(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub name: String,
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    /// Minimum center distance, in units of `sigma`.
    pub separation: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn generate(&self) -> tabcluster_core::Result<Dataset> {
        let mut ds = synth_blobs(
            self.n,
            self.dim,
            self.k,
            self.separation * self.sigma,
            self.sigma,
            &mut Rng::new(self.seed),
        )?;
        ds.name = self.name.clone();
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetSource>,
    pub methods: Vec<String>,
    #[serde(default)]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub output_dir: PathBuf,
    /// Trainer settings shared by every grid candidate; `method`, `gamma`,
    /// `epochs` and `seed` are filled in per unit.
    #[serde(default)]
    pub training: MethodConfig,
    #[serde(default)]
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub stratified: bool,
    /// Accept CSVs whose N/d/K differ from their manifest.
    #[serde(default)]
    pub allow_shape_override: bool,
    /// Write a JSON checkpoint of every trained embedding model.
    #[serde(default)]
    pub checkpoints: bool,
}

fn default_epochs() -> usize {
    1000
}

fn default_parallelism() -> usize {
    1
}

impl BenchmarkConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn read(path: &Path) -> Result<Self, BenchError> {
        let text = fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.output_dir = dir.join(&cfg.output_dir);
        for src in &mut cfg.datasets {
            if let DatasetSource::Manifest(p) = src {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Parsed method list, in configuration order.
    pub fn bench_methods(&self) -> Result<Vec<BenchMethod>, BenchError> {
        let mut out = Vec::with_capacity(self.methods.len());
        for name in &self.methods {
            let key = name.to_ascii_lowercase();
            if UNSUPPORTED_METHODS.contains(&key.as_str()) {
                return Err(BenchError::Config(format!(
                    "method {name:?} unsupported: objective unspecified in source paper"
                )));
            }
            let m = BenchMethod::from_id(&key).ok_or_else(|| BenchError::Config(format!("unknown method {name:?}")))?;
            if out.contains(&m) {
                return Err(BenchError::Config(format!("method {name:?} listed twice")));
            }
            out.push(m);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<Vec<BenchMethod>, BenchError> {
        let methods = self.bench_methods()?;
        let fail = |msg: &str| Err(BenchError::Config(msg.into()));
        if methods.is_empty() {
            return fail("methods must not be empty");
        }
        if self.datasets.is_empty() {
            return fail("datasets must not be empty");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.parallelism == 0 {
            return fail("parallelism must be at least 1");
        }
        if methods.iter().any(|m| m.is_deep()) && self.gamma_grid.is_empty() {
            return fail("gamma_grid must not be empty when a deep method is selected");
        }
        if self.gamma_grid.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return fail("gamma_grid values must be finite and non-negative");
        }
        for cfg in self.grid() {
            cfg.validate().map_err(|e| BenchError::Config(format!("training: {e}")))?;
        }
        Ok(methods)
    }

    /// One trainer configuration per gamma value.
    pub fn grid(&self) -> Vec<MethodConfig> {
        self.gamma_grid
            .iter()
            .map(|&gamma| MethodConfig {
                gamma,
                epochs: self.epochs,
                ..self.training
            })
            .collect()
    }

    pub fn protocol_options(&self) -> ProtocolOptions {
        ProtocolOptions {
            arch: self.architecture.clone(),
            stratified: self.stratified,
            ..ProtocolOptions::default()
        }
    }

    /// Loads every dataset; names must be unique.
    pub fn load_datasets(&self) -> Result<Vec<Dataset>, BenchError> {
        let mut out: Vec<Dataset> = Vec::with_capacity(self.datasets.len());
        for src in &self.datasets {
            let ds = match src {
                DatasetSource::Manifest(p) => load_csv(&DatasetManifest::read(p)?, self.allow_shape_override)?,
                DatasetSource::Synthetic(s) => s.generate().map_err(|source| DataError::Invalid {
                    name: s.name.clone(),
                    source,
                })?,
            };
            if out.iter().any(|o| o.name == ds.name) {
                return Err(BenchError::Config(format!("dataset name {:?} used twice", ds.name)));
            }
            out.push(ds);
        }
        Ok(out)
    }

    /// Worker count: `BENCH_THREADS` if set, else `parallelism`.
    pub fn threads(&self) -> Result<usize, BenchError> {
        match std::env::var("BENCH_THREADS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(BenchError::Config(format!("BENCH_THREADS={v:?} is not a positive integer"))),
            },
            Err(_) => Ok(self.parallelism),
        }
    }
}
