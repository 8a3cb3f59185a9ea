//! Run configuration (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! edges = "edges.txt"
//! features = "features.csv"
//! labels = "labels.txt"
//!
//! [model]
//! hidden_dim = 16
//!
//! [train]
//! epochs = 100
//! community = "louvain"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Without a `[data]` section the graph comes from `[synthetic]`; an
//! `[injection]` section plants labeled anomalies before training.

use std::path::{Path, PathBuf};

use flexgad_core::synthetic::{generate_synthetic, inject_anomalies, InjectionConfig};
use flexgad_core::{AttributedGraph, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{IoContext, IoError, Result};
use crate::formats::{load_graph, FeatureFormat, LoadReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub edges: PathBuf,
    pub features: PathBuf,
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSource {
    pub num_nodes: usize,
    pub avg_degree: f64,
    pub feat_dim: usize,
    pub num_communities: usize,
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            num_nodes: 500,
            avg_degree: 8.0,
            feat_dim: 16,
            num_communities: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Feature format for `inject` and `convert`.
    pub feature_format: FeatureFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("flexgad-out"),
            feature_format: FeatureFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { runs: 10, jobs: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; when set it replaces the model, training and injection seeds.
    pub seed: Option<u64>,
    pub data: Option<DataConfig>,
    pub synthetic: Option<SyntheticSource>,
    pub injection: Option<InjectionConfig>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
    pub experiment: ExperimentConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub output: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|error| IoError::Toml {
            path: path.to_path_buf(),
            error,
        })
    }

    /// Reads a config file and resolves its relative paths.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &mut cfg.data {
            resolve(base, &mut d.edges);
            resolve(base, &mut d.features);
            if let Some(l) = &mut d.labels {
                resolve(base, l);
            }
        }
        resolve(base, &mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply(o);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(j) = o.jobs {
            self.experiment.jobs = j;
        }
        if let Some(d) = &o.output {
            self.output.dir = d.clone();
        }
        if o.edges.is_some() || o.features.is_some() || o.labels.is_some() {
            let old = self.data.take();
            let pick = |flag: &Option<PathBuf>, file: Option<PathBuf>| flag.clone().or(file);
            let edges = pick(&o.edges, old.as_ref().map(|d| d.edges.clone()));
            let features = pick(&o.features, old.as_ref().map(|d| d.features.clone()));
            let labels = pick(&o.labels, old.as_ref().and_then(|d| d.labels.clone()));
            self.data = Some(DataConfig {
                edges: edges.unwrap_or_default(),
                features: features.unwrap_or_default(),
                labels,
            });
        }
        if let Some(s) = self.seed {
            self.model.seed = s;
            self.train.seed = s;
            if let Some(ic) = &mut self.injection {
                ic.seed = s;
            }
        }
    }

    pub fn root_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    /// Checks values and referenced paths before any work starts.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| IoError::Core(flexgad_core::Error::InvalidConfig(msg));
        self.model.validate()?;
        self.train.validate()?;
        if let Some(d) = &self.data {
            for (what, p) in [("edges", Some(&d.edges)), ("features", Some(&d.features)), ("labels", d.labels.as_ref())] {
                let Some(p) = p else { continue };
                if p.as_os_str().is_empty() {
                    return Err(cfg_err(format!("data.{what} is not set")));
                }
                if !p.is_file() {
                    return Err(IoError::io(
                        p,
                        std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} file not found")),
                    ));
                }
            }
        }
        if let Some(s) = &self.synthetic {
            if s.num_communities == 0 || s.num_nodes < s.num_communities {
                return Err(cfg_err("synthetic needs num_nodes >= num_communities >= 1".into()));
            }
        }
        if let Some(name) = &self.train.checkpoint_path {
            let p = Path::new(name);
            if p.file_name() != Some(p.as_os_str()) {
                return Err(cfg_err(format!(
                    "train.checkpoint_path {name:?} must be a file name inside the output directory"
                )));
            }
        }
        if self.experiment.runs == 0 || self.experiment.jobs == 0 {
            return Err(cfg_err("experiment.runs and experiment.jobs must be at least 1".into()));
        }
        if self.output.dir.exists() && !self.output.dir.is_dir() {
            return Err(IoError::format(&self.output.dir, "output path exists and is not a directory"));
        }
        Ok(())
    }

    /// The configured graph before injection: loaded from `[data]`, or
    /// generated from `[synthetic]` under the root seed.
    pub fn source_graph(&self) -> Result<(AttributedGraph, Option<LoadReport>)> {
        if let Some(d) = &self.data {
            let (g, r) = load_graph(&d.edges, &d.features, d.labels.as_deref())?;
            return Ok((g, Some(r)));
        }
        let s = self.synthetic.clone().ok_or_else(|| {
            IoError::Core(flexgad_core::Error::InvalidConfig(
                "no graph source: set [data], [synthetic] or the --edges/--features flags".into(),
            ))
        })?;
        let g = generate_synthetic(s.num_nodes, s.avg_degree, s.feat_dim, s.num_communities, self.root_seed())?;
        Ok((g, None))
    }

    /// Source graph with `[injection]` applied when present.
    pub fn graph(&self) -> Result<(AttributedGraph, Option<LoadReport>)> {
        let (g, r) = self.source_graph()?;
        match &self.injection {
            Some(ic) => Ok((inject_anomalies(&g, ic)?, r)),
            None => Ok((g, r)),
        }
    }
}
