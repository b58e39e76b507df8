//! Run configuration: TOML file with sections, overridden by environment
//! variables and flags (resolved by clap), falling back to defaults.

use super::CliError;
use crate::detect::PromptConfig;
use crate::detect::ScanOptions;
use crate::mine::MineOptions;
use crate::model::ModelConfig;
use crate::util::hash_fields;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_CONFIG_FILE: &str = "seedscan.toml";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub root: Option<PathBuf>,
    pub include: Option<Vec<String>>,
    pub exclude: Option<Vec<String>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub config: Option<PromptConfig>,
    pub workers: Option<usize>,
    pub rate_limit: Option<u32>,
    pub oversize_bytes: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub catalog: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub prices: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MineSection {
    pub eps: Option<f64>,
    pub min_pts: Option<usize>,
    pub top_k: Option<usize>,
}

/// Contents of the configuration file. Every key is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: CorpusSection,
    pub model: Option<ModelConfig>,
    pub scan: ScanSection,
    pub paths: PathsSection,
    pub mine: MineSection,
}

impl FileConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("{}: {e}", origin.display())))
    }

    /// Read `path`, or `seedscan.toml` in the working directory when present.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let (path, required) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG_FILE), false),
        };
        match std::fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text, &path),
            Err(e) if !required && e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(source) => Err(CliError::Io { path, source }),
        }
    }
}

/// Values given on the command line or through `SEEDSCAN_*` variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub model: Option<String>,
    pub base_url: Option<String>,
    pub prompt_config: Option<PromptConfig>,
    pub catalog: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub no_cache: bool,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub rate_limit: Option<u32>,
    pub oversize_bytes: Option<usize>,
    pub prices: Option<PathBuf>,
    pub mock: Option<PathBuf>,
}

/// Fully resolved settings for one run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub corpus_root: PathBuf,
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    pub model: ModelConfig,
    pub prompt_config: PromptConfig,
    pub catalog: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub rate_limit: Option<u32>,
    pub oversize_bytes: usize,
    pub prices: Option<PathBuf>,
    pub mock: Option<PathBuf>,
    pub mine: MineSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MineSettings {
    pub eps: f64,
    pub min_pts: usize,
    pub top_k: usize,
}

impl RunConfig {
    /// Flag or environment value, then file value, then default.
    pub fn resolve(o: &Overrides, f: &FileConfig) -> Result<Self, CliError> {
        let corpus_defaults = crate::corpus::CorpusOptions::default();
        let scan_defaults = ScanOptions::default();
        let mine_defaults = MineOptions::default();
        let out_dir = o.out_dir.clone().or_else(|| f.paths.out_dir.clone()).unwrap_or_else(|| PathBuf::from("seedscan-out"));
        let mut model = f.model.clone().unwrap_or_default();
        if let Some(m) = &o.model {
            model.model = m.clone();
        }
        if let Some(u) = &o.base_url {
            model.base_url = u.clone();
        }
        if o.mock.is_some() {
            model.backend = "mock".into();
            if o.model.is_none() && f.model.as_ref().is_none_or(|m| m.model.is_empty()) {
                model.model = "mock".into();
            }
        }
        let cfg = RunConfig {
            corpus_root: o.corpus.clone().or_else(|| f.corpus.root.clone()).unwrap_or_else(|| PathBuf::from(".")),
            include: f.corpus.include.clone().unwrap_or(corpus_defaults.include),
            exclude: f.corpus.exclude.clone().unwrap_or(corpus_defaults.exclude),
            model,
            prompt_config: o.prompt_config.or(f.scan.config).unwrap_or(scan_defaults.config),
            catalog: o.catalog.clone().or_else(|| f.paths.catalog.clone()).unwrap_or_else(|| out_dir.join("catalog.jsonl")),
            // Scripted replies must never be served to a later run with another script.
            cache_dir: if o.no_cache || o.mock.is_some() {
                None
            } else {
                Some(o.cache_dir.clone().or_else(|| f.paths.cache_dir.clone()).unwrap_or_else(|| out_dir.join("cache")))
            },
            workers: o.workers.or(f.scan.workers).unwrap_or(scan_defaults.workers),
            rate_limit: o.rate_limit.or(f.scan.rate_limit),
            oversize_bytes: o.oversize_bytes.or(f.scan.oversize_bytes).unwrap_or(scan_defaults.oversize_bytes),
            prices: o.prices.clone().or_else(|| f.paths.prices.clone()),
            mock: o.mock.clone(),
            mine: MineSettings {
                eps: f.mine.eps.unwrap_or(mine_defaults.eps),
                min_pts: f.mine.min_pts.unwrap_or(mine_defaults.min_pts),
                top_k: f.mine.top_k.unwrap_or(mine_defaults.top_k),
            },
            out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.workers == 0 {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        if self.rate_limit == Some(0) {
            return Err(CliError::Config("rate limit must be at least 1 request per minute".into()));
        }
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.mine_options().validate().map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn mine_options(&self) -> MineOptions {
        MineOptions { eps: self.mine.eps, min_pts: self.mine.min_pts, top_k: self.mine.top_k, workers: self.workers }
    }

    /// Stable digest of the settings that influence outputs. Output, cache
    /// and catalog locations are left out; a mock script counts by content.
    pub fn config_hash(&self) -> String {
        let mock = self.mock.as_ref().map(|p| std::fs::read(p).map(|b| crate::util::sha256_hex(&b)).unwrap_or_default());
        let view = serde_json::json!({
            "include": self.include,
            "exclude": self.exclude,
            "model": self.model,
            "prompt_config": self.prompt_config,
            "oversize_bytes": self.oversize_bytes,
            "mine": self.mine,
            "mock": mock,
        });
        hash_fields([view.to_string().as_bytes()])[..16].to_string()
    }
}
