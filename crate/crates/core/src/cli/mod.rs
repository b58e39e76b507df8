//! Command-line front end: argument parsing, configuration resolution and
//! dispatch to the pipeline stages.

pub mod commands;
pub mod config;
pub mod state;

pub use commands::{
    build_client, cmd_eval, cmd_mine, cmd_report, cmd_rulegen, cmd_scan, cmd_seed, EvalReport, MineReport, PreImage, RuleScan,
    RuleSelection, RulegenReport, SeedReport,
};
pub use config::{FileConfig, Overrides, RunConfig};
pub use state::{OutputLock, RunManifest};

use crate::detect::PromptConfig;
use crate::model::ModelError;
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {msg}", .path.display())]
    Input { path: PathBuf, msg: String },
    #[error("analysis failed: {0}")]
    Analysis(String),
}

impl CliError {
    /// 1 for failures of the analysis itself, 2 for configuration and IO.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Analysis(_) => 1,
            _ => 2,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::UnknownModel(_) => CliError::Config(e.to_string()),
            other => CliError::Analysis(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "seedscan", version, about = "Find recurring API-misuse bugs in C code from a single fixing commit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Cmd,
}

/// Options shared by every subcommand. API keys are read only from the
/// environment variable named by the model's `api_key_env` setting.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Configuration file (default: ./seedscan.toml when present).
    #[arg(long, global = true, env = "SEEDSCAN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Use the deterministic mock backend driven by this script.
    #[arg(long, global = true, env = "SEEDSCAN_MOCK", value_name = "SCRIPT.jsonl")]
    pub mock: Option<PathBuf>,
    #[arg(long, global = true, env = "SEEDSCAN_MODEL")]
    pub model: Option<String>,
    #[arg(long, global = true, env = "SEEDSCAN_BASE_URL")]
    pub base_url: Option<String>,
    #[arg(long, global = true, env = "SEEDSCAN_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "SEEDSCAN_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Disable the on-disk response cache.
    #[arg(long, global = true)]
    pub no_cache: bool,
    #[arg(long, global = true, env = "SEEDSCAN_CATALOG")]
    pub catalog: Option<PathBuf>,
    #[arg(long, global = true, env = "SEEDSCAN_WORKERS")]
    pub workers: Option<usize>,
    /// Requests per minute.
    #[arg(long, global = true, env = "SEEDSCAN_RATE_LIMIT")]
    pub rate_limit: Option<u32>,
    #[arg(long, global = true, env = "SEEDSCAN_PRICES")]
    pub prices: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Turn commit files into seed patches with whole-function context.
    Seed {
        /// Commit files (git format-patch or `git show` output) or directories of *.patch files.
        #[arg(required = true)]
        commits: Vec<PathBuf>,
        /// Checkout of the parent revision.
        #[arg(long, conflicts_with = "git_repo", required_unless_present = "git_repo")]
        pre_image: Option<PathBuf>,
        /// Repository to read pre-image files from at `<commit>^`.
        #[arg(long)]
        git_repo: Option<PathBuf>,
    },
    /// Derive security coding rules from seed patches into the catalog.
    Rulegen {
        /// Seed patch JSONL written by `seed`.
        seeds: PathBuf,
    },
    /// Judge every call site of the selected rules' targets.
    Scan {
        /// Rule id from the catalog or the shipped catalog; repeatable.
        #[arg(long = "rule")]
        rules: Vec<String>,
        /// Every rule in the catalog.
        #[arg(long)]
        all: bool,
        /// Human-written rule text; needs --target.
        #[arg(long, requires = "targets")]
        rule_text: Option<String>,
        /// Target identifier for --rule-text; repeatable.
        #[arg(long = "target")]
        targets: Vec<String>,
        #[arg(long, env = "SEEDSCAN_CORPUS")]
        corpus: Option<PathBuf>,
        /// Prompt configuration.
        #[arg(long = "prompt", env = "SEEDSCAN_PROMPT")]
        prompt: Option<PromptConfig>,
        /// Seed patch JSONL, required by patch-bearing configurations.
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long)]
        oversize_bytes: Option<usize>,
        /// Start over instead of resuming a matching interrupted scan.
        #[arg(long)]
        no_resume: bool,
    },
    /// Evaluate prompt configurations and models on a ground-truth dataset.
    Eval {
        dataset: PathBuf,
        /// Comma-separated prompt configurations (default: all six).
        #[arg(long, value_delimiter = ',')]
        configs: Vec<PromptConfig>,
        /// Comma-separated model names (default: the configured model).
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Summarize, embed and cluster patches into recurring patterns.
    Mine {
        /// Seed patch JSONL file or directory of them.
        patches: PathBuf,
        /// Precomputed `{rule_id, vector}` JSONL instead of backend embeddings.
        #[arg(long)]
        vectors: Option<PathBuf>,
        /// Corpus whose function names form the lexicon for the function-rule map.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        min_pts: Option<usize>,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Rebuild the ablation and cost reports from stored judgments.
    Report {
        dataset: PathBuf,
        /// Judgments JSONL (default: <out-dir>/eval_judgments.jsonl).
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
}

impl Cli {
    fn overrides(&self) -> Overrides {
        let g = &self.global;
        let mut o = Overrides {
            model: g.model.clone(),
            base_url: g.base_url.clone(),
            catalog: g.catalog.clone(),
            cache_dir: g.cache_dir.clone(),
            no_cache: g.no_cache,
            out_dir: g.out_dir.clone(),
            workers: g.workers,
            rate_limit: g.rate_limit,
            prices: g.prices.clone(),
            mock: g.mock.clone(),
            ..Overrides::default()
        };
        match &self.command {
            Cmd::Scan { corpus, prompt, oversize_bytes, .. } => {
                o.corpus = corpus.clone();
                o.prompt_config = *prompt;
                o.oversize_bytes = *oversize_bytes;
            }
            Cmd::Mine { corpus, .. } => o.corpus = corpus.clone(),
            _ => {}
        }
        o
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = FileConfig::load(self.global.config.as_deref())?;
        let mut cfg = RunConfig::resolve(&self.overrides(), &file)?;
        if let Cmd::Mine { eps, min_pts, top_k, .. } = &self.command {
            cfg.mine.eps = eps.unwrap_or(cfg.mine.eps);
            cfg.mine.min_pts = min_pts.unwrap_or(cfg.mine.min_pts);
            cfg.mine.top_k = top_k.unwrap_or(cfg.mine.top_k);
            cfg.validate()?;
        }
        Ok(cfg)
    }
}

fn w(out: &mut dyn Write, line: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{line}").map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source })
}

/// Execute one invocation, writing human-readable results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = cli.resolve()?;
    match &cli.command {
        Cmd::Seed { commits, pre_image, git_repo } => {
            let pre = match (pre_image, git_repo) {
                (Some(p), _) => PreImage::Tree(p),
                (None, Some(g)) => PreImage::Git(g),
                (None, None) => return Err(CliError::Config("seed needs --pre-image or --git-repo".into())),
            };
            let r = cmd_seed(&cfg, commits, pre)?;
            for c in &r.written {
                w(out, format!("seed {c}"))?;
            }
            w(out, format!("written={} skipped={} output={}", r.written.len(), r.skipped.len(), r.output.display()))?;
        }
        Cmd::Rulegen { seeds } => {
            let r = cmd_rulegen(&cfg, seeds)?;
            for rule in &r.rules {
                w(out, format!("rule {} template={} {}", rule.id, rule.template_id, rule.text))?;
            }
            w(out, format!("added={} catalog={} failed_seeds={}", r.added, r.catalog_size, r.failed_seeds.len()))?;
        }
        Cmd::Scan { rules, all, rule_text, targets, seeds, no_resume, .. } => {
            let sel = RuleSelection { ids: rules.clone(), all: *all, text: rule_text.clone().map(|t| (t, targets.clone())) };
            for s in cmd_scan(&cfg, &sel, seeds.as_deref(), !no_resume)? {
                w(out, format!("rule {}: {}", s.rule_id, s.summary))?;
            }
        }
        Cmd::Eval { dataset, configs, models } => {
            let r = cmd_eval(&cfg, dataset, configs, models)?;
            write!(out, "{}", r.text).map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source })?;
        }
        Cmd::Mine { patches, vectors, corpus, .. } => {
            let r = cmd_mine(&cfg, patches, vectors.as_deref(), corpus.is_some())?;
            let o = &r.output;
            w(
                out,
                format!(
                    "summaries={} failures={} rules={} clusters={} noise={} mappings={}",
                    o.summaries.summaries.len(),
                    o.summaries.failures.len(),
                    o.mined.rules.len(),
                    o.clustering.clusters.len(),
                    o.clustering.noise.len(),
                    o.map.len()
                ),
            )?;
            for c in &o.top {
                w(out, format!("#{} size={} {}", c.rank, c.cluster.size, c.medoid_text))?;
            }
        }
        Cmd::Report { dataset, judgments } => {
            let r = cmd_report(&cfg, dataset, judgments.as_deref())?;
            write!(out, "{}", r.text).map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source })?;
        }
    }
    Ok(())
}
