//! Mining recurring patterns from patch corpora: summarize patches into rules,
//! embed the rules, cluster them by density, rank clusters and link functions
//! to rules.

mod cluster;
mod map;

pub use cluster::{cluster_rules, cosine_distance, medoid, select_top_clusters, Cluster, Clustering, RankedCluster};
pub use map::{build_function_rule_map, FunctionRuleMap, MapRecord};

use crate::model::{ModelClient, ModelError};
use crate::patch::SeedPatch;
use crate::rules::{parse_rule_response_detailed, render_rule_generation_prompt, Provenance, SecurityRule};
use crate::util::par_map;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error)]
pub enum MineError {
    #[error("all {count} patches failed to summarize")]
    AllSummariesFailed { count: usize },
    #[error("embedding rule {rule_id}: {source}")]
    Embed {
        rule_id: String,
        #[source]
        source: ModelError,
    },
    #[error("no precomputed vector for rule {0}")]
    MissingVector(String),
    #[error("rule {rule_id} has dimension {got}, expected {expected}")]
    Dimension { rule_id: String, expected: usize, got: usize },
    #[error("rule {0} has a non-finite embedding component")]
    NonFinite(String),
    #[error("invalid mining options: {0}")]
    Config(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleEmbedding {
    pub rule_id: String,
    pub vector: Vec<f64>,
    pub norm: f64,
}

impl RuleEmbedding {
    pub fn new(rule_id: impl Into<String>, vector: Vec<f64>) -> Result<Self, MineError> {
        let rule_id = rule_id.into();
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(MineError::NonFinite(rule_id));
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(Self { rule_id, vector, norm })
    }
}

/// Source of rule vectors.
pub trait Embedder: Sync {
    fn embed(&self, rule: &SecurityRule) -> Result<Vec<f64>, MineError>;
}

impl Embedder for ModelClient {
    fn embed(&self, rule: &SecurityRule) -> Result<Vec<f64>, MineError> {
        ModelClient::embed(self, &rule.text).map_err(|source| MineError::Embed { rule_id: rule.id.clone(), source })
    }
}

/// Vectors supplied up front, keyed by rule id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedEmbeddings(pub BTreeMap<String, Vec<f64>>);

impl Embedder for PrecomputedEmbeddings {
    fn embed(&self, rule: &SecurityRule) -> Result<Vec<f64>, MineError> {
        self.0.get(&rule.id).cloned().ok_or_else(|| MineError::MissingVector(rule.id.clone()))
    }
}

/// One vector per rule, in input order. All vectors must share a dimension.
pub fn embed_rules(rules: &[SecurityRule], embedder: &dyn Embedder, workers: usize) -> Result<Vec<RuleEmbedding>, MineError> {
    let vectors = par_map(rules, workers, |r| embedder.embed(r));
    let mut out = Vec::with_capacity(rules.len());
    for (r, v) in rules.iter().zip(vectors) {
        let e = RuleEmbedding::new(r.id.clone(), v?)?;
        if let Some(first) = out.first().map(|f: &RuleEmbedding| f.vector.len()) {
            if e.vector.len() != first {
                return Err(MineError::Dimension { rule_id: r.id.clone(), expected: first, got: e.vector.len() });
            }
        }
        out.push(e);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSummary {
    pub patch_id: String,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryFailure {
    pub patch_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Summaries {
    pub summaries: Vec<PatchSummary>,
    pub failures: Vec<SummaryFailure>,
}

/// Summarize each patch with the rule-generation prompt. Individual failures
/// are logged and recorded; only a run where every patch fails is an error.
pub fn summarize_patches(patches: &[SeedPatch], client: &ModelClient, workers: usize) -> Result<Summaries, MineError> {
    let results = par_map(patches, workers, |p| client.complete(&render_rule_generation_prompt(p)));
    let mut out = Summaries::default();
    for (p, r) in patches.iter().zip(results) {
        match r {
            Ok((text, _)) => out.summaries.push(PatchSummary { patch_id: p.commit.clone(), text: text.trim().to_string() }),
            Err(e) => {
                log::warn!("summarizing {}: {e}", p.commit);
                out.failures.push(SummaryFailure { patch_id: p.commit.clone(), reason: e.to_string() });
            }
        }
    }
    if !patches.is_empty() && out.summaries.is_empty() {
        return Err(MineError::AllSummariesFailed { count: patches.len() });
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MinedRules {
    /// Unique by id, in first-seen order.
    pub rules: Vec<SecurityRule>,
    /// Rule id to the patches whose summaries produced it.
    pub sources: BTreeMap<String, Vec<String>>,
    /// Patches whose summary held no usable rule.
    pub unparsed: Vec<String>,
}

/// Parse summaries into mined rules.
pub fn rules_from_summaries(summaries: &[PatchSummary]) -> MinedRules {
    let mut out = MinedRules::default();
    for s in summaries {
        let parsed = parse_rule_response_detailed(&s.text, &Provenance::Mined);
        if parsed.rules.is_empty() {
            out.unparsed.push(s.patch_id.clone());
        }
        for r in parsed.rules {
            let src = out.sources.entry(r.id.clone()).or_default();
            if src.is_empty() {
                out.rules.push(r);
            }
            src.push(s.patch_id.clone());
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct MineOptions {
    /// Cosine-distance neighbourhood radius.
    pub eps: f64,
    pub min_pts: usize,
    pub top_k: usize,
    pub workers: usize,
}

impl Default for MineOptions {
    fn default() -> Self {
        Self { eps: 0.15, min_pts: 3, top_k: 200, workers: 4 }
    }
}

impl MineOptions {
    pub fn validate(&self) -> Result<(), MineError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(MineError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        if self.min_pts < 2 {
            return Err(MineError::Config(format!("min_pts must be at least 2, got {}", self.min_pts)));
        }
        if self.top_k == 0 || self.workers == 0 {
            return Err(MineError::Config("top_k and workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// One line of the clusters output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub cluster_id: usize,
    pub size: usize,
    /// Rendered text of the medoid rule.
    pub medoid_rule: String,
    pub medoid_id: String,
    pub members: Vec<String>,
}

impl From<&RankedCluster> for ClusterRecord {
    fn from(r: &RankedCluster) -> Self {
        Self {
            cluster_id: r.cluster.cluster_id,
            size: r.cluster.size,
            medoid_rule: r.medoid_text.clone(),
            medoid_id: r.cluster.medoid.clone(),
            members: r.cluster.members.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MineOutput {
    pub summaries: Summaries,
    pub mined: MinedRules,
    pub clustering: Clustering,
    pub top: Vec<RankedCluster>,
    pub map: FunctionRuleMap,
}

impl MineOutput {
    pub fn cluster_records(&self) -> Vec<ClusterRecord> {
        self.top.iter().map(ClusterRecord::from).collect()
    }
}

/// Whole mining pass over cleaned seed patches. `lexicon` holds known function
/// names, typically from a corpus index.
pub fn mine(
    patches: &[SeedPatch],
    client: &ModelClient,
    embedder: &dyn Embedder,
    lexicon: &BTreeSet<String>,
    opts: &MineOptions,
) -> Result<MineOutput, MineError> {
    opts.validate()?;
    let summaries = summarize_patches(patches, client, opts.workers)?;
    let mined = rules_from_summaries(&summaries.summaries);
    let embeddings = embed_rules(&mined.rules, embedder, opts.workers)?;
    let clustering = cluster_rules(&embeddings, opts.eps, opts.min_pts);
    let texts: BTreeMap<&str, &str> = mined.rules.iter().map(|r| (r.id.as_str(), r.text.as_str())).collect();
    let top = select_top_clusters(&clustering.clusters, opts.top_k, |id| texts.get(id).copied());
    let map = build_function_rule_map(&mined.rules, lexicon);
    Ok(MineOutput { summaries, mined, clustering, top, map })
}
