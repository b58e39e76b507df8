//! Ground-truth datasets, metrics, evaluation runs and ablation reports.

mod metrics;
mod report;
mod run;
pub mod synthetic;

pub use metrics::{compute_metrics, ratio_f64, Confusion, Metrics};
pub use report::{cost_per_detection, report_csv, report_text, CSV_HEADER};
pub use run::{evaluate, oracle_script, EvalOptions, EvalResult, Polarity, SnippetJudgment};

use crate::patch::SeedPatch;
use crate::rules::{parse_rule_response, HumanRule, Provenance, SecurityRule};
use serde::{Deserialize, Deserializer, Serialize};
use std::collections::HashSet;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset line {line}: {msg}")]
    Dataset { line: usize, msg: String },
    #[error("dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Detect(#[from] crate::detect::DetectError),
    #[error("evaluation aborted after {judged} snippets: {source}")]
    Aborted {
        judged: usize,
        partial: Box<EvalResult>,
        #[source]
        source: crate::model::ModelError,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub pair_id: String,
    /// Unpatched function body; expected to be flagged.
    pub positive: String,
    /// Patched function body; expected to be cleared.
    pub negative: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPattern {
    pub pattern_id: String,
    /// A rule record, or a rule sentence parsed on load.
    #[serde(deserialize_with = "rule_or_text")]
    pub rule: SecurityRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_rule: Option<HumanRule>,
    /// Commit used as the seed; never evaluated.
    pub seed_commit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_patch: Option<SeedPatch>,
    pub pairs: Vec<EvalPair>,
}

fn rule_or_text<'de, D: Deserializer<'de>>(d: D) -> Result<SecurityRule, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        Text(String),
        Rule(SecurityRule),
    }
    match Either::deserialize(d)? {
        Either::Rule(r) => Ok(r),
        Either::Text(t) => parse_rule_response(&t, &Provenance::Human)
            .map(|mut v| v.remove(0))
            .map_err(serde::de::Error::custom),
    }
}

impl GroundTruthPattern {
    /// Violations of the pattern invariants, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.pairs.is_empty() {
            out.push("no evaluation pairs".to_string());
        }
        let mut ids = HashSet::new();
        for p in &self.pairs {
            if p.pair_id == self.seed_commit {
                out.push(format!("seed {} listed among targets", self.seed_commit));
            }
            if !ids.insert(&p.pair_id) {
                out.push(format!("duplicate pair id {}", p.pair_id));
            }
            if p.positive.trim().is_empty() || p.negative.trim().is_empty() {
                out.push(format!("pair {} has an empty snippet", p.pair_id));
            }
            if p.positive == p.negative {
                out.push(format!("pair {} has identical snippets", p.pair_id));
            }
        }
        if self.rule.targets().is_empty() {
            out.push("rule names no target".to_string());
        }
        out
    }
}

/// Pattern, pair and snippet totals of a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Accounting {
    pub patterns: usize,
    /// Seed plus evaluated patches.
    pub patches: usize,
    pub pairs: usize,
    pub snippets: usize,
}

pub fn accounting(patterns: &[GroundTruthPattern]) -> Accounting {
    let pairs: usize = patterns.iter().map(|p| p.pairs.len()).sum();
    Accounting { patterns: patterns.len(), patches: pairs + patterns.len(), pairs, snippets: 2 * pairs }
}

pub fn parse_dataset(text: &str) -> Result<Vec<GroundTruthPattern>, EvalError> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (n, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = n + 1;
        let p: GroundTruthPattern =
            serde_json::from_str(raw).map_err(|e| EvalError::Dataset { line, msg: e.to_string() })?;
        let problems = p.problems();
        if !problems.is_empty() {
            return Err(EvalError::Dataset { line, msg: format!("pattern {}: {}", p.pattern_id, problems.join("; ")) });
        }
        if !ids.insert(p.pattern_id.clone()) {
            return Err(EvalError::Dataset { line, msg: format!("duplicate pattern id {}", p.pattern_id) });
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<GroundTruthPattern>, EvalError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn save_dataset(path: &Path, patterns: &[GroundTruthPattern]) -> Result<(), EvalError> {
    Ok(crate::util::write_jsonl(path, patterns)?)
}
