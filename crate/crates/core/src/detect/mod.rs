//! Detection: prompt assembly, verdict extraction, candidate scanning and
//! post-processing of findings.

mod postprocess;
mod prompt;
mod scan;
mod verdict;

pub use postprocess::{flagged_identifiers, is_target_mismatch, postprocess, TARGET_MISMATCH};
pub use prompt::{build_detection_prompt, PromptConfig, COT_SENTENCE};
pub use scan::{candidates_for_rule, judge, scan_summary, ScanManifest, ScanOptions, Scanner, OVERSIZE};
pub use verdict::{extract_verdict, Verdict, VerdictKind};

use crate::model::{ModelError, TokenUsage};
use serde::{Deserialize, Serialize};
use std::time::SystemTime;

#[derive(Debug, thiserror::Error)]
pub enum DetectError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("scan aborted after {} findings: {source}", .partial.len())]
    Aborted {
        partial: Vec<Finding>,
        #[source]
        source: ModelError,
    },
    #[error("findings log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingStatus {
    /// A violation reported to the user.
    Kept,
    /// Removed by a deterministic check; `reason` says which.
    Filtered,
    /// The model did not report a violation.
    NotFlagged,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Finding {
    pub candidate_id: String,
    pub rule_id: String,
    pub config: PromptConfig,
    #[serde(with = "verdict_record")]
    pub verdict: Verdict,
    pub status: FindingStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub usage: TokenUsage,
    pub model: String,
    #[serde(skip)]
    pub started_at: Option<SystemTime>,
    #[serde(skip)]
    pub finished_at: Option<SystemTime>,
}

impl PartialEq for Finding {
    /// Timestamps are run metadata and do not take part in equality.
    fn eq(&self, o: &Self) -> bool {
        (&self.candidate_id, &self.rule_id, self.config, &self.verdict, self.status, &self.reason, self.usage, &self.model)
            == (&o.candidate_id, &o.rule_id, o.config, &o.verdict, o.status, &o.reason, o.usage, &o.model)
    }
}

impl Finding {
    /// Status implied by a verdict before post-processing.
    pub fn new(candidate_id: &str, rule_id: &str, config: PromptConfig, verdict: Verdict, usage: TokenUsage, model: &str) -> Self {
        let status = if verdict.kind == VerdictKind::Violation { FindingStatus::Kept } else { FindingStatus::NotFlagged };
        Finding {
            candidate_id: candidate_id.to_string(),
            rule_id: rule_id.to_string(),
            config,
            verdict,
            status,
            reason: None,
            usage,
            model: model.to_string(),
            started_at: None,
            finished_at: None,
        }
    }

    pub fn filtered(candidate_id: &str, rule_id: &str, config: PromptConfig, reason: &str, model: &str) -> Self {
        Finding {
            status: FindingStatus::Filtered,
            reason: Some(reason.to_string()),
            ..Finding::new(
                candidate_id,
                rule_id,
                config,
                Verdict { kind: VerdictKind::Undecided, raw: String::new(), note: reason.to_string() },
                TokenUsage::default(),
                model,
            )
        }
    }

    pub fn is_kept(&self) -> bool {
        self.status == FindingStatus::Kept
    }
}

/// Findings store the verdict flat: `verdict`, plus the completion and note.
mod verdict_record {
    use super::{Verdict, VerdictKind};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Flat {
        kind: VerdictKind,
        completion: String,
        note: String,
    }

    pub fn serialize<S: Serializer>(v: &Verdict, s: S) -> Result<S::Ok, S::Error> {
        Flat { kind: v.kind, completion: v.raw.clone(), note: v.note.clone() }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Verdict, D::Error> {
        let f = Flat::deserialize(d)?;
        Ok(Verdict { kind: f.kind, raw: f.completion, note: f.note })
    }
}
