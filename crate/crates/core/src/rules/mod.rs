//! Security coding rules: templates, the rule-generation prompt, response
//! parsing, validation and the JSONL rule catalog.

mod catalog;
mod prompt;
pub mod templates;

pub use catalog::{RuleCatalog, SHIPPED_CATALOG};
pub use prompt::{render_rule_generation_prompt, RULE_GENERATION_PROMPT};
pub use templates::{template, RuleTemplate, TEMPLATES};

use crate::corpus::MatchMode;
use crate::util::{hash_fields, is_c_identifier};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;
use templates::{IDENT_SLOTS, TARGET_SLOTS};

pub const CATALOG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RuleError {
    #[error("no rule extracted")]
    NoRuleExtracted,
    #[error("unknown template id {0}")]
    UnknownTemplate(u8),
    #[error("invalid rule: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("human rule needs at least one target")]
    NoTargets,
    #[error("catalog {path}: {source}")]
    Catalog {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Seed { commit: String },
    Human,
    Mined,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecurityRule {
    pub id: String,
    #[serde(default = "default_version")]
    pub version: u32,
    /// 1..=14 for templated rules, 0 for free-form text.
    pub template_id: u8,
    pub slots: BTreeMap<String, String>,
    pub text: String,
    #[serde(default)]
    pub match_mode: MatchMode,
    pub provenance: Provenance,
    /// Set when the target was guessed from free-form text.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub low_confidence: bool,
}

fn default_version() -> u32 {
    CATALOG_VERSION
}

/// Content-addressed id over template and sorted slots (plus the text for free-form rules).
pub fn rule_id(template_id: u8, slots: &BTreeMap<String, String>, text: &str) -> String {
    let tid = template_id.to_string();
    let mut fields: Vec<&[u8]> = vec![b"rule", tid.as_bytes()];
    for (k, v) in slots {
        fields.push(k.as_bytes());
        fields.push(v.as_bytes());
    }
    if template_id == 0 {
        fields.push(text.as_bytes());
    }
    hash_fields(fields)[..16].to_string()
}

impl SecurityRule {
    /// Build a templated rule; the text is rendered from the skeleton.
    pub fn templated(
        template_id: u8,
        slots: BTreeMap<String, String>,
        provenance: Provenance,
    ) -> Result<Self, RuleError> {
        let t = template(template_id).ok_or(RuleError::UnknownTemplate(template_id))?;
        let text = t.render(&slots);
        let rule = SecurityRule {
            id: rule_id(template_id, &slots, &text),
            version: CATALOG_VERSION,
            template_id,
            slots,
            text,
            match_mode: MatchMode::Call,
            provenance,
            low_confidence: false,
        };
        let problems = validate_rule(&rule);
        if problems.is_empty() {
            Ok(rule)
        } else {
            Err(RuleError::Invalid(problems))
        }
    }

    /// A free-form rule bound to an explicit target.
    pub fn free_form(text: impl Into<String>, target: impl Into<String>, provenance: Provenance) -> Self {
        let text = text.into();
        let slots = BTreeMap::from([("TARGET".to_string(), target.into())]);
        SecurityRule {
            id: rule_id(0, &slots, &text),
            version: CATALOG_VERSION,
            template_id: 0,
            slots,
            text,
            match_mode: MatchMode::Call,
            provenance,
            low_confidence: true,
        }
    }

    pub fn with_match_mode(mut self, mode: MatchMode) -> Self {
        self.match_mode = mode;
        self
    }

    /// Identifiers scanned for: TARGET / TARGET1 / TARGET2, or a template's implied target.
    pub fn targets(&self) -> Vec<String> {
        if let Some(t) = template(self.template_id) {
            if !t.implicit_targets.is_empty() {
                return t.implicit_targets.iter().map(|s| s.to_string()).collect();
            }
        }
        TARGET_SLOTS
            .iter()
            .filter_map(|k| self.slots.get(*k))
            .filter(|v| !v.is_empty())
            .cloned()
            .collect()
    }

    pub fn primary_target(&self) -> Option<String> {
        self.targets().into_iter().next()
    }

    pub fn handler(&self) -> Option<&str> {
        self.slots.get("HANDLER").map(String::as_str)
    }
}

/// A rule written by an analyst, with its targets declared explicitly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRule {
    pub text: String,
    pub targets: Vec<String>,
    #[serde(default)]
    pub match_mode: MatchMode,
}

impl HumanRule {
    pub fn new(text: impl Into<String>, targets: Vec<String>) -> Result<Self, RuleError> {
        if targets.is_empty() {
            return Err(RuleError::NoTargets);
        }
        Ok(HumanRule { text: text.into(), targets, match_mode: MatchMode::Call })
    }

    pub fn id(&self) -> String {
        let mut fields: Vec<&[u8]> = vec![b"human", self.text.as_bytes()];
        fields.extend(self.targets.iter().map(|t| t.as_bytes()));
        format!("h{}", &hash_fields(fields)[..15])
    }
}

/// Either kind of rule, as consumed by detection.
#[derive(Clone, Copy, Debug)]
pub enum RuleRef<'a> {
    Security(&'a SecurityRule),
    Human(&'a HumanRule),
}

impl RuleRef<'_> {
    pub fn id(&self) -> String {
        match self {
            RuleRef::Security(r) => r.id.clone(),
            RuleRef::Human(r) => r.id(),
        }
    }

    pub fn text(&self) -> &str {
        match self {
            RuleRef::Security(r) => &r.text,
            RuleRef::Human(r) => &r.text,
        }
    }

    pub fn targets(&self) -> Vec<String> {
        match self {
            RuleRef::Security(r) => r.targets(),
            RuleRef::Human(r) => r.targets.clone(),
        }
    }

    pub fn match_mode(&self) -> MatchMode {
        match self {
            RuleRef::Security(r) => r.match_mode,
            RuleRef::Human(r) => r.match_mode,
        }
    }
}

/// Check required slots and target lexing. Never fails; returns violations.
pub fn validate_rule(rule: &SecurityRule) -> Vec<String> {
    let mut out = Vec::new();
    let required: Vec<&str> = match rule.template_id {
        0 => vec!["TARGET"],
        id => match template(id) {
            Some(t) => t.required_slots(),
            None => return vec![format!("unknown template id {id}")],
        },
    };
    let mut complete = true;
    for slot in &required {
        if rule.slots.get(*slot).is_none_or(|v| v.trim().is_empty()) {
            out.push(format!("missing slot: {slot}"));
            complete = false;
        }
    }
    for slot in TARGET_SLOTS {
        if let Some(v) = rule.slots.get(*slot) {
            if !v.trim().is_empty() && !is_c_identifier(v) {
                out.push(format!("{slot} not an identifier"));
            }
        }
    }
    if complete && rule.template_id != 0 {
        if let Some(t) = template(rule.template_id) {
            if t.render(&rule.slots) != rule.text {
                out.push("rendered text does not match template".to_string());
            }
        }
    }
    out
}

fn list_marker() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| {
        Regex::new(r"(?i)^\s*(?:(?:\d+\s*[.)]|[-*\u{2022}]|rule\s*\d*\s*:|security coding rule\s*\d*\s*:)\s*)+")
            .unwrap()
    })
}

fn backtick_ident() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"`\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(\s*\))?\s*`").unwrap())
}

fn call_ident() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"\b([A-Za-z_][A-Za-z0-9_]*)\s*\(").unwrap())
}

fn tidy_line(line: &str) -> String {
    let line = list_marker().replace(line, "");
    let mut s = line.trim().trim_matches('*').trim();
    for q in ['"', '\u{201c}'] {
        if let Some(inner) = s.strip_prefix(q) {
            s = inner.trim_end_matches(['"', '\u{201d}']).trim();
        }
    }
    s.to_string()
}

/// First backtick-quoted identifier, else the first identifier used as a call.
pub fn guess_target(text: &str) -> Option<String> {
    backtick_ident()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .find(|s| is_c_identifier(s))
        .or_else(|| {
            call_ident().captures_iter(text).map(|c| c[1].to_string()).find(|s| is_c_identifier(s))
        })
}

/// Outcome of parsing one model response.
#[derive(Debug, Default)]
pub struct ParsedRules {
    pub rules: Vec<SecurityRule>,
    /// Non-empty lines that yielded no rule.
    pub dropped: Vec<String>,
}

/// Parse one rule per line, aligning against every template skeleton and
/// degrading to free-form rules when nothing aligns.
pub fn parse_rule_response_detailed(text: &str, provenance: &Provenance) -> ParsedRules {
    let mut out = ParsedRules::default();
    for raw in text.lines() {
        let line = tidy_line(raw);
        if line.is_empty() {
            continue;
        }
        if let Some((tid, slots)) = templates::match_line(&line) {
            if let Ok(rule) = SecurityRule::templated(tid, slots, provenance.clone()) {
                out.rules.push(rule);
                continue;
            }
        }
        match guess_target(&line) {
            Some(target) => out.rules.push(SecurityRule::free_form(line, target, provenance.clone())),
            None => {
                log::warn!("dropping rule line without a target identifier: {line}");
                out.dropped.push(line);
            }
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.rules.retain(|r| seen.insert(r.id.clone()));
    out
}

pub fn parse_rule_response(text: &str, provenance: &Provenance) -> Result<Vec<SecurityRule>, RuleError> {
    let parsed = parse_rule_response_detailed(text, provenance);
    if parsed.rules.is_empty() {
        Err(RuleError::NoRuleExtracted)
    } else {
        Ok(parsed.rules)
    }
}

/// Slot normalization applied to identifier slots during parsing.
pub fn is_ident_slot(name: &str) -> bool {
    IDENT_SLOTS.contains(&name)
}
