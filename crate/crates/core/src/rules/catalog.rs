use super::{RuleError, SecurityRule};
use crate::util::{read_jsonl_or_empty, write_jsonl};
use std::collections::BTreeMap;
use std::path::Path;

/// The curated catalog compiled into the crate.
pub const SHIPPED_CATALOG: &str = include_str!("../../data/rule_catalog.jsonl");

/// Ordered, id-deduplicated rule collection persisted as JSONL.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleCatalog {
    rules: Vec<SecurityRule>,
}

impl RuleCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shipped() -> Self {
        let mut c = Self::new();
        for (n, line) in SHIPPED_CATALOG.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rule: SecurityRule = serde_json::from_str(line)
                .unwrap_or_else(|e| panic!("shipped catalog line {}: {e}", n + 1));
            c.insert(rule);
        }
        c
    }

    /// Load a catalog file; a missing file is an empty catalog.
    pub fn load(path: &Path) -> Result<Self, RuleError> {
        let rules: Vec<SecurityRule> = read_jsonl_or_empty(path).map_err(|source| RuleError::Catalog {
            path: path.display().to_string(),
            source,
        })?;
        let mut c = Self::new();
        c.extend(rules);
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), RuleError> {
        write_jsonl(path, &self.rules).map_err(|source| RuleError::Catalog {
            path: path.display().to_string(),
            source,
        })
    }

    /// Add a rule unless its id is already present. Returns whether it was new.
    pub fn insert(&mut self, rule: SecurityRule) -> bool {
        if self.get(&rule.id).is_some() {
            return false;
        }
        self.rules.push(rule);
        true
    }

    /// Merge rules, returning how many were new.
    pub fn extend(&mut self, rules: impl IntoIterator<Item = SecurityRule>) -> usize {
        rules.into_iter().map(|r| self.insert(r) as usize).sum()
    }

    pub fn get(&self, id: &str) -> Option<&SecurityRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn rules(&self) -> &[SecurityRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Rule count per template id.
    pub fn histogram(&self) -> BTreeMap<u8, usize> {
        let mut h = BTreeMap::new();
        for r in &self.rules {
            *h.entry(r.template_id).or_default() += 1;
        }
        h
    }
}
