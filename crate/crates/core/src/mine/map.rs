//! Many-to-many map between function identifiers and the rules naming them.

use crate::rules::SecurityRule;
use crate::util::identifiers;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

const SLOT_IDENTS: [&str; 4] = ["TARGET", "TARGET1", "TARGET2", "HANDLER"];

/// One line of the persisted map.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRecord {
    pub identifier: String,
    pub rule_ids: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FunctionRuleMap {
    by_ident: BTreeMap<String, BTreeSet<String>>,
    by_rule: BTreeMap<String, BTreeSet<String>>,
}

impl FunctionRuleMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, identifier: &str, rule_id: &str) {
        self.by_ident.entry(identifier.to_string()).or_default().insert(rule_id.to_string());
        self.by_rule.entry(rule_id.to_string()).or_default().insert(identifier.to_string());
    }

    /// Link every identifier token of `text` that is in `lexicon` or in `extra`.
    pub fn add_rule(&mut self, rule_id: &str, text: &str, extra: &BTreeSet<String>, lexicon: &BTreeSet<String>) {
        let tokens: BTreeSet<&str> = identifiers(text).map(|(_, t)| t).collect();
        for t in tokens {
            if lexicon.contains(t) || extra.contains(t) {
                self.insert(t, rule_id);
            }
        }
    }

    pub fn rules_for(&self, identifier: &str) -> impl Iterator<Item = &str> {
        self.by_ident.get(identifier).into_iter().flatten().map(String::as_str)
    }

    pub fn identifiers_for(&self, rule_id: &str) -> impl Iterator<Item = &str> {
        self.by_rule.get(rule_id).into_iter().flatten().map(String::as_str)
    }

    pub fn identifiers(&self) -> impl Iterator<Item = &str> {
        self.by_ident.keys().map(String::as_str)
    }

    /// Number of identifier/rule links.
    pub fn len(&self) -> usize {
        self.by_ident.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_ident.is_empty()
    }

    /// Records sorted by identifier, rule ids sorted.
    pub fn records(&self) -> Vec<MapRecord> {
        self.by_ident
            .iter()
            .map(|(k, v)| MapRecord { identifier: k.clone(), rule_ids: v.iter().cloned().collect() })
            .collect()
    }

    pub fn from_records(records: &[MapRecord]) -> Self {
        let mut m = Self::new();
        for r in records {
            for id in &r.rule_ids {
                m.insert(&r.identifier, id);
            }
        }
        m
    }
}

/// Link each rule to the identifiers its text names: tokens found in the
/// known-function `lexicon` or filled into an identifier slot.
pub fn build_function_rule_map(rules: &[SecurityRule], lexicon: &BTreeSet<String>) -> FunctionRuleMap {
    let mut m = FunctionRuleMap::new();
    for r in rules {
        let slots: BTreeSet<String> = SLOT_IDENTS.iter().filter_map(|s| r.slots.get(*s)).cloned().collect();
        m.add_rule(&r.id, &r.text, &slots, lexicon);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{Provenance, SecurityRule};
    use proptest::prelude::*;

    fn slots(kv: &[(&str, &str)]) -> BTreeMap<String, String> {
        kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn t1(target: &str) -> SecurityRule {
        SecurityRule::templated(
            1,
            slots(&[("TARGET", target), ("ERR_RETURN_VALUE", "NULL"), ("IMPACT", "a NULL-pointer dereference")]),
            Provenance::Mined,
        )
        .unwrap()
    }

    #[test]
    fn template_two_links_target_and_handler() {
        let r = SecurityRule::templated(
            2,
            slots(&[("TARGET", "clk_prepare_enable"), ("HANDLER", "clk_disable_unprepare"), ("IMPACT", "a resource leak")]),
            Provenance::Mined,
        )
        .unwrap();
        let m = build_function_rule_map(std::slice::from_ref(&r), &BTreeSet::new());
        assert_eq!(m.identifiers_for(&r.id).collect::<Vec<_>>(), vec!["clk_disable_unprepare", "clk_prepare_enable"]);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn shared_target_maps_to_both_rules() {
        let a = t1("kzalloc");
        let b = SecurityRule::free_form("Memory from `kzalloc` must be freed on every error path.", "kzalloc", Provenance::Mined);
        let m = build_function_rule_map(&[a.clone(), b.clone()], &BTreeSet::new());
        let mut want = vec![a.id.as_str(), b.id.as_str()];
        want.sort();
        assert_eq!(m.rules_for("kzalloc").collect::<Vec<_>>(), want);
    }

    #[test]
    fn free_text_rule_naming_lexicon_functions() {
        let text = "Pair every pci_enable_device() with pci_disable_device() and release regions via pci_release_regions when probe fails.";
        let r = SecurityRule::free_form(text, "pci_enable_device", Provenance::Mined);
        let lexicon: BTreeSet<String> =
            ["pci_enable_device", "pci_disable_device", "pci_release_regions", "kfree"].iter().map(|s| s.to_string()).collect();
        let m = build_function_rule_map(std::slice::from_ref(&r), &lexicon);
        assert_eq!(
            m.identifiers_for(&r.id).collect::<Vec<_>>(),
            vec!["pci_disable_device", "pci_enable_device", "pci_release_regions"]
        );
    }

    #[test]
    fn records_roundtrip() {
        let m = build_function_rule_map(&[t1("kzalloc"), t1("kmalloc")], &BTreeSet::new());
        assert_eq!(FunctionRuleMap::from_records(&m.records()), m);
    }

    proptest! {
        #[test]
        fn symmetric_and_grounded(targets in prop::collection::vec("[a-z][a-z_]{2,10}", 1..8)) {
            let rules: Vec<SecurityRule> = targets.iter().map(|t| t1(t)).collect();
            let lexicon: BTreeSet<String> = targets.iter().take(2).map(|t| format!("{t}_x")).chain(["NULL".to_string()]).collect();
            let m = build_function_rule_map(&rules, &lexicon);
            for ident in m.identifiers() {
                for rid in m.rules_for(ident) {
                    prop_assert!(m.identifiers_for(rid).any(|i| i == ident));
                    let r = rules.iter().find(|r| r.id == rid).unwrap();
                    prop_assert!(identifiers(&r.text).any(|(_, t)| t == ident));
                }
            }
            for r in &rules {
                for ident in m.identifiers_for(&r.id) {
                    prop_assert!(m.rules_for(ident).any(|x| x == r.id));
                }
            }
        }
    }
}
