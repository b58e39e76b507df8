use super::{Finding, FindingStatus};
use crate::rules::RuleRef;
use crate::util::{identifiers, is_c_identifier};
use regex::Regex;
use std::collections::HashSet;
use std::sync::OnceLock;

pub const TARGET_MISMATCH: &str = "target-mismatch";

fn flagged_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| {
        Regex::new(r#"[`'"\u{2018}\u{201c}]\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(\s*\))?\s*[`'"\u{2019}\u{201d}]|\b([A-Za-z_][A-Za-z0-9_]*)\s*\("#).unwrap()
    })
}

/// Identifiers the completion singles out: quoted names and call-shaped mentions.
pub fn flagged_identifiers(completion: &str) -> Vec<String> {
    flagged_re()
        .captures_iter(completion)
        .filter_map(|c| c.get(1).or_else(|| c.get(2)).map(|m| m.as_str().to_string()))
        .filter(|s| is_c_identifier(s))
        .collect()
}

fn similar(a: &str, b: &str) -> bool {
    a != b && a.len() >= 4 && b.len() >= 4 && (a.contains(b) || b.contains(a))
}

/// True when the completion talks about a look-alike of the target but never the target itself.
pub fn is_target_mismatch(completion: &str, targets: &[String], handler: Option<&str>) -> bool {
    let mentioned: HashSet<&str> = identifiers(completion).map(|(_, t)| t).collect();
    if targets.iter().any(|t| mentioned.contains(t.as_str())) {
        return false;
    }
    flagged_identifiers(completion)
        .iter()
        .filter(|f| Some(f.as_str()) != handler)
        .any(|f| targets.iter().any(|t| similar(f, t)))
}

/// Collapse duplicate (candidate, rule) findings and filter look-alike
/// target confusions. Idempotent.
pub fn postprocess(findings: Vec<Finding>, rule: RuleRef<'_>) -> Vec<Finding> {
    let targets = rule.targets();
    let handler = match rule {
        RuleRef::Security(r) => r.handler().map(str::to_string),
        RuleRef::Human(_) => None,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(findings.len());
    for mut f in findings {
        if !seen.insert((f.candidate_id.clone(), f.rule_id.clone())) {
            continue;
        }
        if f.status == FindingStatus::Kept && is_target_mismatch(&f.verdict.raw, &targets, handler.as_deref()) {
            f.status = FindingStatus::Filtered;
            f.reason = Some(TARGET_MISMATCH.to_string());
        }
        out.push(f);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        vec![s.to_string()]
    }

    #[test]
    fn look_alike_only() {
        let c = "The code calls `clk_prepare_enable()` and never checks its result.\nYES";
        assert!(is_target_mismatch(c, &t("clk_prepare"), None));
        let c = "clk_prepare_enable(clk) is unchecked; clk_prepare is not used. YES";
        assert!(!is_target_mismatch(c, &t("clk_prepare"), None));
        assert!(!is_target_mismatch("kmalloc(n) is unchecked. YES", &t("kmalloc"), None));
        assert!(!is_target_mismatch("`clk_disable_unprepare` is missing. YES", &t("clk_prepare_enable"), Some("clk_disable_unprepare")));
        assert!(!is_target_mismatch("something vague. YES", &t("clk_prepare"), None));
    }

    #[test]
    fn flagged_forms() {
        assert_eq!(flagged_identifiers("`a_b()` and 'c' and d(x) and \"e\""), vec!["a_b", "c", "d", "e"]);
    }
}
