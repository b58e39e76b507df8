//! The security coding rule template catalog and its fuzzy line matchers.

use regex::Regex;
use std::collections::BTreeMap;
use std::sync::OnceLock;

/// Identifier-valued slots. Values are normalized (backticks, `()` stripped).
pub const IDENT_SLOTS: &[&str] = &["TARGET", "TARGET1", "TARGET2", "HANDLER"];
/// Slots naming the code that detection scans for.
pub const TARGET_SLOTS: &[&str] = &["TARGET", "TARGET1", "TARGET2"];

#[derive(Debug)]
pub struct RuleTemplate {
    pub id: u8,
    /// Canonical skeleton used for rendering.
    pub skeleton: &'static str,
    /// Other phrasings recognized when parsing model output.
    pub alternates: &'static [&'static str],
    /// Targets implied by a slot-free template.
    pub implicit_targets: &'static [&'static str],
}

impl RuleTemplate {
    pub fn required_slots(&self) -> Vec<&'static str> {
        slot_names(self.skeleton)
    }

    /// Substitute `slots` into the skeleton. Missing slots are left as `{NAME}`.
    pub fn render(&self, slots: &BTreeMap<String, String>) -> String {
        let mut out = String::with_capacity(self.skeleton.len() + 32);
        let mut rest = self.skeleton;
        while let Some(open) = rest.find('{') {
            let close = open + rest[open..].find('}').expect("balanced skeleton");
            out.push_str(&rest[..open]);
            let name = &rest[open + 1..close];
            match slots.get(name) {
                Some(v) => out.push_str(v),
                None => out.push_str(&rest[open..=close]),
            }
            rest = &rest[close + 1..];
        }
        out.push_str(rest);
        out
    }

    fn fixed_len(skeleton: &str) -> usize {
        let slots: usize = slot_names(skeleton).iter().map(|s| s.len() + 2).sum();
        skeleton.len() - slots
    }
}

pub fn slot_names(skeleton: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = skeleton;
    while let Some(open) = rest.find('{') {
        let Some(len) = rest[open..].find('}') else { break };
        out.push(&rest[open + 1..open + len]);
        rest = &rest[open + len + 1..];
    }
    out
}

pub static TEMPLATES: &[RuleTemplate] = &[
    RuleTemplate {
        id: 1,
        skeleton: "The function {TARGET} may fail and return {ERR_RETURN_VALUE}. Therefore, its return value must be checked before use to prevent {IMPACT}.",
        alternates: &[
            "The function {TARGET} may fail and return {ERR_RETURN_VALUE}. Thus its return value should be checked before use to prevent {IMPACT}.",
            "{TARGET} may fail and return {ERR_RETURN_VALUE}; its return value must be checked before use to prevent {IMPACT}.",
        ],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 2,
        skeleton: "Once {TARGET} succeeds, ensure that {HANDLER} is invoked in any subsequent error handling path to prevent {IMPACT}.",
        alternates: &["Once {TARGET} succeeds, ensure that {HANDLER} is invoked in the subsequent error-handling path to prevent {IMPACT}."],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 3,
        skeleton: "Use {HANDLER} instead of {TARGET1} + {TARGET2} to {GOAL}.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 4,
        skeleton: "Memory allocated with {TARGET} must be freed with {HANDLER}, not kfree().",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 5,
        skeleton: "After calling {TARGET}, the refcount is incremented regardless of success or failure, so {HANDLER} must be invoked in every error-handling path to prevent {IMPACT}.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 6,
        skeleton: "Use {HANDLER} instead of {TARGET} when {CONDITION}, to prevent buffer overflow.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 7,
        skeleton: "Use {HANDLER} instead of {TARGET} for Ethernet-address comparisons. This guarantees correct results and skips unnecessary bytewise memory checks.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 8,
        skeleton: "Use {HANDLER} instead of {TARGET} for delays under 20ms",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 9,
        skeleton: "Release the {HANDLER} before calling {TARGET} and reacquire it immediately afterward to prevent {IMPACT}.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 10,
        skeleton: "No need to call {TARGET} before destroying them with {HANDLER}, as it automatically drains them, thus avoiding unnecessary overhead.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 11,
        skeleton: "The {TARGET} function returns an `unsigned long` value instead of 'int'. Make sure the return value is put into a variable with unsigned long type.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 12,
        skeleton: "{TARGET} returns a negative value on failure, so the return check should be irq < 0 instead of irq == 0.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 13,
        skeleton: "Instead of invoking {TARGET1} and {TARGET2} separately, use the {HANDLER} helper for iomap operations. This ensures proper resource management and avoids potential issues.",
        alternates: &[],
        implicit_targets: &[],
    },
    RuleTemplate {
        id: 14,
        skeleton: "The third parameter passed to core_link_read_dpcd() may remain uninitialized if the call fails, and since that variable might later be used by functions like core_link_write_dpcd(), it should be zero (e.g., with memset) before invoking core_link_read_dpcd() to prevent undefined behavior.",
        alternates: &[],
        implicit_targets: &["core_link_read_dpcd"],
    },
];

pub fn template(id: u8) -> Option<&'static RuleTemplate> {
    TEMPLATES.iter().find(|t| t.id == id)
}

struct Matcher {
    template_id: u8,
    re: Regex,
    slots: Vec<&'static str>,
    fixed_len: usize,
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '}'
}

/// Compile a skeleton into an anchored, case-insensitive matcher that
/// tolerates spacing, hyphenation and quote-style differences.
fn skeleton_regex(skeleton: &str) -> String {
    let mut re = String::from(r"(?is)^\s*");
    let chars: Vec<char> = skeleton.trim_end_matches('.').chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '{' {
            let end = i + chars[i..].iter().position(|&c| c == '}').expect("balanced skeleton");
            let name: String = chars[i + 1..end].iter().collect();
            re.push_str(&format!("(?P<{name}>.+?)"));
            i = end + 1;
            continue;
        }
        if c.is_whitespace() {
            let mut j = i;
            while j < chars.len() && chars[j].is_whitespace() {
                j += 1;
            }
            let prev_word = i > 0 && (is_word(chars[i - 1]) || chars[i - 1] == ')');
            let next_word = j < chars.len() && (is_word(chars[j]) || chars[j] == '{');
            re.push_str(if prev_word && next_word { r"\s+" } else { r"\s*" });
            i = j;
            continue;
        }
        match c {
            ',' | ';' | ':' | '.' => {
                re.push_str(&regex::escape(&c.to_string()));
                if chars.get(i + 1).is_some_and(|n| !n.is_whitespace()) {
                    re.push_str(r"\s*");
                }
            }
            '-' | '\u{2011}' | '\u{2010}' => re.push_str(r"[-\u{2010}\u{2011}\s]?"),
            '\'' | '`' | '"' => re.push_str(r#"['`"\u{2018}\u{2019}\u{201c}\u{201d}]?"#),
            _ => re.push_str(&regex::escape(&c.to_string())),
        }
        i += 1;
    }
    re.push_str(r"\s*\.?\s*$");
    re
}

fn matchers() -> &'static [Matcher] {
    static M: OnceLock<Vec<Matcher>> = OnceLock::new();
    M.get_or_init(|| {
        let mut out = Vec::new();
        for t in TEMPLATES {
            for sk in std::iter::once(&t.skeleton).chain(t.alternates.iter()) {
                out.push(Matcher {
                    template_id: t.id,
                    re: Regex::new(&skeleton_regex(sk)).expect("skeleton compiles"),
                    slots: slot_names(sk),
                    fixed_len: RuleTemplate::fixed_len(sk),
                });
            }
        }
        out
    })
}

/// Normalize a captured identifier-like slot value: `` `foo()` `` → `foo`.
pub fn normalize_ident_slot(v: &str) -> String {
    let v = v.trim().trim_matches(|c| matches!(c, '`' | '\'' | '"' | '\u{2018}' | '\u{2019}'));
    let v = v.strip_suffix("()").unwrap_or(v);
    v.trim().to_string()
}

/// Best template match of one rule line: `(template id, slots)`.
pub fn match_line(line: &str) -> Option<(u8, BTreeMap<String, String>)> {
    let line = line.replace(['\u{2011}', '\u{2010}'], "-");
    let mut best: Option<(&Matcher, regex::Captures)> = None;
    for m in matchers() {
        if let Some(caps) = m.re.captures(&line) {
            if best.as_ref().is_none_or(|(b, _)| m.fixed_len > b.fixed_len) {
                best = Some((m, caps));
            }
        }
    }
    let (m, caps) = best?;
    let mut slots = BTreeMap::new();
    for &name in &m.slots {
        let raw = caps.name(name).map_or("", |c| c.as_str());
        let v = if IDENT_SLOTS.contains(&name) {
            normalize_ident_slot(raw)
        } else {
            raw.trim().to_string()
        };
        slots.insert(name.to_string(), v);
    }
    Some((m.template_id, slots))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_unique_and_slots_appear_once() {
        let mut ids: Vec<u8> = TEMPLATES.iter().map(|t| t.id).collect();
        ids.dedup();
        assert_eq!(ids, (1..=14).collect::<Vec<_>>());
        for t in TEMPLATES {
            let names = t.required_slots();
            for n in &names {
                assert_eq!(t.skeleton.matches(&format!("{{{n}}}")).count(), 1, "template {}", t.id);
            }
        }
    }

    #[test]
    fn every_skeleton_compiles() {
        assert_eq!(matchers().len(), TEMPLATES.len() + 3);
    }

    #[test]
    fn clk_prepare_sentence_aligns_to_template_1() {
        let (id, slots) = match_line(
            "The function clk_prepare may fail and return a negative errno. Therefore, its return value must be checked before use to prevent undefined clock state.",
        )
        .unwrap();
        assert_eq!(id, 1);
        assert_eq!(slots["TARGET"], "clk_prepare");
        assert_eq!(slots["ERR_RETURN_VALUE"], "a negative errno");
        assert_eq!(slots["IMPACT"], "undefined clock state");
    }

    #[test]
    fn appendix_spacing_and_backticks_tolerated() {
        let (id, slots) = match_line(
            "the function `create_singlethread_workqueue()` may fail and return NULL. Therefore,its return value must be checked before use to prevent a NULL-pointer dereference",
        )
        .unwrap();
        assert_eq!(id, 1);
        assert_eq!(slots["TARGET"], "create_singlethread_workqueue");
        assert_eq!(slots["IMPACT"], "a NULL-pointer dereference");
    }

    #[test]
    fn semicolon_phrasing_maps_to_template_1() {
        let (id, slots) = match_line(
            "create_singlethread_workqueue may fail and return NULL; its return value must be checked before use to prevent a NULL\u{2011}pointer dereference.",
        )
        .unwrap();
        assert_eq!(id, 1);
        assert_eq!(slots["TARGET"], "create_singlethread_workqueue");
    }

    #[test]
    fn slot_boundary_requires_whitespace() {
        let (_, slots) = match_line(
            "The function dis_may may fail and return NULL. Therefore, its return value must be checked before use to prevent x.",
        )
        .unwrap();
        assert_eq!(slots["TARGET"], "dis_may");
    }

    #[test]
    fn table_phrasing_of_template_2() {
        let (id, slots) = match_line(
            "Once kobject_init succeeds, ensure that kobject_put is invoked in the subsequent error-handling path to prevent a memory leak.",
        )
        .unwrap();
        assert_eq!(id, 2);
        assert_eq!(slots["HANDLER"], "kobject_put");
    }

    #[test]
    fn template_14_matches_without_slots() {
        let t = template(14).unwrap();
        let (id, slots) = match_line(t.skeleton).unwrap();
        assert_eq!(id, 14);
        assert!(slots.is_empty());
    }
}
