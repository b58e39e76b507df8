use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictKind {
    Violation,
    NoViolation,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub raw: String,
    pub note: String,
}

fn token_re() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap())
}

/// Classify a completion by its last standalone YES/NO token.
///
/// Quotes and backticks are ignored. When the text contains upper-case
/// answers, lower-case "no"/"yes" in the surrounding prose is not counted.
pub fn extract_verdict(completion: &str) -> Verdict {
    let cleaned: String = completion
        .chars()
        .map(|c| if matches!(c, '`' | '\'' | '"' | '\u{2018}' | '\u{2019}' | '\u{201c}' | '\u{201d}' | '*') { ' ' } else { c })
        .collect();
    let tokens: Vec<(usize, &str)> = token_re().find_iter(&cleaned).map(|m| (m.start(), m.as_str())).collect();
    let upper: Vec<&(usize, &str)> = tokens.iter().filter(|(_, t)| *t == "YES" || *t == "NO").collect();
    let last = if upper.is_empty() { tokens.last() } else { upper.last().copied() };
    let (kind, note) = match last {
        None => (VerdictKind::Undecided, "no YES/NO token".to_string()),
        Some((at, t)) => {
            let kind = if t.eq_ignore_ascii_case("yes") { VerdictKind::Violation } else { VerdictKind::NoViolation };
            (kind, format!("last {} token at byte {at} of {}", t.to_ascii_uppercase(), tokens.len()))
        }
    };
    Verdict { kind, raw: completion.to_string(), note }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(extract_verdict("…line 12 leaks. YES").kind, VerdictKind::Violation);
        assert_eq!(extract_verdict("Yes, at first glance… but the caller frees it. NO").kind, VerdictKind::NoViolation);
        assert_eq!(extract_verdict("The code is fine.").kind, VerdictKind::Undecided);
        assert_eq!(extract_verdict("`YES'").kind, VerdictKind::Violation);
        assert_eq!(extract_verdict("Answer: **NO**").kind, VerdictKind::NoViolation);
        assert_eq!(extract_verdict("yes").kind, VerdictKind::Violation);
        assert_eq!(extract_verdict("Nothing; nobody; yesterday").kind, VerdictKind::Undecided);
        assert_eq!(extract_verdict("YES. There is no NULL check on the result.").kind, VerdictKind::Violation);
    }

    proptest! {
        #[test]
        fn total_and_sound(s in "\\PC{0,200}") {
            let v = extract_verdict(&s);
            prop_assert_eq!(&v, &extract_verdict(&s));
            if v.kind == VerdictKind::Violation {
                prop_assert!(s.to_ascii_lowercase().contains("yes"));
            }
        }
    }
}
