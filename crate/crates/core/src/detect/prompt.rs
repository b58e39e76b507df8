//! The six detection prompt layouts.

use super::DetectError;
use crate::patch::SeedPatch;
use crate::rules::RuleRef;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

const BASIC_INTRO: &str = "You will be provided with a code. Your task is to analyze the code by following each code path and identify if the code contains any bugs, such as NULL dereference, memory leak, refcount leak, etc.";
const PATCH_INTRO: &str = "You will be provided with a patch. Afterwards, you will be shared with a code. Your task is to analyze the code by following each code path and identify if the code contains the same issue addressed by the patch.";
const RULE_INTRO: &str = "You will be provided with a security coding rule. Afterwards, you will be shared with a code. Your task is to analyze the code by following each code path and identify if the code violate the security rule.";
const RULE_PATCH_INTRO: &str = "You will be provided with a security coding rule, its related patch. Afterwards, you will be shared with a code. Your task is to analyze the code by following each code path and identify if the code violate the security rule.";

/// The chain-of-thought sentence dropped by [`PromptConfig::RuleNoCot`].
pub const COT_SENTENCE: &str = "Analyze the code line by line and show the analyzing steps. Finally, ";
const ANSWER_TAIL: &str = "respond with `YES' if there must be a violation of the coding rule, or `NO' otherwise. Do not assume other situations that are not appeared in the code or not mentioned in the coding rule.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptConfig {
    Basic,
    Patch,
    #[serde(rename = "hurule")]
    HuRule,
    Rule,
    #[serde(rename = "rule-nocot")]
    RuleNoCot,
    RulePatch,
}

impl PromptConfig {
    pub const ALL: [PromptConfig; 6] = [
        PromptConfig::Basic,
        PromptConfig::Patch,
        PromptConfig::HuRule,
        PromptConfig::Rule,
        PromptConfig::RuleNoCot,
        PromptConfig::RulePatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PromptConfig::Basic => "basic",
            PromptConfig::Patch => "patch",
            PromptConfig::HuRule => "hurule",
            PromptConfig::Rule => "rule",
            PromptConfig::RuleNoCot => "rule-nocot",
            PromptConfig::RulePatch => "rule-patch",
        }
    }

    pub fn needs_seed(self) -> bool {
        matches!(self, PromptConfig::Patch | PromptConfig::RulePatch)
    }

    pub fn needs_rule(self) -> bool {
        !matches!(self, PromptConfig::Basic | PromptConfig::Patch)
    }
}

impl fmt::Display for PromptConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptConfig {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['_', ' '], "-");
        PromptConfig::ALL
            .into_iter()
            .find(|c| c.as_str() == norm || (norm == "rulepatch" && *c == PromptConfig::RulePatch) || (norm == "rulenocot" && *c == PromptConfig::RuleNoCot))
            .ok_or_else(|| DetectError::Config(format!("unknown prompt config {s:?}")))
    }
}

fn block(out: &mut String, marker: &str, content: &str) {
    out.push_str(marker);
    out.push('\n');
    out.push_str(content);
    if !content.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("[end]\n");
}

/// Instantiate the prompt for `config` around `code`.
pub fn build_detection_prompt(
    config: PromptConfig,
    code: &str,
    rule: Option<RuleRef<'_>>,
    seed: Option<&SeedPatch>,
) -> Result<String, DetectError> {
    let rule_text = match (config.needs_rule(), rule) {
        (true, None) => return Err(DetectError::Config(format!("{config} prompt needs a rule"))),
        (true, Some(r)) => {
            if config == PromptConfig::HuRule && !matches!(r, RuleRef::Human(_)) {
                log::debug!("hurule prompt built from a generated rule");
            }
            Some(r.text().to_string())
        }
        (false, _) => None,
    };
    let patch_text = match (config.needs_seed(), seed) {
        (true, None) => return Err(DetectError::Config(format!("{config} prompt needs a seed patch"))),
        (true, Some(s)) => Some(s.render().trim_end_matches('\n').to_string()),
        (false, _) => None,
    };

    let mut out = String::new();
    let intro = match config {
        PromptConfig::Basic => BASIC_INTRO,
        PromptConfig::Patch => PATCH_INTRO,
        PromptConfig::RulePatch => RULE_PATCH_INTRO,
        _ => RULE_INTRO,
    };
    out.push_str(intro);
    out.push('\n');
    if let Some(r) = &rule_text {
        block(&mut out, "[Security coding rule]", r);
    }
    if let Some(p) = &patch_text {
        block(&mut out, "[Patch]", p);
    }
    block(&mut out, "[Code Snippets]", code);
    if config == PromptConfig::RuleNoCot {
        out.push('R');
        out.push_str(&ANSWER_TAIL[1..]);
    } else {
        out.push_str(COT_SENTENCE);
        out.push_str(ANSWER_TAIL);
    }
    out.push('\n');
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::HumanRule;

    #[test]
    fn names_round_trip() {
        for c in PromptConfig::ALL {
            assert_eq!(c.as_str().parse::<PromptConfig>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
        assert_eq!("RulePatch".parse::<PromptConfig>().unwrap(), PromptConfig::RulePatch);
        assert!("fancy".parse::<PromptConfig>().is_err());
    }

    #[test]
    fn required_inputs() {
        let h = HumanRule::new("r", vec!["f".into()]).unwrap();
        assert!(build_detection_prompt(PromptConfig::Rule, "x", None, None).is_err());
        assert!(build_detection_prompt(PromptConfig::Patch, "x", None, None).is_err());
        assert!(build_detection_prompt(PromptConfig::RulePatch, "x", Some(RuleRef::Human(&h)), None).is_err());
        assert!(build_detection_prompt(PromptConfig::Basic, "x", None, None).is_ok());
    }

    #[test]
    fn markers_in_order_even_for_empty_code() {
        let h = HumanRule::new("r", vec!["f".into()]).unwrap();
        for c in [PromptConfig::Basic, PromptConfig::HuRule, PromptConfig::Rule, PromptConfig::RuleNoCot] {
            let p = build_detection_prompt(c, "", Some(RuleRef::Human(&h)), None).unwrap();
            let code = p.find("[Code Snippets]\n").unwrap();
            let end = p[code..].find("[end]\n").unwrap();
            assert!(end > 0, "{c}");
            assert!(p.ends_with("coding rule.\n"));
        }
    }

    #[test]
    fn nocot_differs_by_one_sentence() {
        let h = HumanRule::new("Check kmalloc.", vec!["kmalloc".into()]).unwrap();
        let r = build_detection_prompt(PromptConfig::Rule, "int f(void) { return 0; }", Some(RuleRef::Human(&h)), None).unwrap();
        let n = build_detection_prompt(PromptConfig::RuleNoCot, "int f(void) { return 0; }", Some(RuleRef::Human(&h)), None).unwrap();
        assert_eq!(r.replace(&format!("{COT_SENTENCE}r"), "R"), n);
        assert!(n.contains("Respond with `YES'"));
    }
}
