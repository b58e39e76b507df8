//! Deterministic scripted backend used for tests and offline runs.

use super::{count_tokens, Backend, Completion, ModelConfig, ModelError};
use crate::util::{hash_fields, sha256_hex};
use serde::Deserialize;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

pub const MOCK_EMBED_DIM: usize = 64;

/// What a matching rule produces.
#[derive(Clone, Debug, PartialEq)]
pub enum MockReply {
    Text(String),
    Empty,
    Transport,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MockRule {
    /// Exact prompt, by lowercase hex sha256.
    Hash { sha256: String, reply: MockReply, times: Option<u64> },
    /// Prompt contains the substring.
    Contains { needle: String, reply: MockReply, times: Option<u64> },
}

/// Answer for prompts no rule matched.
#[derive(Clone, Debug, PartialEq)]
pub enum Fallback {
    /// YES with probability `p_yes`, drawn from hash(seed, prompt) so the
    /// answer does not depend on call order.
    Random { seed: u64, p_yes: f64 },
    Text(String),
}

impl Default for Fallback {
    fn default() -> Self {
        Fallback::Random { seed: 0, p_yes: 0.5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
    pub fallback: Fallback,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    sha256: Option<String>,
    contains: Option<String>,
    response: Option<String>,
    error: Option<String>,
    times: Option<u64>,
    fallback: Option<String>,
    seed: Option<u64>,
    p_yes: Option<f64>,
    text: Option<String>,
}

impl MockScript {
    pub fn random(seed: u64) -> Self {
        MockScript { rules: Vec::new(), fallback: Fallback::Random { seed, p_yes: 0.5 } }
    }

    pub fn constant(text: impl Into<String>) -> Self {
        MockScript { rules: Vec::new(), fallback: Fallback::Text(text.into()) }
    }

    pub fn with_rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn respond_to(self, needle: impl Into<String>, text: impl Into<String>) -> Self {
        self.with_rule(MockRule::Contains { needle: needle.into(), reply: MockReply::Text(text.into()), times: None })
    }

    /// Parse the JSONL script format. Each line is one of:
    /// `{"sha256"|"contains": .., "response": ..}`, `{.., "error": "empty"|"transport", "times": n}`,
    /// `{"fallback": "random", "seed": n, "p_yes": p}` or `{"fallback": "text", "text": ..}`.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut script = MockScript::default();
        for (n, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |msg: String| ModelError::Config(format!("mock script line {}: {msg}", n + 1));
            let l: Line = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
            if let Some(kind) = l.fallback {
                script.fallback = match kind.as_str() {
                    "random" => {
                        let p_yes = l.p_yes.unwrap_or(0.5);
                        if !(0.0..=1.0).contains(&p_yes) {
                            return Err(bad(format!("p_yes {p_yes} outside [0, 1]")));
                        }
                        Fallback::Random { seed: l.seed.unwrap_or(0), p_yes }
                    }
                    "text" => Fallback::Text(l.text.ok_or_else(|| bad("text fallback needs \"text\"".into()))?),
                    other => return Err(bad(format!("unknown fallback {other:?}"))),
                };
                continue;
            }
            let reply = match (l.response, l.error.as_deref()) {
                (Some(r), None) => MockReply::Text(r),
                (None, Some("empty")) => MockReply::Empty,
                (None, Some("transport")) => MockReply::Transport,
                (None, Some(e)) => return Err(bad(format!("unknown error kind {e:?}"))),
                _ => return Err(bad("need exactly one of \"response\" or \"error\"".into())),
            };
            let rule = match (l.sha256, l.contains) {
                (Some(h), None) => MockRule::Hash { sha256: h.to_ascii_lowercase(), reply, times: l.times },
                (None, Some(c)) => MockRule::Contains { needle: c, reply, times: l.times },
                _ => return Err(bad("need exactly one of \"sha256\" or \"contains\"".into())),
            };
            script.rules.push(rule);
        }
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Config(e.to_string()))?;
        Self::parse(&text)
    }

    /// Inverse of [`MockScript::parse`]; the fallback comes first.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let fallback = match &self.fallback {
            Fallback::Random { seed, p_yes } => serde_json::json!({"fallback": "random", "seed": seed, "p_yes": p_yes}),
            Fallback::Text(t) => serde_json::json!({"fallback": "text", "text": t}),
        };
        out.push_str(&format!("{fallback}\n"));
        for r in &self.rules {
            let (key, val, reply, times) = match r {
                MockRule::Hash { sha256, reply, times } => ("sha256", sha256, reply, times),
                MockRule::Contains { needle, reply, times } => ("contains", needle, reply, times),
            };
            let mut obj = serde_json::Map::new();
            obj.insert(key.into(), val.clone().into());
            match reply {
                MockReply::Text(t) => obj.insert("response".into(), t.clone().into()),
                MockReply::Empty => obj.insert("error".into(), "empty".into()),
                MockReply::Transport => obj.insert("error".into(), "transport".into()),
            };
            if let Some(t) = times {
                obj.insert("times".into(), (*t).into());
            }
            out.push_str(&format!("{}\n", serde_json::Value::Object(obj)));
        }
        out
    }
}

/// Backend answering from a [`MockScript`]. Counts live calls.
#[derive(Debug)]
pub struct MockBackend {
    script: MockScript,
    hits: Vec<AtomicU64>,
    calls: AtomicU64,
}

/// Uniform draw in [0, 1) keyed by `seed` and `text`.
pub fn unit_hash(seed: u64, text: &str) -> f64 {
    let h = hash_fields([seed.to_le_bytes().as_slice(), text.as_bytes()]);
    let v = u64::from_str_radix(&h[..16], 16).expect("hex");
    (v >> 11) as f64 / (1u64 << 53) as f64
}

fn random_reply(seed: u64, p_yes: f64, prompt: &str) -> String {
    let yes = unit_hash(seed, prompt) < p_yes;
    let n_steps = 1 + (unit_hash(seed ^ 0x9e37_79b9, prompt) * 3.0) as usize;
    let mut out = String::from("Following each code path of the provided code:\n");
    for i in 1..=n_steps {
        out.push_str(&format!("{i}. The relevant call and its error handling were inspected.\n"));
    }
    out.push_str(if yes { "YES" } else { "NO" });
    out
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let hits = script.rules.iter().map(|_| AtomicU64::new(0)).collect();
        MockBackend { script, hits, calls: AtomicU64::new(0) }
    }

    /// Live `chat` calls served so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn matching(&self, prompt: &str) -> Option<&MockReply> {
        let digest = sha256_hex(prompt.as_bytes());
        // exact-hash rules take precedence over substring rules
        let ordered = self
            .script
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| matches!(r, MockRule::Hash { .. }))
            .chain(self.script.rules.iter().enumerate().filter(|(_, r)| matches!(r, MockRule::Contains { .. })));
        for (i, rule) in ordered {
            let (hit, reply, times) = match rule {
                MockRule::Hash { sha256, reply, times } => (*sha256 == digest, reply, times),
                MockRule::Contains { needle, reply, times } => (prompt.contains(needle.as_str()), reply, times),
            };
            if !hit {
                continue;
            }
            let used = self.hits[i].fetch_add(1, Ordering::SeqCst);
            if times.is_none_or(|t| used < t) {
                return Some(reply);
            }
        }
        None
    }
}

impl Backend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn chat(&self, prompt: &str, _cfg: &ModelConfig) -> Result<Completion, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = match self.matching(prompt) {
            Some(MockReply::Text(t)) => t.clone(),
            Some(MockReply::Empty) => String::new(),
            Some(MockReply::Transport) => return Err(ModelError::Transport("scripted transport failure".into())),
            None => match &self.script.fallback {
                Fallback::Random { seed, p_yes } => random_reply(*seed, *p_yes, prompt),
                Fallback::Text(t) => t.clone(),
            },
        };
        Ok(Completion { input_tokens: Some(count_tokens(prompt)), output_tokens: Some(count_tokens(&text)), text })
    }

    /// Signed feature hashing of lowercase word tokens.
    fn embed(&self, text: &str, _cfg: &ModelConfig) -> Result<Vec<f64>, ModelError> {
        let mut v = vec![0.0; MOCK_EMBED_DIM];
        for word in text.split(|c: char| !(c.is_alphanumeric() || c == '_')).filter(|w| !w.is_empty()) {
            let h = sha256_hex(word.to_lowercase().as_bytes());
            let bucket = usize::from_str_radix(&h[..8], 16).expect("hex") % MOCK_EMBED_DIM;
            let sign = if u8::from_str_radix(&h[8..10], 16).expect("hex") & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig::mock()
    }

    #[test]
    fn jsonl_roundtrip() {
        let s = MockScript::constant("NO")
            .respond_to("kzalloc", "YES")
            .with_rule(MockRule::Hash { sha256: "ab".repeat(32), reply: MockReply::Transport, times: Some(2) })
            .with_rule(MockRule::Contains { needle: "x\"y".into(), reply: MockReply::Empty, times: None });
        assert_eq!(MockScript::parse(&s.to_jsonl()).unwrap(), s);
        let r = MockScript::random(7);
        assert_eq!(MockScript::parse(&r.to_jsonl()).unwrap(), r);
    }

    #[test]
    fn scripted_hash_match() {
        let p = "is this buggy?";
        let script = MockScript::parse(&format!("{{\"sha256\": \"{}\", \"response\": \"NO\"}}\n", sha256_hex(p.as_bytes()))).unwrap();
        let m = MockBackend::new(script);
        let c = m.chat(p, &cfg()).unwrap();
        assert_eq!(c.text, "NO");
        assert_eq!(c.input_tokens, Some(count_tokens(p)));
    }

    #[test]
    fn hash_beats_contains_and_times_expire() {
        let p = "alpha beta";
        let script = MockScript::parse(&format!(
            "{{\"contains\": \"alpha\", \"response\": \"A\"}}\n{{\"sha256\": \"{}\", \"error\": \"transport\", \"times\": 1}}\n{{\"fallback\": \"text\", \"text\": \"F\"}}\n",
            sha256_hex(p.as_bytes())
        ))
        .unwrap();
        let m = MockBackend::new(script);
        assert!(matches!(m.chat(p, &cfg()), Err(ModelError::Transport(_))));
        assert_eq!(m.chat(p, &cfg()).unwrap().text, "A");
        assert_eq!(m.chat("zzz", &cfg()).unwrap().text, "F");
        assert_eq!(m.calls(), 3);
    }

    #[test]
    fn random_verdicts_are_reproducible_and_order_free() {
        let prompts: Vec<String> = (0..100).map(|i| format!("prompt {i}")).collect();
        let run = |order: &mut dyn Iterator<Item = &String>| {
            let m = MockBackend::new(MockScript::random(7));
            let mut v: Vec<(String, String)> = order.map(|p| (p.clone(), m.chat(p, &cfg()).unwrap().text)).collect();
            v.sort();
            v
        };
        let a = run(&mut prompts.iter());
        let b = run(&mut prompts.iter().rev());
        assert_eq!(a, b);
        let yes = a.iter().filter(|(_, t)| t.ends_with("YES")).count();
        assert!((30..=70).contains(&yes), "{yes}");
        let other = run(&mut prompts.iter());
        assert_eq!(a, other);
    }

    #[test]
    fn unit_hash_is_uniform_enough() {
        let mean: f64 = (0..10_000).map(|i| unit_hash(3, &i.to_string())).sum::<f64>() / 10_000.0;
        assert!((mean - 0.5).abs() < 0.02);
    }

    #[test]
    fn script_errors_name_the_line() {
        let e = MockScript::parse("\n{\"contains\": \"x\"}\n").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        assert!(MockScript::parse("{\"fallback\": \"weird\"}").is_err());
        assert!(MockScript::parse("{\"bogus\": 1}").is_err());
    }

    #[test]
    fn embeddings_are_deterministic() {
        let m = MockBackend::new(MockScript::default());
        let a = m.embed("Use kzalloc instead of kmalloc", &cfg()).unwrap();
        assert_eq!(a, m.embed("Use kzalloc instead of kmalloc", &cfg()).unwrap());
        assert_eq!(a.len(), MOCK_EMBED_DIM);
        assert_ne!(a, m.embed("something else entirely", &cfg()).unwrap());
    }
}
