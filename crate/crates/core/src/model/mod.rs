//! Chat-completion backends, token accounting and cost estimation.

mod cache;
mod client;
mod http;
mod mock;

pub use cache::{cache_key, CachedResponse, ResponseCache};
pub use client::{ModelClient, RateLimiter};
pub use http::HttpBackend;
pub use mock::{unit_hash, Fallback, MockBackend, MockReply, MockRule, MockScript, MOCK_EMBED_DIM};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("empty completion")]
    EmptyCompletion,
    #[error("empty prompt")]
    EmptyPrompt,
    #[error("prompt of ~{estimated} tokens exceeds the context limit of {limit}")]
    PromptTooLong { estimated: u64, limit: u64 },
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("unknown model {0:?} in price table")]
    UnknownModel(String),
    #[error("backend {0} does not support embeddings")]
    Unsupported(String),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl ModelError {
    /// Failures worth retrying with the same request.
    pub fn is_transient(&self) -> bool {
        match self {
            ModelError::Transport(_) => true,
            ModelError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    pub count: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { count: 3, backoff_ms: 500 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// "http" or "mock".
    pub backend: String,
    pub model: String,
    pub temperature: f64,
    pub top_p: f64,
    pub n: u32,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub embedding_model: String,
    /// Estimated prompt-token ceiling; longer prompts are refused locally.
    pub context_limit: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backend: "http".into(),
            model: "gpt-4o-mini".into(),
            temperature: 1.0,
            top_p: 1.0,
            n: 1,
            max_tokens: 2048,
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            embedding_model: "text-embedding-3-small".into(),
            context_limit: 128_000,
        }
    }
}

impl ModelConfig {
    pub fn mock() -> Self {
        ModelConfig { backend: "mock".into(), model: "mock".into(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ModelError::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(ModelError::Config(format!("top_p {} outside [0, 1]", self.top_p)));
        }
        if self.n != 1 {
            return Err(ModelError::Config(format!("n must be 1, got {}", self.n)));
        }
        if self.model.is_empty() {
            return Err(ModelError::Config("model name is empty".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Served from cache; nothing newly billed.
    pub cached: bool,
}

impl TokenUsage {
    pub fn billed_input(&self) -> u64 {
        if self.cached { 0 } else { self.input_tokens }
    }

    pub fn billed_output(&self) -> u64 {
        if self.cached { 0 } else { self.output_tokens }
    }
}

/// Raw backend answer before accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

/// A chat/embedding provider. Implementations must be shareable across workers.
pub trait Backend: Send + Sync {
    fn name(&self) -> &str;
    fn chat(&self, prompt: &str, cfg: &ModelConfig) -> Result<Completion, ModelError>;
    fn embed(&self, _text: &str, _cfg: &ModelConfig) -> Result<Vec<f64>, ModelError> {
        Err(ModelError::Unsupported(self.name().to_string()))
    }
}

pub trait TokenEstimator: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// `ceil(bytes / bytes_per_token)`.
#[derive(Clone, Copy, Debug)]
pub struct ByteEstimator {
    pub bytes_per_token: u64,
}

impl Default for ByteEstimator {
    fn default() -> Self {
        ByteEstimator { bytes_per_token: 4 }
    }
}

impl TokenEstimator for ByteEstimator {
    fn count(&self, text: &str) -> u64 {
        (text.len() as u64).div_ceil(self.bytes_per_token)
    }
}

/// Default local token estimate.
pub fn count_tokens(text: &str) -> u64 {
    ByteEstimator::default().count(text)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Price {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    #[serde(default)]
    pub models: BTreeMap<String, Price>,
}

impl PriceTable {
    pub fn with(mut self, model: &str, input_per_1k: f64, output_per_1k: f64) -> Self {
        self.models.insert(model.to_string(), Price { input_per_1k, output_per_1k });
        self
    }

    /// Parse a TOML table of `[models."name"] input_per_1k / output_per_1k`.
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let t: PriceTable = toml::from_str(text).map_err(|e| ModelError::Config(format!("price table: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (m, p) in &self.models {
            if !(p.input_per_1k >= 0.0 && p.output_per_1k >= 0.0) {
                return Err(ModelError::Config(format!("negative price for {m}")));
            }
        }
        Ok(())
    }

    pub fn get(&self, model: &str) -> Option<Price> {
        self.models.get(model).copied()
    }
}

/// Currency cost of the newly billed tokens in `usage`.
pub fn estimate_cost(usage: &TokenUsage, model: &str, prices: &PriceTable) -> Result<f64, ModelError> {
    let p = prices.get(model).ok_or_else(|| ModelError::UnknownModel(model.to_string()))?;
    Ok(usage.billed_input() as f64 / 1000.0 * p.input_per_1k + usage.billed_output() as f64 / 1000.0 * p.output_per_1k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn usage(i: u64, o: u64) -> TokenUsage {
        TokenUsage { input_tokens: i, output_tokens: o, cached: false }
    }

    #[test]
    fn token_estimates() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens(&"x".repeat(400)), 100);
        assert_eq!(count_tokens("abcde"), 2);
    }

    #[test]
    fn cost_examples() {
        let prices = PriceTable::default().with("m", 0.01, 0.03);
        assert!((estimate_cost(&usage(1000, 1000), "m", &prices).unwrap() - 0.04).abs() < 1e-12);
        assert_eq!(estimate_cost(&usage(0, 0), "m", &prices).unwrap(), 0.0);
        let cached = TokenUsage { cached: true, ..usage(1000, 1000) };
        assert_eq!(estimate_cost(&cached, "m", &prices).unwrap(), 0.0);
        assert!(matches!(estimate_cost(&usage(1, 1), "other", &prices), Err(ModelError::UnknownModel(_))));
    }

    #[test]
    fn price_table_toml() {
        let t = PriceTable::from_toml("[models.\"gpt-4o\"]\ninput_per_1k = 0.0025\noutput_per_1k = 0.01\n").unwrap();
        assert_eq!(t.get("gpt-4o").unwrap().output_per_1k, 0.01);
        assert!(PriceTable::from_toml("[models.m]\ninput_per_1k = -1.0\noutput_per_1k = 0.0\n").is_err());
    }

    #[test]
    fn config_bounds() {
        assert!(ModelConfig::default().validate().is_ok());
        let hot = ModelConfig { temperature: 2.5, ..ModelConfig::default() };
        assert!(hot.validate().is_err());
        let many = ModelConfig { n: 2, ..ModelConfig::default() };
        assert!(many.validate().is_err());
        let p = ModelConfig { top_p: 1.5, ..ModelConfig::default() };
        assert!(p.validate().is_err());
    }

    proptest! {
        #[test]
        fn cost_is_linear_and_monotone(i in 0u64..1_000_000, o in 0u64..1_000_000, n in 1u64..50, pi in 0.0f64..1.0, po in 0.0f64..1.0) {
            let prices = PriceTable::default().with("m", pi, po);
            let one = estimate_cost(&usage(i, o), "m", &prices).unwrap();
            let batch: f64 = (0..n).map(|_| estimate_cost(&usage(i, o), "m", &prices).unwrap()).sum();
            prop_assert!((batch - n as f64 * one).abs() <= 1e-9 * batch.max(1.0));
            prop_assert!(estimate_cost(&usage(i + 1, o), "m", &prices).unwrap() >= one);
            prop_assert!(estimate_cost(&usage(i, o + 1), "m", &prices).unwrap() >= one);
        }
    }
}
