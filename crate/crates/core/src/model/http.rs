//! OpenAI-compatible HTTP backend (`/chat/completions`, `/embeddings`).

use super::{Backend, Completion, ModelConfig, ModelError};
use serde_json::{json, Value};
use std::time::Duration;

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    /// Reads the API key from the variable named by `cfg.api_key_env`.
    pub fn from_config(cfg: &ModelConfig) -> Result<Self, ModelError> {
        let api_key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(cfg, api_key)
    }

    pub fn new(cfg: &ModelConfig, api_key: Option<String>) -> Result<Self, ModelError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ModelError::Config(format!("http client: {e}")))?;
        Ok(HttpBackend { client, base_url: cfg.base_url.trim_end_matches('/').to_string(), api_key })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ModelError> {
        let mut req = self.client.post(format!("{}/{path}", self.base_url)).json(body);
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| ModelError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ModelError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ModelError::Http { status: status.as_u16(), body: text.chars().take(500).collect() });
        }
        serde_json::from_str(&text).map_err(|e| ModelError::Transport(format!("malformed response: {e}")))
    }
}

impl Backend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn chat(&self, prompt: &str, cfg: &ModelConfig) -> Result<Completion, ModelError> {
        let body = json!({
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "n": cfg.n,
            "max_tokens": cfg.max_tokens,
        });
        let v = self.post("chat/completions", &body)?;
        let text = v["choices"][0]["message"]["content"].as_str().unwrap_or_default().to_string();
        Ok(Completion {
            text,
            input_tokens: v["usage"]["prompt_tokens"].as_u64(),
            output_tokens: v["usage"]["completion_tokens"].as_u64(),
        })
    }

    fn embed(&self, text: &str, cfg: &ModelConfig) -> Result<Vec<f64>, ModelError> {
        let v = self.post("embeddings", &json!({"model": cfg.embedding_model, "input": text}))?;
        v["data"][0]["embedding"]
            .as_array()
            .map(|a| a.iter().filter_map(Value::as_f64).collect())
            .ok_or_else(|| ModelError::Transport("embedding missing from response".into()))
    }
}
