//! Ten-pair evaluation against a real chat-completions endpoint.
//!
//! Needs the API key in the variable named by `api_key_env` (OPENAI_API_KEY
//! by default). SEEDSCAN_MODEL and SEEDSCAN_BASE_URL pick another model or
//! compatible endpoint. Accuracy varies between runs at temperature 1.

use seedscan::detect::PromptConfig;
use seedscan::eval::synthetic::synthetic_dataset;
use seedscan::eval::{evaluate, report_text, EvalOptions};
use seedscan::model::{HttpBackend, ModelClient, ModelConfig, PriceTable};
use std::sync::Arc;

fn main() -> anyhow::Result<()> {
    let mut cfg = ModelConfig::default();
    if let Ok(m) = std::env::var("SEEDSCAN_MODEL") {
        cfg.model = m;
    }
    if let Ok(u) = std::env::var("SEEDSCAN_BASE_URL") {
        cfg.base_url = u;
    }
    if std::env::var(&cfg.api_key_env).map_or(true, |k| k.is_empty()) {
        eprintln!("{} is not set; nothing to do", cfg.api_key_env);
        return Ok(());
    }
    let client = ModelClient::new(Arc::new(HttpBackend::from_config(&cfg)?), cfg.clone())?.with_rate_limit(Some(60));
    let dataset = synthetic_dataset(2, 12, 10);
    let result = evaluate(&dataset, PromptConfig::Rule, &client, &EvalOptions { workers: 2 })?;
    print!("{}", report_text(&[result], &PriceTable::default()));
    Ok(())
}
