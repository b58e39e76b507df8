//! Evaluate the six prompt configurations on a synthetic ground-truth set
//! with a coin-flip model and print the ablation table.

use seedscan::detect::PromptConfig;
use seedscan::eval::synthetic::synthetic_dataset;
use seedscan::eval::{accounting, evaluate, report_text, EvalOptions};
use seedscan::model::{MockBackend, MockScript, ModelClient, ModelConfig, PriceTable};
use std::sync::Arc;

fn main() -> anyhow::Result<()> {
    let dataset = synthetic_dataset(10, 60, 1);
    let a = accounting(&dataset);
    println!("patterns={} pairs={} snippets={}", a.patterns, a.pairs, a.snippets);
    let client = ModelClient::new(Arc::new(MockBackend::new(MockScript::random(1))), ModelConfig::mock())?;
    let mut results = Vec::new();
    for config in PromptConfig::ALL {
        results.push(evaluate(&dataset, config, &client, &EvalOptions::default())?);
    }
    let prices = PriceTable::default().with("mock", 0.0025, 0.01);
    print!("{}", report_text(&results, &prices));
    Ok(())
}
