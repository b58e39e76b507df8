//! Compare prompt sizes across configurations and price a run.

use seedscan::corpus::{MatchMode, SourceCorpus};
use seedscan::detect::{build_detection_prompt, PromptConfig};
use seedscan::model::{count_tokens, PriceTable};
use seedscan::patch::{build_seed_patch, parse_commit};
use seedscan::rules::{HumanRule, Provenance, RuleRef, SecurityRule};
use std::collections::BTreeMap;

const PRE: &str = "char *make_buf(size_t n)\n{\n\tchar *p = malloc(n);\n\tp[0] = 0;\n\treturn p;\n}\n";
const COMMIT: &str = "From 0123456789abcdef0123456789abcdef01234567 Mon Sep 17 00:00:00 2001\nSubject: [PATCH] buf: check malloc\n\n---\ndiff --git a/buf.c b/buf.c\n--- a/buf.c\n+++ b/buf.c\n@@ -1,6 +1,8 @@\n char *make_buf(size_t n)\n {\n \tchar *p = malloc(n);\n+\tif (!p)\n+\t\treturn NULL;\n \tp[0] = 0;\n \treturn p;\n }\n";

fn main() -> anyhow::Result<()> {
    let pre = SourceCorpus::from_files([("buf.c", PRE)]);
    let seed = build_seed_patch(&parse_commit(COMMIT)?, &pre)?;
    let code = pre.enumerate_call_sites("malloc", MatchMode::Call)?[0].body().to_string();
    let slots: BTreeMap<String, String> =
        [("TARGET", "malloc"), ("ERR_RETURN_VALUE", "NULL"), ("IMPACT", "a NULL-pointer dereference")].into_iter().map(|(k, v)| (k.into(), v.into())).collect();
    let rule = SecurityRule::templated(1, slots, Provenance::Human)?;
    let human = HumanRule::new("Check the result of malloc for NULL.", vec!["malloc".into()])?;

    let prices = PriceTable::default().with("example-model", 0.0025, 0.01);
    let price = &prices.models["example-model"];
    for config in PromptConfig::ALL {
        let r = if config == PromptConfig::HuRule { RuleRef::Human(&human) } else { RuleRef::Security(&rule) };
        let tokens = count_tokens(&build_detection_prompt(config, &code, Some(r), Some(&seed))?);
        // Assume a 200-token answer per snippet and 1,000 snippets.
        let usd = 1000.0 * (tokens as f64 * price.input_per_1k + 200.0 * price.output_per_1k) / 1000.0;
        println!("{:<11} input_tokens={tokens:>4} est_cost_per_1k_snippets=${usd:.2}", config.as_str());
    }
    Ok(())
}
