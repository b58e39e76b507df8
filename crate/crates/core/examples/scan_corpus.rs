//! Judge every caller of a rule's target with a scripted model, then drop
//! findings that blame a look-alike function.

use seedscan::corpus::{MatchMode, SourceCorpus};
use seedscan::detect::{postprocess, scan_summary, PromptConfig, ScanOptions, Scanner};
use seedscan::model::{MockBackend, MockScript, ModelClient, ModelConfig};
use seedscan::rules::{Provenance, RuleRef, SecurityRule};
use std::collections::BTreeMap;
use std::sync::Arc;

fn main() -> anyhow::Result<()> {
    let slots: BTreeMap<String, String> = [("TARGET", "clk_prepare"), ("ERR_RETURN_VALUE", "a negative errno"), ("IMPACT", "an unbalanced clock state")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let rule = SecurityRule::templated(1, slots, Provenance::Human)?;
    let corpus = SourceCorpus::from_files([(
        "drivers/clk/demo.c",
        "static int good(struct clk *c)\n{\n\tint ret = clk_prepare(c);\n\tif (ret)\n\t\treturn ret;\n\treturn 0;\n}\n\nstatic void bad(struct clk *c)\n{\n\tclk_prepare(c);\n}\n\nstatic void both(struct clk *c)\n{\n\tclk_prepare(c);\n\tclk_prepare_enable(c);\n}\n",
    )]);
    let candidates = corpus.enumerate_call_sites("clk_prepare", MatchMode::Call)?;

    let script = MockScript::constant("The return value is checked.\nNO")
        .respond_to("bad(struct clk", "clk_prepare(c) is called and the result is ignored.\nYES")
        .respond_to("both(struct clk", "The call to `clk_prepare_enable()` is unchecked.\nYES");
    let client = ModelClient::new(Arc::new(MockBackend::new(script)), ModelConfig::mock())?;
    let opts = ScanOptions { config: PromptConfig::Rule, ..ScanOptions::default() };
    let findings = Scanner::new(&client, RuleRef::Security(&rule), None, opts).scan(&candidates)?;
    let findings = postprocess(findings, RuleRef::Security(&rule));
    for f in &findings {
        println!("{} {:?} {:?} {}", f.candidate_id, f.verdict.kind, f.status, f.reason.as_deref().unwrap_or(""));
    }
    println!("{}", scan_summary(&findings));
    Ok(())
}
