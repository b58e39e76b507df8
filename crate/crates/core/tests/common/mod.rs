#![allow(dead_code)]

use seedscan::corpus::{load_corpus, MatchMode, SourceCorpus};
use seedscan::patch::{build_seed_patch, parse_commit, SeedPatch};
use seedscan::rules::{HumanRule, Provenance, SecurityRule};
use std::collections::BTreeMap;
use std::path::PathBuf;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(rel: &str) -> PathBuf {
    manifest_dir().join("tests/fixtures").join(rel)
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(manifest_dir().join("tests/golden").join(name)).unwrap()
}

pub fn seed_from(dir: &str, commit: &str) -> (SourceCorpus, SeedPatch) {
    let raw = std::fs::read_to_string(fixture(dir).join(commit)).unwrap();
    let corpus = load_corpus(&fixture(dir).join("pre"), &[]).unwrap();
    let seed = build_seed_patch(&parse_commit(&raw).unwrap(), &corpus).unwrap();
    (corpus, seed)
}

pub fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Inputs of the golden detection prompts.
pub struct PromptInputs {
    pub code: String,
    pub seed: SeedPatch,
    pub rule: SecurityRule,
    pub human: HumanRule,
}

pub fn prompt_inputs() -> PromptInputs {
    let (corpus, seed) = seed_from("minimal", "commit.patch");
    let code = corpus.enumerate_call_sites("malloc", MatchMode::Call).unwrap()[0].body().to_string();
    let rule = SecurityRule::templated(
        1,
        slots(&[("TARGET", "malloc"), ("ERR_RETURN_VALUE", "NULL"), ("IMPACT", "a NULL-pointer dereference")]),
        Provenance::Seed { commit: seed.commit.clone() },
    )
    .unwrap();
    let human = HumanRule::new(
        "The return value of malloc must be checked for NULL before the buffer is written.",
        vec!["malloc".into()],
    )
    .unwrap();
    PromptInputs { code, seed, rule, human }
}

pub const WQ_TARGET: &str = "create_singlethread_workqueue";

pub fn wq_caller(i: usize) -> String {
    format!("wq_caller_{i:03}")
}

/// Corpus of `callers` functions calling the workqueue constructor spread over
/// `files` files, plus decoys: mentions in comments and strings, a use
/// without a call, a prototype and the constructor's own definition. Callers
/// listed in `unchecked` skip the NULL check. Returns the caller names.
pub fn write_caller_corpus(root: &std::path::Path, callers: usize, files: usize, unchecked: &[usize]) -> Vec<String> {
    use std::fmt::Write;
    let mut texts: Vec<String> = (0..files).map(|f| format!("#include \"wq.h\"\n\n/* driver {f} */\n")).collect();
    for i in 0..callers {
        let t = &mut texts[i % files];
        let check = if unchecked.contains(&i) { "" } else { "\tif (!d->wq)\n\t\treturn -ENOMEM;\n" };
        let _ = write!(
            t,
            "\nstatic int {}(struct dev *d)\n{{\n\td->wq = {WQ_TARGET}(\"wq{i}\");\n{check}\treturn 0;\n}}\n",
            wq_caller(i)
        );
    }
    texts[0].push_str(&format!(
        "\n/* {WQ_TARGET}(name) is deprecated */\nstatic void decoy_log(void)\n{{\n\tpr_info(\"{WQ_TARGET}(%d)\\n\", 1);\n\t// {WQ_TARGET}(x);\n}}\n"
    ));
    texts[files - 1].push_str(&format!("\nstatic void *decoy_ptr(void)\n{{\n\treturn (void *){WQ_TARGET};\n}}\n"));
    let dir = root.join("drivers/wq");
    std::fs::create_dir_all(&dir).unwrap();
    for (f, t) in texts.iter().enumerate() {
        std::fs::write(dir.join(format!("wq{f:02}.c")), t).unwrap();
    }
    std::fs::write(
        root.join("drivers/wq/wq.h"),
        format!("struct workqueue_struct *{WQ_TARGET}(const char *name);\n"),
    )
    .unwrap();
    std::fs::write(
        root.join("drivers/wq/core.c"),
        format!("struct workqueue_struct *{WQ_TARGET}(const char *name)\n{{\n\treturn alloc_wq(name);\n}}\n"),
    )
    .unwrap();
    (0..callers).map(wq_caller).collect()
}
