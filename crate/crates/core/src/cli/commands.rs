//! Subcommand bodies. Each takes a resolved [`RunConfig`] and returns a
//! report; printing and exit codes are left to the caller.

use super::config::RunConfig;
use super::state::{digest_input, OutputLock, RunManifest};
use super::CliError;
use crate::corpus::{load_corpus_with, CorpusOptions, SourceCorpus};
use crate::detect::{candidates_for_rule, postprocess, scan_summary, DetectError, Finding, PromptConfig, ScanOptions, Scanner};
use crate::eval::{load_dataset, report_csv, report_text, EvalError, EvalOptions, EvalResult, GroundTruthPattern, SnippetJudgment};
use crate::mine::{mine, ClusterRecord, MineOutput, PatchSummary, PrecomputedEmbeddings};
use crate::model::{Backend, HttpBackend, MockBackend, MockScript, ModelClient, PriceTable, ResponseCache};
use crate::patch::{build_seed_patch, parse_commit, SeedPatch};
use crate::rules::{parse_rule_response, render_rule_generation_prompt, HumanRule, Provenance, RuleCatalog, RuleRef, SecurityRule};
use crate::util::{append_jsonl, read_jsonl, read_jsonl_or_empty, write_jsonl};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

pub const SEEDS_FILE: &str = "seeds.jsonl";
pub const FINDINGS_FILE: &str = "findings.jsonl";
pub const JUDGMENTS_FILE: &str = "eval_judgments.jsonl";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const CLUSTERS_FILE: &str = "clusters.jsonl";
pub const MAP_FILE: &str = "function_rule_map.jsonl";
pub const SUMMARIES_FILE: &str = "summaries.jsonl";
pub const MINED_RULES_FILE: &str = "mined_rules.jsonl";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Chat client for `model` (or the configured one) honoring mock, cache,
/// rate-limit and worker settings.
pub fn build_client(cfg: &RunConfig, model: Option<&str>) -> Result<ModelClient, CliError> {
    let mut mc = cfg.model.clone();
    if let Some(m) = model {
        mc.model = m.to_string();
    }
    let backend: Arc<dyn Backend> = match (&cfg.mock, mc.backend.as_str()) {
        (Some(p), _) => Arc::new(MockBackend::new(MockScript::load(p).map_err(|e| CliError::Config(format!("mock script {}: {e}", p.display())))?)),
        (None, "mock") => Arc::new(MockBackend::new(MockScript::default())),
        (None, "http") => {
            if std::env::var(&mc.api_key_env).map_or(true, |k| k.is_empty()) {
                log::warn!("{} is not set; requests are sent without credentials", mc.api_key_env);
            }
            Arc::new(HttpBackend::from_config(&mc)?)
        }
        (None, other) => return Err(CliError::Config(format!("unknown backend {other:?} (expected \"http\" or \"mock\")"))),
    };
    let mut client = ModelClient::new(backend, mc)?.with_rate_limit(cfg.rate_limit).with_max_in_flight(cfg.workers);
    if let Some(dir) = &cfg.cache_dir {
        client = client.with_cache(ResponseCache::new(dir));
    }
    Ok(client)
}

fn load_corpus(cfg: &RunConfig) -> Result<SourceCorpus, CliError> {
    if !cfg.corpus_root.is_dir() {
        return Err(CliError::Config(format!("corpus root {} is not a directory", cfg.corpus_root.display())));
    }
    let opts = CorpusOptions { include: cfg.include.clone(), exclude: cfg.exclude.clone() };
    load_corpus_with(&cfg.corpus_root, &opts).map_err(|e| CliError::Input { path: cfg.corpus_root.clone(), msg: e.to_string() })
}

fn load_prices(cfg: &RunConfig) -> Result<PriceTable, CliError> {
    match &cfg.prices {
        Some(p) => PriceTable::load(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display()))),
        None => Ok(PriceTable::default()),
    }
}

// ---------------------------------------------------------------- seed

/// Where pre-image files come from.
#[derive(Clone, Copy, Debug)]
pub enum PreImage<'a> {
    /// A checkout of the parent revision.
    Tree(&'a Path),
    /// A repository; files are read at `<commit>^`.
    Git(&'a Path),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedReport {
    pub written: Vec<String>,
    pub skipped: Vec<String>,
    pub output: PathBuf,
}

/// Commit files named directly, plus `*.patch` / `*.diff` files in named
/// directories, in path order.
pub fn collect_patch_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(input)
                .map_err(io_err(input))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "patch" || x == "diff"))
                .collect();
            found.sort();
            out.extend(found);
        } else if input.is_file() {
            out.push(input.clone());
        } else {
            return Err(CliError::Io { path: input.clone(), source: std::io::ErrorKind::NotFound.into() });
        }
    }
    Ok(out)
}

fn git_show(repo: &Path, rev: &str, path: &str) -> Option<String> {
    let out = Command::new("git").arg("-C").arg(repo).arg("show").arg(format!("{rev}^:{path}")).output().ok()?;
    out.status.success().then(|| String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Build one seed patch per commit file and append new ones to `seeds.jsonl`.
pub fn cmd_seed(cfg: &RunConfig, inputs: &[PathBuf], pre: PreImage<'_>) -> Result<SeedReport, CliError> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let files = collect_patch_files(inputs)?;
    if files.is_empty() {
        return Err(CliError::Config("no commit files given".into()));
    }
    let output = cfg.out_dir.join(SEEDS_FILE);
    let existing: Vec<SeedPatch> = read_jsonl_or_empty(&output).map_err(io_err(&output))?;
    let mut known: HashSet<String> = existing.into_iter().map(|s| s.commit).collect();
    let mut seeds = Vec::new();
    let mut skipped = Vec::new();
    for file in &files {
        let raw = fs::read_to_string(file).map_err(io_err(file))?;
        let commit = parse_commit(&raw).map_err(|e| CliError::Input { path: file.clone(), msg: e.to_string() })?;
        let mut pre_files = Vec::new();
        for path in commit.files.iter().filter_map(|f| f.old_path.as_ref()) {
            let text = match pre {
                PreImage::Tree(root) => fs::read_to_string(root.join(path)).ok(),
                PreImage::Git(repo) => git_show(repo, &commit.id, path),
            };
            if let Some(t) = text {
                pre_files.push((path.clone(), t));
            }
        }
        let seed = build_seed_patch(&commit, &SourceCorpus::from_files(pre_files))
            .map_err(|e| CliError::Input { path: file.clone(), msg: e.to_string() })?;
        if known.insert(seed.commit.clone()) {
            seeds.push(seed);
        } else {
            skipped.push(seed.commit);
        }
    }
    append_jsonl(&output, &seeds).map_err(io_err(&output))?;
    RunManifest {
        command: "seed".into(),
        config_hash: cfg.config_hash(),
        models: Vec::new(),
        rule_ids: Vec::new(),
        inputs: files.iter().map(|f| digest_input(f)).collect::<Result<_, _>>()?,
    }
    .append(&cfg.out_dir)?;
    Ok(SeedReport { written: seeds.into_iter().map(|s| s.commit).collect(), skipped, output })
}

// ---------------------------------------------------------------- rulegen

#[derive(Clone, Debug, PartialEq)]
pub struct RulegenReport {
    pub rules: Vec<SecurityRule>,
    pub added: usize,
    pub catalog_size: usize,
    pub failed_seeds: Vec<String>,
}

fn load_seeds(path: &Path) -> Result<Vec<SeedPatch>, CliError> {
    let seeds: Vec<SeedPatch> = read_jsonl(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData => CliError::Input { path: path.to_path_buf(), msg: e.to_string() },
        _ => CliError::Io { path: path.to_path_buf(), source: e },
    })?;
    if seeds.is_empty() {
        return Err(CliError::Input { path: path.to_path_buf(), msg: "no seed patches".into() });
    }
    Ok(seeds)
}

/// Ask the model for a rule per seed and merge the results into the catalog.
pub fn cmd_rulegen(cfg: &RunConfig, seeds_path: &Path) -> Result<RulegenReport, CliError> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let seeds = load_seeds(seeds_path)?;
    let client = build_client(cfg, None)?;
    let mut rules = Vec::new();
    let mut failed = Vec::new();
    for seed in &seeds {
        let (text, _) = client.complete(&render_rule_generation_prompt(seed))?;
        match parse_rule_response(&text, &Provenance::Seed { commit: seed.commit.clone() }) {
            Ok(r) => rules.extend(r),
            Err(e) => {
                log::warn!("seed {}: {e}", seed.commit);
                failed.push(seed.commit.clone());
            }
        }
    }
    if rules.is_empty() {
        return Err(CliError::Analysis(format!("no rule extracted from {} seed(s)", seeds.len())));
    }
    let mut catalog = RuleCatalog::load(&cfg.catalog).map_err(|e| CliError::Config(e.to_string()))?;
    let added = catalog.extend(rules.iter().cloned());
    if let Some(parent) = cfg.catalog.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    catalog.save(&cfg.catalog).map_err(|e| CliError::Config(e.to_string()))?;
    RunManifest {
        command: "rulegen".into(),
        config_hash: cfg.config_hash(),
        models: vec![client.config().model.clone()],
        rule_ids: rules.iter().map(|r| r.id.clone()).collect(),
        inputs: vec![digest_input(seeds_path)?],
    }
    .append(&cfg.out_dir)?;
    Ok(RulegenReport { rules, added, catalog_size: catalog.len(), failed_seeds: failed })
}

// ---------------------------------------------------------------- scan

/// Which rules a scan runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleSelection {
    pub ids: Vec<String>,
    pub all: bool,
    /// Human-written rule text with its target identifiers.
    pub text: Option<(String, Vec<String>)>,
}

enum OwnedRule {
    Security(SecurityRule),
    Human(HumanRule),
}

impl OwnedRule {
    fn as_ref(&self) -> RuleRef<'_> {
        match self {
            OwnedRule::Security(r) => RuleRef::Security(r),
            OwnedRule::Human(r) => RuleRef::Human(r),
        }
    }
}

fn select_rules(cfg: &RunConfig, sel: &RuleSelection) -> Result<Vec<OwnedRule>, CliError> {
    let user = RuleCatalog::load(&cfg.catalog).map_err(|e| CliError::Config(e.to_string()))?;
    let shipped = RuleCatalog::shipped();
    let mut out = Vec::new();
    if sel.all {
        out.extend(user.rules().iter().cloned().map(OwnedRule::Security));
    }
    for id in &sel.ids {
        let r = user.get(id).or_else(|| shipped.get(id)).ok_or_else(|| CliError::Config(format!("unknown rule id {id}")))?;
        out.push(OwnedRule::Security(r.clone()));
    }
    if let Some((text, targets)) = &sel.text {
        out.push(OwnedRule::Human(HumanRule::new(text.clone(), targets.clone()).map_err(|e| CliError::Config(e.to_string()))?));
    }
    if out.is_empty() {
        return Err(CliError::Config("no rule selected (use --rule, --all or --rule-text with --target)".into()));
    }
    Ok(out)
}

fn seed_for<'a>(rule: &OwnedRule, seeds: &'a [SeedPatch]) -> Option<&'a SeedPatch> {
    let commit = match rule {
        OwnedRule::Security(SecurityRule { provenance: Provenance::Seed { commit }, .. }) => Some(commit),
        _ => None,
    };
    commit.and_then(|c| seeds.iter().find(|s| &s.commit == c)).or(seeds.first())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuleScan {
    pub rule_id: String,
    pub findings: Vec<Finding>,
    pub summary: String,
}

fn finding_key(f: &Finding) -> (String, String, PromptConfig, String) {
    (f.candidate_id.clone(), f.rule_id.clone(), f.config, f.model.clone())
}

/// Enumerate call sites for each selected rule, judge them, post-process and
/// append findings not already recorded.
pub fn cmd_scan(cfg: &RunConfig, sel: &RuleSelection, seeds_path: Option<&Path>, resume: bool) -> Result<Vec<RuleScan>, CliError> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let rules = select_rules(cfg, sel)?;
    let seeds = match seeds_path {
        Some(p) => load_seeds(p)?,
        None => Vec::new(),
    };
    if cfg.prompt_config.needs_seed() && seeds.is_empty() {
        return Err(CliError::Config(format!("configuration {} needs --seeds", cfg.prompt_config)));
    }
    let corpus = load_corpus(cfg)?;
    let client = build_client(cfg, None)?;
    let findings_path = cfg.out_dir.join(FINDINGS_FILE);
    let mut recorded: HashSet<_> =
        read_jsonl_or_empty::<Finding>(&findings_path).map_err(io_err(&findings_path))?.iter().map(finding_key).collect();

    let mut out = Vec::new();
    for rule in &rules {
        let r = rule.as_ref();
        let rule_id = r.id();
        let candidates = candidates_for_rule(&corpus, r).map_err(|e| CliError::Input { path: cfg.corpus_root.clone(), msg: e.to_string() })?;
        let opts = ScanOptions {
            config: cfg.prompt_config,
            workers: cfg.workers,
            oversize_bytes: cfg.oversize_bytes,
            log_path: Some(cfg.out_dir.join("logs").join(format!("{rule_id}.{}.jsonl", cfg.prompt_config))),
            resume,
        };
        let seed = cfg.prompt_config.needs_seed().then(|| seed_for(rule, &seeds)).flatten();
        let findings = match Scanner::new(&client, r, seed, opts).scan(&candidates) {
            Ok(f) => postprocess(f, r),
            Err(DetectError::Aborted { partial, source }) => {
                return Err(CliError::Analysis(format!(
                    "scan of rule {rule_id} stopped after {} of {} candidates: {source}; rerun to resume",
                    partial.len(),
                    candidates.len()
                )))
            }
            Err(DetectError::Config(m)) => return Err(CliError::Config(m)),
            Err(e) => return Err(CliError::Analysis(e.to_string())),
        };
        let fresh: Vec<Finding> = findings.iter().filter(|f| recorded.insert(finding_key(f))).cloned().collect();
        append_jsonl(&findings_path, &fresh).map_err(io_err(&findings_path))?;
        let summary = scan_summary(&findings);
        out.push(RuleScan { rule_id, findings, summary });
    }
    let mut inputs = vec![digest_input(&cfg.corpus_root)?];
    if let Some(p) = seeds_path {
        inputs.push(digest_input(p)?);
    }
    RunManifest {
        command: "scan".into(),
        config_hash: cfg.config_hash(),
        models: vec![client.config().model.clone()],
        rule_ids: out.iter().map(|s| s.rule_id.clone()).collect(),
        inputs,
    }
    .append(&cfg.out_dir)?;
    Ok(out)
}

// ---------------------------------------------------------------- eval / report

/// One stored snippet judgment with the run it belongs to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub config: PromptConfig,
    pub model: String,
    pub complete: bool,
    #[serde(flatten)]
    pub judgment: SnippetJudgment,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub results: Vec<EvalResult>,
    pub text: String,
    pub csv: String,
}

fn load_dataset_checked(path: &Path) -> Result<Vec<GroundTruthPattern>, CliError> {
    load_dataset(path).map_err(|e| match e {
        EvalError::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        other => CliError::Input { path: path.to_path_buf(), msg: other.to_string() },
    })
}

fn write_report(cfg: &RunConfig, results: Vec<EvalResult>) -> Result<EvalReport, CliError> {
    let prices = load_prices(cfg)?;
    let text = report_text(&results, &prices);
    let csv = report_csv(&results, &prices);
    for (name, body) in [(REPORT_TEXT_FILE, &text), (REPORT_CSV_FILE, &csv)] {
        let p = cfg.out_dir.join(name);
        fs::write(&p, body).map_err(io_err(&p))?;
    }
    Ok(EvalReport { results, text, csv })
}

/// Evaluate every (model, config) combination on a ground-truth dataset and
/// write judgments plus the ablation and cost reports.
pub fn cmd_eval(cfg: &RunConfig, dataset_path: &Path, configs: &[PromptConfig], models: &[String]) -> Result<EvalReport, CliError> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let dataset = load_dataset_checked(dataset_path)?;
    let configs: Vec<PromptConfig> = if configs.is_empty() { PromptConfig::ALL.to_vec() } else { configs.to_vec() };
    let models: Vec<String> = if models.is_empty() { vec![cfg.model.model.clone()] } else { models.to_vec() };
    let opts = EvalOptions { workers: cfg.workers };

    let mut results = Vec::new();
    let mut failure = None;
    'outer: for m in &models {
        let client = build_client(cfg, Some(m))?;
        for &c in &configs {
            match crate::eval::evaluate(&dataset, c, &client, &opts) {
                Ok(r) => results.push(r),
                Err(EvalError::Aborted { judged, partial, source }) => {
                    results.push(*partial);
                    failure = Some(format!("evaluation of {c} on {m} stopped after {judged} snippets: {source}"));
                    break 'outer;
                }
                Err(EvalError::Detect(DetectError::Config(msg))) => return Err(CliError::Input { path: dataset_path.to_path_buf(), msg }),
                Err(e) => return Err(CliError::Analysis(e.to_string())),
            }
        }
    }

    let records: Vec<JudgmentRecord> = results
        .iter()
        .flat_map(|r| {
            r.judgments.iter().map(|j| JudgmentRecord { config: r.config, model: r.model.clone(), complete: r.complete, judgment: j.clone() })
        })
        .collect();
    let jpath = cfg.out_dir.join(JUDGMENTS_FILE);
    write_jsonl(&jpath, &records).map_err(io_err(&jpath))?;
    let report = write_report(cfg, results)?;
    RunManifest {
        command: "eval".into(),
        config_hash: cfg.config_hash(),
        models,
        rule_ids: dataset.iter().map(|p| p.rule.id.clone()).collect(),
        inputs: vec![digest_input(dataset_path)?],
    }
    .append(&cfg.out_dir)?;
    match failure {
        Some(msg) => Err(CliError::Analysis(msg)),
        None => Ok(report),
    }
}

/// Rebuild the reports from stored judgments.
pub fn cmd_report(cfg: &RunConfig, dataset_path: &Path, judgments_path: Option<&Path>) -> Result<EvalReport, CliError> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let dataset = load_dataset_checked(dataset_path)?;
    let default_path = cfg.out_dir.join(JUDGMENTS_FILE);
    let jpath = judgments_path.unwrap_or(&default_path);
    let records: Vec<JudgmentRecord> = read_jsonl(jpath).map_err(|e| match e.kind() {
        std::io::ErrorKind::InvalidData => CliError::Input { path: jpath.to_path_buf(), msg: e.to_string() },
        _ => CliError::Io { path: jpath.to_path_buf(), source: e },
    })?;
    let mut order: Vec<(PromptConfig, String)> = Vec::new();
    let mut groups: BTreeMap<(PromptConfig, String), (bool, Vec<SnippetJudgment>)> = BTreeMap::new();
    for r in records {
        let key = (r.config, r.model.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let g = groups.entry(key).or_insert((true, Vec::new()));
        g.0 &= r.complete;
        g.1.push(r.judgment);
    }
    let results = order
        .into_iter()
        .map(|k| {
            let (complete, js) = groups.remove(&k).expect("grouped");
            EvalResult::from_judgments(&dataset, k.0, &k.1, js, complete)
        })
        .collect();
    write_report(cfg, results)
}

// ---------------------------------------------------------------- mine

#[derive(Clone, Debug, PartialEq)]
pub struct MineReport {
    pub output: MineOutput,
    pub clusters_path: PathBuf,
    pub map_path: PathBuf,
}

/// Seed patches from a JSONL file, or from every `*.jsonl` file in a directory.
pub fn load_patch_inputs(path: &Path) -> Result<Vec<SeedPatch>, CliError> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for f in files {
        out.extend(load_seeds(&f)?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct VectorRecord {
    rule_id: String,
    vector: Vec<f64>,
}

/// Summarize, embed, cluster and map. Embeddings come from the model backend
/// unless `vectors` names a JSONL file of `{rule_id, vector}` records.
pub fn cmd_mine(cfg: &RunConfig, patches_path: &Path, vectors: Option<&Path>, with_lexicon: bool) -> Result<MineReport, CliError> {
    let _lock = OutputLock::acquire(&cfg.out_dir)?;
    let patches = load_patch_inputs(patches_path)?;
    let client = build_client(cfg, None)?;
    let lexicon: BTreeSet<String> = if with_lexicon { load_corpus(cfg)?.function_lexicon() } else { BTreeSet::new() };
    let opts = cfg.mine_options();
    let output = match vectors {
        Some(p) => {
            let recs: Vec<VectorRecord> = read_jsonl(p).map_err(io_err(p))?;
            let pre = PrecomputedEmbeddings(recs.into_iter().map(|r| (r.rule_id, r.vector)).collect());
            mine(&patches, &client, &pre, &lexicon, &opts)
        }
        None => mine(&patches, &client, &client, &lexicon, &opts),
    }
    .map_err(|e| match e {
        crate::mine::MineError::Config(m) | crate::mine::MineError::MissingVector(m) => CliError::Config(m),
        other => CliError::Analysis(other.to_string()),
    })?;

    let clusters_path = cfg.out_dir.join(CLUSTERS_FILE);
    let map_path = cfg.out_dir.join(MAP_FILE);
    let summaries_path = cfg.out_dir.join(SUMMARIES_FILE);
    let rules_path = cfg.out_dir.join(MINED_RULES_FILE);
    let clusters: Vec<ClusterRecord> = output.cluster_records();
    write_jsonl(&clusters_path, &clusters).map_err(io_err(&clusters_path))?;
    write_jsonl(&map_path, &output.map.records()).map_err(io_err(&map_path))?;
    let summaries: &[PatchSummary] = &output.summaries.summaries;
    write_jsonl(&summaries_path, summaries).map_err(io_err(&summaries_path))?;
    write_jsonl(&rules_path, &output.mined.rules).map_err(io_err(&rules_path))?;
    let mut inputs = vec![digest_input(patches_path)?];
    if let Some(p) = vectors {
        inputs.push(digest_input(p)?);
    }
    RunManifest {
        command: "mine".into(),
        config_hash: cfg.config_hash(),
        models: vec![client.config().model.clone()],
        rule_ids: output.mined.rules.iter().map(|r| r.id.clone()).collect(),
        inputs,
    }
    .append(&cfg.out_dir)?;
    Ok(MineReport { output, clusters_path, map_path })
}

