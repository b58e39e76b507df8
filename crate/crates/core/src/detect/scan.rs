use super::{build_detection_prompt, extract_verdict, DetectError, Finding, FindingStatus, PromptConfig, Verdict, VerdictKind};
use crate::corpus::{CallSiteCandidate, SourceCorpus, DEFAULT_OVERSIZE_BYTES};
use crate::model::{ModelClient, ModelError, TokenUsage};
use crate::patch::SeedPatch;
use crate::rules::RuleRef;
use crate::util::{hash_fields, read_jsonl_or_empty};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::SystemTime;

pub const OVERSIZE: &str = "oversize";
pub const CONTEXT_LIMIT: &str = "context-limit";

/// Every candidate of every target of `rule`, one per enclosing function.
pub fn candidates_for_rule(corpus: &SourceCorpus, rule: RuleRef<'_>) -> Result<Vec<CallSiteCandidate>, DetectError> {
    let targets = rule.targets();
    if targets.is_empty() {
        return Err(DetectError::Config(format!("rule {} names no target", rule.id())));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for t in &targets {
        for c in corpus.enumerate_call_sites(t, rule.match_mode())? {
            if seen.insert((c.span.file.clone(), c.span.start)) {
                out.push(c);
            }
        }
    }
    out.sort_by(|a, b| (&a.span.file, a.span.start).cmp(&(&b.span.file, b.span.start)));
    Ok(out)
}

/// One model judgment. An empty completion becomes an undecided verdict.
pub fn judge(client: &ModelClient, prompt: &str) -> Result<(Verdict, TokenUsage), ModelError> {
    match client.complete(prompt) {
        Ok((text, usage)) => Ok((extract_verdict(&text), usage)),
        Err(ModelError::EmptyCompletion) => Ok((
            Verdict { kind: VerdictKind::Undecided, raw: String::new(), note: "empty completion".into() },
            TokenUsage { input_tokens: client.count_tokens(prompt), output_tokens: 0, cached: false },
        )),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub config: PromptConfig,
    pub workers: usize,
    pub oversize_bytes: usize,
    /// Log of finished findings; enables resuming. Rewritten in candidate order once complete.
    pub log_path: Option<PathBuf>,
    pub resume: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            config: PromptConfig::Rule,
            workers: 4,
            oversize_bytes: DEFAULT_OVERSIZE_BYTES,
            log_path: None,
            resume: true,
        }
    }
}

/// Identity of a scan; a log is only resumed under the same manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanManifest {
    pub config_hash: String,
    pub rule_id: String,
    pub config: PromptConfig,
    pub model: String,
    pub candidates: usize,
}

pub struct Scanner<'a> {
    client: &'a ModelClient,
    rule: RuleRef<'a>,
    seed: Option<&'a SeedPatch>,
    opts: ScanOptions,
}

struct Sink {
    findings: Vec<Finding>,
    log: Option<BufWriter<File>>,
}

impl<'a> Scanner<'a> {
    pub fn new(client: &'a ModelClient, rule: RuleRef<'a>, seed: Option<&'a SeedPatch>, opts: ScanOptions) -> Self {
        Scanner { client, rule, seed, opts }
    }

    pub fn manifest(&self, candidates: &[CallSiteCandidate]) -> ScanManifest {
        let cfg = self.client.config();
        let ids: String = candidates.iter().map(|c| c.id.as_str()).collect::<Vec<_>>().join(",");
        let rule_id = self.rule.id();
        let hash = hash_fields([
            rule_id.as_bytes(),
            self.opts.config.as_str().as_bytes(),
            cfg.model.as_bytes(),
            &cfg.temperature.to_bits().to_le_bytes(),
            &cfg.top_p.to_bits().to_le_bytes(),
            &cfg.max_tokens.to_le_bytes(),
            &(self.opts.oversize_bytes as u64).to_le_bytes(),
            self.seed.map_or("", |s| s.commit.as_str()).as_bytes(),
            ids.as_bytes(),
        ]);
        ScanManifest {
            config_hash: hash[..16].to_string(),
            rule_id,
            config: self.opts.config,
            model: cfg.model.clone(),
            candidates: candidates.len(),
        }
    }

    fn manifest_path(log: &Path) -> PathBuf {
        let mut p = log.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    }

    /// Findings already logged under the same manifest; otherwise start a fresh log.
    fn prepare_log(&self, manifest: &ScanManifest) -> Result<(Vec<Finding>, Option<BufWriter<File>>), DetectError> {
        let Some(log) = &self.opts.log_path else { return Ok((Vec::new(), None)) };
        if let Some(parent) = log.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mpath = Self::manifest_path(log);
        let previous: Option<ScanManifest> = fs::read(&mpath).ok().and_then(|b| serde_json::from_slice(&b).ok());
        let done = if self.opts.resume && previous.as_ref() == Some(manifest) {
            let done: Vec<Finding> = read_jsonl_or_empty(log)?;
            log::info!("resuming scan {}: {} findings already logged", manifest.config_hash, done.len());
            done
        } else {
            File::create(log)?;
            fs::write(&mpath, serde_json::to_vec_pretty(manifest).expect("serializable"))?;
            Vec::new()
        };
        let file = OpenOptions::new().append(true).open(log)?;
        Ok((done, Some(BufWriter::new(file))))
    }

    /// Judge every candidate, one finding each, sorted by candidate id.
    pub fn scan(&self, candidates: &[CallSiteCandidate]) -> Result<Vec<Finding>, DetectError> {
        build_detection_prompt(self.opts.config, "", Some(self.rule), self.seed)?;
        let manifest = self.manifest(candidates);
        let (done, log) = self.prepare_log(&manifest)?;
        let done_ids: BTreeSet<String> = done.iter().map(|f| f.candidate_id.clone()).collect();
        let pending: Vec<&CallSiteCandidate> = candidates.iter().filter(|c| !done_ids.contains(&c.id)).collect();

        let sink = Mutex::new(Sink { findings: done, log });
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let failure: Mutex<Option<ModelError>> = Mutex::new(None);
        let rule_id = manifest.rule_id.clone();
        let model = self.client.config().model.clone();

        let work = || -> Result<(), DetectError> {
            while !abort.load(Ordering::SeqCst) {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(c) = pending.get(i) else { break };
                let started = SystemTime::now();
                let mut finding = if c.is_oversize(self.opts.oversize_bytes) {
                    Finding::filtered(&c.id, &rule_id, self.opts.config, OVERSIZE, &model)
                } else {
                    let prompt = build_detection_prompt(self.opts.config, c.body(), Some(self.rule), self.seed)?;
                    match judge(self.client, &prompt) {
                        Ok((v, u)) => Finding::new(&c.id, &rule_id, self.opts.config, v, u, &model),
                        Err(ModelError::PromptTooLong { .. }) => {
                            Finding::filtered(&c.id, &rule_id, self.opts.config, CONTEXT_LIMIT, &model)
                        }
                        Err(e) => {
                            abort.store(true, Ordering::SeqCst);
                            failure.lock().unwrap().get_or_insert(e);
                            break;
                        }
                    }
                };
                finding.started_at = Some(started);
                finding.finished_at = Some(SystemTime::now());
                let mut s = sink.lock().unwrap();
                if let Some(w) = s.log.as_mut() {
                    w.write_all(crate::util::to_jsonl_line(&finding).as_bytes())?;
                    w.flush()?;
                }
                s.findings.push(finding);
            }
            Ok(())
        };

        let workers = self.opts.workers.clamp(1, pending.len().max(1));
        let results: Vec<Result<(), DetectError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers).map(|_| scope.spawn(work)).collect();
            handles.into_iter().map(|h| h.join().expect("scan worker panicked")).collect()
        });
        let Sink { mut findings, log } = sink.into_inner().unwrap();
        if let Some(mut w) = log {
            w.flush()?;
        }
        findings.sort_by(|a, b| a.candidate_id.cmp(&b.candidate_id));
        for r in results {
            r?;
        }
        match failure.into_inner().unwrap() {
            Some(source) => Err(DetectError::Aborted { partial: findings, source }),
            None => {
                // A finished log is rewritten in candidate order so reruns match byte for byte.
                if let Some(log) = &self.opts.log_path {
                    crate::util::write_jsonl(log, &findings)?;
                }
                Ok(findings)
            }
        }
    }
}

/// One-line tally, e.g. `candidates=197 flagged=10 filtered=0 undecided=3`.
pub fn scan_summary(findings: &[Finding]) -> String {
    let mut by: HashMap<&str, usize> = HashMap::new();
    for f in findings {
        let k = match (f.status, f.verdict.kind) {
            (FindingStatus::Kept, _) => "flagged",
            (FindingStatus::Filtered, _) => "filtered",
            (_, VerdictKind::Undecided) => "undecided",
            _ => "clean",
        };
        *by.entry(k).or_default() += 1;
    }
    format!(
        "candidates={} flagged={} filtered={} undecided={}",
        findings.len(),
        by.get("flagged").unwrap_or(&0),
        by.get("filtered").unwrap_or(&0),
        by.get("undecided").unwrap_or(&0)
    )
}
