use super::{compute_metrics, Confusion, EvalError, GroundTruthPattern, Metrics};
use crate::detect::{build_detection_prompt, judge, DetectError, PromptConfig, VerdictKind};
use crate::model::{MockReply, MockRule, MockScript, ModelClient, ModelError, TokenUsage};
use crate::rules::RuleRef;
use crate::util::sha256_hex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnippetJudgment {
    pub pattern_id: String,
    pub pair_id: String,
    pub polarity: Polarity,
    pub verdict: VerdictKind,
    pub usage: TokenUsage,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub config: PromptConfig,
    pub model: String,
    pub metrics: Metrics,
    pub per_pattern: Vec<(String, Metrics)>,
    #[serde(skip)]
    pub judgments: Vec<SnippetJudgment>,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    /// False when the run was aborted and metrics cover only part of the dataset.
    pub complete: bool,
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { workers: 4 }
    }
}

struct Task<'a> {
    pattern: &'a str,
    pair: &'a str,
    polarity: Polarity,
    prompt: String,
}

fn rule_for<'a>(p: &'a GroundTruthPattern, config: PromptConfig) -> Result<RuleRef<'a>, DetectError> {
    if config == PromptConfig::HuRule {
        p.human_rule
            .as_ref()
            .map(RuleRef::Human)
            .ok_or_else(|| DetectError::Config(format!("pattern {} has no human rule", p.pattern_id)))
    } else {
        Ok(RuleRef::Security(&p.rule))
    }
}

fn tasks(dataset: &[GroundTruthPattern], config: PromptConfig) -> Result<Vec<Task<'_>>, DetectError> {
    let mut out = Vec::new();
    for p in dataset {
        let rule = rule_for(p, config)?;
        if config.needs_seed() && p.seed_patch.is_none() {
            return Err(DetectError::Config(format!("pattern {} has no seed patch", p.pattern_id)));
        }
        for pair in &p.pairs {
            for (polarity, code) in [(Polarity::Positive, &pair.positive), (Polarity::Negative, &pair.negative)] {
                out.push(Task {
                    pattern: &p.pattern_id,
                    pair: &pair.pair_id,
                    polarity,
                    prompt: build_detection_prompt(config, code, Some(rule), p.seed_patch.as_ref())?,
                });
            }
        }
    }
    Ok(out)
}

/// Mock script that answers every prompt of `config` from the ground truth.
pub fn oracle_script(dataset: &[GroundTruthPattern], config: PromptConfig) -> Result<MockScript, DetectError> {
    let mut script = MockScript::constant("Undetermined.");
    for t in tasks(dataset, config)? {
        let answer = if t.polarity == Polarity::Positive { "YES" } else { "NO" };
        script.rules.push(MockRule::Hash { sha256: sha256_hex(t.prompt.as_bytes()), reply: MockReply::Text(answer.into()), times: None });
    }
    Ok(script)
}

fn score(pos: Option<VerdictKind>, neg: Option<VerdictKind>) -> Confusion {
    let mut c = Confusion::default();
    match pos {
        Some(VerdictKind::Violation) => c.tp += 1,
        Some(VerdictKind::NoViolation) => c.fn_ += 1,
        Some(VerdictKind::Undecided) => {
            c.fn_ += 1;
            c.undecided += 1;
        }
        None => {}
    }
    match neg {
        Some(VerdictKind::Violation) => c.fp += 1,
        Some(VerdictKind::NoViolation) => c.tn += 1,
        Some(VerdictKind::Undecided) => c.undecided += 1,
        None => {}
    }
    if pos.is_some() && neg.is_some() {
        c.pairs_total = 1;
        c.pairs_correct = u64::from(pos == Some(VerdictKind::Violation) && neg == Some(VerdictKind::NoViolation));
    }
    c
}

fn aggregate(
    dataset: &[GroundTruthPattern],
    config: PromptConfig,
    model: &str,
    judgments: Vec<SnippetJudgment>,
    complete: bool,
) -> EvalResult {
    let index: HashMap<(&str, &str, Polarity), VerdictKind> =
        judgments.iter().map(|j| ((j.pattern_id.as_str(), j.pair_id.as_str(), j.polarity), j.verdict)).collect();
    let find = |pat: &str, pair: &str, pol: Polarity| index.get(&(pat, pair, pol)).copied();
    let mut total = Confusion::default();
    let mut per_pattern = Vec::new();
    for p in dataset {
        let mut c = Confusion::default();
        for pair in &p.pairs {
            c += score(find(&p.pattern_id, &pair.pair_id, Polarity::Positive), find(&p.pattern_id, &pair.pair_id, Polarity::Negative));
        }
        total += c;
        per_pattern.push((p.pattern_id.clone(), compute_metrics(c)));
    }
    let n = judgments.len().max(1) as f64;
    drop(index);
    EvalResult {
        config,
        model: model.to_string(),
        metrics: compute_metrics(total),
        per_pattern,
        mean_input_tokens: judgments.iter().map(|j| j.usage.input_tokens).sum::<u64>() as f64 / n,
        mean_output_tokens: judgments.iter().map(|j| j.usage.output_tokens).sum::<u64>() as f64 / n,
        judgments,
        complete,
    }
}

impl EvalResult {
    /// Rebuild a result from stored judgments.
    pub fn from_judgments(
        dataset: &[GroundTruthPattern],
        config: PromptConfig,
        model: &str,
        judgments: Vec<SnippetJudgment>,
        complete: bool,
    ) -> Self {
        aggregate(dataset, config, model, judgments, complete)
    }
}

/// Judge every snippet of `dataset` independently under `config`.
pub fn evaluate(
    dataset: &[GroundTruthPattern],
    config: PromptConfig,
    client: &ModelClient,
    opts: &EvalOptions,
) -> Result<EvalResult, EvalError> {
    let tasks = tasks(dataset, config)?;
    let slots: Vec<Mutex<Option<SnippetJudgment>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let failure: Mutex<Option<ModelError>> = Mutex::new(None);

    std::thread::scope(|s| {
        for _ in 0..opts.workers.clamp(1, tasks.len().max(1)) {
            s.spawn(|| {
                while !abort.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(t) = tasks.get(i) else { break };
                    match judge(client, &t.prompt) {
                        Ok((v, usage)) => {
                            *slots[i].lock().unwrap() = Some(SnippetJudgment {
                                pattern_id: t.pattern.to_string(),
                                pair_id: t.pair.to_string(),
                                polarity: t.polarity,
                                verdict: v.kind,
                                usage,
                            });
                        }
                        Err(e) => {
                            abort.store(true, Ordering::SeqCst);
                            failure.lock().unwrap().get_or_insert(e);
                        }
                    }
                }
            });
        }
    });

    let judgments: Vec<SnippetJudgment> = slots.into_iter().filter_map(|m| m.into_inner().unwrap()).collect();
    let model = client.config().model.clone();
    match failure.into_inner().unwrap() {
        None => Ok(aggregate(dataset, config, &model, judgments, true)),
        Some(source) => {
            let judged = judgments.len();
            Err(EvalError::Aborted { judged, partial: Box::new(aggregate(dataset, config, &model, judgments, false)), source })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::synthetic::synthetic_dataset;
    use crate::model::{MockBackend, ModelConfig};
    use std::sync::Arc;

    fn client(script: MockScript) -> ModelClient {
        let mut cfg = ModelConfig::mock();
        cfg.retry.backoff_ms = 1;
        ModelClient::new(Arc::new(MockBackend::new(script)), cfg).unwrap()
    }

    #[test]
    fn oracle_is_perfect_for_every_config() {
        let d = synthetic_dataset(4, 12, 1);
        for config in PromptConfig::ALL {
            let r = evaluate(&d, config, &client(oracle_script(&d, config).unwrap()), &EvalOptions::default()).unwrap();
            assert_eq!((r.metrics.precision_f64(), r.metrics.recall_f64(), r.metrics.pa_f64()), (Some(1.0), Some(1.0), Some(1.0)), "{config}");
        }
    }

    #[test]
    fn constant_yes() {
        let d = synthetic_dataset(3, 9, 2);
        let r = evaluate(&d, PromptConfig::Rule, &client(MockScript::constant("YES")), &EvalOptions::default()).unwrap();
        assert_eq!((r.metrics.precision_f64(), r.metrics.recall_f64(), r.metrics.pa_f64()), (Some(0.5), Some(1.0), Some(0.0)));
    }

    #[test]
    fn undecided_scoring() {
        assert_eq!(score(Some(VerdictKind::Undecided), Some(VerdictKind::NoViolation)), Confusion { fn_: 1, tn: 1, undecided: 1, pairs_total: 1, ..Confusion::default() });
        assert_eq!(score(Some(VerdictKind::Violation), Some(VerdictKind::Undecided)), Confusion { tp: 1, undecided: 1, pairs_total: 1, ..Confusion::default() });
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let d = synthetic_dataset(5, 20, 3);
        let a = evaluate(&d, PromptConfig::Rule, &client(MockScript::random(5)), &EvalOptions { workers: 1 }).unwrap();
        let b = evaluate(&d, PromptConfig::Rule, &client(MockScript::random(5)), &EvalOptions { workers: 7 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn abort_reports_partial_metrics() {
        let d = synthetic_dataset(2, 6, 4);
        let script = MockScript::constant("NO").with_rule(MockRule::Contains { needle: d[1].pairs[0].positive.clone(), reply: MockReply::Transport, times: None });
        let e = evaluate(&d, PromptConfig::Rule, &client(script), &EvalOptions { workers: 1 }).unwrap_err();
        let EvalError::Aborted { partial, judged, .. } = e else { panic!("expected abort") };
        assert!(!partial.complete);
        assert!(judged < 8);
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let mut d = synthetic_dataset(1, 2, 5);
        d[0].seed_patch = None;
        assert!(matches!(evaluate(&d, PromptConfig::Patch, &client(MockScript::default()), &EvalOptions::default()), Err(EvalError::Detect(_))));
        d[0].human_rule = None;
        assert!(matches!(evaluate(&d, PromptConfig::HuRule, &client(MockScript::default()), &EvalOptions::default()), Err(EvalError::Detect(_))));
    }
}
