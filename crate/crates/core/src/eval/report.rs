use super::EvalResult;
use crate::model::{estimate_cost, PriceTable};
use std::collections::BTreeSet;
use std::fmt::Write;

pub const CSV_HEADER: &str = "config,model,precision,recall,pairwise_accuracy,tp,fp,fn,tn,undecided,mean_input_tokens,mean_output_tokens,cost_per_detection";

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.1}", x * 100.0))
}

fn frac(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Mean newly billed cost per judged snippet; `None` when the model is unpriced.
pub fn cost_per_detection(r: &EvalResult, prices: &PriceTable) -> Option<f64> {
    if r.judgments.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for j in &r.judgments {
        total += estimate_cost(&j.usage, &r.model, prices).ok()?;
    }
    Some(total / r.judgments.len() as f64)
}

/// Ablation table (configs × models, cells P/R/PA in percent) followed by the cost table.
pub fn report_text(results: &[EvalResult], prices: &PriceTable) -> String {
    let models: Vec<&str> = results.iter().map(|r| r.model.as_str()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut configs: Vec<_> = results.iter().map(|r| r.config).collect();
    configs.sort();
    configs.dedup();
    let cell = |c, m: &str| {
        results.iter().find(|r| r.config == c && r.model == m).map_or_else(
            || "-".to_string(),
            |r| {
                let mark = if r.complete { "" } else { "*" };
                format!("{}/{}/{}{mark}", pct(r.metrics.precision_f64()), pct(r.metrics.recall_f64()), pct(r.metrics.pa_f64()))
            },
        )
    };
    let w0 = configs.iter().map(|c| c.as_str().len()).max().unwrap_or(0).max("config".len());
    let widths: Vec<usize> = models
        .iter()
        .map(|m| configs.iter().map(|&c| cell(c, m).len()).max().unwrap_or(0).max(m.len()))
        .collect();

    let mut out = String::from("P/R/PA (%)\n");
    let _ = write!(out, "{:<w0$}", "config");
    for (m, w) in models.iter().zip(&widths) {
        let _ = write!(out, "  {m:>w$}");
    }
    out.push('\n');
    for &c in &configs {
        let _ = write!(out, "{:<w0$}", c.as_str());
        for (m, w) in models.iter().zip(&widths) {
            let _ = write!(out, "  {:>w$}", cell(c, m));
        }
        out.push('\n');
    }

    out.push_str("\nTokens and cost per detection\n");
    let _ = writeln!(out, "{:<w0$}  {:<16}  {:>10}  {:>10}  {:>14}", "config", "model", "mean_in", "mean_out", "cost");
    let mut sorted: Vec<&EvalResult> = results.iter().collect();
    sorted.sort_by(|a, b| (a.config, &a.model).cmp(&(b.config, &b.model)));
    for r in sorted {
        let cost = cost_per_detection(r, prices).map_or_else(|| "n/a".to_string(), |c| format!("{c:.6}"));
        let _ = writeln!(
            out,
            "{:<w0$}  {:<16}  {:>10.1}  {:>10.1}  {:>14}",
            r.config.as_str(),
            r.model,
            r.mean_input_tokens,
            r.mean_output_tokens,
            cost
        );
    }
    if results.iter().any(|r| !r.complete) {
        out.push_str("* partial run; metrics cover only judged snippets\n");
    }
    out
}

pub fn report_csv(results: &[EvalResult], prices: &PriceTable) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut sorted: Vec<&EvalResult> = results.iter().collect();
    sorted.sort_by(|a, b| (a.config, &a.model).cmp(&(b.config, &b.model)));
    for r in sorted {
        let m = &r.metrics;
        let c = &m.confusion;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{:.2},{:.2},{}",
            r.config,
            r.model,
            frac(m.precision_f64()),
            frac(m.recall_f64()),
            frac(m.pa_f64()),
            c.tp,
            c.fp,
            c.fn_,
            c.tn,
            c.undecided,
            r.mean_input_tokens,
            r.mean_output_tokens,
            cost_per_detection(r, prices).map_or_else(String::new, |v| format!("{v:.8}")),
        );
    }
    out
}
