//! Rule-based removal of commit-message metadata.

use super::ParsedCommit;
use regex::Regex;
use std::sync::OnceLock;

struct Patterns {
    trailer: Regex,
    mail_header: Regex,
    diff_header: Regex,
    attribution: Regex,
    url: Regex,
    log_timestamp: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        trailer: Regex::new(
            r"(?i)^\s*(signed-off-by|reviewed-by|acked-by|reported-by|tested-by|cc|link|fixes|closes|suggested-by|co-developed-by|reported-and-tested-by|message-id|change-id)\s*:",
        )
        .unwrap(),
        mail_header: Regex::new(
            r"(?i)^(from|to|date|subject|in-reply-to|references|mime-version|content-type|content-transfer-encoding|x-[a-z0-9-]+)\s*:\s",
        )
        .unwrap(),
        diff_header: Regex::new(r"^(diff --git |index [0-9a-f]+\.\.[0-9a-f]+|@@ |--- a/|\+\+\+ b/)").unwrap(),
        attribution: Regex::new(r"^\s*(Found|Detected|Discovered|Identified)\s+(by|with|using)\b").unwrap(),
        url: Regex::new(r"(?i)\b(https?|ftp)://[^\s<>()\[\]]+|\bwww\.[^\s<>()\[\]]+").unwrap(),
        log_timestamp: Regex::new(r"^(\s*\[\s*\d+\.\d+\]\s?)+").unwrap(),
    })
}

/// Keep only the user-written issue description of a commit message.
///
/// Trailers, mail headers, diff headers, tool attributions, URLs and kernel-log
/// timestamps are dropped; all other lines are kept as written (minus trailing
/// whitespace). When nothing survives, the title line is returned.
pub fn clean_metadata(commit: &ParsedCommit) -> String {
    clean_message(&commit.message)
}

pub fn clean_message(message: &str) -> String {
    let p = patterns();
    let mut kept: Vec<String> = Vec::new();
    for raw in message.lines() {
        let had_url = p.url.is_match(raw);
        let line = p.url.replace_all(raw, "");
        let line = p.log_timestamp.replace(&line, "");
        let line = line.trim_end();
        if p.trailer.is_match(line)
            || p.mail_header.is_match(line)
            || p.diff_header.is_match(line)
            || p.attribution.is_match(line)
        {
            continue;
        }
        // a line that held nothing but a link (and punctuation) goes away entirely
        if had_url && !line.chars().any(char::is_alphanumeric) {
            continue;
        }
        if line.is_empty() && kept.last().is_none_or(|l| l.is_empty()) {
            continue;
        }
        kept.push(line.to_string());
    }
    while kept.last().is_some_and(|l| l.is_empty()) {
        kept.pop();
    }
    if kept.is_empty() {
        return message.lines().find(|l| !l.trim().is_empty()).unwrap_or("").to_string();
    }
    kept.join("\n")
}
