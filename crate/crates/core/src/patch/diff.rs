//! Parsing of `git show` / `git format-patch` / bare unified-diff text.

use super::PatchError;
use crate::util::sha256_hex;
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineKind {
    #[serde(rename = " ")]
    Context,
    #[serde(rename = "-")]
    Removed,
    #[serde(rename = "+")]
    Added,
}

impl LineKind {
    pub fn prefix(self) -> char {
        match self {
            LineKind::Context => ' ',
            LineKind::Removed => '-',
            LineKind::Added => '+',
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkLine {
    pub kind: LineKind,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: usize,
    pub old_count: usize,
    pub new_start: usize,
    pub new_count: usize,
    /// Trailing text of the `@@` header (usually the enclosing function signature).
    #[serde(default)]
    pub section: String,
    pub lines: Vec<HunkLine>,
}

impl Hunk {
    fn counts(&self) -> (usize, usize) {
        self.lines.iter().fold((0, 0), |(o, n), l| match l.kind {
            LineKind::Context => (o + 1, n + 1),
            LineKind::Removed => (o + 1, n),
            LineKind::Added => (o, n + 1),
        })
    }

    pub fn is_consistent(&self) -> bool {
        self.counts() == (self.old_count, self.new_count)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    /// Pre-image path without the `a/` prefix; `None` for newly created files.
    pub old_path: Option<String>,
    /// Post-image path without the `b/` prefix; `None` for deleted files.
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl FileDiff {
    /// The path to display: post-image path, or pre-image path for deletions.
    pub fn path(&self) -> &str {
        self.new_path.as_deref().or(self.old_path.as_deref()).unwrap_or("")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCommit {
    pub id: String,
    /// Title and body of the commit message, unindented.
    pub message: String,
    /// Author/date/mail headers in input order.
    pub headers: Vec<(String, String)>,
    pub files: Vec<FileDiff>,
}

impl ParsedCommit {
    pub fn title(&self) -> &str {
        self.message.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim()
    }

    pub fn hunk_count(&self) -> usize {
        self.files.iter().map(|f| f.hunks.len()).sum()
    }
}

fn hunk_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@ ?(.*)$").expect("valid regex")
    })
}

fn is_diff_start(lines: &[&str], i: usize) -> bool {
    let l = lines[i];
    l.starts_with("diff --git ")
        || (l.starts_with("--- ") && lines.get(i + 1).is_some_and(|n| n.starts_with("+++ ")))
}

/// Parse a commit in `git show`, `git format-patch`, or bare unified-diff form.
pub fn parse_commit(raw: &str) -> Result<ParsedCommit, PatchError> {
    let lines: Vec<&str> = raw.lines().collect();
    let diff_start = (0..lines.len()).find(|&i| is_diff_start(&lines, i)).ok_or(PatchError::EmptyDiff)?;
    let (id, headers, message) = parse_message(&lines[..diff_start]);
    let id = id.unwrap_or_else(|| sha256_hex(raw.as_bytes())[..12].to_string());
    let files = parse_diff(&lines, diff_start)?;
    if files.iter().all(|f| f.hunks.is_empty()) {
        return Err(PatchError::EmptyDiff);
    }
    Ok(ParsedCommit { id, message, headers, files })
}

fn strip_subject_tag(subject: &str) -> &str {
    let s = subject.trim();
    if s.starts_with('[') {
        if let Some(end) = s.find(']') {
            return s[end + 1..].trim_start();
        }
    }
    s
}

type MessageParts = (Option<String>, Vec<(String, String)>, String);

fn parse_message(lines: &[&str]) -> MessageParts {
    static FROM_RE: OnceLock<Regex> = OnceLock::new();
    let from_re = FROM_RE.get_or_init(|| Regex::new(r"^From ([0-9a-f]{7,40}) ").expect("valid regex"));
    let mut headers = Vec::new();
    let Some(first) = lines.first() else {
        return (None, headers, String::new());
    };

    if let Some(c) = from_re.captures(first) {
        // format-patch: mbox headers, blank line, body up to the `---` separator
        let id = c[1].to_string();
        let mut i = 1;
        while i < lines.len() && !lines[i].trim().is_empty() {
            let line = lines[i];
            if line.starts_with(' ') || line.starts_with('\t') {
                if let Some((_, v)) = headers.last_mut() {
                    let v: &mut String = v;
                    v.push(' ');
                    v.push_str(line.trim());
                }
            } else if let Some((k, v)) = line.split_once(':') {
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            i += 1;
        }
        let title = headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("Subject"))
            .map(|(_, v)| strip_subject_tag(v).to_string())
            .unwrap_or_default();
        let body_end = lines[i..].iter().position(|l| *l == "---").map(|p| i + p).unwrap_or(lines.len());
        let body = lines[i..body_end].join("\n");
        let message = join_title_body(&title, body.trim_matches('\n'));
        return (Some(id), headers, message);
    }

    if let Some(rest) = first.strip_prefix("commit ") {
        let id = rest.split_whitespace().next().unwrap_or("").to_string();
        let mut i = 1;
        while i < lines.len() && !lines[i].trim().is_empty() {
            if let Some((k, v)) = lines[i].split_once(':') {
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            i += 1;
        }
        let body: Vec<&str> = lines[i..]
            .iter()
            .map(|l| l.strip_prefix("    ").unwrap_or(l))
            .collect();
        let message = body.join("\n").trim_matches('\n').to_string();
        return (Some(id), headers, message);
    }

    (None, headers, lines.join("\n").trim_matches('\n').to_string())
}

fn join_title_body(title: &str, body: &str) -> String {
    match (title.is_empty(), body.is_empty()) {
        (true, _) => body.to_string(),
        (false, true) => title.to_string(),
        (false, false) => format!("{title}\n\n{body}"),
    }
}

fn strip_ab(path: &str, prefix: &str) -> Option<String> {
    let path = path.split('\t').next().unwrap_or(path).trim();
    if path == "/dev/null" {
        return None;
    }
    Some(path.strip_prefix(prefix).unwrap_or(path).to_string())
}

fn parse_diff(lines: &[&str], start: usize) -> Result<Vec<FileDiff>, PatchError> {
    let mut files = Vec::new();
    let mut i = start;
    while i < lines.len() {
        let line = lines[i];
        if line.starts_with("diff --git ") || line.starts_with("--- ") {
            // skip extended headers up to `---`
            let mut j = i;
            if line.starts_with("diff --git ") {
                j += 1;
                while j < lines.len() && !lines[j].starts_with("--- ") && !lines[j].starts_with("diff --git ") {
                    j += 1;
                }
                if j >= lines.len() || lines[j].starts_with("diff --git ") {
                    // binary or mode-only change: no hunks
                    i = j;
                    continue;
                }
            }
            let old = lines[j].strip_prefix("--- ").unwrap_or("");
            let new = lines
                .get(j + 1)
                .and_then(|l| l.strip_prefix("+++ "))
                .ok_or_else(|| PatchError::Malformed { line: j + 2, text: lines.get(j + 1).unwrap_or(&"").to_string() })?;
            let mut fd = FileDiff { old_path: strip_ab(old, "a/"), new_path: strip_ab(new, "b/"), hunks: Vec::new() };
            i = j + 2;
            while i < lines.len() && lines[i].starts_with("@@") {
                let (hunk, next) = parse_hunk(lines, i)?;
                fd.hunks.push(hunk);
                i = next;
            }
            files.push(fd);
            continue;
        }
        if line.starts_with("@@") {
            return Err(PatchError::Malformed { line: i + 1, text: line.to_string() });
        }
        i += 1;
    }
    Ok(files)
}

fn parse_hunk(lines: &[&str], at: usize) -> Result<(Hunk, usize), PatchError> {
    let header = lines[at];
    let caps = hunk_header_re()
        .captures(header)
        .ok_or_else(|| PatchError::Malformed { line: at + 1, text: header.to_string() })?;
    let num = |k: usize, default: usize| caps.get(k).map_or(Ok(default), |m| m.as_str().parse::<usize>());
    let bad = |_| PatchError::Malformed { line: at + 1, text: header.to_string() };
    let mut hunk = Hunk {
        old_start: num(1, 0).map_err(bad)?,
        old_count: num(2, 1).map_err(bad)?,
        new_start: num(3, 0).map_err(bad)?,
        new_count: num(4, 1).map_err(bad)?,
        section: caps.get(5).map_or("", |m| m.as_str()).to_string(),
        lines: Vec::new(),
    };
    let (mut old, mut new) = (0, 0);
    let mut i = at + 1;
    while (old < hunk.old_count || new < hunk.new_count) && i < lines.len() {
        let l = lines[i];
        let (kind, text) = match l.as_bytes().first() {
            Some(b' ') => (LineKind::Context, &l[1..]),
            Some(b'-') => (LineKind::Removed, &l[1..]),
            Some(b'+') => (LineKind::Added, &l[1..]),
            Some(b'\\') => {
                i += 1;
                continue;
            }
            // some tools drop the single space of blank context lines
            None => (LineKind::Context, ""),
            Some(_) => break,
        };
        match kind {
            LineKind::Context => {
                old += 1;
                new += 1;
            }
            LineKind::Removed => old += 1,
            LineKind::Added => new += 1,
        }
        hunk.lines.push(HunkLine { kind, text: text.to_string() });
        i += 1;
    }
    // a trailing "\ No newline at end of file" marker belongs to this hunk
    while i < lines.len() && lines[i].starts_with('\\') {
        i += 1;
    }
    if !hunk.is_consistent() {
        return Err(PatchError::HunkCount {
            line: at + 1,
            header: header.to_string(),
            old_seen: old,
            new_seen: new,
        });
    }
    Ok((hunk, i))
}
