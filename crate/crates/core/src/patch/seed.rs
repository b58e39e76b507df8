//! Seed patches: cleaned description plus whole-function pre-image context.

use super::{clean_metadata, FileDiff, Hunk, LineKind, ParsedCommit, PatchError};
use crate::corpus::{FunctionSpan, SourceCorpus, SourceFile};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkKind {
    /// The line is deleted by the fix.
    Removed,
    /// New lines are inserted after this line (line 0 = before the first line).
    InsertAfter,
}

/// An edit position within a context, numbered from 1 at the context's first line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineMark {
    pub line: usize,
    pub kind: MarkKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub added: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HunkRef {
    pub file: usize,
    pub hunk: usize,
}

/// The pre-image function enclosing one or more hunks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedContext {
    pub function: FunctionSpan,
    pub hunks: Vec<HunkRef>,
    pub marks: Vec<LineMark>,
}

impl SeedContext {
    /// The function as it reads after the fix.
    pub fn post_image(&self) -> String {
        let mut out = String::new();
        for line in self.lines_with_marks() {
            if let RenderLine::Keep(text) | RenderLine::Added(text) = line {
                out.push_str(text);
                out.push('\n');
            }
        }
        if !self.function.body.ends_with('\n') && out.ends_with('\n') {
            out.pop();
        }
        out
    }

    /// The whole function with `-`/`+` markers on edited lines and a space elsewhere.
    pub fn render_marked(&self) -> String {
        let mut out = String::new();
        for line in self.lines_with_marks() {
            let (p, t) = match line {
                RenderLine::Keep(t) => (' ', t),
                RenderLine::Removed(t) => ('-', t),
                RenderLine::Added(t) => ('+', t),
            };
            out.push(p);
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    /// 1-based context line numbers that carry a mark.
    pub fn marked_lines(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.marks.iter().map(|m| m.line).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn push_inserts<'a>(&'a self, out: &mut Vec<RenderLine<'a>>, after: usize) {
        for m in self.marks.iter().filter(|m| m.kind == MarkKind::InsertAfter && m.line == after) {
            out.extend(m.added.iter().map(|t| RenderLine::Added(t.as_str())));
        }
    }

    fn lines_with_marks(&self) -> Vec<RenderLine<'_>> {
        let mut out = Vec::new();
        self.push_inserts(&mut out, 0);
        for (i, text) in self.function.body.lines().enumerate() {
            let n = i + 1;
            let removed = self.marks.iter().any(|m| m.kind == MarkKind::Removed && m.line == n);
            out.push(if removed { RenderLine::Removed(text) } else { RenderLine::Keep(text) });
            self.push_inserts(&mut out, n);
        }
        out
    }
}

enum RenderLine<'a> {
    Keep(&'a str),
    Removed(&'a str),
    Added(&'a str),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPatch {
    pub commit: String,
    pub description: String,
    pub diffs: Vec<FileDiff>,
    pub contexts: Vec<SeedContext>,
    /// Hunks that touch no function (globals, macros, new files).
    #[serde(default)]
    pub contextless: Vec<HunkRef>,
}

impl SeedPatch {
    /// Text placed into prompts: description, then per file the whole-function
    /// views with edit markers, then any contextless hunks.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.description);
        out.push('\n');
        for (fi, fd) in self.diffs.iter().enumerate() {
            let _ = write!(out, "\nFile: {}\n", fd.path());
            for ctx in self.contexts.iter().filter(|c| c.hunks.first().is_some_and(|h| h.file == fi)) {
                let _ = writeln!(out, "Function: {}", ctx.function.name);
                out.push_str(&ctx.render_marked());
            }
            for h in self.contextless.iter().filter(|h| h.file == fi) {
                out.push_str("Hunk outside any function:\n");
                for l in &fd.hunks[h.hunk].lines {
                    out.push(l.kind.prefix());
                    out.push_str(&l.text);
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn is_contextless(&self) -> bool {
        self.contexts.is_empty()
    }
}

/// Line-start byte offsets of `text`; entry k is the start of line k+1.
fn line_starts(text: &str) -> Vec<usize> {
    std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1).filter(|&i| i < text.len()))
        .collect()
}

/// Changes of one hunk, as pre-image line numbers (1-based).
struct HunkEdits {
    removed: Vec<usize>,
    /// (insert after line, lines)
    inserts: Vec<(usize, Vec<String>)>,
}

fn hunk_edits(h: &Hunk) -> HunkEdits {
    // for pure insertions `old_start` names the line after which text goes
    let mut old_line = if h.old_count == 0 { h.old_start + 1 } else { h.old_start };
    let mut edits = HunkEdits { removed: Vec::new(), inserts: Vec::new() };
    for l in &h.lines {
        match l.kind {
            LineKind::Context => old_line += 1,
            LineKind::Removed => {
                edits.removed.push(old_line);
                old_line += 1;
            }
            LineKind::Added => {
                let after = old_line - 1;
                match edits.inserts.last_mut() {
                    Some((a, v)) if *a == after => v.push(l.text.clone()),
                    _ => edits.inserts.push((after, vec![l.text.clone()])),
                }
            }
        }
    }
    edits
}

fn span_of_line<'a>(file: &'a SourceFile, starts: &[usize], line: usize) -> Option<&'a FunctionSpan> {
    let off = *starts.get(line.checked_sub(1)?)?;
    // the first non-blank byte of the line decides; leading indentation may precede a span start
    let text = &file.text[off..];
    let skip = text.len() - text.trim_start_matches([' ', '\t']).len();
    file.enclosing_function(off + skip).or_else(|| file.enclosing_function(off))
}

/// Attach the enclosing pre-image function to every hunk of `commit`.
pub fn build_seed_patch(commit: &ParsedCommit, pre_image: &SourceCorpus) -> Result<SeedPatch, PatchError> {
    let missing: Vec<String> = commit
        .files
        .iter()
        .filter_map(|f| f.old_path.as_ref())
        .filter(|p| pre_image.file(p).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(PatchError::MissingPreImage(missing));
    }

    let mut contexts: Vec<SeedContext> = Vec::new();
    let mut contextless = Vec::new();
    for (fi, fd) in commit.files.iter().enumerate() {
        let Some(file) = fd.old_path.as_ref().and_then(|p| pre_image.file(p)) else {
            contextless.extend((0..fd.hunks.len()).map(|hunk| HunkRef { file: fi, hunk }));
            continue;
        };
        let starts = line_starts(&file.text);
        let line_count = starts.len();
        for (hi, hunk) in fd.hunks.iter().enumerate() {
            let edits = hunk_edits(hunk);
            // every edited position must fall inside one and the same function
            let mut touched: Vec<Option<&FunctionSpan>> = Vec::new();
            touched.extend(edits.removed.iter().map(|&l| span_of_line(file, &starts, l)));
            for (after, _) in &edits.inserts {
                let prev = (*after >= 1).then(|| span_of_line(file, &starts, *after)).flatten();
                let next = (*after < line_count).then(|| span_of_line(file, &starts, after + 1)).flatten();
                touched.push(match (prev, next) {
                    (Some(p), Some(n)) if p.start == n.start => Some(p),
                    (None, Some(n)) if *after == 0 => Some(n),
                    // appending right after the last line of a function body keeps it inside
                    (Some(p), _) if line_of(&starts, p.end.saturating_sub(1)) > *after => Some(p),
                    _ => None,
                });
            }
            let span = match touched.split_first() {
                Some((Some(first), rest)) if rest.iter().all(|s| s.is_some_and(|s| s.start == first.start)) => *first,
                _ => {
                    contextless.push(HunkRef { file: fi, hunk: hi });
                    continue;
                }
            };
            let first_line = line_of(&starts, span.start);
            let rel = |l: usize| l + 1 - first_line;
            let mut marks: Vec<LineMark> = edits
                .removed
                .iter()
                .map(|&l| LineMark { line: rel(l), kind: MarkKind::Removed, added: Vec::new() })
                .collect();
            marks.extend(edits.inserts.into_iter().map(|(after, added)| LineMark {
                line: if after < first_line { 0 } else { rel(after) },
                kind: MarkKind::InsertAfter,
                added,
            }));
            match contexts.iter_mut().find(|c| c.function.file == span.file && c.function.start == span.start) {
                Some(c) => {
                    c.hunks.push(HunkRef { file: fi, hunk: hi });
                    c.marks.extend(marks);
                }
                None => contexts.push(SeedContext {
                    function: span.clone(),
                    hunks: vec![HunkRef { file: fi, hunk: hi }],
                    marks,
                }),
            }
        }
    }
    for c in &mut contexts {
        c.marks.sort_by_key(|m| (m.line, m.kind == MarkKind::InsertAfter));
    }
    Ok(SeedPatch {
        commit: commit.id.clone(),
        description: clean_metadata(commit),
        diffs: commit.files.clone(),
        contexts,
        contextless,
    })
}

/// 1-based line number containing byte `offset`.
fn line_of(starts: &[usize], offset: usize) -> usize {
    starts.partition_point(|&s| s <= offset)
}

/// Apply the hunks of `diff` to `pre` and return the post-image text.
pub fn apply_file_diff(pre: &str, diff: &FileDiff) -> Result<String, PatchError> {
    let lines: Vec<&str> = pre.lines().collect();
    let mut out: Vec<String> = Vec::new();
    let mut next = 1usize; // next pre-image line to copy
    for h in &diff.hunks {
        let start = if h.old_count == 0 { h.old_start + 1 } else { h.old_start };
        if start < next {
            return Err(PatchError::Apply(format!("overlapping hunk at line {}", h.old_start)));
        }
        while next < start {
            out.push(lines.get(next - 1).ok_or_else(|| PatchError::Apply(format!("hunk beyond end at {start}")))?.to_string());
            next += 1;
        }
        for l in &h.lines {
            match l.kind {
                LineKind::Context | LineKind::Removed => {
                    let actual = lines.get(next - 1).copied().unwrap_or_default();
                    if actual != l.text {
                        return Err(PatchError::Apply(format!("line {next} does not match: {actual:?} vs {:?}", l.text)));
                    }
                    if l.kind == LineKind::Context {
                        out.push(l.text.clone());
                    }
                    next += 1;
                }
                LineKind::Added => out.push(l.text.clone()),
            }
        }
    }
    out.extend(lines.iter().skip(next - 1).map(|s| s.to_string()));
    let mut text = out.join("\n");
    if pre.ends_with('\n') {
        text.push('\n');
    }
    Ok(text)
}
