//! Best-effort recovery of top-level C function definitions.
//!
//! A definition is a top-level `name ( ... ) {` sequence, with any number of
//! `__attribute__((...))`-style annotations allowed between `)` and `{`.
//! Preprocessor directives are invisible to the brace matcher, while bodies
//! are sliced from the original text so conditionals inside them are kept.

use super::strip::strip_comments_and_strings;
use crate::util::{is_c_keyword, is_ident_char, is_ident_start};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    /// Corpus-relative path, `/`-separated. Empty for spans extracted from bare text.
    pub file: String,
    pub name: String,
    /// Byte offset of the first byte of the definition (return type, storage class).
    pub start: usize,
    /// Byte offset one past the closing brace.
    pub end: usize,
    /// Byte offset of the function name.
    pub name_offset: usize,
    /// Text from `start` up to (not including) the opening brace, trimmed.
    pub header: String,
    pub body: String,
    /// Set when the closing brace was never found and the span was cut at end of file.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

impl FunctionSpan {
    pub fn contains(&self, offset: usize) -> bool {
        self.start <= offset && offset < self.end
    }

    /// 1-based line number of `start` within `file_text`.
    pub fn start_line(&self, file_text: &str) -> usize {
        file_text[..self.start].bytes().filter(|&b| b == b'\n').count() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExtractWarning {
    /// Unbalanced braces: the last span was truncated at end of file.
    Truncated { name: String },
    /// K&R-style definition; not extracted.
    KnrDefinition { name: String, offset: usize },
}

#[derive(Clone, Debug, Default)]
pub struct Extraction {
    pub spans: Vec<FunctionSpan>,
    pub warnings: Vec<ExtractWarning>,
}

/// Top-level function definitions in `file_text`, sorted by start offset.
pub fn extract_functions(file_text: &str) -> Vec<FunctionSpan> {
    extract_functions_detailed(file_text).spans
}

pub fn extract_functions_detailed(file_text: &str) -> Extraction {
    let stripped = strip_comments_and_strings(file_text);
    extract_from_stripped(file_text, &stripped)
}

/// Same as [`extract_functions_detailed`] when the caller already holds the stripped text.
pub fn extract_from_stripped(file_text: &str, stripped: &str) -> Extraction {
    let view = blank_directives(stripped);
    let s = view.as_bytes();
    let mut out = Extraction::default();
    let mut depth = 0usize;
    let mut decl_start: Option<usize> = None;
    // start of the text since the last top-level `}` (or file start)
    let mut segment_start = 0usize;
    let mut i = 0usize;

    while i < s.len() {
        let b = s[i];
        if depth == 0 && decl_start.is_none() && !b.is_ascii_whitespace() && b != b';' && b != b'}' {
            decl_start = Some(i);
        }
        match b {
            b';' if depth == 0 => decl_start = None,
            b'{' if depth == 0 => {
                if let Some((name_offset, name)) = function_name_before(s, i) {
                    let start = decl_start.unwrap_or(name_offset).min(name_offset);
                    let (end, degraded) = match matching_close(s, i) {
                        Some(close) => (close + 1, false),
                        None => (s.len(), true),
                    };
                    if degraded {
                        out.warnings.push(ExtractWarning::Truncated { name: name.to_string() });
                    }
                    out.spans.push(FunctionSpan {
                        file: String::new(),
                        name: name.to_string(),
                        start,
                        end,
                        name_offset,
                        header: file_text[start..i].trim().to_string(),
                        body: file_text[start..end].to_string(),
                        degraded,
                    });
                    i = end;
                    decl_start = None;
                    segment_start = end;
                    continue;
                }
                if let Some((name, offset)) = knr_definition(&view[segment_start..i]) {
                    out.warnings.push(ExtractWarning::KnrDefinition {
                        name,
                        offset: segment_start + offset,
                    });
                }
                depth = 1;
            }
            b'{' => depth += 1,
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    segment_start = i + 1;
                }
            }
            _ => {}
        }
        i += 1;
    }
    out
}

/// Replace preprocessor directive lines (with `\` continuations) by spaces.
fn blank_directives(stripped: &str) -> String {
    let mut out = String::with_capacity(stripped.len());
    let mut in_directive = false;
    for line in stripped.split_inclusive('\n') {
        let starts = line.trim_start().starts_with('#');
        if starts || in_directive {
            let body = line.trim_end_matches('\n');
            in_directive = body.trim_end().ends_with('\\');
            out.extend(body.bytes().map(|_| ' '));
            if line.ends_with('\n') {
                out.push('\n');
            }
        } else {
            out.push_str(line);
        }
    }
    out
}

fn skip_ws_back(s: &[u8], mut j: usize) -> Option<usize> {
    // returns index of last non-ws byte strictly before j
    while j > 0 {
        j -= 1;
        if !s[j].is_ascii_whitespace() {
            return Some(j);
        }
    }
    None
}

fn matching_open_paren(s: &[u8], close: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut j = close + 1;
    while j > 0 {
        j -= 1;
        match s[j] {
            b')' => depth += 1,
            b'(' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            b'{' | b'}' | b';' => return None,
            _ => {}
        }
    }
    None
}

fn ident_ending_at(s: &[u8], last: usize) -> Option<(usize, usize)> {
    if !is_ident_char(s[last]) {
        return None;
    }
    let mut start = last;
    while start > 0 && is_ident_char(s[start - 1]) {
        start -= 1;
    }
    is_ident_start(s[start]).then_some((start, last + 1))
}

/// If the `{` at `brace` opens a function body, return the function name.
fn function_name_before(s: &[u8], brace: usize) -> Option<(usize, &str)> {
    let mut j = brace;
    loop {
        let close = skip_ws_back(s, j)?;
        if s[close] != b')' {
            return None;
        }
        let open = matching_open_paren(s, close)?;
        let before = skip_ws_back(s, open)?;
        let (ns, ne) = ident_ending_at(s, before)?;
        let name = std::str::from_utf8(&s[ns..ne]).ok()?;
        if is_annotation(name) {
            j = ns;
            continue;
        }
        if is_c_keyword(name) {
            return None;
        }
        // `= FOO(x) {` style initializers are not definitions
        if let Some(prev) = skip_ws_back(s, ns) {
            if matches!(s[prev], b'=' | b',' | b'(' | b'[') {
                return None;
            }
        }
        return Some((ns, name));
    }
}

fn is_annotation(name: &str) -> bool {
    matches!(
        name,
        "__attribute__" | "__attribute" | "__acquires" | "__releases" | "__must_hold" | "__printf" | "__cold"
    )
}

fn matching_close(s: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    for (j, &b) in s.iter().enumerate().skip(open) {
        match b {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(j);
                }
            }
            _ => {}
        }
    }
    None
}

fn knr_definition(segment: &str) -> Option<(String, usize)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(
            r"\b([A-Za-z_]\w*)\s*\(\s*[A-Za-z_]\w*(?:\s*,\s*[A-Za-z_]\w*)*\s*\)\s*(?:[^;{}()=]+;\s*)+$",
        )
        .expect("valid regex")
    });
    let caps = re.captures(segment.trim_end())?;
    let m = caps.get(1)?;
    (!is_c_keyword(m.as_str())).then(|| (m.as_str().to_string(), m.start()))
}
