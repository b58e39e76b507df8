//! Single-pass comment and literal blanking for C source.
//!
//! The output has exactly the same byte length and line structure as the
//! input: comment bodies and literal contents become spaces, newlines stay.
//! String and char delimiters are kept so the code shape remains visible.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Code,
    LineComment,
    BlockComment,
    Str,
    Char,
}

/// Blank out comments, string/char literal contents and `#include` operands.
pub fn strip_comments_and_strings(src: &str) -> String {
    let bytes = src.as_bytes();
    let mut out = bytes.to_vec();
    let mut mode = Mode::Code;
    let mut at_line_start = true;
    let mut i = 0;

    let blank = |out: &mut Vec<u8>, j: usize| {
        if out[j] != b'\n' {
            out[j] = b' ';
        }
    };

    while i < bytes.len() {
        let b = bytes[i];
        let next = bytes.get(i + 1).copied();
        match mode {
            Mode::Code => {
                if b == b'/' && next == Some(b'/') {
                    mode = Mode::LineComment;
                    blank(&mut out, i);
                    blank(&mut out, i + 1);
                    i += 2;
                    continue;
                }
                if b == b'/' && next == Some(b'*') {
                    mode = Mode::BlockComment;
                    blank(&mut out, i);
                    blank(&mut out, i + 1);
                    i += 2;
                    continue;
                }
                if b == b'"' {
                    mode = Mode::Str;
                } else if b == b'\'' {
                    mode = Mode::Char;
                } else if b == b'#' && at_line_start {
                    if let Some(end) = include_operand(bytes, i) {
                        for j in end.0..end.1 {
                            blank(&mut out, j);
                        }
                        i = end.1;
                        continue;
                    }
                }
                if b == b'\n' {
                    at_line_start = true;
                } else if !b.is_ascii_whitespace() {
                    at_line_start = false;
                }
                i += 1;
            }
            Mode::LineComment => {
                if b == b'\\' && next == Some(b'\n') {
                    blank(&mut out, i);
                    i += 2;
                    continue;
                }
                if b == b'\n' {
                    mode = Mode::Code;
                    at_line_start = true;
                } else {
                    blank(&mut out, i);
                }
                i += 1;
            }
            Mode::BlockComment => {
                if b == b'*' && next == Some(b'/') {
                    blank(&mut out, i);
                    blank(&mut out, i + 1);
                    mode = Mode::Code;
                    i += 2;
                    continue;
                }
                blank(&mut out, i);
                i += 1;
            }
            Mode::Str | Mode::Char => {
                let close = if mode == Mode::Str { b'"' } else { b'\'' };
                if b == b'\\' {
                    blank(&mut out, i);
                    if next.is_some() {
                        if next == Some(b'\n') {
                            i += 2;
                            continue;
                        }
                        blank(&mut out, i + 1);
                    }
                    i += 2;
                    continue;
                }
                if b == close {
                    mode = Mode::Code;
                } else if b == b'\n' {
                    // unterminated literal: recover at end of line
                    mode = Mode::Code;
                    at_line_start = true;
                } else {
                    blank(&mut out, i);
                }
                i += 1;
            }
        }
    }
    // Only ASCII bytes were written over whole characters, so this stays UTF-8.
    String::from_utf8(out).unwrap_or_else(|e| String::from_utf8_lossy(e.as_bytes()).into_owned())
}

/// For a `#include <...>` / `#include "..."` directive starting at `hash`,
/// return the byte range of the operand to blank.
fn include_operand(bytes: &[u8], hash: usize) -> Option<(usize, usize)> {
    let mut j = hash + 1;
    while j < bytes.len() && (bytes[j] == b' ' || bytes[j] == b'\t') {
        j += 1;
    }
    if !bytes[j..].starts_with(b"include") {
        return None;
    }
    j += "include".len();
    let start = j;
    while j < bytes.len() && bytes[j] != b'\n' {
        j += 1;
    }
    Some((start, j))
}
