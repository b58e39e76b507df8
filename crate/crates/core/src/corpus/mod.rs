//! Source corpus loading, identifier indexing and call-site enumeration.

mod functions;
mod strip;

pub use functions::{
    extract_from_stripped, extract_functions, extract_functions_detailed, ExtractWarning,
    Extraction, FunctionSpan,
};
pub use strip::strip_comments_and_strings;

use crate::util::{hash_fields, identifiers, is_c_identifier, is_c_keyword};
use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;
use walkdir::WalkDir;

/// Default byte budget for one candidate body (about 6K tokens).
pub const DEFAULT_OVERSIZE_BYTES: usize = 24_576;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus root {path}: {source}")]
    Root {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid glob pattern {pattern:?}: {source}")]
    Glob {
        pattern: String,
        #[source]
        source: globset::Error,
    },
    #[error("{0:?} is not a valid C identifier")]
    BadTarget(String),
}

/// How a rule's target is located in code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchMode {
    /// Identifier followed by optional whitespace and `(`.
    #[default]
    #[serde(rename = "call")]
    Call,
    /// Any occurrence of the identifier (code pieces such as `strncpy` used as a value).
    #[serde(rename = "bare-identifier")]
    BareIdentifier,
}

#[derive(Clone, Debug)]
pub struct SourceFile {
    /// Path relative to the corpus root, `/`-separated.
    pub path: String,
    pub text: String,
    pub stripped: String,
    pub functions: Vec<FunctionSpan>,
    pub warnings: Vec<ExtractWarning>,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        let path = path.into();
        let text = text.into();
        let stripped = strip_comments_and_strings(&text);
        let Extraction { mut spans, warnings } = extract_from_stripped(&text, &stripped);
        for s in &mut spans {
            s.file = path.clone();
        }
        SourceFile { path, text, stripped, functions: spans, warnings }
    }

    /// Function span containing `offset`, if any.
    pub fn enclosing_function(&self, offset: usize) -> Option<&FunctionSpan> {
        let idx = self.functions.partition_point(|s| s.start <= offset);
        idx.checked_sub(1)
            .map(|i| &self.functions[i])
            .filter(|s| s.contains(offset))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Occurrence {
    pub file: usize,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanLogEntry {
    pub path: String,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct CorpusOptions {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            include: vec!["**/*.c".into(), "**/*.h".into()],
            exclude: Vec::new(),
        }
    }
}

/// An immutable, indexed snapshot of a C source tree.
#[derive(Clone, Debug, Default)]
pub struct SourceCorpus {
    pub root: PathBuf,
    pub files: Vec<SourceFile>,
    index: HashMap<String, Vec<Occurrence>>,
    pub log: Vec<ScanLogEntry>,
}

fn build_globset(patterns: &[String]) -> Result<GlobSet, CorpusError> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        let g = Glob::new(p).map_err(|source| CorpusError::Glob { pattern: p.clone(), source })?;
        b.add(g);
    }
    b.build().map_err(|source| CorpusError::Glob { pattern: patterns.join(","), source })
}

/// Load every file under `root` matching `include_globs` (paths relative to root).
pub fn load_corpus(root: &Path, include_globs: &[String]) -> Result<SourceCorpus, CorpusError> {
    let opts = CorpusOptions {
        include: if include_globs.is_empty() {
            CorpusOptions::default().include
        } else {
            include_globs.to_vec()
        },
        exclude: Vec::new(),
    };
    load_corpus_with(root, &opts)
}

pub fn load_corpus_with(root: &Path, opts: &CorpusOptions) -> Result<SourceCorpus, CorpusError> {
    fs::read_dir(root).map_err(|source| CorpusError::Root { path: root.to_path_buf(), source })?;
    let include = build_globset(&opts.include)?;
    let exclude = build_globset(&opts.exclude)?;
    let mut files = Vec::new();
    let mut log = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                let path = e.path().map(|p| p.display().to_string()).unwrap_or_default();
                log.push(ScanLogEntry { path, message: e.to_string() });
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let rel_str = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if !include.is_match(&rel_str) || exclude.is_match(&rel_str) {
            continue;
        }
        match fs::read(entry.path()) {
            Ok(bytes) => match String::from_utf8(bytes) {
                Ok(text) => files.push((rel_str, text)),
                Err(_) => {
                    log::warn!("skipping non-UTF-8 file {rel_str}");
                    log.push(ScanLogEntry { path: rel_str, message: "not valid UTF-8; skipped".into() });
                }
            },
            Err(e) => log.push(ScanLogEntry { path: rel_str, message: e.to_string() }),
        }
    }
    let mut corpus = SourceCorpus::from_files(files);
    corpus.root = root.to_path_buf();
    corpus.log.extend(log);
    Ok(corpus)
}

impl SourceCorpus {
    /// Build a corpus from in-memory `(relative path, text)` pairs.
    pub fn from_files<P: Into<String>, T: Into<String>>(files: impl IntoIterator<Item = (P, T)>) -> Self {
        let mut files: Vec<SourceFile> = files.into_iter().map(|(p, t)| SourceFile::new(p, t)).collect();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let mut index: HashMap<String, Vec<Occurrence>> = HashMap::new();
        let mut log = Vec::new();
        for (fi, f) in files.iter().enumerate() {
            for (offset, ident) in identifiers(&f.stripped) {
                if is_c_keyword(ident) {
                    continue;
                }
                index.entry(ident.to_string()).or_default().push(Occurrence { file: fi, offset });
            }
            for w in &f.warnings {
                log.push(ScanLogEntry { path: f.path.clone(), message: format!("{w:?}") });
            }
        }
        SourceCorpus { root: PathBuf::new(), files, index, log }
    }

    pub fn file(&self, path: &str) -> Option<&SourceFile> {
        self.files
            .binary_search_by(|f| f.path.as_str().cmp(path))
            .ok()
            .map(|i| &self.files[i])
    }

    /// Occurrences of `ident` outside comments and literals, in (file, offset) order.
    pub fn occurrences(&self, ident: &str) -> &[Occurrence] {
        self.index.get(ident).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn indexed_identifiers(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Names of every function defined in the corpus.
    pub fn defined_functions(&self) -> BTreeSet<String> {
        self.files
            .iter()
            .flat_map(|f| f.functions.iter().map(|s| s.name.clone()))
            .collect()
    }

    /// Identifiers that appear in call position anywhere in the corpus.
    pub fn called_identifiers(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (ident, occs) in &self.index {
            if occs.iter().any(|o| followed_by_paren(&self.files[o.file].stripped, o.offset + ident.len())) {
                out.insert(ident.clone());
            }
        }
        out
    }

    /// Known-function lexicon: defined or called identifiers.
    pub fn function_lexicon(&self) -> BTreeSet<String> {
        let mut lex = self.defined_functions();
        lex.extend(self.called_identifiers());
        lex
    }

    /// One candidate per enclosing function that uses `target`, ordered by
    /// (path, offset). The definition site of `target` itself is excluded and
    /// occurrences outside any function are ignored.
    pub fn enumerate_call_sites(&self, target: &str, mode: MatchMode) -> Result<Vec<CallSiteCandidate>, CorpusError> {
        if !is_c_identifier(target) {
            return Err(CorpusError::BadTarget(target.to_string()));
        }
        let mut out: Vec<CallSiteCandidate> = Vec::new();
        let mut current: Option<(usize, usize)> = None; // (file, span start)
        for occ in self.occurrences(target) {
            let file = &self.files[occ.file];
            if mode == MatchMode::Call && !followed_by_paren(&file.stripped, occ.offset + target.len()) {
                continue;
            }
            let Some(span) = file.enclosing_function(occ.offset) else { continue };
            if span.name == target && span.name_offset == occ.offset {
                continue;
            }
            let rel = occ.offset - span.start;
            match (&current, out.last_mut()) {
                (Some((f, s)), Some(last)) if *f == occ.file && *s == span.start => last.offsets.push(rel),
                _ => {
                    current = Some((occ.file, span.start));
                    out.push(CallSiteCandidate {
                        id: candidate_id(&file.path, &span.name, occ.offset),
                        target: target.to_string(),
                        span: span.clone(),
                        offsets: vec![rel],
                    });
                }
            }
        }
        Ok(out)
    }
}

fn followed_by_paren(stripped: &str, end: usize) -> bool {
    stripped.as_bytes()[end..]
        .iter()
        .find(|b| !b.is_ascii_whitespace())
        .is_some_and(|&b| b == b'(')
}

pub fn candidate_id(path: &str, function: &str, offset: usize) -> String {
    let off = offset.to_string();
    hash_fields([path.as_bytes(), function.as_bytes(), off.as_bytes()])[..16].to_string()
}

/// One enclosing function containing at least one use of a target identifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CallSiteCandidate {
    pub id: String,
    pub target: String,
    pub span: FunctionSpan,
    /// Occurrence offsets relative to `span.start`.
    pub offsets: Vec<usize>,
}

/// JSON-lines form of a candidate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub file: String,
    pub function: String,
    pub target: String,
    pub offsets: Vec<usize>,
    pub body: String,
}

impl CallSiteCandidate {
    pub fn body(&self) -> &str {
        &self.span.body
    }

    pub fn is_oversize(&self, budget_bytes: usize) -> bool {
        self.span.body.len() > budget_bytes
    }

    /// A candidate for a free-standing snippet that has no corpus location.
    pub fn from_snippet(id: impl Into<String>, target: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        CallSiteCandidate {
            id: id.into(),
            target: target.into(),
            span: FunctionSpan {
                file: String::new(),
                name: String::new(),
                start: 0,
                end: body.len(),
                name_offset: 0,
                header: String::new(),
                body,
                degraded: false,
            },
            offsets: Vec::new(),
        }
    }

    pub fn to_record(&self) -> CandidateRecord {
        CandidateRecord {
            id: self.id.clone(),
            file: self.span.file.clone(),
            function: self.span.name.clone(),
            target: self.target.clone(),
            offsets: self.offsets.clone(),
            body: self.span.body.clone(),
        }
    }
}
