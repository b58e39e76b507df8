//! Bug-fix commits: parsing, metadata cleaning and seed-patch construction.

mod clean;
mod diff;
mod seed;

pub use clean::{clean_message, clean_metadata};
pub use diff::{parse_commit, FileDiff, Hunk, HunkLine, LineKind, ParsedCommit};
pub use seed::{apply_file_diff, build_seed_patch, HunkRef, LineMark, MarkKind, SeedContext, SeedPatch};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PatchError {
    #[error("line {line}: malformed diff line {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: hunk {header:?} declares different line counts than it contains (saw -{old_seen} +{new_seen})")]
    HunkCount { line: usize, header: String, old_seen: usize, new_seen: usize },
    #[error("commit contains no diff hunks")]
    EmptyDiff,
    #[error("files missing from the pre-image tree: {}", .0.join(", "))]
    MissingPreImage(Vec<String>),
    #[error("cannot apply hunk: {0}")]
    Apply(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, SourceCorpus};
    use std::path::{Path, PathBuf};

    fn fixture(rel: &str) -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
    }

    fn read(rel: &str) -> String {
        std::fs::read_to_string(fixture(rel)).unwrap()
    }

    const MINIMAL: &str = "--- a/f.c\n+++ b/f.c\n@@ -1 +1 @@\n-int x;\n+int y;\n";

    #[test]
    fn minimal_diff() {
        let c = parse_commit(MINIMAL).unwrap();
        assert_eq!(c.files.len(), 1);
        assert_eq!(c.files[0].hunks.len(), 1);
        assert_eq!(c.files[0].path(), "f.c");
        assert_eq!(c.message, "");
        let h = &c.files[0].hunks[0];
        assert_eq!((h.old_start, h.old_count, h.new_start, h.new_count), (1, 1, 1, 1));
        assert_eq!(h.lines[1], HunkLine { kind: LineKind::Added, text: "int y;".into() });
    }

    #[test]
    fn empty_diff_is_an_error() {
        assert_eq!(parse_commit("commit abc\n\n    just a message\n"), Err(PatchError::EmptyDiff));
        assert_eq!(parse_commit(""), Err(PatchError::EmptyDiff));
    }

    #[test]
    fn malformed_hunk_header_names_the_line() {
        let raw = "--- a/f.c\n+++ b/f.c\n@@ -x +1 @@\n-int x;\n";
        match parse_commit(raw) {
            Err(PatchError::Malformed { line, text }) => {
                assert_eq!(line, 3);
                assert_eq!(text, "@@ -x +1 @@");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_hunk_is_a_count_error() {
        let raw = "--- a/f.c\n+++ b/f.c\n@@ -1,3 +1,3 @@\n-int x;\n+int y;\n";
        assert!(matches!(parse_commit(raw), Err(PatchError::HunkCount { line: 3, .. })));
    }

    #[test]
    fn format_patch_commit_with_nes_fix() {
        let c = parse_commit(&read("nes/commit.patch")).unwrap();
        assert_eq!(c.id, "a82268b30a8b9f4b5c7f4ea2c2aa2b0f6a2e9c11");
        assert_eq!(c.files.len(), 1);
        assert_eq!(c.files[0].path(), "drivers/infiniband/hw/nes/nes_cm.c");
        assert_eq!(c.title(), "RDMA/nes: check the return value of create_singlethread_workqueue");
        let added: Vec<&str> = c.files[0].hunks[0]
            .lines
            .iter()
            .filter(|l| l.kind == LineKind::Added)
            .map(|l| l.text.as_str())
            .collect();
        assert!(added.contains(&"\tif (!cm_core->event_wq)"));
        assert!(c.files[0].hunks.iter().all(Hunk::is_consistent));
    }

    #[test]
    fn multi_file_counts_match_hand_count() {
        let c = parse_commit(&read("multi/commit.txt")).unwrap();
        assert_eq!(c.id, "5f0c2a1e9b7d3c4a8e6f1b2d3c4e5f60718293a4");
        assert_eq!(c.files.len(), 3);
        assert_eq!(c.files.iter().map(|f| f.hunks.len()).collect::<Vec<_>>(), vec![2, 1, 2]);
        assert_eq!(c.hunk_count(), 5);
        assert!(c.message.starts_with("clk: demo: check clk_prepare"));
    }

    #[derive(serde::Deserialize)]
    struct Golden {
        file: String,
        cleaned: String,
    }

    #[test]
    fn cleaning_matches_golden_set() {
        let golden: Vec<Golden> = crate::util::read_jsonl(&fixture("clean/golden.jsonl")).unwrap();
        assert_eq!(golden.len(), 10);
        for g in golden {
            let c = parse_commit(&read(&format!("clean/{}", g.file))).unwrap();
            assert_eq!(clean_metadata(&c), g.cleaned, "fixture {}", g.file);
        }
    }

    fn nes_seed() -> (ParsedCommit, SourceCorpus, SeedPatch) {
        let c = parse_commit(&read("nes/commit.patch")).unwrap();
        let corpus = load_corpus(&fixture("nes/pre"), &[]).unwrap();
        let seed = build_seed_patch(&c, &corpus).unwrap();
        (c, corpus, seed)
    }

    #[test]
    fn nes_seed_has_full_function_context() {
        let (_, corpus, seed) = nes_seed();
        assert_eq!(seed.commit, "a82268b30a8b9f4b5c7f4ea2c2aa2b0f6a2e9c11");
        assert!(seed.contextless.is_empty());
        assert_eq!(seed.contexts.len(), 1);
        let ctx = &seed.contexts[0];
        assert_eq!(ctx.function.name, "nes_cm_alloc_core");
        let file = corpus.file("drivers/infiniband/hw/nes/nes_cm.c").unwrap();
        let span = file.functions.iter().find(|f| f.name == "nes_cm_alloc_core").unwrap();
        assert_eq!(&ctx.function, span);
        // the allocation lines anchor the inserted checks
        let lines: Vec<&str> = ctx.function.body.lines().collect();
        let marked: Vec<&str> = ctx.marked_lines().iter().map(|&l| lines[l - 1]).collect();
        assert!(marked.contains(&"\tcm_core->event_wq = create_singlethread_workqueue(\"nesewq\");"));
        assert!(marked.contains(&"\tcm_core->disconn_wq = create_singlethread_workqueue(\"nesdwq\");"));
        assert!(!seed.description.contains("Signed-off-by"));
        assert!(!seed.description.contains("https://"));
        assert!(!seed.description.contains("Found by"));
    }

    #[test]
    fn multi_file_seed_contexts_and_contextless_hunks() {
        let c = parse_commit(&read("multi/commit.txt")).unwrap();
        let corpus = load_corpus(&fixture("multi/pre"), &[]).unwrap();
        let seed = build_seed_patch(&c, &corpus).unwrap();
        let names: Vec<&str> = seed.contexts.iter().map(|c| c.function.name.as_str()).collect();
        assert_eq!(names, vec!["setup_clock", "copy_name"]);
        // two hunks in setup_clock share one context
        assert_eq!(seed.contexts[0].hunks, vec![HunkRef { file: 0, hunk: 0 }, HunkRef { file: 0, hunk: 1 }]);
        assert_eq!(seed.contexts[0].marks.len(), 3);
        // top-level macro edits are flagged, not dropped
        assert_eq!(seed.contextless, vec![HunkRef { file: 1, hunk: 0 }, HunkRef { file: 2, hunk: 0 }]);
        assert_eq!(seed.diffs.iter().map(|d| d.hunks.len()).sum::<usize>(), 5);
    }

    #[test]
    fn missing_pre_image_file_is_reported() {
        let c = parse_commit(&read("multi/commit.txt")).unwrap();
        let corpus = SourceCorpus::from_files([("src/a.c", "int other(void) { return 0; }\n")]);
        assert_eq!(
            build_seed_patch(&c, &corpus),
            Err(PatchError::MissingPreImage(vec!["src/a.h".into(), "src/b.c".into()]))
        );
    }

    #[test]
    fn applying_hunks_matches_post_image_contexts() {
        for (commit, root) in [("nes/commit.patch", "nes/pre"), ("multi/commit.txt", "multi/pre")] {
            let c = parse_commit(&read(commit)).unwrap();
            let corpus = load_corpus(&fixture(root), &[]).unwrap();
            let seed = build_seed_patch(&c, &corpus).unwrap();
            for ctx in &seed.contexts {
                let fd = &c.files[ctx.hunks[0].file];
                let pre = &corpus.file(fd.old_path.as_deref().unwrap()).unwrap().text;
                let post = apply_file_diff(pre, fd).unwrap();
                let post_fn = crate::corpus::extract_functions(&post)
                    .into_iter()
                    .find(|f| f.name == ctx.function.name)
                    .unwrap();
                assert_eq!(post_fn.body, ctx.post_image(), "{commit}: {}", ctx.function.name);
                // unmarked lines are untouched
                let marked = ctx.marked_lines();
                let kept_pre: Vec<&str> = ctx
                    .function
                    .body
                    .lines()
                    .enumerate()
                    .filter(|(i, _)| !ctx.marks.iter().any(|m| m.kind == MarkKind::Removed && m.line == i + 1))
                    .map(|(_, l)| l)
                    .collect();
                let added: usize = ctx.marks.iter().map(|m| m.added.len()).sum();
                assert_eq!(post_fn.body.lines().count(), kept_pre.len() + added);
                assert!(!marked.is_empty());
            }
        }
    }

    #[test]
    fn rendered_seed_shows_whole_function_with_markers() {
        let (_, _, seed) = nes_seed();
        let text = seed.render();
        assert!(text.starts_with("RDMA/nes: check the return value of create_singlethread_workqueue\n"));
        assert!(text.contains("File: drivers/infiniband/hw/nes/nes_cm.c\nFunction: nes_cm_alloc_core\n"));
        assert!(text.contains("+\tif (!cm_core->event_wq)\n"));
        assert!(text.contains(" \tcm_core = kzalloc(sizeof(*cm_core), GFP_KERNEL);\n"));
        assert!(!text.contains("diff --git"));
        assert!(!text.contains("@@"));
    }

    #[test]
    fn seed_patch_json_round_trips_bit_exactly() {
        let (_, _, seed) = nes_seed();
        let line = crate::util::to_jsonl_line(&seed);
        let back: SeedPatch = serde_json::from_str(&line).unwrap();
        assert_eq!(back, seed);
        assert_eq!(crate::util::to_jsonl_line(&back), line);
    }
}
