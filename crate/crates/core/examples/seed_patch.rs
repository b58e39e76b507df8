//! Turn a fixing commit into a seed patch with whole-function context and
//! render the rule-generation prompt for it.

use seedscan::corpus::SourceCorpus;
use seedscan::patch::{build_seed_patch, parse_commit};
use seedscan::rules::render_rule_generation_prompt;

const COMMIT: &str = "From 0123456789abcdef0123456789abcdef01234567 Mon Sep 17 00:00:00 2001
From: Dev <dev@example.org>
Subject: [PATCH] buf: check malloc result

malloc may return NULL.

Signed-off-by: Dev <dev@example.org>
---
diff --git a/buf.c b/buf.c
--- a/buf.c
+++ b/buf.c
@@ -3,6 +3,8 @@
 char *make_buf(size_t n)
 {
 \tchar *p = malloc(n);
+\tif (!p)
+\t\treturn NULL;
 \tp[0] = 0;
 \treturn p;
 }
";

const PRE_IMAGE: &str = "#include <stdlib.h>\n\nchar *make_buf(size_t n)\n{\n\tchar *p = malloc(n);\n\tp[0] = 0;\n\treturn p;\n}\n";

fn main() -> anyhow::Result<()> {
    let commit = parse_commit(COMMIT)?;
    let pre = SourceCorpus::from_files([("buf.c", PRE_IMAGE)]);
    let seed = build_seed_patch(&commit, &pre)?;
    println!("commit {} touches {} file(s)", seed.commit, seed.diffs.len());
    println!("--- seed patch ---\n{}", seed.render());
    println!("--- rule-generation prompt ---\n{}", render_rule_generation_prompt(&seed));
    Ok(())
}
