//! Find every function that calls a target identifier, skipping comments,
//! strings, prototypes and the target's own definition.

use seedscan::corpus::{MatchMode, SourceCorpus};

fn main() -> anyhow::Result<()> {
    let corpus = SourceCorpus::from_files([
        (
            "drivers/net/a.c",
            "/* alloc_ctx(dev) may fail */\nstatic int probe(struct dev *d)\n{\n\td->ctx = alloc_ctx(d);\n\tif (!d->ctx)\n\t\treturn -ENOMEM;\n\treturn 0;\n}\n\nstatic int resume(struct dev *d)\n{\n\tpr_info(\"alloc_ctx(%p)\\n\", d);\n\td->ctx = alloc_ctx(d);\n\treturn d->ctx->state;\n}\n",
        ),
        ("lib/ctx.c", "struct ctx *alloc_ctx(struct dev *d)\n{\n\treturn kzalloc(sizeof(struct ctx), GFP_KERNEL);\n}\n"),
        ("include/ctx.h", "struct ctx *alloc_ctx(struct dev *d);\n"),
    ]);
    for c in corpus.enumerate_call_sites("alloc_ctx", MatchMode::Call)? {
        println!("{}:{} {} occurrences={}", c.span.file, c.span.start_line(&corpus.file(&c.span.file).unwrap().text), c.span.name, c.offsets.len());
    }
    Ok(())
}
