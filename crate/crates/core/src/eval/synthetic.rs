//! Seeded generator of datasets shaped like a real ground-truth set:
//! `patterns` misuse patterns sharing `patches` fix commits, one commit per
//! pattern held out as the seed.

use super::{EvalPair, GroundTruthPattern};
use crate::corpus::SourceCorpus;
use crate::patch::{build_seed_patch, parse_commit, SeedPatch};
use crate::rules::{HumanRule, RuleCatalog, SecurityRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FILLER: &[&str] = &[
    "\tdev_dbg(dev, \"probing\\n\");",
    "\tspin_lock_init(&priv->lock);",
    "\tINIT_LIST_HEAD(&priv->list);",
    "\tpriv->flags = 0;",
    "\tplatform_set_drvdata(pdev, priv);",
];

fn function(name: &str, target: &str, filler: &[&str], checked: bool) -> String {
    let mut s = format!("static int {name}(struct platform_device *pdev)\n{{\n\tstruct device *dev = &pdev->dev;\n\tstruct foo_priv *priv;\n\n\tpriv = {target}(dev, sizeof(*priv));\n");
    if checked {
        s.push_str("\tif (!priv)\n\t\treturn -ENOMEM;\n");
    }
    s.push_str("\tpriv->dev = dev;\n");
    for f in filler {
        s.push_str(f);
        s.push('\n');
    }
    s.push_str("\treturn 0;\n}\n");
    s
}

fn seed_patch(pattern: usize, target: &str) -> SeedPatch {
    let path = format!("drivers/misc/pattern{pattern}.c");
    let name = format!("pattern{pattern}_probe");
    let pre = function(&name, target, &[], false);
    let old: Vec<&str> = pre.lines().collect();
    let at = old.iter().position(|l| l.contains(target)).expect("target line") + 1;
    let mut diff = format!(
        "From {:040x} Mon Sep 17 00:00:00 2001\nSubject: [PATCH] misc: pattern{pattern}: check {target} result\n\n{target} can fail; bail out instead of dereferencing the result.\n---\ndiff --git a/{path} b/{path}\n--- a/{path}\n+++ b/{path}\n@@ -1,{} +1,{} @@\n",
        pattern + 1,
        old.len(),
        old.len() + 2
    );
    for (i, l) in old.iter().enumerate() {
        diff.push_str(&format!(" {l}\n"));
        if i + 1 == at {
            diff.push_str("+\tif (!priv)\n+\t\treturn -ENOMEM;\n");
        }
    }
    let corpus = SourceCorpus::from_files([(path, pre)]);
    build_seed_patch(&parse_commit(&diff).expect("synthetic diff parses"), &corpus).expect("synthetic seed builds")
}

/// Deterministic dataset with `patterns` patterns and `patches` commits in total.
///
/// Panics unless `patches >= 2 * patterns`.
pub fn synthetic_dataset(patterns: usize, patches: usize, seed: u64) -> Vec<GroundTruthPattern> {
    assert!(patches >= 2 * patterns, "each pattern needs a seed and at least one evaluated patch");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![2usize; patterns];
    for _ in 0..patches - 2 * patterns {
        counts[rng.gen_range(0..patterns)] += 1;
    }
    let catalog = RuleCatalog::shipped();
    let rules: Vec<&SecurityRule> = catalog.rules().iter().filter(|r| r.template_id == 1).collect();
    counts
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let rule = rules[k % rules.len()].clone();
            let target = rule.primary_target().expect("template 1 has a target");
            let pairs = (1..n)
                .map(|i| {
                    let fill: Vec<&str> = (0..rng.gen_range(0..=FILLER.len())).map(|_| FILLER[rng.gen_range(0..FILLER.len())]).collect();
                    let name = format!("p{k}_drv{i}_probe");
                    EvalPair {
                        pair_id: format!("p{k}-fix{i}"),
                        positive: function(&name, &target, &fill, false),
                        negative: function(&name, &target, &fill, true),
                    }
                })
                .collect();
            let human = HumanRule::new(format!("Check the value returned by {target}() for failure before dereferencing it."), vec![target.clone()])
                .expect("one target");
            GroundTruthPattern {
                pattern_id: format!("p{k}"),
                rule,
                human_rule: Some(human),
                seed_commit: format!("p{k}-seed"),
                seed_patch: Some(seed_patch(k, &target)),
                pairs,
            }
        })
        .collect()
}
