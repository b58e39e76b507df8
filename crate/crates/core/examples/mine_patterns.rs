//! Cluster rule embeddings into recurring patterns, pick each cluster's
//! medoid and map function names to the rules that mention them.

use seedscan::mine::{build_function_rule_map, cluster_rules, select_top_clusters, RuleEmbedding};
use seedscan::rules::{Provenance, SecurityRule};
use std::collections::BTreeSet;

fn main() -> anyhow::Result<()> {
    let texts = [
        ("kmalloc may return NULL; check it before use.", "kmalloc", [1.0, 0.02, 0.0]),
        ("kzalloc may return NULL; check it before use.", "kzalloc", [0.98, 0.05, 0.01]),
        ("vmalloc may return NULL; check it before use.", "vmalloc", [0.97, 0.0, 0.04]),
        ("Release the lock taken by spin_lock on every path.", "spin_lock", [0.0, 1.0, 0.03]),
        ("Release the lock taken by mutex_lock on every path.", "mutex_lock", [0.02, 0.99, 0.0]),
        ("Release the lock taken by down_read on every path.", "down_read", [0.05, 0.97, 0.02]),
        ("Balance pm_runtime_get with a put on error paths.", "pm_runtime_get", [0.1, 0.1, 1.0]),
    ];
    let rules: Vec<SecurityRule> = texts.iter().map(|(t, target, _)| SecurityRule::free_form(*t, *target, Provenance::Human)).collect();
    let embeddings = rules
        .iter()
        .zip(&texts)
        .map(|(r, (_, _, v))| RuleEmbedding::new(r.id.clone(), v.to_vec()))
        .collect::<Result<Vec<_>, _>>()?;

    let clustering = cluster_rules(&embeddings, 0.05, 3);
    let text_of = |id: &str| rules.iter().find(|r| r.id == id).map(|r| r.text.as_str());
    for c in select_top_clusters(&clustering.clusters, 10, text_of) {
        println!("#{} size={} medoid: {}", c.rank, c.cluster.size, c.medoid_text);
    }
    println!("noise: {:?}", clustering.noise.iter().filter_map(|id| text_of(id)).collect::<Vec<_>>());

    let lexicon: BTreeSet<String> = texts.iter().map(|(_, t, _)| t.to_string()).collect();
    let map = build_function_rule_map(&rules, &lexicon);
    for ident in map.identifiers() {
        println!("{ident} -> {:?}", map.rules_for(ident).collect::<Vec<_>>());
    }
    Ok(())
}
