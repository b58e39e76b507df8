//! Parse a model reply into templated security rules and add them to a
//! catalog next to the shipped rules.

use seedscan::rules::{parse_rule_response_detailed, validate_rule, Provenance, RuleCatalog};

fn main() -> anyhow::Result<()> {
    let reply = "The function rproc_alloc may fail and return NULL. Therefore, its return value must be checked before use to prevent a NULL-pointer dereference.\nSome closing remark that is not a rule.";
    let parsed = parse_rule_response_detailed(reply, &Provenance::Seed { commit: "0123abcd".into() });
    for r in &parsed.rules {
        println!("rule {} template={} targets={:?} problems={:?}", r.id, r.template_id, r.targets(), validate_rule(r));
    }
    println!("dropped lines: {:?}", parsed.dropped);

    let mut catalog = RuleCatalog::shipped();
    let shipped = catalog.len();
    let added = catalog.extend(parsed.rules);
    println!("shipped={shipped} added={added} total={}", catalog.len());
    for (template, n) in catalog.histogram() {
        println!("template {template:>2}: {n}");
    }
    Ok(())
}
