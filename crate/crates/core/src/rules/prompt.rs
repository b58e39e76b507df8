use crate::patch::SeedPatch;

/// Rule-generation prompt. `{PUT_PATCH_HERE}` is replaced by the rendered seed.
pub const RULE_GENERATION_PROMPT: &str = "You are a software security expert. Your task is to generate one or more security coding rules from the given patch. Definition: A security coding rule is a concise statement that specifies the correct usage of a target API or code element. Violating this rule can introduce bugs or other issues.Use the templates below whenever they fit the patch. If none fit, write your own concise rule in a single sentence.
[Security Coding Rule Templates]
1. The function {TARGET} may fail and return {ERR_RETURN_VALUE}. Therefore,its return value must be checked before use to prevent {IMPACT}.
2. Once {TARGET} succeeds, ensure that {HANDLER} is invoked in any subsequent error handling path to prevent {IMPACT}.
3. Use {HANDLER} instead of {TARGET1} + {TARGET2} to {GOAL}.
[END Security Coding Rule Templates]
Output requirements:
1. Derive rules only from evidence in the patch, do not speculate.
2. Use identifiers as they appear in the patch.
3. If the patch addresses multiple independent issues, output multiple rules, one per line.
4. Do not include explanations or restate the patch.

[PATCH]
{PUT_PATCH_HERE}
[END PATCH]
Please provide the security coding rule or rules using the templates when possible. If no template fits, provide a concise custom rule.
";

pub fn render_rule_generation_prompt(seed: &SeedPatch) -> String {
    let patch = seed.render();
    RULE_GENERATION_PROMPT.replacen("{PUT_PATCH_HERE}", patch.trim_end_matches('\n'), 1)
}
