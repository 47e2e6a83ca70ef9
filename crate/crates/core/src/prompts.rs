//! Versioned prompt assets.
//!
//! The answering and polishing system prompts are fixed texts stored under
//! `assets/` and included at compile time; the remaining prompts are this
//! crate's own. The mock backend recognizes requests by their system prompt,
//! so these constants are the single source of truth for routing.

/// System prompt for answer generation.
pub const ANSWER_SYSTEM: &str = include_str!("../assets/answer_system.txt");

/// System prompt for polishing verbalized sub-sentences.
pub const POLISH_SYSTEM: &str = include_str!("../assets/polish_system.txt");

/// Few-shot examples appended to the polishing prompt.
pub const POLISH_EXAMPLES: &str = include_str!("../assets/polish_examples.txt");

/// System prompt for the 0-5 judging rubric.
pub const JUDGE_SYSTEM: &str = include_str!("../assets/judge_system.txt");

/// User-content template for judging, with `{question}`, `{reference_answer}`,
/// `{candidate_answer}` and `{intended_language}` placeholders.
pub const JUDGE_USER_TEMPLATE: &str = include_str!("../assets/judge_user_template.txt");

/// System prompt for synthetic-query generation (document expansion).
pub const DOC2QUERY_SYSTEM: &str =
    "You generate search queries. Given a passage from a meeting transcript, \
write short questions that the passage answers, one per line. \
Output only the questions, nothing else.";

/// System prompt asking a generation endpoint to emit a semantic graph in
/// PENMAN notation for one sentence.
pub const PENMAN_SYSTEM: &str =
    "You are a semantic parser. Given one sentence, output its abstract meaning \
representation as a single PENMAN graph, e.g. (s / sell-01 :ARG0 (m / man) :ARG1 (f / flower)). \
Output only the graph, nothing else.";

/// Full polishing system prompt: the fixed instruction plus few-shot examples.
pub fn polish_full_system() -> String {
    format!("{POLISH_SYSTEM}\n\n{POLISH_EXAMPLES}")
}

/// Fill the judge user template.
pub fn judge_user_content(
    question: &str,
    reference_answer: &str,
    candidate_answer: &str,
    intended_language: &str,
) -> String {
    JUDGE_USER_TEMPLATE
        .replace("{question}", question)
        .replace("{reference_answer}", reference_answer)
        .replace("{candidate_answer}", candidate_answer)
        .replace("{intended_language}", intended_language)
}
