//! Natural-language descriptions of semantic graphs.
//!
//! Conversion runs in three steps: decompose the graph into triples, turn
//! each triple into a sub-sentence through fixed role templates, then polish
//! the sub-sentences with an LLM. Core argument roles are re-oriented
//! participant-first before templating, so `(rob-01, :ARG0, John)` in graph
//! order and `(John, :ARG0, rob-01)` in participant order both verbalize as
//! "John is the doer of rob-01". Unknown roles fall back to a generic
//! template, so every triple yields a sub-sentence.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amr::{
    normalize_inverse_roles, to_triples, AmrGraph, AmrTriple, ParseStatus, SentenceAmr,
    TripleTarget,
};
use crate::clients::{ClientError, GenerationRequest, InferenceClient, MAX_TOKENS_POLISH};
use crate::prompts;
use crate::retrieval::RetrievedContext;
use crate::util::bounded_parallel_map;

#[derive(Debug, Error)]
pub enum VerbalizeError {
    #[error("variable {0:?} cannot be resolved to a concept")]
    UnresolvableVariable(String),
    #[error("glossary line {line}: {reason}")]
    BadGlossary { line: usize, reason: String },
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// Predicate glosses, e.g. `rob-01` -> "to engage in or commit robbery".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Glossary {
    entries: BTreeMap<String, String>,
}

impl Glossary {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, predicate: impl Into<String>, gloss: impl Into<String>) {
        self.entries.insert(predicate.into(), gloss.into());
    }

    pub fn get(&self, predicate: &str) -> Option<&str> {
        self.entries.get(predicate).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse a plain-text glossary: one `predicate<TAB>gloss` per line.
    /// Blank lines and `#` comments are skipped.
    pub fn from_tsv(text: &str) -> Result<Self, VerbalizeError> {
        let mut glossary = Self::empty();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (predicate, gloss) =
                line.split_once('\t')
                    .ok_or_else(|| VerbalizeError::BadGlossary {
                        line: lineno + 1,
                        reason: "expected predicate<TAB>gloss".into(),
                    })?;
            let predicate = predicate.trim();
            if !is_predicate(predicate) {
                return Err(VerbalizeError::BadGlossary {
                    line: lineno + 1,
                    reason: format!("{predicate:?} is not a lemma-NN predicate"),
                });
            }
            glossary.insert(predicate, gloss.trim());
        }
        Ok(glossary)
    }
}

/// Lemma-hyphen-two-digits, e.g. `rob-01`, `go-02`.
pub fn is_predicate(concept: &str) -> bool {
    match concept.rsplit_once('-') {
        Some((lemma, suffix)) => {
            !lemma.is_empty() && suffix.len() == 2 && suffix.chars().all(|c| c.is_ascii_digit())
        }
        None => false,
    }
}

fn is_core_arg_role(role: &str) -> bool {
    role.strip_prefix(":ARG")
        .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}

/// Resolve a variable to its concept.
fn concept(g: &AmrGraph, var: &str) -> Result<String, VerbalizeError> {
    g.concept_of(var)
        .map(|c| c.to_string())
        .ok_or_else(|| VerbalizeError::UnresolvableVariable(var.to_string()))
}

/// Render a target: concepts for variables (with the gloss parenthetical for
/// glossed predicates), surfaces for constants.
fn render_target(
    g: &AmrGraph,
    target: &TripleTarget,
    glossary: &Glossary,
) -> Result<String, VerbalizeError> {
    Ok(match target {
        TripleTarget::Var(v) => {
            let c = concept(g, v)?;
            match glossary.get(&c) {
                Some(gloss) if is_predicate(&c) => format!("{c} ({gloss})"),
                _ => c,
            }
        }
        TripleTarget::Concept(c) => c.clone(),
        TripleTarget::Constant(c) => c.surface().to_string(),
    })
}

/// Turn one triple into a sub-sentence.
///
/// Core `:ARGn` triples whose source concept is a predicate are re-oriented
/// participant-first before the template, matching how graph edges point
/// from the predicate to the participant.
pub fn verbalize_triple(
    t: &AmrTriple,
    g: &AmrGraph,
    glossary: &Glossary,
) -> Result<String, VerbalizeError> {
    if t.role == ":instance" {
        let c = match &t.target {
            TripleTarget::Concept(c) => c.clone(),
            other => render_target(g, other, &Glossary::empty())?,
        };
        return Ok(format!("there is a {c}"));
    }
    let mut triple = t.clone();
    if is_core_arg_role(&t.role) {
        if let TripleTarget::Var(target_var) = &t.target {
            if is_predicate(&concept(g, &triple.source)?) {
                triple = AmrTriple::new(
                    target_var.clone(),
                    t.role.clone(),
                    TripleTarget::Var(t.source.clone()),
                );
            }
        }
    }
    let source = concept(g, &triple.source)?;
    let target = render_target(g, &triple.target, glossary)?;
    let line = match triple.role.as_str() {
        ":ARG0" => format!("{source} is the doer of {target}"),
        ":ARG1" => format!("{source} is the object of {target}"),
        ":ARG2" => format!("{source} is the secondary object of {target}"),
        ":time" => format!("{source} happens at {target}"),
        ":location" => format!("{source} takes place in {target}"),
        ":manner" => format!("{source} is done in a {target} manner"),
        ":mod" => format!("{source} is {target}"),
        ":polarity"
            if matches!(
                &triple.target,
                TripleTarget::Constant(crate::amr::AmrConstant::Symbol(s)) if s == "-"
            ) =>
        {
            format!("{source} does not happen")
        }
        ":name" => format!("{source} is named {target}"),
        ":quant" => format!("there are {target} {source}"),
        role => format!("{source} has relation {} to {target}", &role[1..]),
    };
    Ok(line)
}

/// Verbalize one parsed sentence graph into raw sub-sentences.
///
/// Inverse roles are normalized first. Instance sub-sentences are suppressed
/// for variables that already appear in a relation sub-sentence; a lone-node
/// graph keeps its single instance sentence.
pub fn verbalize_sentence(sa: &SentenceAmr, glossary: &Glossary) -> Vec<String> {
    let Some(graph) = (match sa.parse_status {
        ParseStatus::Ok => sa.graph.as_ref(),
        ParseStatus::Failed => None,
    }) else {
        return Vec::new();
    };
    let triples = normalize_inverse_roles(&to_triples(graph));
    let relations: Vec<&AmrTriple> = triples.iter().filter(|t| t.role != ":instance").collect();
    let mut mentioned: BTreeSet<&str> = BTreeSet::new();
    for r in &relations {
        mentioned.insert(r.source.as_str());
        if let TripleTarget::Var(v) = &r.target {
            mentioned.insert(v.as_str());
        }
    }
    let mut out = Vec::new();
    for t in &triples {
        if t.role == ":instance" && mentioned.contains(t.source.as_str()) {
            continue;
        }
        if let Ok(line) = verbalize_triple(t, graph, glossary) {
            out.push(line);
        }
    }
    out
}

/// Result of one polishing call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolishOutcome {
    pub sentences: Vec<String>,
    /// True when the raw sub-sentences were returned unchanged because the
    /// model produced no usable lines or the call failed.
    pub fallback: bool,
}

fn polish_user_content(raw: &[String], original_sentence: &str) -> String {
    let mut out = String::from("input_sub_sentences:\n");
    for line in raw {
        out.push_str("- ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("input_original_sentence: ");
    out.push_str(original_sentence);
    out
}

/// Polish one sentence's sub-sentences with the LLM. Falls back to the raw
/// list when the completion has no usable lines or the call fails.
pub fn polish(raw: &[String], original_sentence: &str, client: &InferenceClient) -> PolishOutcome {
    if raw.is_empty() {
        return PolishOutcome {
            sentences: Vec::new(),
            fallback: false,
        };
    }
    let req = GenerationRequest::deterministic(
        prompts::polish_full_system(),
        polish_user_content(raw, original_sentence),
        MAX_TOKENS_POLISH,
    );
    match client.generate(&req) {
        Ok(text) => {
            let lines: Vec<String> = text
                .lines()
                .map(|l| l.trim().to_string())
                .filter(|l| !l.is_empty())
                .collect();
            if lines.is_empty() {
                PolishOutcome {
                    sentences: raw.to_vec(),
                    fallback: true,
                }
            } else {
                PolishOutcome {
                    sentences: lines,
                    fallback: false,
                }
            }
        }
        Err(_) => PolishOutcome {
            sentences: raw.to_vec(),
            fallback: true,
        },
    }
}

/// The descriptions derived from one retrieved sentence's graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmrDescription {
    pub sentence_position: usize,
    pub raw_sub_sentences: Vec<String>,
    pub polished_sentences: Vec<String>,
    pub original_sentence: String,
    pub polish_fallback: bool,
}

/// Build the description context for every successfully parsed sentence of a
/// retrieved context, in position order. `concurrency` bounds in-flight
/// polishing requests.
pub fn build_amr_context(
    c: &RetrievedContext,
    amrs: &[SentenceAmr],
    glossary: &Glossary,
    client: &InferenceClient,
    concurrency: usize,
) -> Vec<AmrDescription> {
    let by_position: BTreeMap<usize, &SentenceAmr> =
        amrs.iter().map(|a| (a.sentence_position, a)).collect();
    let jobs: Vec<(usize, String, Vec<String>)> = c
        .items
        .iter()
        .filter_map(|item| {
            let sa = by_position.get(&item.sentence.position)?;
            if sa.parse_status != ParseStatus::Ok {
                return None;
            }
            Some((
                item.sentence.position,
                item.sentence.text.clone(),
                verbalize_sentence(sa, glossary),
            ))
        })
        .collect();
    bounded_parallel_map(jobs, concurrency, |(position, original, raw)| {
        let outcome = polish(&raw, &original, client);
        AmrDescription {
            sentence_position: position,
            raw_sub_sentences: raw,
            polished_sentences: outcome.sentences,
            original_sentence: original,
            polish_fallback: outcome.fallback,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amr::parse_penman;
    use crate::clients::{Backend, Completion, RetryPolicy};
    use std::sync::Arc;

    fn sentence_amr(text: &str) -> SentenceAmr {
        SentenceAmr::from_penman(0, text)
    }

    #[test]
    fn paper_participant_order_example() {
        let g = parse_penman("(r / rob-01 :ARG0 (j / John))").unwrap();
        let mut glossary = Glossary::empty();
        glossary.insert("rob-01", "to engage in or commit robbery");
        // Participant-first triple, as written in worked examples.
        let t = AmrTriple::new("j", ":ARG0", TripleTarget::Var("r".into()));
        assert_eq!(
            verbalize_triple(&t, &g, &glossary).unwrap(),
            "John is the doer of rob-01 (to engage in or commit robbery)"
        );
        // The same relation in graph-edge order gives the same sentence.
        let edge = AmrTriple::new("r", ":ARG0", TripleTarget::Var("j".into()));
        assert_eq!(
            verbalize_triple(&edge, &g, &glossary).unwrap(),
            "John is the doer of rob-01 (to engage in or commit robbery)"
        );
    }

    #[test]
    fn arg1_uses_object_template() {
        let g = parse_penman("(s / sell-01 :ARG1 (f / flower))").unwrap();
        let t = AmrTriple::new("s", ":ARG1", TripleTarget::Var("f".into()));
        assert_eq!(
            verbalize_triple(&t, &g, &Glossary::empty()).unwrap(),
            "flower is the object of sell-01"
        );
    }

    #[test]
    fn instance_template_renders_concept() {
        let g = parse_penman("(x / thing)").unwrap();
        let t = AmrTriple::new("x", ":instance", TripleTarget::Concept("thing".into()));
        assert_eq!(
            verbalize_triple(&t, &g, &Glossary::empty()).unwrap(),
            "there is a thing"
        );
    }

    #[test]
    fn sell_graph_verbalizes_to_two_sub_sentences() {
        let sa = sentence_amr("(s / sell-01 :ARG0 (m / man) :ARG1 (f / flower))");
        assert_eq!(
            verbalize_sentence(&sa, &Glossary::empty()),
            vec![
                "man is the doer of sell-01".to_string(),
                "flower is the object of sell-01".to_string(),
            ]
        );
    }

    #[test]
    fn lone_node_keeps_its_instance_sentence() {
        let sa = sentence_amr("(x / meeting)");
        assert_eq!(
            verbalize_sentence(&sa, &Glossary::empty()),
            vec!["there is a meeting".to_string()]
        );
    }

    #[test]
    fn failed_parse_contributes_nothing() {
        let sa = sentence_amr("(broken");
        assert_eq!(sa.parse_status, ParseStatus::Failed);
        assert!(verbalize_sentence(&sa, &Glossary::empty()).is_empty());
    }

    #[test]
    fn named_roles_have_dedicated_templates() {
        let cases = [
            (
                "(m / meet-03 :time (t / tomorrow))",
                "meet-03 happens at tomorrow",
            ),
            (
                "(m / meet-03 :location (r / room))",
                "meet-03 takes place in room",
            ),
            (
                "(w / walk-01 :manner (q / quick))",
                "walk-01 is done in a quick manner",
            ),
            ("(m / meeting :mod (l / long))", "meeting is long"),
            ("(g / go-02 :polarity -)", "go-02 does not happen"),
            ("(c / city :name \"Prague\")", "city is named Prague"),
            ("(p / person :quant 3)", "there are 3 person"),
        ];
        for (penman, expected) in cases {
            let sa = sentence_amr(penman);
            let lines = verbalize_sentence(&sa, &Glossary::empty());
            assert!(
                lines.contains(&expected.to_string()),
                "expected {expected:?} in {lines:?} for {penman}"
            );
        }
    }

    #[test]
    fn unknown_roles_use_the_generic_template() {
        let sa = sentence_amr("(a / alpha :weird (b / beta))");
        assert_eq!(
            verbalize_sentence(&sa, &Glossary::empty()),
            vec!["alpha has relation weird to beta".to_string()]
        );
    }

    #[test]
    fn arg3_uses_generic_with_participant_order() {
        let sa = sentence_amr("(g / give-01 :ARG3 (p / person))");
        assert_eq!(
            verbalize_sentence(&sa, &Glossary::empty()),
            vec!["person has relation ARG3 to give-01".to_string()]
        );
    }

    #[test]
    fn inverse_roles_are_normalized_before_templates() {
        let sa = sentence_amr("(m / man :ARG0-of (s / sell-01))");
        assert_eq!(
            verbalize_sentence(&sa, &Glossary::empty()),
            vec!["man is the doer of sell-01".to_string()]
        );
    }

    #[test]
    fn every_role_yields_a_sub_sentence() {
        let roles = [
            ":ARG0",
            ":ARG1",
            ":ARG2",
            ":ARG3",
            ":ARG7",
            ":time",
            ":mod",
            ":purpose",
            ":op1",
            ":degree",
            ":polarity",
            ":snt1",
        ];
        let g = parse_penman("(a / alpha :mod (b / beta))").unwrap();
        for role in roles {
            let t = AmrTriple::new("a", role, TripleTarget::Var("b".into()));
            let line = verbalize_triple(&t, &g, &Glossary::empty()).unwrap();
            assert!(!line.is_empty(), "role {role} produced nothing");
        }
    }

    #[test]
    fn glossary_parses_and_rejects_bad_lines() {
        let g = Glossary::from_tsv("# comment\nrob-01\tto engage in or commit robbery\n").unwrap();
        assert_eq!(g.get("rob-01"), Some("to engage in or commit robbery"));
        assert!(Glossary::from_tsv("no-tab-here").is_err());
        assert!(Glossary::from_tsv("notapredicate\tgloss").is_err());
    }

    struct Scripted(&'static str);
    impl Backend for Scripted {
        fn id(&self) -> String {
            "scripted".into()
        }
        fn embed(
            &self,
            _t: &[String],
        ) -> Result<Vec<crate::clients::EmbeddingVector>, ClientError> {
            unreachable!()
        }
        fn complete(&self, _r: &GenerationRequest) -> Result<Completion, ClientError> {
            Ok(Completion {
                text: self.0.to_string(),
                truncated: false,
            })
        }
    }

    fn scripted_client(text: &'static str) -> InferenceClient {
        InferenceClient::new(Arc::new(Scripted(text)), None, RetryPolicy::none())
    }

    #[test]
    fn polish_replays_the_paper_example_under_the_mock() {
        let client = InferenceClient::offline_mock(0, 64);
        let raw = vec!["John is the doer of rob-01 (to engage in or commit robbery)".to_string()];
        let outcome = polish(&raw, "John robbed the store.", &client);
        assert_eq!(outcome.sentences, vec!["John robs something.".to_string()]);
        assert!(!outcome.fallback);
    }

    #[test]
    fn echo_backend_returns_input_unchanged() {
        let client = scripted_client("a sub sentence\nanother one");
        let raw = vec!["a sub sentence".to_string(), "another one".to_string()];
        let outcome = polish(&raw, "orig", &client);
        assert_eq!(outcome.sentences, raw);
        assert!(!outcome.fallback);
    }

    #[test]
    fn line_count_may_differ_from_input() {
        let client = scripted_client("one\ntwo\nthree");
        let raw = vec!["a".to_string(), "b".to_string()];
        let outcome = polish(&raw, "orig", &client);
        assert_eq!(outcome.sentences.len(), 3);
    }

    #[test]
    fn blank_completion_falls_back_to_raw() {
        let client = scripted_client("\n   \n");
        let raw = vec!["keep me".to_string()];
        let outcome = polish(&raw, "orig", &client);
        assert_eq!(outcome.sentences, raw);
        assert!(outcome.fallback);
    }

    #[test]
    fn client_error_falls_back_to_raw() {
        struct Down;
        impl Backend for Down {
            fn id(&self) -> String {
                "down".into()
            }
            fn embed(
                &self,
                _t: &[String],
            ) -> Result<Vec<crate::clients::EmbeddingVector>, ClientError> {
                unreachable!()
            }
            fn complete(&self, _r: &GenerationRequest) -> Result<Completion, ClientError> {
                Err(ClientError::EndpointUnavailable {
                    attempts: 1,
                    reason: "down".into(),
                })
            }
        }
        let client = InferenceClient::new(Arc::new(Down), None, RetryPolicy::none());
        let raw = vec!["still here".to_string()];
        let outcome = polish(&raw, "orig", &client);
        assert_eq!(outcome.sentences, raw);
        assert!(outcome.fallback);
    }

    #[test]
    fn context_with_a_failed_parse_skips_that_sentence() {
        use crate::corpus::{parse_transcript_str, segment_sentences, Language, Question};

        let t = segment_sentences(
            parse_transcript_str(
                "(P1) A man sells a flower. Broken one. The team meets.",
                "m",
            )
            .unwrap(),
        );
        let q = Question {
            question_id: "q".into(),
            meeting_id: "m".into(),
            text: "who sells?".into(),
            language: Language::English,
            reference_answer: None,
        };
        let client = InferenceClient::offline_mock(0, 64);
        let cfg = crate::retrieval::RetrievalConfig {
            k_sentence: 3,
            k_query: 3,
            queries_per_sentence: 1,
            expansion_radius: 1,
        };
        let ix = crate::retrieval::index_meeting(&t, &cfg, &client, &client, 1).unwrap();
        let c = crate::retrieval::retrieve(&q, &ix, &t, &cfg, &client).unwrap();
        assert_eq!(c.items.len(), 3);
        let amrs = vec![
            SentenceAmr::from_penman(0, "(s / sell-01 :ARG0 (m / man) :ARG1 (f / flower))"),
            SentenceAmr::from_penman(1, "(((broken"),
            SentenceAmr::from_penman(2, "(m / meet-03 :ARG0 (t / team))"),
        ];
        let descriptions = build_amr_context(&c, &amrs, &Glossary::empty(), &client, 2);
        assert_eq!(descriptions.len(), 2);
        assert_eq!(descriptions[0].sentence_position, 0);
        assert_eq!(descriptions[1].sentence_position, 2);
        assert!(!descriptions[0].polished_sentences.is_empty());
        let again = build_amr_context(&c, &amrs, &Glossary::empty(), &client, 2);
        assert_eq!(descriptions, again);
    }

    #[test]
    fn empty_context_yields_empty_descriptions() {
        let c = RetrievedContext {
            meeting_id: "m".into(),
            question_id: "q".into(),
            items: vec![],
        };
        let client = InferenceClient::offline_mock(0, 64);
        assert!(build_amr_context(&c, &[], &Glossary::empty(), &client, 1).is_empty());
    }
}
