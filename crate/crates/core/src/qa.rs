//! Final prompt assembly and answer generation.
//!
//! Three context variants feed the answering LLM: retrieved sentences only,
//! retrieved sentences plus their graph-derived descriptions, or the
//! descriptions only. Czech questions get the exact instruction
//! "Answer in Czech." as the last line of the user content.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ClientError, GenerationRequest, InferenceClient, MAX_TOKENS_ANSWER};
use crate::corpus::{Language, Question};
use crate::prompts;
use crate::retrieval::{render_context, RetrievalError, RetrievedContext};
use crate::verbalize::AmrDescription;

/// Which contexts the answering prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    IrOnly,
    IrPlusAmr,
    AmrOnly,
}

impl Variant {
    pub fn uses_retrieved(&self) -> bool {
        matches!(self, Variant::IrOnly | Variant::IrPlusAmr)
    }

    pub fn uses_descriptions(&self) -> bool {
        matches!(self, Variant::IrPlusAmr | Variant::AmrOnly)
    }

    pub const ALL: [Variant; 3] = [Variant::IrOnly, Variant::IrPlusAmr, Variant::AmrOnly];
}

// Display writes the same snake_case names serde uses, so file stems and
// report labels match the config syntax.
impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Variant::IrOnly => "ir_only",
            Variant::IrPlusAmr => "ir_plus_amr",
            Variant::AmrOnly => "amr_only",
        };
        write!(f, "{name}")
    }
}

#[derive(Debug, Error)]
pub enum QaError {
    #[error("variant {variant} requires the {missing} context")]
    MissingContext {
        variant: String,
        missing: &'static str,
    },
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

pub const RETRIEVED_HEADER: &str = "RETRIEVED SENTENCES:";
pub const DESCRIPTIONS_HEADER: &str = "MEANING DESCRIPTIONS:";
pub const QUESTION_HEADER: &str = "QUESTION:";
pub const CZECH_INSTRUCTION: &str = "Answer in Czech.";

/// Assemble the answering prompt for one question under one variant.
///
/// Sections appear in fixed order: retrieved sentences (if the variant uses
/// them), meaning descriptions grouped per source position (if used), then
/// the question.
pub fn assemble_prompt(
    q: &Question,
    retrieved: Option<&RetrievedContext>,
    descriptions: Option<&[AmrDescription]>,
    variant: Variant,
) -> Result<GenerationRequest, QaError> {
    let mut sections: Vec<String> = Vec::new();
    if variant.uses_retrieved() {
        let context = retrieved.ok_or(QaError::MissingContext {
            variant: variant.to_string(),
            missing: "retrieved-sentence",
        })?;
        sections.push(format!("{RETRIEVED_HEADER}\n{}", render_context(context)?));
    }
    if variant.uses_descriptions() {
        let descriptions = descriptions.ok_or(QaError::MissingContext {
            variant: variant.to_string(),
            missing: "description",
        })?;
        let mut lines = Vec::new();
        for d in descriptions {
            for sentence in &d.polished_sentences {
                lines.push(format!("[{}] {}", d.sentence_position, sentence));
            }
        }
        sections.push(format!("{DESCRIPTIONS_HEADER}\n{}", lines.join("\n")));
    }
    sections.push(format!("{QUESTION_HEADER}\n{}", q.text));
    let mut user_content = sections.join("\n\n");
    if q.language == Language::Czech {
        user_content.push('\n');
        user_content.push_str(CZECH_INSTRUCTION);
    }
    Ok(GenerationRequest::deterministic(
        prompts::ANSWER_SYSTEM.to_string(),
        user_content,
        MAX_TOKENS_ANSWER,
    ))
}

/// One generated answer plus everything needed to judge and replay it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub variant: Variant,
    pub answer_text: String,
    pub language: Language,
    pub context_snapshot: String,
    pub model_name: String,
    pub timestamp: String,
    /// `"ok"` or an error description when generation failed. Failed records
    /// are still emitted so evaluation counts them.
    pub status: String,
}

impl AnswerRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Generate the answer for one question. Failures after retries produce a
/// record with empty text and the error in `status` rather than an error.
#[allow(clippy::too_many_arguments)]
pub fn answer(
    q: &Question,
    retrieved: Option<&RetrievedContext>,
    descriptions: Option<&[AmrDescription]>,
    variant: Variant,
    client: &InferenceClient,
    model_name: &str,
    timestamp: &str,
) -> AnswerRecord {
    let base = AnswerRecord {
        question_id: q.question_id.clone(),
        variant,
        answer_text: String::new(),
        language: q.language,
        context_snapshot: String::new(),
        model_name: model_name.to_string(),
        timestamp: timestamp.to_string(),
        status: "ok".into(),
    };
    let request = match assemble_prompt(q, retrieved, descriptions, variant) {
        Ok(r) => r,
        Err(e) => {
            return AnswerRecord {
                status: format!("prompt error: {e}"),
                ..base
            }
        }
    };
    // Snapshot is the context part of the prompt: everything up to the
    // question header.
    let context_snapshot = request
        .user_content
        .split(QUESTION_HEADER)
        .next()
        .unwrap_or("")
        .trim_end()
        .to_string();
    match client.generate(&request) {
        Ok(text) => AnswerRecord {
            answer_text: text,
            context_snapshot,
            ..base
        },
        Err(e) => AnswerRecord {
            context_snapshot,
            status: format!("generation error: {e}"),
            ..base
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_transcript_str, segment_sentences, Transcript};
    use crate::retrieval::{ContextItem, ProvenanceTag};

    fn fixture_transcript() -> Transcript {
        segment_sentences(
            parse_transcript_str(
                "(PERSON1) The budget was approved. The deadline is Friday.\n(PERSON2) PERSON5 is leaving the project.",
                "m",
            )
            .unwrap(),
        )
    }

    fn fixture_context(t: &Transcript) -> RetrievedContext {
        RetrievedContext {
            meeting_id: "m".into(),
            question_id: "q".into(),
            items: t
                .sentences
                .iter()
                .take(2)
                .map(|s| ContextItem {
                    sentence: s.clone(),
                    provenance: [ProvenanceTag::DenseHit].into_iter().collect(),
                })
                .collect(),
        }
    }

    fn fixture_descriptions() -> Vec<AmrDescription> {
        vec![AmrDescription {
            sentence_position: 0,
            raw_sub_sentences: vec!["budget is the object of approve-01".into()],
            polished_sentences: vec!["The budget is approved.".into()],
            original_sentence: "The budget was approved.".into(),
            polish_fallback: false,
        }]
    }

    fn question(language: Language) -> Question {
        Question {
            question_id: "q".into(),
            meeting_id: "m".into(),
            text: "What was approved?".into(),
            language,
            reference_answer: None,
        }
    }

    #[test]
    fn ir_only_has_retrieved_section_and_no_descriptions() {
        let t = fixture_transcript();
        let req = assemble_prompt(
            &question(Language::English),
            Some(&fixture_context(&t)),
            None,
            Variant::IrOnly,
        )
        .unwrap();
        assert!(req.user_content.contains(RETRIEVED_HEADER));
        assert!(!req.user_content.contains(DESCRIPTIONS_HEADER));
        assert!(req.user_content.contains(QUESTION_HEADER));
        assert_eq!(req.system_prompt, prompts::ANSWER_SYSTEM);
        assert_eq!(req.temperature, 0.0);
    }

    #[test]
    fn amr_only_has_descriptions_and_no_retrieved_section() {
        let descriptions = fixture_descriptions();
        let req = assemble_prompt(
            &question(Language::English),
            None,
            Some(&descriptions),
            Variant::AmrOnly,
        )
        .unwrap();
        assert!(!req.user_content.contains(RETRIEVED_HEADER));
        assert!(req.user_content.contains(DESCRIPTIONS_HEADER));
        assert!(req.user_content.contains("[0] The budget is approved."));
    }

    #[test]
    fn ir_plus_amr_has_both_sections_in_order() {
        let t = fixture_transcript();
        let descriptions = fixture_descriptions();
        let req = assemble_prompt(
            &question(Language::English),
            Some(&fixture_context(&t)),
            Some(&descriptions),
            Variant::IrPlusAmr,
        )
        .unwrap();
        let retrieved_at = req.user_content.find(RETRIEVED_HEADER).unwrap();
        let descriptions_at = req.user_content.find(DESCRIPTIONS_HEADER).unwrap();
        let question_at = req.user_content.find(QUESTION_HEADER).unwrap();
        assert!(retrieved_at < descriptions_at && descriptions_at < question_at);
    }

    #[test]
    fn czech_question_ends_with_the_exact_instruction() {
        let t = fixture_transcript();
        let req = assemble_prompt(
            &question(Language::Czech),
            Some(&fixture_context(&t)),
            None,
            Variant::IrOnly,
        )
        .unwrap();
        assert_eq!(req.user_content.lines().last(), Some(CZECH_INSTRUCTION));
    }

    #[test]
    fn english_question_does_not_carry_the_instruction() {
        let t = fixture_transcript();
        let req = assemble_prompt(
            &question(Language::English),
            Some(&fixture_context(&t)),
            None,
            Variant::IrOnly,
        )
        .unwrap();
        assert!(!req.user_content.contains(CZECH_INSTRUCTION));
    }

    #[test]
    fn missing_context_violates_preconditions() {
        assert!(matches!(
            assemble_prompt(&question(Language::English), None, None, Variant::IrOnly),
            Err(QaError::MissingContext { .. })
        ));
        assert!(matches!(
            assemble_prompt(&question(Language::English), None, None, Variant::AmrOnly),
            Err(QaError::MissingContext { .. })
        ));
    }

    #[test]
    fn prompt_assembly_is_stable() {
        let t = fixture_transcript();
        let a = assemble_prompt(
            &question(Language::English),
            Some(&fixture_context(&t)),
            None,
            Variant::IrOnly,
        )
        .unwrap();
        let b = assemble_prompt(
            &question(Language::English),
            Some(&fixture_context(&t)),
            None,
            Variant::IrOnly,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn answer_under_mock_extracts_best_sentence() {
        let t = fixture_transcript();
        let client = InferenceClient::offline_mock(0, 64);
        let mut q = question(Language::English);
        q.text = "Who is leaving the project?".into();
        let record = answer(
            &q,
            Some(&fixture_context(&t)),
            None,
            Variant::IrOnly,
            &client,
            "mock",
            "1970-01-01T00:00:00Z",
        );
        assert!(record.is_ok());
        assert_eq!(record.answer_text, "The budget was approved.");
        let record2 = answer(
            &q,
            Some(&fixture_context(&t)),
            None,
            Variant::IrOnly,
            &client,
            "mock",
            "1970-01-01T00:00:00Z",
        );
        assert_eq!(record, record2);
    }

    #[test]
    fn endpoint_failure_is_recorded_not_raised() {
        use crate::clients::{Backend, Completion, RetryPolicy};
        use std::sync::Arc;

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
        let t = fixture_transcript();
        let record = answer(
            &question(Language::English),
            Some(&fixture_context(&t)),
            None,
            Variant::IrOnly,
            &client,
            "mock",
            "ts",
        );
        assert!(!record.is_ok());
        assert!(record.answer_text.is_empty());
        assert!(record.status.contains("unavailable"));
    }

    #[test]
    fn variant_names_are_snake_case() {
        assert_eq!(Variant::IrOnly.to_string(), "ir_only");
        assert_eq!(Variant::IrPlusAmr.to_string(), "ir_plus_amr");
        assert_eq!(Variant::AmrOnly.to_string(), "amr_only");
        let parsed: Variant = serde_json::from_str("\"amr_only\"").unwrap();
        assert_eq!(parsed, Variant::AmrOnly);
    }
}
