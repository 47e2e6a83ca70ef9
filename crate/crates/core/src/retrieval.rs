//! Relevant-context construction.
//!
//! Two retrievers run per question: dense similarity against the sentence
//! index, and similarity against an index of synthetic queries generated per
//! sentence (document expansion). The union of hit positions is expanded by
//! one neighbor on each side, deduplicated, and ordered by transcript
//! position, which preserves the sequential structure of the meeting.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clients::{ClientError, InferenceClient};
use crate::corpus::{Question, Sentence, Transcript};
use crate::util::bounded_parallel_map;
use crate::vindex::{IndexError, VectorIndex};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    #[serde(default = "default_k")]
    pub k_sentence: usize,
    #[serde(default = "default_k")]
    pub k_query: usize,
    #[serde(default = "default_k")]
    pub queries_per_sentence: usize,
    /// Fixed at 1: each selected sentence brings one preceding and one
    /// following sentence.
    #[serde(default = "default_radius")]
    pub expansion_radius: usize,
}

fn default_k() -> usize {
    5
}

fn default_radius() -> usize {
    1
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k_sentence: 5,
            k_query: 5,
            queries_per_sentence: 5,
            expansion_radius: 1,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.expansion_radius != 1 {
            return Err(RetrievalError::BadConfig(format!(
                "expansion_radius is fixed at 1, got {}",
                self.expansion_radius
            )));
        }
        for (name, value) in [
            ("k_sentence", self.k_sentence),
            ("k_query", self.k_query),
            ("queries_per_sentence", self.queries_per_sentence),
        ] {
            if value == 0 {
                return Err(RetrievalError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// How a sentence entered the context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProvenanceTag {
    /// Top hit on the sentence-embedding index.
    DenseHit,
    /// Top hit on the synthetic-query index.
    QueryHit,
    /// Present only as the neighbor of a retrieved sentence.
    Expansion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextItem {
    pub sentence: Sentence,
    pub provenance: BTreeSet<ProvenanceTag>,
}

/// The relevant context: expanded hits in strictly increasing position order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub meeting_id: String,
    pub question_id: String,
    pub items: Vec<ContextItem>,
}

impl RetrievedContext {
    pub fn positions(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.sentence.position).collect()
    }
}

/// Synthetic query provenance: which sentence produced each indexed query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryMapEntry {
    pub query: String,
    pub position: usize,
}

/// Both per-meeting indexes plus query provenance.
pub struct MeetingIndex {
    pub sentence_index: VectorIndex,
    pub query_index: VectorIndex,
    pub query_map: Vec<QueryMapEntry>,
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("transcript {0:?} has no sentences to index")]
    EmptyMeeting(String),
    #[error("question targets meeting {question:?} but indexes are for {index:?}")]
    UnknownMeeting { question: String, index: String },
    #[error("cannot render an empty context")]
    EmptyContext,
    #[error("invalid retrieval config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Build the sentence index and the synthetic-query index for one meeting.
/// Payload ids are sentence positions in both indexes. `concurrency` bounds
/// in-flight query-generation requests.
pub fn index_meeting(
    t: &Transcript,
    cfg: &RetrievalConfig,
    embedder: &InferenceClient,
    query_generator: &InferenceClient,
    concurrency: usize,
) -> Result<MeetingIndex, RetrievalError> {
    cfg.validate()?;
    if t.sentences.is_empty() {
        return Err(RetrievalError::EmptyMeeting(t.meeting_id.clone()));
    }
    let texts: Vec<String> = t.sentences.iter().map(|s| s.text.clone()).collect();
    let sentence_vectors = embedder.embed(&texts)?;
    let sentence_index = VectorIndex::build(
        sentence_vectors
            .into_iter()
            .zip(&t.sentences)
            .map(|(v, s)| (v, s.position as u64))
            .collect(),
    )?;

    let per_sentence: Vec<Result<Vec<String>, ClientError>> = bounded_parallel_map(
        t.sentences.iter().collect::<Vec<_>>(),
        concurrency,
        |sentence| query_generator.doc2query(&sentence.text, cfg.queries_per_sentence),
    );
    let mut query_map = Vec::new();
    for (sentence, queries) in t.sentences.iter().zip(per_sentence) {
        for query in queries? {
            query_map.push(QueryMapEntry {
                query,
                position: sentence.position,
            });
        }
    }
    let query_texts: Vec<String> = query_map.iter().map(|e| e.query.clone()).collect();
    let query_vectors = embedder.embed(&query_texts)?;
    let query_index = VectorIndex::build(
        query_vectors
            .into_iter()
            .zip(&query_map)
            .map(|(v, e)| (v, e.position as u64))
            .collect(),
    )?;

    Ok(MeetingIndex {
        sentence_index,
        query_index,
        query_map,
    })
}

/// Retrieve the relevant context for one question.
///
/// Dense hits and query hits are unioned as sentence positions, every
/// position gains its immediate neighbors (clipped to the transcript), and
/// items come back in position order with provenance tags.
pub fn retrieve(
    q: &Question,
    index: &MeetingIndex,
    t: &Transcript,
    cfg: &RetrievalConfig,
    embedder: &InferenceClient,
) -> Result<RetrievedContext, RetrievalError> {
    cfg.validate()?;
    if q.meeting_id != t.meeting_id {
        return Err(RetrievalError::UnknownMeeting {
            question: q.meeting_id.clone(),
            index: t.meeting_id.clone(),
        });
    }
    let query_vector = embedder.embed(std::slice::from_ref(&q.text))?.remove(0);
    let dense: BTreeSet<usize> = index
        .sentence_index
        .search(&query_vector, cfg.k_sentence)?
        .into_iter()
        .map(|h| h.payload_id as usize)
        .collect();
    let via_queries: BTreeSet<usize> = index
        .query_index
        .search(&query_vector, cfg.k_query)?
        .into_iter()
        .map(|h| h.payload_id as usize)
        .collect();
    Ok(assemble_context(q, t, &dense, &via_queries))
}

/// Union, expand by one neighbor each side, order by position, tag
/// provenance. Split out so the construction rule is testable without a
/// backend.
fn assemble_context(
    q: &Question,
    t: &Transcript,
    dense: &BTreeSet<usize>,
    via_queries: &BTreeSet<usize>,
) -> RetrievedContext {
    let last = t.sentences.len().saturating_sub(1);
    let base: BTreeSet<usize> = dense.union(via_queries).copied().collect();
    let mut positions: BTreeSet<usize> = base.clone();
    for &p in &base {
        if p > 0 {
            positions.insert(p - 1);
        }
        if p < last {
            positions.insert(p + 1);
        }
    }
    let items = positions
        .into_iter()
        .filter_map(|p| t.sentences.get(p))
        .map(|sentence| {
            let mut provenance = BTreeSet::new();
            if dense.contains(&sentence.position) {
                provenance.insert(ProvenanceTag::DenseHit);
            }
            if via_queries.contains(&sentence.position) {
                provenance.insert(ProvenanceTag::QueryHit);
            }
            if provenance.is_empty() {
                provenance.insert(ProvenanceTag::Expansion);
            }
            ContextItem {
                sentence: sentence.clone(),
                provenance,
            }
        })
        .collect();
    RetrievedContext {
        meeting_id: t.meeting_id.clone(),
        question_id: q.question_id.clone(),
        items,
    }
}

/// Render one line per item: `[position] (SPEAKER) text`, in position order.
pub fn render_context(c: &RetrievedContext) -> Result<String, RetrievalError> {
    if c.items.is_empty() {
        return Err(RetrievalError::EmptyContext);
    }
    Ok(c.items
        .iter()
        .map(|item| {
            format!(
                "[{}] ({}) {}",
                item.sentence.position, item.sentence.speaker, item.sentence.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}
