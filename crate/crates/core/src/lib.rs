//! Question answering over long meeting transcripts.
//!
//! The pipeline has two stages: context construction and answer generation.
//! Context construction combines dense sentence retrieval with synthetic-query
//! (document expansion) retrieval to build a relevant context, and optionally
//! converts the retrieved sentences' semantic graphs into natural-language
//! descriptions. Answer generation prompts an LLM with one of three context
//! variants (retrieval only, retrieval plus descriptions, descriptions only).
//! An LLM-as-judge harness scores answers against references and reports
//! summary statistics with pairwise significance tests.
//!
//! All external model calls go through [`clients::InferenceClient`], which has
//! a deterministic offline mock for every capability, so the whole pipeline
//! runs reproducibly without network access.

pub mod amr;
pub mod clients;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod pipeline;
pub mod prompts;
pub mod qa;
pub mod retrieval;
pub mod util;
pub mod verbalize;
pub mod vindex;
