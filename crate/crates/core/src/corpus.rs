//! Meeting-transcript and question-set ingestion.
//!
//! Transcripts arrive as plain text with one speaker turn per
//! `(SPEAKER) text` line; untagged lines continue the previous turn.
//! Segmentation is rule-based: a run of sentence-final punctuation followed
//! by whitespace (or end of turn) closes a sentence. Positions are assigned
//! globally across the whole transcript so retrieval can address sentences
//! by index.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::collapse_whitespace;

/// Language a question is asked (and expected to be answered) in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(alias = "english", alias = "en")]
    English,
    #[serde(alias = "czech", alias = "cs")]
    Czech,
}

impl std::fmt::Display for Language {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Language::English => write!(f, "English"),
            Language::Czech => write!(f, "Czech"),
        }
    }
}

/// One speaker turn as it appears in the source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
    pub turn_index: usize,
}

/// A single sentence with its global position in the transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub position: usize,
    pub turn_index: usize,
    pub speaker: String,
    pub text: String,
}

/// A parsed meeting transcript. `sentences` is empty until
/// [`segment_sentences`] runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub meeting_id: String,
    pub turns: Vec<Turn>,
    pub sentences: Vec<Sentence>,
}

/// A question to answer from one meeting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub meeting_id: String,
    pub text: String,
    pub language: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("transcript {0:?} contains no non-blank lines")]
    EmptyTranscript(String),
    #[error("transcript {meeting_id:?} is not valid UTF-8 (error at byte {valid_up_to})")]
    EncodingError {
        meeting_id: String,
        valid_up_to: usize,
    },
    #[error("transcript {meeting_id:?} line {line}: text before the first speaker tag")]
    UntaggedLeadingLine { meeting_id: String, line: usize },
    #[error("question record at line {line} is malformed: {reason}")]
    MalformedRecord { line: usize, reason: String },
}

static SPEAKER_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\(([A-Za-z0-9_]+)\)").expect("valid regex"));

/// Parse raw transcript bytes into turns. Lines without a speaker tag attach
/// to the previous turn; blank lines are skipped.
pub fn parse_transcript(raw: &[u8], meeting_id: &str) -> Result<Transcript, CorpusError> {
    let text = std::str::from_utf8(raw).map_err(|e| CorpusError::EncodingError {
        meeting_id: meeting_id.to_string(),
        valid_up_to: e.valid_up_to(),
    })?;
    parse_transcript_str(text, meeting_id)
}

/// Like [`parse_transcript`] for input that is already valid UTF-8.
pub fn parse_transcript_str(text: &str, meeting_id: &str) -> Result<Transcript, CorpusError> {
    let mut turns: Vec<Turn> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(caps) = SPEAKER_TAG.captures(line) {
            let speaker = caps[1].to_string();
            let rest = line[caps[0].len()..].trim().to_string();
            turns.push(Turn {
                speaker,
                text: rest,
                turn_index: turns.len(),
            });
        } else {
            match turns.last_mut() {
                Some(turn) => {
                    if turn.text.is_empty() {
                        turn.text = line.to_string();
                    } else {
                        turn.text.push('\n');
                        turn.text.push_str(line);
                    }
                }
                None => {
                    return Err(CorpusError::UntaggedLeadingLine {
                        meeting_id: meeting_id.to_string(),
                        line: lineno + 1,
                    })
                }
            }
        }
    }
    if turns.is_empty() {
        return Err(CorpusError::EmptyTranscript(meeting_id.to_string()));
    }
    Ok(Transcript {
        meeting_id: meeting_id.to_string(),
        turns,
        sentences: Vec::new(),
    })
}

/// Re-emit a transcript in the normalized one-turn-per-line format.
/// `parse_transcript_str(serialize_transcript(t)) == t` for any parsed `t`.
pub fn serialize_transcript(t: &Transcript) -> String {
    let mut out = String::new();
    for turn in &t.turns {
        if turn.text.is_empty() {
            out.push_str(&format!("({})\n", turn.speaker));
        } else {
            out.push_str(&format!("({}) {}\n", turn.speaker, turn.text));
        }
    }
    out
}

/// Split each turn's text into sentences and assign global positions.
///
/// A sentence ends at a run of `.`, `!` or `?` followed by whitespace or the
/// end of the turn; a trailing fragment without terminal punctuation becomes
/// one sentence. Sentence text is whitespace-normalized.
pub fn segment_sentences(mut t: Transcript) -> Transcript {
    let mut sentences = Vec::new();
    for turn in &t.turns {
        for fragment in split_into_sentences(&turn.text) {
            sentences.push(Sentence {
                position: sentences.len(),
                turn_index: turn.turn_index,
                speaker: turn.speaker.clone(),
                text: fragment,
            });
        }
    }
    t.sentences = sentences;
    t
}

fn split_into_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') {
            while let Some(&next) = chars.peek() {
                if matches!(next, '.' | '!' | '?') {
                    current.push(next);
                    chars.next();
                } else {
                    break;
                }
            }
            let boundary = match chars.peek() {
                None => true,
                Some(&next) => next.is_whitespace(),
            };
            if boundary {
                let normalized = collapse_whitespace(&current);
                if !normalized.is_empty() {
                    out.push(normalized);
                }
                current.clear();
            }
        }
    }
    let normalized = collapse_whitespace(&current);
    if !normalized.is_empty() {
        out.push(normalized);
    }
    out
}

/// Load questions from line-delimited JSON, one object per line.
pub fn load_questions(raw: &str) -> Result<Vec<Question>, CorpusError> {
    let mut questions = Vec::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        for (field, value) in [
            ("question_id", &q.question_id),
            ("meeting_id", &q.meeting_id),
            ("text", &q.text),
        ] {
            if value.trim().is_empty() {
                return Err(CorpusError::MalformedRecord {
                    line: lineno + 1,
                    reason: format!("field {field:?} is empty"),
                });
            }
        }
        questions.push(q);
    }
    Ok(questions)
}

/// Per-transcript size figures plus corpus means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub per_transcript: Vec<TranscriptStats>,
    pub mean_words: f64,
    pub mean_speakers: f64,
    pub mean_turns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranscriptStats {
    pub meeting_id: String,
    pub words: usize,
    pub speakers: usize,
    pub turns: usize,
}

pub fn corpus_stats(transcripts: &[Transcript]) -> CorpusStats {
    let per_transcript: Vec<TranscriptStats> = transcripts
        .iter()
        .map(|t| {
            let words = t
                .turns
                .iter()
                .map(|turn| turn.text.split_whitespace().count())
                .sum();
            let speakers = t
                .turns
                .iter()
                .map(|turn| turn.speaker.as_str())
                .collect::<BTreeSet<_>>()
                .len();
            TranscriptStats {
                meeting_id: t.meeting_id.clone(),
                words,
                speakers,
                turns: t.turns.len(),
            }
        })
        .collect();
    let n = per_transcript.len() as f64;
    let mean = |f: fn(&TranscriptStats) -> usize| {
        if per_transcript.is_empty() {
            0.0
        } else {
            per_transcript.iter().map(|s| f(s) as f64).sum::<f64>() / n
        }
    };
    CorpusStats {
        mean_words: mean(|s| s.words),
        mean_speakers: mean(|s| s.speakers),
        mean_turns: mean(|s| s.turns),
        per_transcript,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_two_turns() {
        let t = parse_transcript_str("(PERSON1) Hello.\n(PERSON2) Hi there.", "m").unwrap();
        assert_eq!(t.turns.len(), 2);
        assert_eq!(t.turns[0].speaker, "PERSON1");
        assert_eq!(t.turns[1].speaker, "PERSON2");
        assert_eq!(t.turns[1].text, "Hi there.");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            parse_transcript_str("", "m"),
            Err(CorpusError::EmptyTranscript(_))
        ));
        assert!(matches!(
            parse_transcript_str("  \n\n ", "m"),
            Err(CorpusError::EmptyTranscript(_))
        ));
    }

    #[test]
    fn continuation_lines_join_previous_turn() {
        let t = parse_transcript_str("(PERSON1) Line one.\ncontinued text", "m").unwrap();
        assert_eq!(t.turns.len(), 1);
        assert_eq!(t.turns[0].text, "Line one.\ncontinued text");
    }

    #[test]
    fn leading_untagged_line_is_an_error() {
        assert!(matches!(
            parse_transcript_str("hello\n(PERSON1) Hi.", "m"),
            Err(CorpusError::UntaggedLeadingLine { line: 1, .. })
        ));
    }

    #[test]
    fn invalid_utf8_reports_encoding_error() {
        let bad = [0x28, 0x50, 0x29, 0x20, 0xff, 0xfe];
        assert!(matches!(
            parse_transcript(&bad, "m"),
            Err(CorpusError::EncodingError { .. })
        ));
    }

    #[test]
    fn bare_speaker_tag_yields_empty_turn_text() {
        let t = parse_transcript_str("(PERSON2)", "m").unwrap();
        assert_eq!(t.turns[0].text, "");
    }

    #[test]
    fn segments_two_sentences() {
        let t = parse_transcript_str("(P1) Hello. How are you?", "m").unwrap();
        let t = segment_sentences(t);
        assert_eq!(t.sentences.len(), 2);
        assert_eq!(t.sentences[0].text, "Hello.");
        assert_eq!(t.sentences[1].text, "How are you?");
        assert_eq!(t.sentences[0].position, 0);
        assert_eq!(t.sentences[1].position, 1);
    }

    #[test]
    fn fragment_without_terminal_punctuation_is_one_sentence() {
        let t = segment_sentences(parse_transcript_str("(P1) ok", "m").unwrap());
        assert_eq!(t.sentences.len(), 1);
        assert_eq!(t.sentences[0].text, "ok");
    }

    #[test]
    fn positions_are_global_across_turns() {
        let raw = "(P1) One.\n(P2) Two. Three!\n(P3) Four?";
        let t = segment_sentences(parse_transcript_str(raw, "m").unwrap());
        let positions: Vec<usize> = t.sentences.iter().map(|s| s.position).collect();
        assert_eq!(positions, vec![0, 1, 2, 3]);
        assert_eq!(t.sentences[3].speaker, "P3");
    }

    #[test]
    fn terminal_run_stays_with_sentence() {
        let t = segment_sentences(parse_transcript_str("(P1) Really?! Yes...", "m").unwrap());
        assert_eq!(t.sentences[0].text, "Really?!");
        assert_eq!(t.sentences[1].text, "Yes...");
    }

    #[test]
    fn empty_turn_yields_zero_sentences() {
        let t = segment_sentences(parse_transcript_str("(P1)\n(P2) Hi.", "m").unwrap());
        assert_eq!(t.sentences.len(), 1);
        assert_eq!(t.sentences[0].turn_index, 1);
    }

    #[test]
    fn loads_questions_and_accepts_missing_reference() {
        let raw = concat!(
            r#"{"question_id":"q1","meeting_id":"m1","text":"Who?","language":"English","reference_answer":"PERSON1"}"#,
            "\n",
            r#"{"question_id":"q2","meeting_id":"m1","text":"What?","language":"cs"}"#,
        );
        let qs = load_questions(raw).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0].reference_answer.as_deref(), Some("PERSON1"));
        assert_eq!(qs[1].language, Language::Czech);
        assert_eq!(qs[1].reference_answer, None);
    }

    #[test]
    fn malformed_question_reports_line_number() {
        let raw = "{\"question_id\":\"q1\",\"meeting_id\":\"m\",\"text\":\"x\",\"language\":\"English\"}\nnot json";
        match load_questions(raw) {
            Err(CorpusError::MalformedRecord { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedRecord, got {other:?}"),
        }
    }

    #[test]
    fn empty_question_file_is_empty_list() {
        assert!(load_questions("").unwrap().is_empty());
    }

    #[test]
    fn stats_count_by_hand() {
        let t = segment_sentences(
            parse_transcript_str("(P1) one two three.\n(P2) four five", "m").unwrap(),
        );
        let stats = corpus_stats(&[t]);
        assert_eq!(stats.per_transcript[0].words, 5);
        assert_eq!(stats.per_transcript[0].speakers, 2);
        assert_eq!(stats.per_transcript[0].turns, 2);
        assert_eq!(stats.mean_words, 5.0);
    }

    #[test]
    fn stats_of_empty_corpus_are_zero() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.mean_words, 0.0);
        assert_eq!(stats.mean_speakers, 0.0);
        assert_eq!(stats.mean_turns, 0.0);
    }

    fn non_space_multiset(s: &str) -> std::collections::BTreeMap<char, usize> {
        let mut m = std::collections::BTreeMap::new();
        for c in s.chars().filter(|c| !c.is_whitespace()) {
            *m.entry(c).or_insert(0) += 1;
        }
        m
    }

    proptest! {
        /// parse -> serialize -> parse is the identity on parseable inputs.
        #[test]
        fn parse_serialize_roundtrip(raw in "(\\PC|\n){0,300}") {
            if let Ok(t) = parse_transcript_str(&raw, "m") {
                let emitted = serialize_transcript(&t);
                let reparsed = parse_transcript_str(&emitted, "m").expect("re-parse");
                prop_assert_eq!(t, reparsed);
            }
        }

        /// Segmentation never drops non-whitespace characters.
        #[test]
        fn segmentation_preserves_non_space_chars(text in "[ a-zA-Z0-9.!?,\n]{0,200}") {
            let fragments = split_into_sentences(&text);
            prop_assert_eq!(non_space_multiset(&fragments.join(" ")), non_space_multiset(&text));
        }

        /// Global positions equal the concatenation order of per-turn sentences.
        #[test]
        fn positions_match_bruteforce_recount(raw in "(\\PC|\n){0,300}") {
            if let Ok(t) = parse_transcript_str(&raw, "m") {
                let t = segment_sentences(t);
                let mut expected = Vec::new();
                for turn in &t.turns {
                    for s in split_into_sentences(&turn.text) {
                        expected.push((turn.turn_index, s));
                    }
                }
                let got: Vec<(usize, String)> = t
                    .sentences
                    .iter()
                    .map(|s| (s.turn_index, s.text.clone()))
                    .collect();
                prop_assert_eq!(got, expected);
                for (i, s) in t.sentences.iter().enumerate() {
                    prop_assert_eq!(s.position, i);
                }
            }
        }
    }
}
