//! Run orchestration behind the CLI commands: indexing, answering, judging,
//! reporting, and corpus stats.
//!
//! Runs live in `output_dir/{run_id}/` with `indexes/`, `answers/`, `amr/`,
//! `scores/` and `report/` subdirectories. Indexing is idempotent (a content
//! fingerprint skips up-to-date meetings) and answering resumes from the
//! existing answers file. All file writes are atomic, and in mock mode two
//! runs from the same config produce byte-identical outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::amr::{ParseStatus, SentenceAmr};
use crate::clients::{
    Backend, ClientError, GenerationRequest, InferenceClient, LiveBackend, MockBackend,
    ResponseCache, RetryPolicy, MAX_TOKENS_PENMAN,
};
use crate::config::{BackendMode, Capability, ConfigError, RunConfig};
use crate::corpus::{self, CorpusError, CorpusStats, Question, Sentence, Transcript};
use crate::eval::{self, EvalError, JudgeScore, PairwiseTest, SystemSummary};
use crate::prompts;
use crate::qa::{self, AnswerRecord, QaError, Variant};
use crate::retrieval::{self, MeetingIndex, QueryMapEntry, RetrievalError};
use crate::util::{atomic_write, bounded_parallel_map};
use crate::verbalize::{build_amr_context, Glossary, VerbalizeError};
use crate::vindex::{IndexError, VectorIndex};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Qa(#[from] QaError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Verbalize(#[from] VerbalizeError),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit codes: 0 ok, 2 config, 3 endpoint, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Client(_) => 3,
            PipelineError::Retrieval(RetrievalError::Client(_)) => 3,
            PipelineError::Qa(QaError::Client(_)) => 3,
            PipelineError::Eval(EvalError::Client(_)) => 3,
            PipelineError::Verbalize(VerbalizeError::Client(_)) => 3,
            _ => 4,
        }
    }
}

/// Directory layout of one run.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
    pub indexes: PathBuf,
    pub answers: PathBuf,
    pub amr: PathBuf,
    pub scores: PathBuf,
    pub report: PathBuf,
}

impl RunPaths {
    pub fn new(cfg: &RunConfig) -> Self {
        let root = cfg.run_dir();
        Self {
            indexes: root.join("indexes"),
            answers: root.join("answers"),
            amr: root.join("amr"),
            scores: root.join("scores"),
            report: root.join("report"),
            root,
        }
    }
}

/// Per-capability clients plus run-level record metadata.
pub struct ClientSet {
    clients: BTreeMap<&'static str, InferenceClient>,
    pub model_name: String,
    /// One timestamp per invocation; fixed at the epoch in mock mode so
    /// outputs are byte-reproducible.
    pub timestamp: String,
}

impl ClientSet {
    pub fn build(cfg: &RunConfig, needed: &[Capability]) -> Result<Self, PipelineError> {
        let cache = cfg.cache_dir.as_ref().map(ResponseCache::new);
        let mut clients = BTreeMap::new();
        match cfg.backend_mode {
            BackendMode::Mock => {
                let backend: Arc<dyn Backend> =
                    Arc::new(MockBackend::new(cfg.seed, cfg.embedding_dim));
                for cap in needed {
                    clients.insert(
                        cap.key(),
                        InferenceClient::new(backend.clone(), cache.clone(), RetryPolicy::none()),
                    );
                }
                Ok(Self {
                    clients,
                    model_name: "mock".into(),
                    timestamp: "1970-01-01T00:00:00Z".into(),
                })
            }
            BackendMode::Live => {
                let mut model_name = String::from("unknown");
                for cap in needed {
                    let endpoint = cfg.endpoint_for(*cap)?;
                    if *cap == Capability::Generation {
                        model_name = endpoint.model_name.clone();
                    }
                    let backend = LiveBackend::new(endpoint.clone())?;
                    clients.insert(
                        cap.key(),
                        InferenceClient::new(
                            Arc::new(backend),
                            cache.clone(),
                            RetryPolicy::from_endpoint(endpoint),
                        ),
                    );
                }
                Ok(Self {
                    clients,
                    model_name,
                    timestamp: chrono::Utc::now()
                        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
                })
            }
        }
    }

    pub fn get(&self, cap: Capability) -> &InferenceClient {
        self.clients
            .get(cap.key())
            .unwrap_or_else(|| panic!("client for {:?} was not built", cap))
    }
}

/// Load and segment every transcript in the configured directory.
/// The meeting id is the file stem; files are taken in name order.
pub fn load_corpus(cfg: &RunConfig) -> Result<BTreeMap<String, Transcript>, PipelineError> {
    let entries = std::fs::read_dir(&cfg.transcripts_dir).map_err(|e| {
        ConfigError::Invalid(format!(
            "transcripts_dir {}: {e}",
            cfg.transcripts_dir.display()
        ))
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(PipelineError::Data(format!(
            "no .txt transcripts in {}",
            cfg.transcripts_dir.display()
        )));
    }
    let mut transcripts = BTreeMap::new();
    for path in files {
        let meeting_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .ok_or_else(|| {
                PipelineError::Data(format!("bad transcript name {}", path.display()))
            })?;
        let raw = std::fs::read(&path)?;
        let t = corpus::segment_sentences(corpus::parse_transcript(&raw, &meeting_id)?);
        transcripts.insert(meeting_id, t);
    }
    Ok(transcripts)
}

pub fn load_question_set(cfg: &RunConfig) -> Result<Vec<Question>, PipelineError> {
    let raw = std::fs::read_to_string(&cfg.questions_file).map_err(|e| {
        PipelineError::Data(format!(
            "questions file {}: {e}",
            cfg.questions_file.display()
        ))
    })?;
    Ok(corpus::load_questions(&raw)?)
}

#[derive(Serialize, Deserialize)]
struct IndexMeta {
    fingerprint: String,
}

fn index_fingerprint(cfg: &RunConfig, t: &Transcript, embedder_id: &str, d2q_id: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [
        corpus::serialize_transcript(t).as_str(),
        &cfg.seed.to_string(),
        &cfg.embedding_dim.to_string(),
        &cfg.retrieval.queries_per_sentence.to_string(),
        embedder_id,
        d2q_id,
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    crate::util::to_hex(&hasher.finalize())
}

fn save_meeting_index(
    dir: &Path,
    ix: &MeetingIndex,
    fingerprint: &str,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    ix.sentence_index.save(&dir.join("sentences.vidx"))?;
    ix.query_index.save(&dir.join("queries.vidx"))?;
    let mut map_lines = String::new();
    for entry in &ix.query_map {
        map_lines.push_str(&serde_json::to_string(entry).expect("serializable"));
        map_lines.push('\n');
    }
    atomic_write(&dir.join("query_map.jsonl"), map_lines.as_bytes())?;
    let meta = serde_json::to_vec(&IndexMeta {
        fingerprint: fingerprint.to_string(),
    })
    .expect("serializable");
    atomic_write(&dir.join("meta.json"), &meta)?;
    Ok(())
}

fn load_meeting_index(dir: &Path) -> Result<MeetingIndex, PipelineError> {
    let sentence_index = VectorIndex::load(&dir.join("sentences.vidx"))?;
    let query_index = VectorIndex::load(&dir.join("queries.vidx"))?;
    let map_text = std::fs::read_to_string(dir.join("query_map.jsonl"))?;
    let mut query_map = Vec::new();
    for (lineno, line) in map_text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: QueryMapEntry = serde_json::from_str(line).map_err(|e| {
            PipelineError::Data(format!("query_map.jsonl line {}: {e}", lineno + 1))
        })?;
        query_map.push(entry);
    }
    Ok(MeetingIndex {
        sentence_index,
        query_index,
        query_map,
    })
}

fn stored_fingerprint(dir: &Path) -> Option<String> {
    let bytes = std::fs::read(dir.join("meta.json")).ok()?;
    serde_json::from_slice::<IndexMeta>(&bytes)
        .ok()
        .map(|m| m.fingerprint)
}

#[derive(Debug, Default)]
pub struct IndexOutcome {
    pub built: Vec<String>,
    pub skipped: Vec<String>,
}

/// Build (or skip, when up to date) the per-meeting index artifacts.
pub fn cmd_index(cfg: &RunConfig) -> Result<IndexOutcome, PipelineError> {
    cfg.validate()?;
    let clients = ClientSet::build(cfg, &[Capability::Embedding, Capability::Doc2Query])?;
    let paths = RunPaths::new(cfg);
    let transcripts = load_corpus(cfg)?;
    let mut outcome = IndexOutcome::default();
    for (meeting_id, t) in &transcripts {
        let dir = paths.indexes.join(meeting_id);
        let fingerprint = index_fingerprint(
            cfg,
            t,
            &clients.get(Capability::Embedding).backend_id(),
            &clients.get(Capability::Doc2Query).backend_id(),
        );
        if stored_fingerprint(&dir).as_deref() == Some(fingerprint.as_str()) {
            outcome.skipped.push(meeting_id.clone());
            continue;
        }
        let ix = retrieval::index_meeting(
            t,
            &cfg.retrieval,
            clients.get(Capability::Embedding),
            clients.get(Capability::Doc2Query),
            cfg.request_concurrency,
        )?;
        save_meeting_index(&dir, &ix, &fingerprint)?;
        outcome.built.push(meeting_id.clone());
    }
    Ok(outcome)
}

/// Load each needed meeting's index, building and persisting it on demand.
fn ensure_indexes(
    cfg: &RunConfig,
    paths: &RunPaths,
    transcripts: &BTreeMap<String, Transcript>,
    needed: &[String],
    clients: &ClientSet,
) -> Result<BTreeMap<String, MeetingIndex>, PipelineError> {
    let mut out = BTreeMap::new();
    for meeting_id in needed {
        let t = transcripts.get(meeting_id).ok_or_else(|| {
            PipelineError::Data(format!(
                "question references unknown meeting {meeting_id:?}"
            ))
        })?;
        let dir = paths.indexes.join(meeting_id);
        let fingerprint = index_fingerprint(
            cfg,
            t,
            &clients.get(Capability::Embedding).backend_id(),
            &clients.get(Capability::Doc2Query).backend_id(),
        );
        let ix = if stored_fingerprint(&dir).as_deref() == Some(fingerprint.as_str()) {
            load_meeting_index(&dir)?
        } else {
            let ix = retrieval::index_meeting(
                t,
                &cfg.retrieval,
                clients.get(Capability::Embedding),
                clients.get(Capability::Doc2Query),
                cfg.request_concurrency,
            )?;
            save_meeting_index(&dir, &ix, &fingerprint)?;
            ix
        };
        out.insert(meeting_id.clone(), ix);
    }
    Ok(out)
}

/// One line of the sentence-graph cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmrCacheRecord {
    pub meeting_id: String,
    pub sentence_position: usize,
    pub penman_text: String,
    pub parse_status: ParseStatus,
}

/// One line of the description-context cache: the verbalized and polished
/// sub-sentences for one context sentence of one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptionCacheRecord {
    pub meeting_id: String,
    pub question_id: String,
    pub sentence_position: usize,
    pub raw_sub_sentences: Vec<String>,
    pub polished_sentences: Vec<String>,
    pub polish_fallback: bool,
}

/// Memoized sentence-to-graph emission shared across questions.
struct AmrStore {
    memo: Mutex<BTreeMap<(String, usize), SentenceAmr>>,
}

impl AmrStore {
    fn new() -> Self {
        Self {
            memo: Mutex::new(BTreeMap::new()),
        }
    }

    fn preload(&self, records: Vec<AmrCacheRecord>) {
        let mut memo = self.memo.lock().expect("amr memo poisoned");
        for r in records {
            memo.insert(
                (r.meeting_id.clone(), r.sentence_position),
                SentenceAmr::from_penman(r.sentence_position, r.penman_text),
            );
        }
    }

    fn get_or_generate(
        &self,
        meeting_id: &str,
        sentence: &Sentence,
        client: &InferenceClient,
    ) -> Result<SentenceAmr, PipelineError> {
        let key = (meeting_id.to_string(), sentence.position);
        if let Some(hit) = self.memo.lock().expect("amr memo poisoned").get(&key) {
            return Ok(hit.clone());
        }
        let req = GenerationRequest::deterministic(
            prompts::PENMAN_SYSTEM.to_string(),
            sentence.text.clone(),
            MAX_TOKENS_PENMAN,
        );
        let sa = match client.generate(&req) {
            Ok(text) => SentenceAmr::from_penman(sentence.position, text),
            // Truncated graphs will not parse; keep the raw text as Failed.
            Err(ClientError::ResponseTruncated) => SentenceAmr {
                sentence_position: sentence.position,
                penman_text: String::new(),
                graph: None,
                parse_status: ParseStatus::Failed,
            },
            Err(e) => return Err(e.into()),
        };
        self.memo
            .lock()
            .expect("amr memo poisoned")
            .insert(key, sa.clone());
        Ok(sa)
    }

    fn dump(&self) -> Vec<AmrCacheRecord> {
        self.memo
            .lock()
            .expect("amr memo poisoned")
            .iter()
            .map(|((meeting_id, _), sa)| AmrCacheRecord {
                meeting_id: meeting_id.clone(),
                sentence_position: sa.sentence_position,
                penman_text: sa.penman_text.clone(),
                parse_status: sa.parse_status,
            })
            .collect()
    }
}

pub fn answers_file_name(variant: Variant, language: crate::corpus::Language) -> String {
    format!(
        "answers_{}_{}.jsonl",
        variant,
        language.to_string().to_lowercase()
    )
}

pub fn read_answer_records(path: &Path) -> Result<Vec<AnswerRecord>, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Data(format!("answers file {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: AnswerRecord = serde_json::from_str(line).map_err(|e| {
            PipelineError::Data(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PipelineError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

#[derive(Debug)]
pub struct AnswerOutcome {
    pub answers_path: PathBuf,
    pub total: usize,
    pub reused: usize,
    pub failed: usize,
}

/// Answer every question of the configured language, resuming from any
/// records already present in the output file. Records land in question
/// order; the file is rewritten atomically as progress extends, so a killed
/// run restarts cleanly and converges to the same bytes.
pub fn cmd_answer(cfg: &RunConfig) -> Result<AnswerOutcome, PipelineError> {
    cfg.validate()?;
    let mut caps = vec![
        Capability::Embedding,
        Capability::Doc2Query,
        Capability::Generation,
    ];
    if cfg.variant.uses_descriptions() {
        caps.push(Capability::Amr);
    }
    let clients = ClientSet::build(cfg, &caps)?;
    let paths = RunPaths::new(cfg);
    let transcripts = load_corpus(cfg)?;
    let questions: Vec<Question> = load_question_set(cfg)?
        .into_iter()
        .filter(|q| q.language == cfg.language)
        .collect();
    for q in &questions {
        if !transcripts.contains_key(&q.meeting_id) {
            return Err(PipelineError::Data(format!(
                "question {:?} references unknown meeting {:?}",
                q.question_id, q.meeting_id
            )));
        }
    }
    let mut needed: Vec<String> = questions.iter().map(|q| q.meeting_id.clone()).collect();
    needed.sort();
    needed.dedup();
    let indexes = ensure_indexes(cfg, &paths, &transcripts, &needed, &clients)?;

    let glossary = match &cfg.glossary_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Data(format!("glossary {}: {e}", path.display())))?;
            Glossary::from_tsv(&text)?
        }
        None => Glossary::empty(),
    };
    let amr_store = AmrStore::new();
    if let Some(path) = &cfg.amr_cache_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Data(format!("amr cache {}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(line).map_err(|e| {
                PipelineError::Data(format!("{} line {}: {e}", path.display(), lineno + 1))
            })?);
        }
        amr_store.preload(records);
    }

    let answers_path = paths
        .answers
        .join(answers_file_name(cfg.variant, cfg.language));
    let existing: BTreeMap<String, AnswerRecord> = if answers_path.exists() {
        let records = read_answer_records(&answers_path)?;
        for r in &records {
            if r.variant != cfg.variant {
                return Err(PipelineError::Data(format!(
                    "answers file {} holds variant {}, config says {}",
                    answers_path.display(),
                    r.variant,
                    cfg.variant
                )));
            }
        }
        records
            .into_iter()
            .map(|r| (r.question_id.clone(), r))
            .collect()
    } else {
        BTreeMap::new()
    };

    let compute =
        |q: &Question| -> Result<(AnswerRecord, Vec<DescriptionCacheRecord>), PipelineError> {
            let t = &transcripts[&q.meeting_id];
            let ix = &indexes[&q.meeting_id];
            let context =
                retrieval::retrieve(q, ix, t, &cfg.retrieval, clients.get(Capability::Embedding))?;
            let descriptions = if cfg.variant.uses_descriptions() {
                let mut amrs = Vec::with_capacity(context.items.len());
                for item in &context.items {
                    amrs.push(amr_store.get_or_generate(
                        &q.meeting_id,
                        &item.sentence,
                        clients.get(Capability::Amr),
                    )?);
                }
                Some(build_amr_context(
                    &context,
                    &amrs,
                    &glossary,
                    clients.get(Capability::Generation),
                    1,
                ))
            } else {
                None
            };
            let description_cache = descriptions
                .iter()
                .flatten()
                .map(|d| DescriptionCacheRecord {
                    meeting_id: q.meeting_id.clone(),
                    question_id: q.question_id.clone(),
                    sentence_position: d.sentence_position,
                    raw_sub_sentences: d.raw_sub_sentences.clone(),
                    polished_sentences: d.polished_sentences.clone(),
                    polish_fallback: d.polish_fallback,
                })
                .collect();
            let record = qa::answer(
                q,
                Some(&context),
                descriptions.as_deref(),
                cfg.variant,
                clients.get(Capability::Generation),
                &clients.model_name,
                &clients.timestamp,
            );
            Ok((record, description_cache))
        };

    let mut records: Vec<AnswerRecord> = Vec::with_capacity(questions.len());
    let mut description_records: Vec<DescriptionCacheRecord> = Vec::new();
    let mut reused = 0;
    let mut cursor = 0;
    while cursor < questions.len() {
        let batch_end = (cursor + cfg.request_concurrency.max(1)).min(questions.len());
        let batch: Vec<&Question> = questions[cursor..batch_end].iter().collect();
        let results = bounded_parallel_map(batch, cfg.request_concurrency, |q| {
            match existing.get(&q.question_id) {
                Some(r) => Ok((true, r.clone(), Vec::new())),
                None => compute(q).map(|(r, d)| (false, r, d)),
            }
        });
        for result in results {
            let (was_reused, record, descriptions) = result?;
            if was_reused {
                reused += 1;
            }
            records.push(record);
            description_records.extend(descriptions);
        }
        write_jsonl(&answers_path, &records)?;
        cursor = batch_end;
    }
    if records.is_empty() {
        write_jsonl::<AnswerRecord>(&answers_path, &[])?;
    }

    if cfg.variant.uses_descriptions() {
        let mut by_meeting: BTreeMap<String, Vec<AmrCacheRecord>> = BTreeMap::new();
        for record in amr_store.dump() {
            by_meeting
                .entry(record.meeting_id.clone())
                .or_default()
                .push(record);
        }
        for (meeting_id, records) in by_meeting {
            write_jsonl(&paths.amr.join(format!("{meeting_id}.jsonl")), &records)?;
        }
        write_jsonl(
            &paths.amr.join(format!(
                "descriptions_{}_{}.jsonl",
                cfg.variant,
                cfg.language.to_string().to_lowercase()
            )),
            &description_records,
        )?;
    }

    let failed = records.iter().filter(|r| !r.is_ok()).count();
    Ok(AnswerOutcome {
        answers_path,
        total: records.len(),
        reused,
        failed,
    })
}

pub fn read_score_records(path: &Path) -> Result<Vec<JudgeScore>, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Data(format!("score file {}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(line).map_err(|e| {
            PipelineError::Data(format!("{} line {}: {e}", path.display(), lineno + 1))
        })?);
    }
    Ok(records)
}

#[derive(Debug)]
pub struct JudgeOutcome {
    pub score_files: Vec<PathBuf>,
    pub report_files: Vec<PathBuf>,
    pub unparseable: usize,
}

/// Judge one or more answer files and write score files plus the report.
/// Pairwise tests appear when at least two variants' scores are given.
pub fn cmd_judge(cfg: &RunConfig, answer_files: &[PathBuf]) -> Result<JudgeOutcome, PipelineError> {
    cfg.validate()?;
    if answer_files.is_empty() {
        return Err(PipelineError::Data("no answer files to judge".into()));
    }
    let clients = ClientSet::build(cfg, &[Capability::Judge])?;
    let paths = RunPaths::new(cfg);
    let questions: BTreeMap<String, Question> = load_question_set(cfg)?
        .into_iter()
        .map(|q| (q.question_id.clone(), q))
        .collect();
    let filter_zeros = cfg.effective_filter_zeros();

    let mut score_files = Vec::new();
    let mut scores_by_variant: Vec<(Variant, Vec<JudgeScore>)> = Vec::new();
    let mut unparseable = 0;
    for answers_path in answer_files {
        let records = read_answer_records(answers_path)?;
        if records.is_empty() {
            return Err(PipelineError::Data(format!(
                "answers file {} is empty",
                answers_path.display()
            )));
        }
        let variant = records[0].variant;
        let judged: Vec<Result<JudgeScore, PipelineError>> =
            bounded_parallel_map(
                records.iter().collect::<Vec<_>>(),
                cfg.request_concurrency,
                |record| {
                    let q = questions.get(&record.question_id).ok_or_else(|| {
                        PipelineError::Data(format!(
                            "answer for unknown question {:?}",
                            record.question_id
                        ))
                    })?;
                    let reference = q.reference_answer.as_deref().ok_or_else(|| {
                        PipelineError::Data(format!(
                            "question {:?} has no reference answer",
                            q.question_id
                        ))
                    })?;
                    match eval::judge(
                        record,
                        reference,
                        q,
                        clients.get(Capability::Judge),
                        filter_zeros,
                    ) {
                        Ok(score) => Ok(score),
                        Err(EvalError::UnparseableJudgment { completion }) => Ok(
                            JudgeScore::missing(&record.question_id, variant, completion),
                        ),
                        Err(e) => Err(e.into()),
                    }
                },
            );
        let mut scores = Vec::with_capacity(judged.len());
        for s in judged {
            let s = s?;
            if s.raw_score.is_none() {
                unparseable += 1;
            }
            scores.push(s);
        }
        let stem = answers_path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "answers".into());
        let score_name = if let Some(rest) = stem.strip_prefix("answers_") {
            format!("scores_{rest}.jsonl")
        } else {
            format!("scores_{stem}.jsonl")
        };
        let score_path = paths.scores.join(score_name);
        write_jsonl(&score_path, &scores)?;
        score_files.push(score_path);
        scores_by_variant.push((variant, scores));
    }

    let report_files = write_report(&paths, &scores_by_variant, filter_zeros)?;
    Ok(JudgeOutcome {
        score_files,
        report_files,
        unparseable,
    })
}

/// Regenerate the report from existing score files.
pub fn cmd_report(cfg: &RunConfig, score_files: &[PathBuf]) -> Result<Vec<PathBuf>, PipelineError> {
    cfg.validate()?;
    if score_files.is_empty() {
        return Err(PipelineError::Data("no score files for the report".into()));
    }
    let paths = RunPaths::new(cfg);
    let mut scores_by_variant = Vec::new();
    for path in score_files {
        let scores = read_score_records(path)?;
        let variant = scores.first().map(|s| s.variant).ok_or_else(|| {
            PipelineError::Data(format!("score file {} is empty", path.display()))
        })?;
        scores_by_variant.push((variant, scores));
    }
    write_report(&paths, &scores_by_variant, cfg.effective_filter_zeros())
}

fn write_report(
    paths: &RunPaths,
    scores_by_variant: &[(Variant, Vec<JudgeScore>)],
    filter_zeros: bool,
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut summaries: Vec<SystemSummary> = Vec::new();
    for (_, scores) in scores_by_variant {
        summaries.push(eval::summarize(scores, filter_zeros)?);
    }
    let vectors: Vec<Vec<f64>> = scores_by_variant
        .iter()
        .map(|(_, scores)| {
            scores
                .iter()
                .filter(|s| !s.filtered_out)
                .filter_map(|s| s.rescaled)
                .map(|v| v as f64)
                .collect()
        })
        .collect();
    let mut tests: Vec<PairwiseTest> = Vec::new();
    for i in 0..scores_by_variant.len() {
        for j in (i + 1)..scores_by_variant.len() {
            match eval::t_test(
                scores_by_variant[i].0,
                scores_by_variant[j].0,
                &vectors[i],
                &vectors[j],
            ) {
                Ok(test) => tests.push(test),
                // Pairs with fewer than two usable scores on a side are
                // skipped rather than failing the whole report.
                Err(EvalError::SamplesTooSmall(..)) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(eval::emit_report(
        &paths.report,
        &summaries,
        &tests,
        scores_by_variant,
    )?)
}

/// Corpus statistics for the configured transcripts.
pub fn cmd_stats(cfg: &RunConfig) -> Result<CorpusStats, PipelineError> {
    let transcripts = load_corpus(cfg)?;
    let list: Vec<Transcript> = transcripts.into_values().collect();
    Ok(corpus::corpus_stats(&list))
}
