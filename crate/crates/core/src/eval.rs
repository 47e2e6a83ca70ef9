//! LLM-as-judge scoring and statistical reporting.
//!
//! Answers are judged on a 0-5 scale (0 flags output in the wrong language,
//! 5 means equivalence with the reference) and rescaled to 0-10. Zero scores
//! can be filtered before aggregation. Summaries report mean and sample
//! standard deviation; pairwise comparisons use Welch's unequal-variance
//! t-test, two-sided, with significance stars at p <= 0.005.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::clients::{ClientError, GenerationRequest, InferenceClient, MAX_TOKENS_JUDGE};
use crate::corpus::Question;
use crate::prompts;
use crate::qa::{AnswerRecord, Variant};
use crate::util::atomic_write;

pub const SIGNIFICANCE_THRESHOLD: f64 = 0.005;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no integer score in 0..=5 found in the judgment: {completion:?}")]
    UnparseableJudgment { completion: String },
    #[error("question {0:?} has no reference answer")]
    MissingReference(String),
    #[error("no scores to aggregate after filtering")]
    NoScores,
    #[error("summarize requires scores of a single variant, found {0} and {1}")]
    MixedVariants(String, String),
    #[error("t-test requires at least 2 samples per side, got {0} and {1}")]
    SamplesTooSmall(usize, usize),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One judged answer. `raw_score` is `None` when the judge's completion had
/// no parseable score; such records are excluded from aggregation and
/// surfaced in the report's `missing` column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub question_id: String,
    pub variant: Variant,
    pub raw_score: Option<u8>,
    pub rescaled: Option<u8>,
    pub filtered_out: bool,
    pub rationale: String,
}

impl JudgeScore {
    pub fn missing(question_id: &str, variant: Variant, rationale: String) -> Self {
        Self {
            question_id: question_id.to_string(),
            variant,
            raw_score: None,
            rescaled: None,
            filtered_out: false,
            rationale,
        }
    }
}

/// Rescale a 0-5 judge score to the 0-10 reporting scale.
pub fn rescale(raw: u8) -> u8 {
    raw * 2
}

/// Find the first integer in 0..=5 in the completion text.
fn parse_score(completion: &str) -> Option<u8> {
    let mut digits = String::new();
    let mut chars = completion.chars().peekable();
    while let Some(c) = chars.next() {
        if c.is_ascii_digit() {
            digits.clear();
            digits.push(c);
            while let Some(&n) = chars.peek() {
                if n.is_ascii_digit() {
                    digits.push(n);
                    chars.next();
                } else {
                    break;
                }
            }
            if let Ok(value) = digits.parse::<u32>() {
                if value <= 5 {
                    return Some(value as u8);
                }
            }
        }
    }
    None
}

/// Judge one answer against its reference.
pub fn judge(
    answer: &AnswerRecord,
    reference: &str,
    q: &Question,
    client: &InferenceClient,
    filter_zeros: bool,
) -> Result<JudgeScore, EvalError> {
    if reference.trim().is_empty() {
        return Err(EvalError::MissingReference(q.question_id.clone()));
    }
    let req = GenerationRequest::deterministic(
        prompts::JUDGE_SYSTEM.to_string(),
        prompts::judge_user_content(
            &q.text,
            reference,
            &answer.answer_text,
            &q.language.to_string(),
        ),
        MAX_TOKENS_JUDGE,
    );
    let completion = client.generate(&req)?;
    let raw = parse_score(&completion).ok_or_else(|| EvalError::UnparseableJudgment {
        completion: completion.clone(),
    })?;
    Ok(JudgeScore {
        question_id: q.question_id.clone(),
        variant: answer.variant,
        raw_score: Some(raw),
        rescaled: Some(rescale(raw)),
        filtered_out: raw == 0 && filter_zeros,
        rationale: completion,
    })
}

/// Aggregate one variant's scores: mean and sample (n-1) standard deviation
/// of the rescaled values over non-filtered, non-missing entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSummary {
    pub variant: Variant,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    /// Which std convention `std` uses; always sample (n-1) here, recorded
    /// because reports elsewhere differ.
    pub std_kind: &'static str,
    pub filtered: usize,
    pub missing: usize,
}

pub fn summarize(scores: &[JudgeScore], filter_zeros: bool) -> Result<SystemSummary, EvalError> {
    let variants: BTreeSet<String> = scores.iter().map(|s| s.variant.to_string()).collect();
    if variants.len() > 1 {
        let mut it = variants.into_iter();
        return Err(EvalError::MixedVariants(
            it.next().expect("len > 1"),
            it.next().expect("len > 1"),
        ));
    }
    let variant = scores
        .first()
        .map(|s| s.variant)
        .ok_or(EvalError::NoScores)?;
    let missing = scores.iter().filter(|s| s.raw_score.is_none()).count();
    let mut filtered = 0usize;
    let mut values = Vec::new();
    for s in scores {
        let Some(raw) = s.raw_score else { continue };
        if filter_zeros && raw == 0 {
            filtered += 1;
            continue;
        }
        values.push(rescale(raw) as f64);
    }
    if values.is_empty() {
        return Err(EvalError::NoScores);
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(SystemSummary {
        variant,
        n,
        mean,
        std,
        std_kind: "sample",
        filtered,
        missing,
    })
}

/// Two-sided Welch's t-test between two variants' score vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseTest {
    pub variant_a: Variant,
    pub variant_b: Variant,
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Both variances were zero; p is 1.0 for equal means, 0.0 otherwise.
    pub degenerate: bool,
}

pub fn t_test(
    variant_a: Variant,
    variant_b: Variant,
    a: &[f64],
    b: &[f64],
) -> Result<PairwiseTest, EvalError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(EvalError::SamplesTooSmall(a.len(), b.len()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mean_a = a.iter().sum::<f64>() / na;
    let mean_b = b.iter().sum::<f64>() / nb;
    let var_a = a.iter().map(|v| (v - mean_a) * (v - mean_a)).sum::<f64>() / (na - 1.0);
    let var_b = b.iter().map(|v| (v - mean_b) * (v - mean_b)).sum::<f64>() / (nb - 1.0);
    let finish = |t: f64, p: f64, degenerate: bool| PairwiseTest {
        variant_a,
        variant_b,
        t_statistic: t,
        p_value: p,
        significant: p <= SIGNIFICANCE_THRESHOLD,
        degenerate,
    };
    if var_a == 0.0 && var_b == 0.0 {
        return Ok(if mean_a == mean_b {
            finish(0.0, 1.0, true)
        } else {
            let t = if mean_a > mean_b {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            };
            finish(t, 0.0, true)
        });
    }
    let se2 = var_a / na + var_b / nb;
    let t = (mean_a - mean_b) / se2.sqrt();
    // Welch-Satterthwaite degrees of freedom.
    let dof = se2 * se2
        / ((var_a / na) * (var_a / na) / (na - 1.0) + (var_b / nb) * (var_b / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(finish(t, p, false))
}

/// Stars for the pairwise table: `***` iff p <= 0.005.
pub fn stars(p_value: f64) -> &'static str {
    if p_value <= SIGNIFICANCE_THRESHOLD {
        "***"
    } else {
        ""
    }
}

/// Write the three report files: the summary table, plot-ready score columns
/// (one column of rescaled scores per variant), and the pairwise test table.
/// Returns the written paths. Output is byte-deterministic for equal inputs.
pub fn emit_report(
    dir: &Path,
    summaries: &[SystemSummary],
    tests: &[PairwiseTest],
    scores_by_variant: &[(Variant, Vec<JudgeScore>)],
) -> Result<Vec<PathBuf>, EvalError> {
    let mut written = Vec::new();

    let mut summary = String::from("variant\tn\tmean\tstd\tstd_kind\tfiltered\tmissing\n");
    for s in summaries {
        summary.push_str(&format!(
            "{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}\n",
            s.variant, s.n, s.mean, s.std, s.std_kind, s.filtered, s.missing
        ));
    }
    let summary_path = dir.join("summary.tsv");
    atomic_write(&summary_path, summary.as_bytes())?;
    written.push(summary_path);

    let columns: Vec<(String, Vec<u8>)> = scores_by_variant
        .iter()
        .map(|(variant, scores)| {
            let values: Vec<u8> = scores
                .iter()
                .filter(|s| !s.filtered_out)
                .filter_map(|s| s.rescaled)
                .collect();
            (variant.to_string(), values)
        })
        .collect();
    let rows = columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut plot = columns
        .iter()
        .map(|(name, _)| name.as_str())
        .collect::<Vec<_>>()
        .join("\t");
    plot.push('\n');
    for row in 0..rows {
        let line = columns
            .iter()
            .map(|(_, values)| values.get(row).map(|v| v.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("\t");
        plot.push_str(&line);
        plot.push('\n');
    }
    let plot_path = dir.join("plot_data.tsv");
    atomic_write(&plot_path, plot.as_bytes())?;
    written.push(plot_path);

    let mut pairwise = String::from("variant_a\tvariant_b\tt\tp\tsignificance\n");
    for test in tests {
        pairwise.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}\n",
            test.variant_a,
            test.variant_b,
            test.t_statistic,
            test.p_value,
            stars(test.p_value)
        ));
    }
    let pairwise_path = dir.join("pairwise.tsv");
    atomic_write(&pairwise_path, pairwise.as_bytes())?;
    written.push(pairwise_path);

    Ok(written)
}
