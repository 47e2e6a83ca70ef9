//! `meetqa` — question answering over meeting transcripts.
//!
//! Subcommands: `index`, `answer`, `judge`, `report`, `stats`. One TOML
//! config drives a run; a handful of flags override config values. Exit
//! codes: 0 ok, 2 config error, 3 endpoint failure, 4 data error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use meetqa_core::config::RunConfig;
use meetqa_core::corpus::Language;
use meetqa_core::pipeline::{self, PipelineError, RunPaths};
use meetqa_core::qa::Variant;

#[derive(Parser)]
#[command(
    name = "meetqa",
    version,
    about = "Retrieval- and semantic-graph-based QA over meeting transcripts"
)]
struct Cli {
    /// Run configuration file.
    #[arg(short, long, global = true, default_value = "meetqa.toml")]
    config: PathBuf,
    /// Override the configured variant (ir_only, ir_plus_amr, amr_only).
    #[arg(long, global = true)]
    variant: Option<String>,
    /// Override the configured language (English, Czech).
    #[arg(long, global = true)]
    language: Option<String>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the run id (defaults to a config hash).
    #[arg(long, global = true)]
    run_id: Option<String>,
    /// Override the output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Override zero-score filtering for judging.
    #[arg(long, global = true)]
    filter_zeros: Option<bool>,
    /// Override the request concurrency bound.
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build per-meeting retrieval indexes (idempotent).
    Index,
    /// Generate answers for the configured variant and language.
    Answer,
    /// Judge answer files, write score files and the report.
    Judge {
        /// Answer files to judge; defaults to every file in the run's
        /// answers directory.
        #[arg(long = "answers")]
        answers: Vec<PathBuf>,
    },
    /// Rebuild the report from existing score files.
    Report {
        /// Score files; defaults to every file in the run's scores directory.
        #[arg(long = "scores")]
        scores: Vec<PathBuf>,
    },
    /// Print corpus statistics.
    Stats,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s {
        "ir_only" => Ok(Variant::IrOnly),
        "ir_plus_amr" => Ok(Variant::IrPlusAmr),
        "amr_only" => Ok(Variant::AmrOnly),
        other => Err(format!(
            "unknown variant {other:?}; expected ir_only, ir_plus_amr or amr_only"
        )),
    }
}

fn parse_language(s: &str) -> Result<Language, String> {
    match s {
        "English" | "english" | "en" => Ok(Language::English),
        "Czech" | "czech" | "cs" => Ok(Language::Czech),
        other => Err(format!(
            "unknown language {other:?}; expected English or Czech"
        )),
    }
}

/// Every .jsonl in `dir`, name-sorted.
fn jsonl_files(dir: &PathBuf) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    files.sort();
    files
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    let mut cfg = match RunConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(v) = &cli.variant {
        match parse_variant(v) {
            Ok(v) => cfg.variant = v,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    }
    if let Some(l) = &cli.language {
        match parse_language(l) {
            Ok(l) => cfg.language = l,
            Err(e) => {
                eprintln!("error: {e}");
                return 2;
            }
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(run_id) = &cli.run_id {
        cfg.run_id = Some(run_id.clone());
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(f) = cli.filter_zeros {
        cfg.filter_zeros = Some(f);
    }
    if let Some(c) = cli.concurrency {
        cfg.request_concurrency = c;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return 2;
    }

    match dispatch(&cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command, cfg: &RunConfig) -> Result<(), PipelineError> {
    let paths = RunPaths::new(cfg);
    match command {
        Command::Index => {
            let outcome = pipeline::cmd_index(cfg)?;
            for meeting in &outcome.built {
                println!("indexed {meeting}");
            }
            for meeting in &outcome.skipped {
                println!("skipped {meeting} (up to date)");
            }
            println!(
                "index: {} built, {} skipped -> {}",
                outcome.built.len(),
                outcome.skipped.len(),
                paths.indexes.display()
            );
            Ok(())
        }
        Command::Answer => {
            let outcome = pipeline::cmd_answer(cfg)?;
            println!(
                "answered {} question(s) ({} reused, {} failed) -> {}",
                outcome.total,
                outcome.reused,
                outcome.failed,
                outcome.answers_path.display()
            );
            Ok(())
        }
        Command::Judge { answers } => {
            let files = if answers.is_empty() {
                jsonl_files(&paths.answers)
            } else {
                answers.clone()
            };
            let outcome = pipeline::cmd_judge(cfg, &files)?;
            for f in &outcome.score_files {
                println!("scored -> {}", f.display());
            }
            for f in &outcome.report_files {
                println!("report -> {}", f.display());
            }
            if outcome.unparseable > 0 {
                println!("{} judgment(s) had no parseable score", outcome.unparseable);
            }
            Ok(())
        }
        Command::Report { scores } => {
            let files = if scores.is_empty() {
                jsonl_files(&paths.scores)
            } else {
                scores.clone()
            };
            let written = pipeline::cmd_report(cfg, &files)?;
            for f in &written {
                println!("report -> {}", f.display());
            }
            Ok(())
        }
        Command::Stats => {
            let stats = pipeline::cmd_stats(cfg)?;
            println!("meeting\twords\tspeakers\tturns");
            for t in &stats.per_transcript {
                println!("{}\t{}\t{}\t{}", t.meeting_id, t.words, t.speakers, t.turns);
            }
            println!(
                "mean\t{:.1}\t{:.1}\t{:.1}",
                stats.mean_words, stats.mean_speakers, stats.mean_turns
            );
            Ok(())
        }
    }
}
