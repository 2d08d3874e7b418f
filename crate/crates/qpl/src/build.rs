//! The offline build: read inputs, run the pipeline, write the snapshot and
//! report.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qpl_core::emoji::EmojiTableError;
use qpl_core::entry::FormatError;
use qpl_core::localize::TableParseError;
use qpl_core::pipeline::run;
use qpl_core::{
    parse_event_log, BuildCounts, EmojiTable, NoTranslation, ParsedLog, PipelineConfig, PipelineError, Stage,
    TableTranslator, TranslationClient,
};
use serde::Serialize;
use thiserror::Error;

use crate::snapshot::{write_atomically, write_snapshot, Snapshot};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad log pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },
    #[error("no log files match {0:?}")]
    NoLogs(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("translations {path}: {source}")]
    Translations { path: PathBuf, source: TableParseError },
    #[error("emoji table {path}: {source}")]
    Emoji { path: PathBuf, source: EmojiTableError },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("snapshot: {0}")]
    Snapshot(#[from] FormatError),
}

fn io_error(path: &Path) -> impl FnOnce(io::Error) -> BuildError + '_ {
    move |source| BuildError::Io { path: path.into(), source }
}

/// Reads a TOML file of [`PipelineConfig`] fields. Missing fields take
/// their defaults; unknown fields are errors.
pub fn load_config(path: &Path) -> Result<PipelineConfig, BuildError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let config: PipelineConfig = toml::from_str(&text).map_err(|e| BuildError::Config {
        path: path.into(),
        message: e.to_string(),
    })?;
    config.validate().map_err(|e| BuildError::Config {
        path: path.into(),
        message: e.to_string(),
    })?;
    Ok(config)
}

/// Expands a glob pattern into a sorted list of files.
pub fn expand_logs(pattern: &str) -> Result<Vec<PathBuf>, BuildError> {
    let paths = glob::glob(pattern).map_err(|e| BuildError::Pattern {
        pattern: pattern.into(),
        message: e.to_string(),
    })?;
    let mut files = Vec::new();
    for entry in paths {
        let path = entry.map_err(|e| BuildError::Io {
            path: e.path().into(),
            source: io::Error::new(e.error().kind(), e.to_string()),
        })?;
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(BuildError::NoLogs(pattern.into()));
    }
    Ok(files)
}

/// Parses every file, in order. Sessions split across files are joined.
pub fn read_logs(paths: &[PathBuf]) -> Result<ParsedLog, BuildError> {
    let mut log = ParsedLog::default();
    for path in paths {
        let bytes = fs::read(path).map_err(io_error(path))?;
        let parsed = parse_event_log(&bytes);
        if parsed.skipped > 0 {
            tracing::warn!(path = %path.display(), skipped = parsed.skipped, "skipped malformed log lines");
        }
        if paths.len() == 1 {
            log = parsed;
        } else {
            log.merge(parsed);
        }
    }
    Ok(log)
}

pub fn load_translations(path: &Path) -> Result<TableTranslator, BuildError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    TableTranslator::parse(&text).map_err(|source| BuildError::Translations { path: path.into(), source })
}

pub fn load_emoji(path: &Path) -> Result<EmojiTable, BuildError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let table = EmojiTable::parse(&text).map_err(|source| BuildError::Emoji { path: path.into(), source })?;
    if table.duplicates() > 0 {
        tracing::warn!(path = %path.display(), duplicates = table.duplicates(), "emoji table repeats keys; last name wins");
    }
    Ok(table)
}

/// Everything `qpl build` needs.
#[derive(Debug, Clone)]
pub struct BuildRequest {
    pub logs: Vec<PathBuf>,
    pub config: PipelineConfig,
    pub translations: Option<PathBuf>,
    /// The bundled table is used when absent.
    pub emoji: Option<PathBuf>,
    pub out: PathBuf,
    pub report: Option<PathBuf>,
    pub version: u64,
    pub build_time: String,
    /// Put per-stage wall times into the report file. They are always
    /// logged; leaving them out keeps reports byte-stable across rebuilds.
    pub report_timings: bool,
    /// Debug dumps in the snapshot line format.
    pub dump_corrections: Option<PathBuf>,
    pub dump_stats: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildReport {
    pub version: u64,
    pub build_time: String,
    pub log_files: usize,
    pub skipped_lines: u64,
    /// Equals the snapshot header count.
    pub final_entries: u64,
    pub totals: BuildCounts,
    pub per_locale: BTreeMap<String, BuildCounts>,
    pub per_kind: BTreeMap<String, u64>,
    pub translation_warning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage_ms: Option<BTreeMap<Stage, f64>>,
}

impl BuildReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// Runs the whole build. Nothing is written unless every stage succeeds;
/// the snapshot is written before the report.
pub fn build(request: &BuildRequest) -> Result<BuildReport, BuildError> {
    let mut marks: Vec<(Stage, Instant)> = vec![(Stage::Ingest, Instant::now())];
    let log = read_logs(&request.logs)?;
    let client: Box<dyn TranslationClient> = match &request.translations {
        Some(path) => Box::new(load_translations(path)?),
        None => Box::new(NoTranslation),
    };
    let emoji = match &request.emoji {
        Some(path) => load_emoji(path)?,
        None => EmojiTable::bundled(),
    };

    let output = run(&log, &request.config, client.as_ref(), &emoji, |stage| marks.push((stage, Instant::now())))?;
    drop(log);
    let snapshot = Snapshot::new(request.version, &request.build_time, output.entries)?;
    let end = Instant::now();

    let mut stage_ms = BTreeMap::new();
    for (i, (stage, start)) in marks.iter().enumerate() {
        let stop = marks.get(i + 1).map_or(end, |(_, t)| *t);
        let ms = stop.duration_since(*start).as_secs_f64() * 1e3;
        tracing::info!(stage = ?stage, ms = format!("{ms:.3}"), "stage finished");
        stage_ms.insert(*stage, ms);
    }
    if output.translation_warning {
        tracing::warn!(
            rate = request.config.translation_warn_rate,
            "translation failure rate above limit; affected entries kept untranslated"
        );
    }

    if let Some(path) = &request.dump_corrections {
        let mut text = String::new();
        for (locale, dict) in &output.dictionaries {
            for (wrong, right) in &dict.correction_map {
                let freq = dict.frequency(right).unwrap_or(0);
                text.push_str(&debug_line(locale, wrong, right, "correction", 1.0, freq, 0));
            }
        }
        write_atomically(path, text.as_bytes()).map_err(io_error(path))?;
    }
    if let Some(path) = &request.dump_stats {
        let mut text = String::new();
        for s in output.stats.iter() {
            let kind = if s.subquery == s.target { "identity" } else { "completion" };
            let p = output.stats.conditional_probability(&s.locale, &s.subquery, &s.target).unwrap_or(0.0);
            text.push_str(&debug_line(&s.locale, &s.subquery, &s.target, kind, p, s.event_count, s.distinct_users));
        }
        write_atomically(path, text.as_bytes()).map_err(io_error(path))?;
    }

    write_snapshot(&snapshot, &request.out).map_err(io_error(&request.out))?;

    let mut per_kind = BTreeMap::new();
    for e in snapshot.entries() {
        *per_kind.entry(e.kind.as_str().to_string()).or_default() += 1;
    }
    let report = BuildReport {
        version: snapshot.version(),
        build_time: snapshot.build_time().into(),
        log_files: request.logs.len(),
        skipped_lines: output.totals.skipped_lines,
        final_entries: snapshot.len() as u64,
        totals: output.totals,
        per_locale: output.per_locale,
        per_kind,
        translation_warning: output.translation_warning,
        stage_ms: request.report_timings.then_some(stage_ms),
    };
    if let Some(path) = &request.report {
        write_atomically(path, report.to_json().as_bytes()).map_err(io_error(path))?;
    }
    Ok(report)
}

fn debug_line(locale: &str, source: &str, target: &str, kind: &str, p: f64, events: u64, users: u64) -> String {
    use qpl_core::entry::escape_field;
    format!(
        "{}\t{}\t{}\t{kind}\t{p}\t{events}\t{users}\n",
        escape_field(locale),
        escape_field(source),
        escape_field(target)
    )
}

/// `version` as seconds since the epoch, rendered as RFC 3339 UTC.
pub fn build_time_for(version: u64) -> String {
    chrono::DateTime::from_timestamp(version as i64, 0)
        .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        .unwrap_or_else(|| version.to_string())
}
