//! Offline localization: rewrite non-English targets to their English
//! equivalents so native-language queries reach English-tagged content.

use alloc::collections::BTreeMap;
use alloc::string::String;

use hashbrown::HashMap;
use thiserror::Error;

use crate::entry::EntryKind;
use crate::mapping::{CandidateMap, PipelineConfig};
use crate::normalize::{contains_emoji, is_english, normalize_query};

/// A successful translation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationRecord {
    pub source: String,
    pub english: String,
    pub detected_language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslationError {
    /// The service had no translation for this text.
    #[error("no translation")]
    NoTranslation,
    /// The call itself failed (network, quota, ...).
    #[error("transport failure: {0}")]
    Transport(String),
}

/// Translates text to English. Retries and rate limiting belong to the
/// implementation; callers only see success or failure.
pub trait TranslationClient {
    fn translate(&self, text: &str, hint_locale: &str) -> Result<TranslationRecord, TranslationError>;
}

impl<T: TranslationClient + ?Sized> TranslationClient for &T {
    fn translate(&self, text: &str, hint_locale: &str) -> Result<TranslationRecord, TranslationError> {
        (**self).translate(text, hint_locale)
    }
}

/// A client that never translates anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoTranslation;

impl TranslationClient for NoTranslation {
    fn translate(&self, _: &str, _: &str) -> Result<TranslationRecord, TranslationError> {
        Err(TranslationError::NoTranslation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("translation table line {line}: expected 3 tab-separated fields")]
pub struct TableParseError {
    pub line: usize,
}

/// Deterministic lookup-table client backed by a tab-separated file of
/// `source  english  detected_language` rows.
#[derive(Debug, Clone, Default)]
pub struct TableTranslator {
    rows: HashMap<String, (String, String)>,
}

impl TableTranslator {
    /// Parses table text. Sources are normalized like queries; blank lines
    /// are ignored.
    pub fn parse(text: &str) -> Result<Self, TableParseError> {
        let mut rows = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(source), Some(english), Some(lang), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(TableParseError { line: i + 1 });
            };
            let english = english.trim();
            let lang = lang.trim();
            if english.is_empty() || lang.is_empty() {
                return Err(TableParseError { line: i + 1 });
            }
            rows.insert(normalize_query(source), (english.into(), lang.into()));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl TranslationClient for TableTranslator {
    fn translate(&self, text: &str, _hint_locale: &str) -> Result<TranslationRecord, TranslationError> {
        self.rows
            .get(text)
            .map(|(english, lang)| TranslationRecord {
                source: text.into(),
                english: english.clone(),
                detected_language: lang.clone(),
            })
            .ok_or(TranslationError::NoTranslation)
    }
}

/// Counters from one [`localize`] run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LocalizeStats {
    /// Client calls made (one per distinct eligible target).
    pub calls: usize,
    /// Entries whose target was replaced.
    pub translated: usize,
    pub no_translation: usize,
    pub transport_failures: usize,
    /// Set when transport failures exceed the configured rate.
    pub warning: bool,
}

/// Replaces each non-English target with its English translation.
///
/// Each distinct target is sent to the client once. A target is replaced
/// when the call succeeds, the detected language is not English and the
/// English text differs from the target. Rewritten entries are tagged
/// [`EntryKind::Translation`]. Emoji targets are skipped, and English
/// locales are skipped unless `config.translate_english` is set. Subquery
/// keys are never touched, and failures leave entries unchanged.
pub fn localize<C>(candidates: CandidateMap, client: &C, config: &PipelineConfig) -> (CandidateMap, LocalizeStats)
where
    C: TranslationClient + ?Sized,
{
    let mut stats = LocalizeStats::default();
    if is_english(&candidates.locale) && !config.translate_english {
        return (candidates, stats);
    }
    let CandidateMap { locale, mut entries } = candidates;

    let mut translations: BTreeMap<String, Option<String>> = BTreeMap::new();
    for entry in entries.values() {
        if entry.kind == EntryKind::Emoji
            || contains_emoji(&entry.target)
            || translations.contains_key(&entry.target)
        {
            continue;
        }
        stats.calls += 1;
        let english = match client.translate(&entry.target, &locale) {
            Ok(record) if !is_english(&record.detected_language) => {
                let english = normalize_query(&record.english);
                (!english.is_empty() && english != entry.target).then_some(english)
            }
            Ok(_) => None,
            Err(TranslationError::NoTranslation) => {
                stats.no_translation += 1;
                None
            }
            Err(TranslationError::Transport(_)) => {
                stats.transport_failures += 1;
                None
            }
        };
        translations.insert(entry.target.clone(), english);
    }

    for (subquery, entry) in entries.iter_mut() {
        if let Some(Some(english)) = translations.get(&entry.target) {
            entry.target = english.clone();
            entry.kind = if *subquery == entry.target {
                EntryKind::Identity
            } else {
                EntryKind::Translation
            };
            stats.translated += 1;
        }
    }
    stats.warning =
        stats.calls > 0 && stats.transport_failures as f64 / stats.calls as f64 > config.translation_warn_rate;
    (CandidateMap { locale, entries }, stats)
}
