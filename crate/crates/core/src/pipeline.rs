//! The offline build, stage by stage, over an already parsed log.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::aggregate;
use crate::emoji::{EmojiTable, Expansion};
use crate::entry::{prepare_entries, EntryKind, FormatError, QplEntry};
use crate::localize::{localize, TranslationClient};
use crate::mapping::{accumulate, promote, CandidateMap, ConfigError, PairStatsTable, PipelineConfig};
use crate::normalize::contains_emoji;
use crate::session::{extract_pairs, segment_episodes, ParsedLog};
use crate::spell::{apply_corrections, build_dictionary, CorrectionDictionary};

/// Build stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Segment,
    Extract,
    Accumulate,
    Promote,
    Correct,
    Aggregate,
    Localize,
    Emoji,
    Snapshot,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Segment,
        Stage::Extract,
        Stage::Accumulate,
        Stage::Promote,
        Stage::Correct,
        Stage::Aggregate,
        Stage::Localize,
        Stage::Emoji,
        Stage::Snapshot,
    ];
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("snapshot entries rejected: {0}")]
    Entries(#[from] FormatError),
}

/// Per-stage counts, either global or for one locale.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildCounts {
    pub sessions: u64,
    pub skipped_lines: u64,
    pub episodes: u64,
    pub pairs: u64,
    pub distinct_pairs: u64,
    pub promoted: u64,
    pub corrected: u64,
    pub merged: u64,
    pub translated: u64,
    pub translation_calls: u64,
    pub translation_failures: u64,
    pub emoji_expanded: u64,
    pub identity_dropped: u64,
    pub final_entries: u64,
}

impl BuildCounts {
    fn add(&mut self, other: &BuildCounts) {
        self.sessions += other.sessions;
        self.skipped_lines += other.skipped_lines;
        self.episodes += other.episodes;
        self.pairs += other.pairs;
        self.distinct_pairs += other.distinct_pairs;
        self.promoted += other.promoted;
        self.corrected += other.corrected;
        self.merged += other.merged;
        self.translated += other.translated;
        self.translation_calls += other.translation_calls;
        self.translation_failures += other.translation_failures;
        self.emoji_expanded += other.emoji_expanded;
        self.identity_dropped += other.identity_dropped;
        self.final_entries += other.final_entries;
    }
}

/// Everything the build produced.
#[derive(Debug, Clone)]
pub struct BuildOutput {
    /// Final entries, validated and sorted by key.
    pub entries: Vec<QplEntry>,
    pub totals: BuildCounts,
    pub per_locale: BTreeMap<String, BuildCounts>,
    pub stats: PairStatsTable,
    pub dictionaries: BTreeMap<String, CorrectionDictionary>,
    /// Set when some locale's translation failure rate exceeded the limit.
    pub translation_warning: bool,
}

/// Runs every stage after ingestion, in order:
/// segment, extract, accumulate, promote, correct, aggregate, localize,
/// emoji, snapshot. `on_stage` is called as each stage starts.
pub fn run<C>(
    log: &ParsedLog,
    config: &PipelineConfig,
    client: &C,
    emoji: &EmojiTable,
    mut on_stage: impl FnMut(Stage),
) -> Result<BuildOutput, PipelineError>
where
    C: TranslationClient + ?Sized,
{
    config.validate()?;
    let mut per_locale: BTreeMap<String, BuildCounts> = BTreeMap::new();
    let mut totals = BuildCounts {
        sessions: log.sessions.len() as u64,
        skipped_lines: log.skipped as u64,
        ..BuildCounts::default()
    };

    on_stage(Stage::Segment);
    let episodes: Vec<_> = log.sessions.iter().flat_map(segment_episodes).collect();
    for ep in &episodes {
        per_locale.entry(ep.locale.clone()).or_default().episodes += 1;
    }

    on_stage(Stage::Extract);
    let pairs: Vec<_> = episodes.iter().flat_map(extract_pairs).collect();
    drop(episodes);
    for p in &pairs {
        per_locale.entry(p.locale.clone()).or_default().pairs += 1;
    }

    on_stage(Stage::Accumulate);
    let stats = accumulate(pairs);
    for s in stats.iter() {
        per_locale.entry(s.locale).or_default().distinct_pairs += 1;
    }

    on_stage(Stage::Promote);
    let mut maps: BTreeMap<String, CandidateMap> = promote(&stats, config);
    for (locale, map) in &maps {
        counts(&mut per_locale, locale).promoted = map.len() as u64;
    }

    on_stage(Stage::Correct);
    let mut dictionaries = BTreeMap::new();
    for (locale, map) in maps.iter_mut() {
        let dict = build_dictionary(stats.target_frequencies(locale), locale, config.rho);
        let corrected = map.entries.values().filter(|e| dict.correction_map.contains_key(&e.target)).count();
        counts(&mut per_locale, locale).corrected = corrected as u64;
        *map = apply_corrections(core::mem::take(map), &dict);
        dictionaries.insert(locale.clone(), dict);
    }

    on_stage(Stage::Aggregate);
    for (locale, map) in maps.iter_mut() {
        let before = map.len();
        *map = aggregate(core::mem::take(map));
        counts(&mut per_locale, locale).merged = (before - map.len()) as u64;
    }

    on_stage(Stage::Localize);
    let mut translation_warning = false;
    for (locale, map) in maps.iter_mut() {
        let (localized, lstats) = localize(core::mem::take(map), client, config);
        *map = localized;
        let c = counts(&mut per_locale, locale);
        c.translated = lstats.translated as u64;
        c.translation_calls = lstats.calls as u64;
        c.translation_failures = lstats.transport_failures as u64;
        translation_warning |= lstats.warning;
    }

    on_stage(Stage::Emoji);
    for (locale, map) in maps.iter_mut() {
        let mut expanded = 0;
        for (subquery, entry) in map.entries.iter_mut() {
            if !contains_emoji(&entry.target) {
                continue;
            }
            if let Expansion::Expanded(text) = emoji.expand(&entry.target) {
                entry.target = text;
                entry.kind = if *subquery == entry.target {
                    EntryKind::Identity
                } else {
                    EntryKind::Emoji
                };
                expanded += 1;
            }
        }
        counts(&mut per_locale, locale).emoji_expanded = expanded;
    }

    on_stage(Stage::Snapshot);
    let mut entries = Vec::new();
    for (locale, map) in maps {
        let mut dropped = 0;
        let mut kept = 0;
        for (source, e) in map.entries {
            if e.kind == EntryKind::Identity || source == e.target {
                dropped += 1;
                continue;
            }
            kept += 1;
            entries.push(QplEntry {
                locale: locale.clone(),
                source,
                expansion: e.target,
                kind: e.kind,
                confidence: e.confidence,
                event_count: e.event_count,
                distinct_users: e.distinct_users,
            });
        }
        let c = counts(&mut per_locale, &locale);
        c.identity_dropped = dropped;
        c.final_entries = kept;
    }
    let entries = prepare_entries(entries)?;

    for c in per_locale.values() {
        totals.add(c);
    }
    Ok(BuildOutput {
        entries,
        totals,
        per_locale,
        stats,
        dictionaries,
        translation_warning,
    })
}

fn counts<'a>(per_locale: &'a mut BTreeMap<String, BuildCounts>, locale: &str) -> &'a mut BuildCounts {
    if !per_locale.contains_key(locale) {
        per_locale.insert(locale.into(), BuildCounts::default());
    }
    per_locale.get_mut(locale).expect("inserted above")
}
