//! Query processing for short mobile search queries.
//!
//! The offline half turns keystroke-level search logs into a per-locale
//! lookup table of completions, spelling corrections, translations and
//! emoji expansions:
//!
//! ```text
//! ingest -> segment -> extract -> accumulate -> promote
//!        -> correct -> aggregate -> localize -> emoji -> snapshot
//! ```
//!
//! The online half ([`rewrite`]) normalizes an incoming query, looks it up
//! under its locale key and ORs the original with the stored expansion.
//!
//! This crate is `no_std` and only needs `alloc`. File IO, the swappable
//! in-memory store, the HTTP service and the CLI live in the `qpl` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggregate;
pub mod emoji;
pub mod entry;
pub mod localize;
pub mod mapping;
pub mod normalize;
pub mod pipeline;
pub mod rewrite;
pub mod session;
pub mod spell;
pub mod synth;

pub use aggregate::aggregate;
pub use emoji::{EmojiTable, Expansion};
pub use entry::{EntryKind, QplEntry, SnapshotHeader};
pub use localize::{localize, NoTranslation, TableTranslator, TranslationClient, TranslationError, TranslationRecord};
pub use mapping::{
    accumulate, promote, CandidateEntry, CandidateMap, ConfigError, Denominator, PairStatsTable,
    PipelineConfig, SubqueryPairStats,
};
pub use normalize::{normalize_locale, normalize_query};
pub use pipeline::{BuildCounts, BuildOutput, PipelineError, Stage};
pub use rewrite::{render_query, rewrite, LookupTable, RewriteResult, ServiceStats};
pub use session::{
    extract_pairs, parse_event_log, segment_episodes, ParsedLog, QueryEpisode, QueryStateEvent,
    Session, SubqueryPair,
};
pub use spell::{apply_corrections, build_dictionary, within_distance_1, CorrectionDictionary};
