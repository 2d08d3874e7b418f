//! Re-aggregation of candidate mappings after spelling correction.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::entry::EntryKind;
use crate::mapping::{CandidateEntry, CandidateMap};

/// Merges entries that point to the same target and leaves one entry per
/// subquery.
pub fn aggregate(candidates: CandidateMap) -> CandidateMap {
    let CandidateMap { locale, entries } = candidates;
    aggregate_entries(locale, entries)
}

/// Like [`aggregate`], for inputs that may hold several entries per
/// subquery (for instance candidate maps from separate shards, or entries
/// whose different raw targets were corrected to one canonical word).
///
/// Entries sharing (subquery, target) are merged: event counts and
/// distinct-user counts are summed (the latter is an upper bound) and the
/// confidence is recomputed against the subquery total. When a subquery
/// still has several targets, the one with the larger merged event count
/// wins, ties going to the smaller target.
pub fn aggregate_entries<I>(locale: String, entries: I) -> CandidateMap
where
    I: IntoIterator<Item = (String, CandidateEntry)>,
{
    let mut groups: BTreeMap<String, BTreeMap<String, Vec<CandidateEntry>>> = BTreeMap::new();
    for (subquery, entry) in entries {
        groups
            .entry(subquery)
            .or_default()
            .entry(entry.target.clone())
            .or_default()
            .push(entry);
    }

    let mut out = CandidateMap::new(locale);
    for (subquery, targets) in groups {
        let mut best: Option<CandidateEntry> = None;
        for (target, parts) in targets {
            let merged = merge_group(&subquery, target, parts);
            if best.as_ref().is_none_or(|b| merged.event_count > b.event_count) {
                best = Some(merged);
            }
        }
        if let Some(entry) = best {
            out.entries.insert(subquery, entry);
        }
    }
    out
}

fn merge_group(subquery: &str, target: String, parts: Vec<CandidateEntry>) -> CandidateEntry {
    if parts.len() == 1 {
        let mut only = parts.into_iter().next().expect("group has one entry");
        only.kind = settle_kind(subquery, &only.target, only.kind);
        return only;
    }
    let event_count: u64 = parts.iter().map(|p| p.event_count).sum();
    let distinct_users: u64 = parts.iter().map(|p| p.distinct_users).sum();
    let subquery_total = parts.iter().map(|p| p.subquery_total).max().unwrap_or(0).max(event_count);
    let kind = if parts.iter().any(|p| p.kind == EntryKind::Correction) {
        EntryKind::Correction
    } else {
        parts[0].kind
    };
    CandidateEntry {
        kind: settle_kind(subquery, &target, kind),
        confidence: event_count as f64 / subquery_total as f64,
        target,
        event_count,
        distinct_users,
        subquery_total,
    }
}

fn settle_kind(subquery: &str, target: &str, kind: EntryKind) -> EntryKind {
    if subquery == target {
        EntryKind::Identity
    } else {
        kind
    }
}
