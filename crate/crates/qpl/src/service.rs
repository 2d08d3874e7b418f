//! Online rewriting against the live snapshot, with exact counters.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use qpl_core::entry::EntryKind;
use qpl_core::{rewrite, EmojiTable, RewriteResult, ServiceStats};

use crate::store::SnapshotStore;

#[derive(Debug, Default)]
struct Counters {
    total: AtomicU64,
    hits: AtomicU64,
    per_kind: [AtomicU64; EntryKind::ALL.len()],
}

/// Shared by every request handler. Cloning is cheap.
#[derive(Debug, Clone)]
pub struct RewriteService {
    store: Arc<SnapshotStore>,
    emoji: Arc<EmojiTable>,
    counters: Arc<Counters>,
}

impl RewriteService {
    pub fn new(store: Arc<SnapshotStore>, emoji: Arc<EmojiTable>) -> Self {
        Self {
            store,
            emoji,
            counters: Arc::default(),
        }
    }

    pub fn store(&self) -> &Arc<SnapshotStore> {
        &self.store
    }

    /// Rewrites one query and counts it. The whole call sees a single
    /// snapshot, whose version is reported in the result.
    pub fn rewrite(&self, locale: &str, raw_query: &str) -> RewriteResult {
        let snapshot = self.store.current();
        let result = rewrite(&**snapshot, &self.emoji, locale, raw_query);
        // Total first, hits last: a concurrent reader of `stats` never sees
        // more hits than queries.
        self.counters.total.fetch_add(1, Ordering::SeqCst);
        if let Some(kind) = result.kind {
            self.counters.per_kind[kind.index()].fetch_add(1, Ordering::SeqCst);
            self.counters.hits.fetch_add(1, Ordering::SeqCst);
        }
        result
    }

    pub fn stats(&self) -> ServiceStats {
        let hit_queries = self.counters.hits.load(Ordering::SeqCst);
        let per_kind = EntryKind::ALL
            .iter()
            .map(|k| (*k, self.counters.per_kind[k.index()].load(Ordering::SeqCst)))
            .filter(|(_, n)| *n > 0)
            .collect();
        let total_queries = self.counters.total.load(Ordering::SeqCst);
        ServiceStats {
            snapshot_version: self.store.version(),
            total_queries,
            hit_queries,
            per_kind,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snapshot::Snapshot;
    use qpl_core::QplEntry;

    fn service() -> RewriteService {
        let entries = vec![
            QplEntry {
                locale: "ru".into(),
                source: "арбуз".into(),
                expansion: "watermelon".into(),
                kind: EntryKind::Translation,
                confidence: 1.0,
                event_count: 30,
                distinct_users: 20,
            },
            QplEntry {
                locale: "en".into(),
                source: "bitm".into(),
                expansion: "bitmoji".into(),
                kind: EntryKind::Completion,
                confidence: 0.9,
                event_count: 30,
                distinct_users: 20,
            },
        ];
        let store = SnapshotStore::new(Snapshot::new(4, "t", entries).unwrap());
        RewriteService::new(Arc::new(store), Arc::new(EmojiTable::bundled()))
    }

    #[test]
    fn counts_every_call_exactly() {
        let s = service();
        for (l, q) in [("ru", "арбуз"), ("en", "bitm"), ("en", "🎂"), ("en", ""), ("en", "love"), ("EN", "BITM")] {
            s.rewrite(l, q);
        }
        let stats = s.stats();
        assert_eq!((stats.total_queries, stats.hit_queries, stats.snapshot_version), (6, 4, 4));
        assert_eq!(stats.per_kind[&EntryKind::Completion], 2);
        assert_eq!(stats.per_kind[&EntryKind::Emoji], 1);
        assert_eq!(stats.per_kind.values().sum::<u64>(), stats.hit_queries);
    }

    #[test]
    fn every_stored_key_hits_from_its_raw_source() {
        let s = service();
        let snapshot = s.store().current();
        for e in snapshot.entries() {
            let r = s.rewrite(&e.locale, &e.source);
            assert_eq!(r.expansions, std::slice::from_ref(&e.expansion));
        }
    }
}
