//! Online query rewriting: normalize, look up, fall back to emoji
//! expansion, and OR the original with whatever was found.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::emoji::{EmojiTable, Expansion};
use crate::entry::{EntryKind, QplEntry};
use crate::normalize::{normalize_locale, normalize_query};

/// Read access to a loaded lookup table.
pub trait LookupTable {
    /// Exact match on `locale:query`; both arguments already normalized.
    fn lookup(&self, locale: &str, query: &str) -> Option<&QplEntry>;
    fn version(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Operator {
    #[default]
    #[serde(rename = "OR")]
    Or,
}

/// The answer for one incoming query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteResult {
    /// The query exactly as received.
    pub original: String,
    pub expansions: Vec<String>,
    pub operator: Operator,
    pub hit: bool,
    pub kind: Option<EntryKind>,
    pub snapshot_version: u64,
}

impl RewriteResult {
    fn miss(original: &str, snapshot_version: u64) -> Self {
        Self {
            original: original.into(),
            expansions: Vec::new(),
            operator: Operator::Or,
            hit: false,
            kind: None,
            snapshot_version,
        }
    }

    fn hit(original: &str, expansion: String, kind: EntryKind, snapshot_version: u64) -> Self {
        Self {
            original: original.into(),
            expansions: vec![expansion],
            operator: Operator::Or,
            hit: true,
            kind: Some(kind),
            snapshot_version,
        }
    }
}

/// Rewrites one query against `table`, using `emoji` as a fallback when the
/// table has nothing. An expansion equal to the normalized query counts as
/// a miss. Never fails: empty queries and unusable locales are misses.
pub fn rewrite<T>(table: &T, emoji: &EmojiTable, locale: &str, raw_query: &str) -> RewriteResult
where
    T: LookupTable + ?Sized,
{
    let version = table.version();
    let query = normalize_query(raw_query);
    if query.is_empty() {
        return RewriteResult::miss(raw_query, version);
    }
    let stored = normalize_locale(locale)
        .and_then(|locale| table.lookup(&locale, &query))
        .filter(|entry| entry.expansion != query);
    if let Some(entry) = stored {
        return RewriteResult::hit(raw_query, entry.expansion.clone(), entry.kind, version);
    }
    match emoji.expand(&query) {
        Expansion::Expanded(text) if text != query => {
            RewriteResult::hit(raw_query, text, EntryKind::Emoji, version)
        }
        _ => RewriteResult::miss(raw_query, version),
    }
}

/// Query handed to a retrieval backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetrievalQuery {
    Term(String),
    Or(Vec<RetrievalQuery>),
}

impl RetrievalQuery {
    /// All terms, depth first.
    pub fn terms(&self) -> Vec<&str> {
        match self {
            RetrievalQuery::Term(t) => vec![t.as_str()],
            RetrievalQuery::Or(children) => children.iter().flat_map(RetrievalQuery::terms).collect(),
        }
    }
}

impl fmt::Display for RetrievalQuery {
    /// `("term")`, or `("a") OR ("b")` with `"` and `\` backslash-escaped.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetrievalQuery::Term(t) => {
                f.write_str("(\"")?;
                for c in t.chars() {
                    if c == '"' || c == '\\' {
                        f.write_str("\\")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str("\")")
            }
            RetrievalQuery::Or(children) => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" OR ")?;
                    }
                    write!(f, "{child}")?;
                }
                Ok(())
            }
        }
    }
}

/// Builds the backend query: the original alone on a miss, otherwise a
/// disjunction of the original and every expansion.
pub fn render_query(result: &RewriteResult) -> RetrievalQuery {
    let original = RetrievalQuery::Term(result.original.clone());
    if result.expansions.is_empty() {
        return original;
    }
    let mut children = vec![original];
    children.extend(result.expansions.iter().cloned().map(RetrievalQuery::Term));
    RetrievalQuery::Or(children)
}

/// Counter values reported by the service.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceStats {
    /// Version of the snapshot live when the stats were read.
    pub snapshot_version: u64,
    pub total_queries: u64,
    pub hit_queries: u64,
    pub per_kind: BTreeMap<EntryKind, u64>,
}
