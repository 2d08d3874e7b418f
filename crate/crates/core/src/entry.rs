//! Finalized lookup records and their line-oriented snapshot encoding.
//!
//! A snapshot is UTF-8 text: one header line followed by one entry per line,
//! sorted by key. Entry lines carry seven tab-separated fields:
//!
//! ```text
//! locale  source  expansion  kind  confidence  event_count  distinct_users
//! ```
//!
//! Backslash, tab, CR and LF inside string fields are backslash-escaped.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::normalize_locale;

pub const SNAPSHOT_MAGIC: &str = "#qpl-snapshot";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Completion,
    Correction,
    Translation,
    Emoji,
    Identity,
}

impl EntryKind {
    pub const ALL: [EntryKind; 5] = [
        EntryKind::Completion,
        EntryKind::Correction,
        EntryKind::Translation,
        EntryKind::Emoji,
        EntryKind::Identity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntryKind::Completion => "completion",
            EntryKind::Correction => "correction",
            EntryKind::Translation => "translation",
            EntryKind::Emoji => "emoji",
            EntryKind::Identity => "identity",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntryKind {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntryKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| FormatError::Field(format!("unknown kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("missing or malformed header: {0}")]
    Header(String),
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: String },
    #[error("{0}")]
    Field(String),
    #[error("header declares {declared} entries but body has {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
}

/// One (locale, source) -> expansion record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QplEntry {
    pub locale: String,
    pub source: String,
    pub expansion: String,
    pub kind: EntryKind,
    pub confidence: f64,
    pub event_count: u64,
    /// Upper bound once merged entries have been aggregated.
    pub distinct_users: u64,
}

impl QplEntry {
    pub fn key(&self) -> String {
        snapshot_key(&self.locale, &self.source)
    }

    /// Checks the invariants a snapshot entry must hold.
    pub fn validate(&self) -> Result<(), FormatError> {
        if normalize_locale(&self.locale).as_deref() != Some(self.locale.as_str()) {
            return Err(FormatError::Field(format!("invalid locale {:?}", self.locale)));
        }
        if self.source.is_empty() || self.expansion.is_empty() {
            return Err(FormatError::Field("empty source or expansion".into()));
        }
        if self.kind == EntryKind::Identity || self.source == self.expansion {
            return Err(FormatError::Field(format!("identity entry for {:?}", self.source)));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(FormatError::Field(format!("confidence {} out of range", self.confidence)));
        }
        Ok(())
    }

    /// Encodes the entry as one snapshot body line, without newline.
    pub fn to_line(&self) -> String {
        let mut out = String::with_capacity(self.source.len() + self.expansion.len() + 32);
        escape_into(&mut out, &self.locale);
        out.push('\t');
        escape_into(&mut out, &self.source);
        out.push('\t');
        escape_into(&mut out, &self.expansion);
        out.push('\t');
        out.push_str(self.kind.as_str());
        // `Display` for f64 prints the shortest string that round-trips.
        out.push_str(&format!(
            "\t{}\t{}\t{}",
            self.confidence, self.event_count, self.distinct_users
        ));
        out
    }

    /// Parses and validates one body line.
    pub fn from_line(line: &str) -> Result<Self, FormatError> {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(FormatError::Field(format!("expected 7 fields, got {}", fields.len())));
        }
        let number = |s: &str, what: &str| {
            s.parse::<u64>().map_err(|_| FormatError::Field(format!("bad {what} {s:?}")))
        };
        let confidence: f64 = fields[4]
            .parse()
            .map_err(|_| FormatError::Field(format!("bad confidence {:?}", fields[4])))?;
        let entry = QplEntry {
            locale: unescape(fields[0])?,
            source: unescape(fields[1])?,
            expansion: unescape(fields[2])?,
            kind: fields[3].parse()?,
            confidence,
            event_count: number(fields[5], "event_count")?,
            distinct_users: number(fields[6], "distinct_users")?,
        };
        entry.validate()?;
        Ok(entry)
    }
}

/// `locale + ":" + source`. The first `:` ends the locale.
pub fn snapshot_key(locale: &str, source: &str) -> String {
    let mut key = String::with_capacity(locale.len() + 1 + source.len());
    key.push_str(locale);
    key.push(':');
    key.push_str(source);
    key
}

/// Splits a key at its first `:`.
pub fn split_key(key: &str) -> Option<(&str, &str)> {
    key.split_once(':')
}

/// Snapshot metadata carried on the header line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    /// Monotone build identifier.
    pub version: u64,
    pub build_time: String,
    pub count: usize,
}

impl SnapshotHeader {
    pub fn to_line(&self) -> String {
        format!(
            "{SNAPSHOT_MAGIC}\tformat={FORMAT_VERSION}\tversion={}\tbuild_time={}\tcount={}\tdistinct_users=upper-bound",
            self.version, self.build_time, self.count
        )
    }

    pub fn from_line(line: &str) -> Result<Self, FormatError> {
        let mut fields = line.split('\t');
        if fields.next() != Some(SNAPSHOT_MAGIC) {
            return Err(FormatError::Header("bad magic".into()));
        }
        let (mut format_ok, mut version, mut build_time, mut count) = (false, None, None, None);
        for field in fields {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| FormatError::Header(format!("bad field {field:?}")))?;
            match k {
                "format" => format_ok = v == FORMAT_VERSION.to_string(),
                "version" => version = v.parse().ok(),
                "build_time" => build_time = Some(String::from(v)),
                "count" => count = v.parse().ok(),
                _ => {}
            }
        }
        match (format_ok, version, build_time, count) {
            (true, Some(version), Some(build_time), Some(count)) => Ok(SnapshotHeader {
                version,
                build_time,
                count,
            }),
            _ => Err(FormatError::Header(format!("incomplete header {line:?}"))),
        }
    }
}

/// Sorts entries by key and rejects duplicate keys or invalid entries.
pub fn prepare_entries(mut entries: Vec<QplEntry>) -> Result<Vec<QplEntry>, FormatError> {
    for e in &entries {
        e.validate()?;
    }
    entries.sort_by_cached_key(QplEntry::key);
    for pair in entries.windows(2) {
        if pair[0].locale == pair[1].locale && pair[0].source == pair[1].source {
            return Err(FormatError::DuplicateKey(pair[0].key()));
        }
    }
    Ok(entries)
}

/// Renders a complete snapshot document. `entries` must come from
/// [`prepare_entries`].
pub fn encode_snapshot(version: u64, build_time: &str, entries: &[QplEntry]) -> String {
    let header = SnapshotHeader {
        version,
        build_time: build_time.into(),
        count: entries.len(),
    };
    let mut out = header.to_line();
    out.push('\n');
    for e in entries {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

/// Parses a complete snapshot document, verifying the declared count.
pub fn decode_snapshot(text: &str) -> Result<(SnapshotHeader, Vec<QplEntry>), FormatError> {
    let mut lines = text.split_terminator('\n');
    let header = SnapshotHeader::from_line(lines.next().unwrap_or_default())?;
    let mut entries = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let entry = QplEntry::from_line(line).map_err(|e| FormatError::Line {
            line: i + 2,
            reason: e.to_string(),
        })?;
        entries.push(entry);
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(FormatError::Line {
            line: entries.len() + 1,
            reason: "truncated final line".into(),
        });
    }
    if entries.len() != header.count {
        return Err(FormatError::CountMismatch {
            declared: header.count,
            found: entries.len(),
        });
    }
    Ok((header, entries))
}

fn escape_into(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    escape_into(&mut out, s);
    out
}

pub fn unescape(s: &str) -> Result<String, FormatError> {
    if !s.contains('\\') {
        return Ok(s.into());
    }
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(FormatError::Field(format!("bad escape \\{other:?}"))),
        }
    }
    Ok(out)
}
