//! Immutable in-memory snapshots and their on-disk text form.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use qpl_core::entry::{decode_snapshot, encode_snapshot, prepare_entries, FormatError};
use qpl_core::{LookupTable, QplEntry, SnapshotHeader};
use thiserror::Error;

/// One published version of the lookup table. Never mutated after
/// construction.
#[derive(Debug, Clone)]
pub struct Snapshot {
    header: SnapshotHeader,
    /// Sorted by key.
    entries: Vec<QplEntry>,
    /// locale -> source -> position in `entries`
    index: HashMap<String, HashMap<String, usize>>,
}

impl Snapshot {
    /// Validates and sorts `entries`. Fails on duplicate keys, identity
    /// entries or a build time containing tabs or newlines.
    pub fn new(version: u64, build_time: &str, entries: Vec<QplEntry>) -> Result<Self, FormatError> {
        if build_time.is_empty() || build_time.contains(['\t', '\n', '\r']) {
            return Err(FormatError::Header(format!("unusable build_time {build_time:?}")));
        }
        let entries = prepare_entries(entries)?;
        let header = SnapshotHeader {
            version,
            build_time: build_time.into(),
            count: entries.len(),
        };
        Ok(Self::indexed(header, entries))
    }

    /// Version 0 with no entries.
    pub fn empty() -> Self {
        Self::new(0, "1970-01-01T00:00:00Z", Vec::new()).expect("empty snapshot is valid")
    }

    fn indexed(header: SnapshotHeader, entries: Vec<QplEntry>) -> Self {
        let mut index: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            index.entry(e.locale.clone()).or_default().insert(e.source.clone(), i);
        }
        Self { header, entries, index }
    }

    /// Parses snapshot text. Rejects count mismatches, truncated or
    /// malformed lines, duplicate keys and unsorted bodies.
    pub fn from_text(text: &str) -> Result<Self, FormatError> {
        let (header, entries) = decode_snapshot(text)?;
        for pair in entries.windows(2) {
            match pair[0].key().cmp(&pair[1].key()) {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => return Err(FormatError::DuplicateKey(pair[0].key())),
                std::cmp::Ordering::Greater => {
                    return Err(FormatError::Field(format!("entries out of order at {:?}", pair[1].key())))
                }
            }
        }
        Ok(Self::indexed(header, entries))
    }

    pub fn to_text(&self) -> String {
        encode_snapshot(self.header.version, &self.header.build_time, &self.entries)
    }

    pub fn header(&self) -> &SnapshotHeader {
        &self.header
    }

    pub fn version(&self) -> u64 {
        self.header.version
    }

    pub fn build_time(&self) -> &str {
        &self.header.build_time
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All entries, sorted by key.
    pub fn entries(&self) -> &[QplEntry] {
        &self.entries
    }

    /// Exact match; `locale` and `source` must already be normalized.
    pub fn get(&self, locale: &str, source: &str) -> Option<&QplEntry> {
        let i = *self.index.get(locale)?.get(source)?;
        Some(&self.entries[i])
    }
}

impl LookupTable for Snapshot {
    fn lookup(&self, locale: &str, query: &str) -> Option<&QplEntry> {
        self.get(locale, query)
    }

    fn version(&self) -> u64 {
        self.header.version
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Format { path: PathBuf, source: FormatError },
}

/// Reads and validates a snapshot file.
pub fn load_snapshot(path: &Path) -> Result<Snapshot, LoadError> {
    let bytes = fs::read(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    let text = String::from_utf8(bytes).map_err(|e| LoadError::Io {
        path: path.into(),
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })?;
    Snapshot::from_text(&text).map_err(|source| LoadError::Format { path: path.into(), source })
}

/// Writes `snapshot` to `path` through a temporary file in the same
/// directory, renamed into place once fully written. On failure the
/// temporary file is removed and any existing file at `path` is untouched.
pub fn write_snapshot(snapshot: &Snapshot, path: &Path) -> io::Result<()> {
    write_atomically(path, snapshot.to_text().as_bytes())
}

pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new().prefix(".qpl-").suffix(".tmp").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
