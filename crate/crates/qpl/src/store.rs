//! The live snapshot behind an atomically swappable pointer.

use std::path::Path;
use std::sync::{Arc, Mutex};

use arc_swap::{ArcSwap, Guard};
use thiserror::Error;

use crate::snapshot::{load_snapshot, LoadError, Snapshot};

#[derive(Debug, Error)]
pub enum SwapError {
    #[error("snapshot version {offered} is older than live version {live}")]
    Older { live: u64, offered: u64 },
    #[error(transparent)]
    Load(#[from] LoadError),
}

/// Versions on either side of a successful swap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Swapped {
    pub previous: u64,
    pub current: u64,
}

/// Holds the live [`Snapshot`]. Readers never block: [`current`](Self::current)
/// is a single atomic load, and each loaded snapshot stays valid for as
/// long as the reader holds it. Swaps are serialized.
#[derive(Debug)]
pub struct SnapshotStore {
    live: ArcSwap<Snapshot>,
    writer: Mutex<()>,
}

impl SnapshotStore {
    pub fn new(snapshot: Snapshot) -> Self {
        Self {
            live: ArcSwap::from_pointee(snapshot),
            writer: Mutex::new(()),
        }
    }

    pub fn current(&self) -> Guard<Arc<Snapshot>> {
        self.live.load()
    }

    pub fn version(&self) -> u64 {
        self.live.load().version()
    }

    /// Publishes `snapshot` unless it is older than the live one. Equal
    /// versions are accepted so a build can be republished.
    pub fn swap(&self, snapshot: Snapshot) -> Result<Swapped, SwapError> {
        let _writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        self.swap_locked(snapshot)
    }

    fn swap_locked(&self, snapshot: Snapshot) -> Result<Swapped, SwapError> {
        let live = self.live.load().version();
        if snapshot.version() < live {
            return Err(SwapError::Older {
                live,
                offered: snapshot.version(),
            });
        }
        let current = snapshot.version();
        self.live.store(Arc::new(snapshot));
        Ok(Swapped { previous: live, current })
    }

    /// Loads `path` and swaps it in. Any failure leaves the live snapshot
    /// in place.
    pub fn reload(&self, path: &Path) -> Result<Swapped, SwapError> {
        let _writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let snapshot = load_snapshot(path)?;
        self.swap_locked(snapshot)
    }
}
