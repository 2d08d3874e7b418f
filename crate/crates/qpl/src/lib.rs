//! File formats, the swappable snapshot store, the HTTP rewrite service and
//! the `qpl` command line, on top of [`qpl_core`].

pub mod build;
pub mod http;
pub mod service;
pub mod snapshot;
pub mod store;
pub mod synth;

pub use build::{build, BuildReport, BuildRequest};
pub use service::RewriteService;
pub use snapshot::{load_snapshot, write_snapshot, Snapshot};
pub use store::SnapshotStore;
