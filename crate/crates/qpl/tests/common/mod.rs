#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use qpl::build::{build, BuildRequest};
use qpl::http::serve;
use qpl::{BuildReport, RewriteService, Snapshot, SnapshotStore};
use qpl_core::{EmojiTable, EntryKind, PipelineConfig, QplEntry, QueryStateEvent};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const HEART_SESSION: [&str; 16] = [
    "h", "he", "hes", "he", "hea", "hear", "heart", "hear", "hea", "he", "h", "", "l", "lo", "lov", "love",
];

/// Builds JSONL log text. Each session is (session, user, locale, states).
#[derive(Default)]
pub struct LogWriter {
    text: String,
}

impl LogWriter {
    pub fn states(&mut self, session: &str, user: &str, locale: &str, states: &[&str]) -> &mut Self {
        for (seq, q) in states.iter().enumerate() {
            let e = QueryStateEvent {
                session_id: session.into(),
                user_id: user.into(),
                locale: locale.into(),
                seq: seq as u64,
                query_text: (*q).into(),
            };
            self.text.push_str(&e.to_log_line());
            self.text.push('\n');
        }
        self
    }

    /// One session typing `phrase` a character at a time.
    pub fn typed(&mut self, session: &str, user: &str, locale: &str, phrase: &str) -> &mut Self {
        let prefixes: Vec<String> = phrase
            .char_indices()
            .map(|(i, c)| phrase[..i + c.len_utf8()].to_string())
            .collect();
        let refs: Vec<&str> = prefixes.iter().map(String::as_str).collect();
        self.states(session, user, locale, &refs)
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// English and Russian sessions that make the four showcase rewrites come out
/// of a real build with default thresholds.
pub fn showcase_log() -> LogWriter {
    let mut log = LogWriter::default();
    for u in 0..1000 {
        log.typed(&format!("gm{u}"), &format!("u{u}"), "en", "good morning");
    }
    for u in 0..10 {
        log.typed(&format!("gn{u}"), &format!("v{u}"), "en", "good norning");
    }
    for u in 0..20 {
        log.typed(&format!("bm{u}"), &format!("u{u}"), "en", "bitmoji");
        log.typed(&format!("ru{u}"), &format!("r{u}"), "ru", "арбуз");
    }
    log
}

pub const MOCK_TRANSLATIONS: &str = "арбуз\twatermelon\tru\ngeburtstag\tbirthday\tde\n";

pub fn request(dir: &Path, logs: Vec<PathBuf>, config: PipelineConfig) -> BuildRequest {
    BuildRequest {
        logs,
        config,
        translations: None,
        emoji: None,
        out: dir.join("snapshot.qpl"),
        report: Some(dir.join("report.json")),
        version: 1_700_000_000,
        build_time: "2023-11-14T22:13:20Z".into(),
        report_timings: false,
        dump_corrections: None,
        dump_stats: None,
    }
}

/// Writes `log` into `dir` and builds it.
pub fn build_log(dir: &Path, log: &str, config: PipelineConfig, translations: Option<&str>) -> BuildReport {
    let path = dir.join("events.jsonl");
    std::fs::write(&path, log).unwrap();
    let mut req = request(dir, vec![path], config);
    if let Some(t) = translations {
        let tpath = dir.join("translations.tsv");
        std::fs::write(&tpath, t).unwrap();
        req.translations = Some(tpath);
    }
    build(&req).unwrap()
}

/// Starts the HTTP service on an ephemeral port.
pub async fn start(snapshot: Snapshot) -> (SocketAddr, RewriteService, tokio::sync::oneshot::Sender<()>) {
    let service = RewriteService::new(Arc::new(SnapshotStore::new(snapshot)), Arc::new(EmojiTable::bundled()));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel();
    let svc = service.clone();
    tokio::spawn(async move {
        serve(listener, svc, async {
            let _ = rx.await;
        })
        .await
        .unwrap();
    });
    (addr, service, tx)
}

const KINDS: [EntryKind; 4] = [EntryKind::Completion, EntryKind::Correction, EntryKind::Translation, EntryKind::Emoji];
const LOCALES: [&str; 5] = ["en", "ru", "de", "pt-br", "ja"];
const ALPHABET: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', ' ', ':', '\t', '\\', '\n', 'а', 'б', 'я', 'é', 'ß', '日', '本', '🎂', '\u{301}', '"',
];

pub fn random_text(rng: &mut ChaCha8Rng, max: usize) -> String {
    let len = rng.gen_range(1..=max);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

/// `n` valid entries with distinct keys, including characters that need
/// escaping.
pub fn random_entries(rng: &mut ChaCha8Rng, n: usize) -> Vec<QplEntry> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let locale = LOCALES[rng.gen_range(0..LOCALES.len())];
        let source = format!("{}{}", random_text(rng, 10), out.len());
        if !seen.insert((locale, source.clone())) {
            continue;
        }
        let mut expansion = random_text(rng, 16);
        if expansion == source {
            expansion.push('!');
        }
        let event_count = rng.gen_range(1..100_000);
        out.push(QplEntry {
            locale: locale.into(),
            source,
            expansion,
            kind: KINDS[rng.gen_range(0..KINDS.len())],
            confidence: rng.gen_range(0.0..=1.0),
            event_count,
            distinct_users: rng.gen_range(1..=event_count),
        });
    }
    out
}
