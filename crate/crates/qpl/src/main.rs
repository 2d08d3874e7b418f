use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use qpl::build::{build, build_time_for, expand_logs, load_config, load_emoji, BuildRequest};
use qpl::http::serve;
use qpl::snapshot::load_snapshot;
use qpl::synth::{load_spec, write_synth};
use qpl::{RewriteService, SnapshotStore};
use qpl_core::entry::split_key;
use qpl_core::{normalize_locale, normalize_query, EmojiTable, PipelineConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "qpl", version, about = "Query-log mining, spelling correction and query rewriting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a snapshot from keystroke logs.
    Build {
        /// Glob for JSONL log files; may be repeated.
        #[arg(long, required = true)]
        logs: Vec<String>,
        /// TOML file with pipeline thresholds. Defaults apply without it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Tab-separated `source english language` rows.
        #[arg(long)]
        translations: Option<PathBuf>,
        /// `emoji<TAB>name` rows. The bundled CLDR table is used without it.
        #[arg(long)]
        emoji: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Snapshot version in seconds since the epoch. Falls back to
        /// SOURCE_DATE_EPOCH, then the current time.
        #[arg(long)]
        build_epoch: Option<u64>,
        /// Include per-stage wall times in the report file.
        #[arg(long)]
        report_timings: bool,
        /// Write the correction maps as snapshot-format lines.
        #[arg(long)]
        dump_corrections: Option<PathBuf>,
        /// Write all accumulated pair statistics as snapshot-format lines.
        #[arg(long)]
        dump_stats: Option<PathBuf>,
    },
    /// Print the entry stored under `locale:query`.
    Inspect {
        snapshot: PathBuf,
        #[arg(long)]
        key: String,
    },
    /// Serve rewrites over HTTP.
    Serve {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        #[arg(long)]
        emoji: Option<PathBuf>,
    },
    /// Generate a synthetic log and its ground-truth manifest.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Build {
            logs,
            config,
            translations,
            emoji,
            out,
            report,
            build_epoch,
            report_timings,
            dump_corrections,
            dump_stats,
        } => {
            let mut files = Vec::new();
            for pattern in &logs {
                files.extend(expand_logs(pattern)?);
            }
            files.sort();
            files.dedup();
            let config = match config {
                Some(path) => load_config(&path)?,
                None => PipelineConfig::default(),
            };
            let version = match build_epoch {
                Some(v) => v,
                None => epoch_from_env()?,
            };
            let request = BuildRequest {
                logs: files,
                config,
                translations,
                emoji,
                out,
                report,
                version,
                build_time: build_time_for(version),
                report_timings,
                dump_corrections,
                dump_stats,
            };
            let report = build(&request)?;
            tracing::info!(
                entries = report.final_entries,
                version = report.version,
                out = %request.out.display(),
                "snapshot written"
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Inspect { snapshot, key } => {
            let snapshot = load_snapshot(&snapshot)?;
            let Some((locale, query)) = split_key(&key) else {
                bail!("key {key:?} must look like locale:query");
            };
            let locale = normalize_locale(locale).with_context(|| format!("unusable locale in {key:?}"))?;
            match snapshot.get(&locale, &normalize_query(query)) {
                Some(entry) => {
                    println!("{}", serde_json::to_string_pretty(entry)?);
                    Ok(ExitCode::SUCCESS)
                }
                None => {
                    eprintln!("no entry for {key:?} in snapshot version {}", snapshot.version());
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Serve { snapshot, bind, emoji } => {
            let snapshot = load_snapshot(&snapshot)?;
            let emoji = match emoji {
                Some(path) => load_emoji(&path)?,
                None => EmojiTable::bundled(),
            };
            tracing::info!(version = snapshot.version(), entries = snapshot.len(), "snapshot loaded");
            let service = RewriteService::new(Arc::new(SnapshotStore::new(snapshot)), Arc::new(emoji));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
                tracing::info!(addr = %listener.local_addr()?, "listening");
                serve(listener, service, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
                Ok(ExitCode::SUCCESS)
            })
        }
        Command::Synth { spec, out } => {
            let spec = load_spec(&spec)?;
            let (generated, log, manifest) = write_synth(&spec, &out)?;
            let events: usize = generated.sessions.iter().map(|s| s.events.len()).sum();
            tracing::info!(
                sessions = generated.sessions.len(),
                events,
                log = %log.display(),
                manifest = %manifest.display(),
                "synthetic log written"
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn epoch_from_env() -> Result<u64> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v.trim().parse().with_context(|| format!("SOURCE_DATE_EPOCH={v:?} is not an integer")),
        Err(_) => Ok(SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs()),
    }
}
