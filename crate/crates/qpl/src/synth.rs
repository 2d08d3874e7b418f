//! `qpl synth`: generator spec in, event log and manifest out.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qpl_core::synth::{generate, Generated, GeneratorSpec};

pub const LOG_FILE: &str = "events.jsonl";
pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Reads a spec from TOML, or JSON when the file name ends in `.json`.
pub fn load_spec(path: &Path) -> Result<GeneratorSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(spec)
}

/// Generates and writes `events.jsonl` and `manifest.tsv` under `out`.
pub fn write_synth(spec: &GeneratorSpec, out: &Path) -> Result<(Generated, PathBuf, PathBuf)> {
    let generated = generate(spec).context("invalid generator spec")?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let log = out.join(LOG_FILE);
    let manifest = out.join(MANIFEST_FILE);
    fs::write(&log, generated.log()).with_context(|| format!("writing {}", log.display()))?;
    fs::write(&manifest, generated.manifest.to_text()).with_context(|| format!("writing {}", manifest.display()))?;
    Ok((generated, log, manifest))
}
