//! Atomic file and directory writes plus the provenance record every command leaves behind.

use std::io::Write as _;
use std::path::Path;

use anyhow::Context as _;
use serde::Serialize;

use crate::config::Config;

pub const RUN_RECORD: &str = "run.json";
pub const RESOLVED_CONFIG: &str = "config.toml";

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> anyhow::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Fills a fresh directory with `fill` and swaps it in for `target`.
pub fn replace_dir(target: &Path, fill: impl FnOnce(&Path) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    let staging = tempfile::Builder::new().prefix(".hydy-").tempdir_in(parent)?;
    fill(staging.path())?;
    let staged = staging.keep();
    if target.exists() {
        std::fs::remove_dir_all(target).with_context(|| format!("replacing {}", target.display()))?;
    }
    std::fs::rename(&staged, target).with_context(|| format!("moving output into {}", target.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a Config,
    summary: T,
}

/// `run.json` in `out` (command, resolved configuration, seed and a command-specific summary) plus
/// the resolved configuration as `config.toml`, which reruns the command when passed to `--config`.
pub fn write_run_record<T: Serialize>(out: &Path, command: &str, config: &Config, summary: T) -> anyhow::Result<()> {
    let record = RunRecord { command, version: env!("CARGO_PKG_VERSION"), seed: config.seed(), config, summary };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    write_atomic(&out.join(RESOLVED_CONFIG), config.to_toml().as_bytes())?;
    write_atomic(&out.join(RUN_RECORD), text.as_bytes())
}
