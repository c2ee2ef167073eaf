//! Artifact writing. Every file goes to a sibling `.tmp` path first and is
//! renamed into place, so an aborted run never leaves a truncated artifact
//! behind — the report directory only ever contains complete files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Serializes a value as pretty JSON with a trailing newline. The byte
/// output is deterministic: all maps in the report types iterate in key
/// order and float formatting is the shortest round-trip form.
pub fn to_json<T: Serialize + ?Sized>(value: &T, stage: &'static str) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|err| CliError::analysis(stage, format!("serializing JSON: {err}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes bytes atomically: parent directories are created, the content
/// goes to `<path>.tmp`, and the temp file is renamed over the target.
pub fn write_atomic(path: &Path, bytes: &[u8], stage: &'static str) -> Result<(), CliError> {
    write_atomic_io(path, bytes)
        .map_err(|err| CliError::analysis(stage, format!("writing {}: {err}", path.display())))
}

fn write_atomic_io(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let tmp = temp_path(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".tmp");
    PathBuf::from(name)
}
