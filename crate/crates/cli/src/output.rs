//! File output. Every file is written to a temporary sibling and renamed into
//! place, so readers never see a partial result.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

fn write_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write { path: path.to_owned(), source }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(write_error(dir))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(write_error(&tmp))?;
    fs::rename(&tmp, path).map_err(write_error(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Renders CSV into memory with `fill`, then writes it atomically.
pub fn write_csv_with<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| CliError::Write { path: path.to_owned(), source: std::io::Error::other(e) })?;
    write_atomic(path, &buf)
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}
