//! Output files. Every file starts with `#` metadata lines (tool version,
//! config hash, seed) and carries nothing run-dependent beyond them, so a
//! rerun of the same config on the same build is byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone)]
pub struct Meta {
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn header(&self, prefix: &str) -> String {
        format!(
            "{prefix} amglab {VERSION}\n{prefix} config_sha256: {}\n{prefix} seed: {}\n",
            self.config_hash, self.seed
        )
    }
}

/// Output directory plus metadata; creates the directory on first use.
#[derive(Debug, Clone)]
pub struct Sink {
    pub dir: PathBuf,
    pub meta: Meta,
}

impl Sink {
    pub fn new(dir: &Path, meta: Meta) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes `body` after a `#` header.
    pub fn write_text(&self, name: &str, body: &str) -> anyhow::Result<PathBuf> {
        self.write_with_prefix(name, "#", body)
    }

    /// Writes `body` after a header with a custom comment prefix.
    pub fn write_with_prefix(&self, name: &str, prefix: &str, body: &str) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        let mut f = fs::File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        f.write_all(self.meta.header(prefix).as_bytes())?;
        f.write_all(body.as_bytes())?;
        Ok(path)
    }

    /// Serializes `rows` as CSV (header from the field names).
    pub fn write_rows<T: Serialize>(&self, name: &str, rows: &[T]) -> anyhow::Result<PathBuf> {
        self.write_text(name, &csv_string(rows)?)
    }
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Reads a CSV produced by [`Sink::write_rows`], skipping the header lines.
#[cfg(test)]
pub fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
