//! Manifest, stamped JSON and CSV writers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

/// Resolved configuration of one run. Contains nothing run-dependent, so the
/// same config and seeds always hash the same.
#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seeds: &'a [u64],
    config: &'a C,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    manifest_sha256: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// Output directory plus the manifest hash every artifact refers to.
pub struct Sink {
    dir: PathBuf,
    hash: String,
}

fn to_json<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(format!("serialization: {e}")))?;
    s.push('\n');
    Ok(s)
}

impl Sink {
    /// Creates `dir` and writes `manifest.json`.
    pub fn create<C: Serialize>(dir: &Path, command: &str, seeds: &[u64], config: &C) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        let text = to_json(&Manifest {
            tool: "randrelu",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seeds,
            config,
        })?;
        fs::write(dir.join("manifest.json"), &text)?;
        let hash = Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            hash,
        })
    }

    /// Writes `body` with a leading `manifest_sha256` field.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(
            &path,
            to_json(&Stamped {
                manifest_sha256: &self.hash,
                body,
            })?,
        )?;
        Ok(path)
    }

    pub fn csv(&self, name: &str, table: &Csv) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut text = format!("# manifest_sha256={}\n", self.hash);
        text.push_str(&table.header.join(","));
        text.push('\n');
        for row in &table.rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(&path, text)?;
        Ok(path)
    }
}

pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

/// 17 significant digits: enough to round-trip any `f64`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

impl Csv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }
}
