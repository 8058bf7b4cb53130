//! Output directory with a single writer, versioned CSV files and a
//! manifest of content hashes.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SCHEMA: &str = "v1";
pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".fwl.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Incomplete,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub status: Status,
    pub files: Vec<FileEntry>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Owns every write into one output directory.
pub struct OutDir {
    root: PathBuf,
    manifest: Manifest,
}

impl OutDir {
    /// Claims `root` and writes an `incomplete` manifest.
    pub fn create(root: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        match OpenOptions::new().write(true).create_new(true).open(root.join(LOCK)) {
            Ok(_) => {}
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                bail!("{} is in use by another run (remove {LOCK} if stale)", root.display())
            }
            Err(e) => return Err(e).context("creating lock file"),
        }
        let out = Self {
            root: root.to_path_buf(),
            manifest: Manifest {
                schema: SCHEMA.into(),
                tool: "fwl".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                config: config.clone(),
                status: Status::Incomplete,
                files: Vec::new(),
                error: None,
            },
        };
        out.write_manifest()?;
        Ok(out)
    }

    fn write_manifest(&self) -> Result<()> {
        let tmp = self.root.join(format!("{MANIFEST}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        fs::rename(&tmp, self.root.join(MANIFEST))?;
        Ok(())
    }

    /// Writes `bytes` to `name` and records its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let mut f = File::create(self.root.join(name)).with_context(|| format!("writing {name}"))?;
        f.write_all(bytes)?;
        self.manifest.files.push(FileEntry {
            path: name.into(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        self.write_manifest()
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        self.write(name, (serde_json::to_string_pretty(value)? + "\n").as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, table: &Csv) -> Result<()> {
        self.write(name, table.render().as_bytes())
    }

    /// Marks the run `complete` or `failed` and releases the directory.
    pub fn finish(mut self, result: &Result<()>) -> Result<()> {
        match result {
            Ok(()) => self.manifest.status = Status::Complete,
            Err(e) => {
                self.manifest.status = Status::Failed;
                self.manifest.error = Some(format!("{e:#}"));
            }
        }
        self.write_manifest()?;
        fs::remove_file(self.root.join(LOCK)).ok();
        Ok(())
    }
}

/// CSV table with a `# schema=v1` first line.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: impl IntoIterator<Item = String>) {
        self.rows.push(row.into_iter().collect());
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| fmt(*v)));
    }

    pub fn render(&self) -> String {
        let mut s = format!("# schema={SCHEMA}\n{}\n", self.columns.join(","));
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }
}

/// Shortest round-trip decimal form.
pub fn fmt(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}
