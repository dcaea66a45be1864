//! Append-only run artifacts.
//!
//! A run directory holds `header.json` (written first), `records.jsonl` (one
//! iteration record per line, appended as iterations finish) and
//! `footer.json` (written last).

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gateway::{BackendKind, CacheKey};
use crate::optimizer::IterationRecord;
use crate::scoring::{MetricId, ScoreReport};
use crate::task::{Prompt, Score};
use crate::templates::TemplateHashes;

pub const SCHEMA_VERSION: u32 = 1;

pub const HEADER_FILE: &str = "header.json";
pub const RECORDS_FILE: &str = "records.jsonl";
pub const FOOTER_FILE: &str = "footer.json";

/// The parts of a run that determine its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub task: String,
    pub metric: MetricId,
    pub setting: String,
    pub initial_prompt: Prompt,
    pub seed: u64,
    pub config: RunConfig,
    pub template_hashes: TemplateHashes,
    pub split_sizes: [usize; 3],
}

/// Where responses came from. Not part of the artifact fingerprint, so a
/// replayed run hashes the same as the recorded one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub backend: BackendDescriptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactFooter {
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub final_prompt: Prompt,
    pub final_candidate_id: String,
    pub iterations: usize,
    pub converged: bool,
    pub initial_val_score: Option<Score>,
    pub final_val_score: Option<Score>,
    pub initial_test: Option<ScoreReport>,
    pub final_test: Option<ScoreReport>,
}

impl ArtifactFooter {
    pub fn initial_test_score(&self) -> Option<Score> {
        self.initial_test.as_ref().map(|r| r.mean)
    }

    pub fn final_test_score(&self) -> Option<Score> {
        self.final_test.as_ref().map(|r| r.mean)
    }
}

/// Single-writer, append-only builder for a run directory.
pub struct ArtifactWriter {
    dir: PathBuf,
    records: File,
}

impl ArtifactWriter {
    pub fn create(dir: impl Into<PathBuf>, header: &ArtifactHeader) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for stale in [RECORDS_FILE, FOOTER_FILE] {
            let path = dir.join(stale);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        write_json(&dir.join(HEADER_FILE), header)?;
        let path = dir.join(RECORDS_FILE);
        let records = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(ArtifactWriter { dir, records })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, record: &IterationRecord) -> Result<()> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        let path = self.dir.join(RECORDS_FILE);
        self.records.write_all(&line).map_err(|e| Error::io(&path, e))?;
        self.records.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn finish(self, footer: &ArtifactFooter) -> Result<PathBuf> {
        write_json(&self.dir.join(FOOTER_FILE), footer)?;
        Ok(self.dir)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A run directory read back from disk.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub header: ArtifactHeader,
    pub records: Vec<IterationRecord>,
    pub footer: Option<ArtifactFooter>,
    records_raw: Vec<u8>,
    footer_raw: Vec<u8>,
}

impl RunArtifact {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let read = |name: &str| -> Result<Option<Vec<u8>>> {
            let path = dir.join(name);
            match fs::read(&path) {
                Ok(b) => Ok(Some(b)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(Error::io(path, e)),
            }
        };
        let parse_err = |name: &str| {
            let path = dir.join(name);
            move |source| Error::Parse { path, source }
        };
        let header_raw = read(HEADER_FILE)?
            .ok_or_else(|| Error::Artifact(format!("{}: missing {HEADER_FILE}", dir.display())))?;
        let header: ArtifactHeader = serde_json::from_slice(&header_raw).map_err(parse_err(HEADER_FILE))?;
        let records_raw = read(RECORDS_FILE)?.unwrap_or_default();
        let mut records = Vec::new();
        for line in records_raw.split(|b| *b == b'\n').filter(|l| !l.is_empty()) {
            records.push(serde_json::from_slice(line).map_err(parse_err(RECORDS_FILE))?);
        }
        let footer_raw = read(FOOTER_FILE)?.unwrap_or_default();
        let footer = if footer_raw.is_empty() {
            None
        } else {
            Some(serde_json::from_slice(&footer_raw).map_err(parse_err(FOOTER_FILE))?)
        };
        Ok(RunArtifact {
            dir: dir.to_owned(),
            header,
            records,
            footer,
            records_raw,
            footer_raw,
        })
    }

    /// SHA-256 over the experiment description, the raw record lines and
    /// the raw footer. Backend provenance is deliberately left out.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&self.header.experiment).expect("experiment serializes"));
        hasher.update(b"\n");
        hasher.update(&self.records_raw);
        hasher.update(&self.footer_raw);
        hex::encode(hasher.finalize())
    }

    /// Every response fingerprint the artifact depends on.
    pub fn referenced_fingerprints(&self) -> BTreeSet<CacheKey> {
        let mut keys = BTreeSet::new();
        for r in &self.records {
            keys.extend(r.optimization_calls().map(|c| c.fingerprint.clone()));
            for e in &r.evaluations {
                keys.extend(e.report.per_pair.iter().map(|p| p.fingerprint.clone()));
            }
        }
        if let Some(f) = &self.footer {
            for report in [&f.initial_test, &f.final_test].into_iter().flatten() {
                keys.extend(report.per_pair.iter().map(|p| p.fingerprint.clone()));
            }
        }
        keys
    }

    pub fn completed_footer(&self) -> Result<&ArtifactFooter> {
        match &self.footer {
            Some(f) if f.status == RunStatus::Completed => Ok(f),
            _ => Err(Error::Artifact(format!("{}: run did not complete", self.dir.display()))),
        }
    }
}
