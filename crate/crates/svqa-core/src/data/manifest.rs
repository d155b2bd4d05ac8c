//! Dataset manifest: one JSON object per line, stable key order, LF line
//! endings. The manifest is the single source of truth a training run reads;
//! frame paths inside it are relative to the dataset root.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub frame_paths: Vec<String>,
    pub question: String,
    pub answer_short: String,
    pub answer_long: String,
    pub keywords: Vec<String>,
    pub category: String,
    pub domain: String,
    pub template_id: String,
    pub out_of_template: bool,
    pub split: String,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let io = |e| Error::io_at(path.display().to_string(), e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for e in entries {
        let line = serde_json::to_string(e)?;
        f.write_all(line.as_bytes()).map_err(io)?;
        f.write_all(b"\n").map_err(io)?;
    }
    f.flush().map_err(io)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let io = |e| Error::io_at(path.display().to_string(), e);
    let f = BufReader::new(std::fs::File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
            Error::Dataset(format!("{}:{}: {e}", path.display(), i + 1))
        })?;
        out.push(entry);
    }
    Ok(out)
}
