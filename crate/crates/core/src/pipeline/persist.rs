//! JSON persistence of run results.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PointResult, RunConfig, SampleRecord};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub schema_version: u32,
    pub config: RunConfig,
    pub points: Vec<PointResult>,
}

impl RunResults {
    pub fn failures(&self) -> usize {
        self.points.iter().filter(|p| p.status.is_failure()).count()
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 0,
        column: 0,
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    schema_version: u32,
    records: Vec<SampleRecord>,
}

pub fn persist_samples(records: &[SampleRecord], path: &Path) -> Result<()> {
    write_json(
        &SampleFile {
            schema_version: SCHEMA_VERSION,
            records: records.to_vec(),
        },
        path,
    )
}

pub fn load_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let file: SampleFile = read_json(path)?;
    check_version(file.schema_version, path)?;
    Ok(file.records)
}

fn check_version(found: u32, path: &Path) -> Result<()> {
    if found == SCHEMA_VERSION {
        return Ok(());
    }
    Err(Error::Parse {
        path: path.display().to_string(),
        line: 0,
        column: 0,
        message: format!("unsupported schema version {found} (expected {SCHEMA_VERSION})"),
    })
}

/// Write `results` as pretty-printed JSON. Floats are written in shortest
/// round-trip form, so [`load_run`] reproduces them exactly.
pub fn persist_run(results: &RunResults, path: &Path) -> Result<()> {
    write_json(results, path)
}

pub fn load_run(path: &Path) -> Result<RunResults> {
    let results: RunResults = read_json(path)?;
    check_version(results.schema_version, path)?;
    Ok(results)
}
