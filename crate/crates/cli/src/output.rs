//! Output directory handling and the versioned file formats.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tailrisk::cv::ExtremesSample;
use tailrisk::data::PreprocessLog;
use tailrisk::diagnostics::{HistogramTable, ModelComparisonRow, ReturnLevelData, StatementContext, WorstCaseQuantile};
use tailrisk::fitting::{BootstrapResult, Family, FitResult, GumbelVerdict};
use tailrisk::threshold::{StabilityCurve, ThresholdSuggestion};

use crate::error::{CliError, CliResult};

/// Version stamped into every JSON file this tool writes.
pub const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Reads an input file and records its checksum.
pub fn read_input(path: &Path, inputs: &mut Vec<FileRecord>) -> CliResult<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    inputs.push(FileRecord {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    });
    Ok(bytes)
}

/// Parses a JSON document written by this tool, checking `format_version`.
pub fn parse_versioned<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> CliResult<T> {
    let json_err = |source| CliError::Json { path: path.to_path_buf(), source };
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(json_err)?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if found != FORMAT_VERSION as u64 {
        return Err(CliError::FormatVersion {
            path: path.to_path_buf(),
            found,
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(json_err)
}

/// Output directory that remembers the checksum of every file written.
pub struct OutDir {
    root: PathBuf,
    pub written: Vec<FileRecord>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        if root.as_os_str().is_empty() {
            return Err(CliError::Usage("--out is required".into()));
        }
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(FileRecord { path: rel.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> CliResult<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json { path: self.path(rel), source })?;
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(self.path(rel), e.into_error()))?;
        self.write_bytes(rel, &bytes)
    }
}

/// Shortest text that parses back to the same float; empty for `None`.
pub fn num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Where a run's rows came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSummary {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_size: Option<usize>,
    pub n_rows: Option<usize>,
    pub feature_names: Vec<String>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<PreprocessLog>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtremesFile {
    pub format_version: u32,
    pub data: DataSummary,
    pub notes: Vec<String>,
    #[serde(flatten)]
    pub sample: ExtremesSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Fitted,
    NotAvailable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub format_version: u32,
    pub status: FitStatus,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    pub fit: Option<FitResult>,
    pub bootstrap: Option<BootstrapResult>,
    pub gumbel: Option<GumbelVerdict>,
    pub threshold: Option<f64>,
    pub context: StatementContext,
    pub mean_metric: Option<f64>,
    pub notes: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityFile {
    pub format_version: u32,
    pub curve: StabilityCurve,
    pub suggestion: Option<ThresholdSuggestion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggestion_error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub status: FitStatus,
    pub statements: Vec<WorstCaseQuantile>,
    pub gumbel: Option<GumbelVerdict>,
    pub return_levels: Option<ReturnLevelData>,
    pub histogram: Option<HistogramTable>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonFile {
    pub format_version: u32,
    pub data: DataSummary,
    pub notes: Vec<String>,
    pub rows: Vec<ModelComparisonRow>,
}
