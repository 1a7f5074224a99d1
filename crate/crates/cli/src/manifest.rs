//! Run manifests: the full invocation plus input and output checksums.

use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::error::CliResult;
use crate::output::{FileRecord, OutDir, FORMAT_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool: String,
    pub version: String,
    pub invocation: Command,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

impl RunManifest {
    pub fn new(invocation: &Command, inputs: &[FileRecord], outputs: &[FileRecord]) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool: "tailrisk".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            invocation: invocation.clone(),
            inputs: inputs.to_vec(),
            outputs: outputs.to_vec(),
        }
    }

    /// Writes the manifest next to the outputs it describes.
    pub fn write(&self, out: &mut OutDir) -> CliResult<()> {
        out.write_json(MANIFEST_FILE, self)
    }
}
