//! Evaluation report document.
//!
//! A report is a single pretty-printed JSON file that records everything
//! needed to reproduce and compare runs: the evaluation configuration, the
//! sequences that contributed, per-class speed-bucket tables, the threeway
//! split, and summary means. Serialization is deterministic — same inputs,
//! same bytes — so reports can be diffed directly.

use crate::metrics::{ClassSummary, MeanSummary, ThreewayResult};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Echo of the evaluation configuration, so a report is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    /// Planar evaluation radius around the ego position, in meters.
    pub eval_radius: f64,
    /// Frame spacing the speed buckets assume, in seconds.
    pub nominal_dt: f64,
    pub bucket_width: f64,
    pub max_speed: f64,
    /// Foreground speed split for the threeway metric, in m/s.
    pub speed_split: f64,
    pub classes: Vec<String>,
    pub background_class: String,
    /// True when boxes were regrouped by physical size instead of semantics.
    pub size_buckets: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ReportConfig,
    /// Sequence names that contributed points, in evaluation order.
    pub sequences: Vec<String>,
    /// Valid ground-truth points per class, before radius masking.
    pub point_histogram: Vec<u64>,
    pub total_points_evaluated: u64,
    pub threeway: ThreewayResult,
    pub classes: Vec<ClassSummary>,
    pub mean: MeanSummary,
    /// Frame pairs skipped because no prediction file existed, as
    /// `<sequence>/<frame_id>` strings.
    pub missing_predictions: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid report JSON: {source}")]
    Json {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: unsupported report schema version {version}")]
    SchemaVersion { path: std::path::PathBuf, version: u32 },
}

impl ReportDocument {
    /// Pretty JSON with a trailing newline. Byte-deterministic for equal
    /// documents: field order is fixed by the struct definitions and the
    /// formatter is not locale-dependent.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.to_json_string())
            .map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let bytes = std::fs::read(path)
            .map_err(|source| ReportError::Io { path: path.to_path_buf(), source })?;
        let doc: ReportDocument = serde_json::from_slice(&bytes)
            .map_err(|source| ReportError::Json { path: path.to_path_buf(), source })?;
        if doc.schema_version != REPORT_SCHEMA_VERSION {
            return Err(ReportError::SchemaVersion {
                path: path.to_path_buf(),
                version: doc.schema_version,
            });
        }
        Ok(doc)
    }
}
