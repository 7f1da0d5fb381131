//! Dataset directory layout.
//!
//! ```text
//! <root>/<sequence>/manifest.json              frame ids + timestamps
//! <root>/<sequence>/clouds/000042.sfc          sensor-frame cloud
//! <root>/<sequence>/poses/000042.json          ego pose (sensor -> global)
//! <root>/<sequence>/boxes/000042.json          annotated boxes, global frame
//! <root>/<sequence>/detections/000042.json     detector boxes, global frame
//! ```
//!
//! Clouds are stored in the sensor frame (what a logger records); boxes and
//! detections are global. The `detections` directory is optional — ground
//! truth datasets do not need it. Predicted flow fields live outside the
//! dataset in `<pred_root>/<sequence>/<frame_id>.sff`, keyed by the earlier
//! frame of each pair.

use crate::boxes::Box3D;
use crate::cloud::PointCloud;
use crate::geometry::SE3Pose;
use crate::io::binfile::{self, BinFileError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub frames: Vec<FrameMeta>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrameMeta {
    pub frame_id: u64,
    pub timestamp: f64,
}

/// One frame, in memory. The cloud is in the sensor frame; apply `ego_pose`
/// to reach the global frame.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub timestamp: f64,
    pub ego_pose: SE3Pose,
    pub cloud_sensor: PointCloud,
    pub boxes: Vec<Box3D>,
    /// `None` when the dataset has no detections directory at all.
    pub detections: Option<Vec<Box3D>>,
}

#[derive(Debug)]
pub struct SequenceData {
    pub name: String,
    pub frames: Vec<FrameRecord>,
    /// Non-fatal observations made during load (e.g. a missing per-frame
    /// detection file treated as zero detections).
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Bin(#[from] BinFileError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("sequence `{sequence}`, frame {frame}: missing {path}")]
    MissingFile { sequence: String, frame: u64, path: PathBuf },
    #[error("sequence `{sequence}`: unsupported manifest schema version {version}")]
    SchemaVersion { sequence: String, version: u32 },
    #[error("sequence `{sequence}`: frame ids must increase strictly (at frame {frame})")]
    NonMonotonicFrameIds { sequence: String, frame: u64 },
    #[error("sequence `{sequence}`: timestamps must increase strictly (at frame {frame})")]
    NonMonotonicTimestamps { sequence: String, frame: u64 },
    #[error("sequence `{sequence}`: detection files for frame ids {ids:?} not in the manifest")]
    ExtraDetectionFrames { sequence: String, ids: Vec<u64> },
}

fn frame_file(dir: &Path, frame_id: u64, ext: &str) -> PathBuf {
    dir.join(format!("{frame_id:06}.{ext}"))
}

/// Path of the predicted flow for the pair starting at `frame_id`.
pub fn flow_path(pred_root: &Path, sequence: &str, frame_id: u64) -> PathBuf {
    frame_file(&pred_root.join(sequence), frame_id, "sff")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|source| DatasetError::Json { path: path.to_path_buf(), source })?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let bytes = std::fs::read(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_slice(&bytes)
        .map_err(|source| DatasetError::Json { path: path.to_path_buf(), source })
}

/// Writes a sequence to `<root>/<name>/`. A detections directory is created
/// only if at least one frame carries detections.
pub fn save_sequence(root: &Path, name: &str, frames: &[FrameRecord]) -> Result<(), DatasetError> {
    let seq_dir = root.join(name);
    let mkdir = |p: &Path| {
        std::fs::create_dir_all(p)
            .map_err(|source| DatasetError::Io { path: p.to_path_buf(), source })
    };
    mkdir(&seq_dir.join("clouds"))?;
    mkdir(&seq_dir.join("poses"))?;
    mkdir(&seq_dir.join("boxes"))?;
    let any_detections = frames.iter().any(|f| f.detections.is_some());
    if any_detections {
        mkdir(&seq_dir.join("detections"))?;
    }

    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        frames: frames
            .iter()
            .map(|f| FrameMeta { frame_id: f.frame_id, timestamp: f.timestamp })
            .collect(),
    };
    write_json(&seq_dir.join("manifest.json"), &manifest)?;

    for f in frames {
        binfile::save_cloud_points(
            &frame_file(&seq_dir.join("clouds"), f.frame_id, "sfc"),
            &f.cloud_sensor.points,
        )?;
        write_json(&frame_file(&seq_dir.join("poses"), f.frame_id, "json"), &f.ego_pose)?;
        write_json(&frame_file(&seq_dir.join("boxes"), f.frame_id, "json"), &f.boxes)?;
        if let Some(dets) = &f.detections {
            write_json(&frame_file(&seq_dir.join("detections"), f.frame_id, "json"), dets)?;
        }
    }
    Ok(())
}

/// Loads one sequence, validating the manifest ordering and the presence of
/// every referenced cloud/pose/box file.
pub fn load_sequence(root: &Path, name: &str) -> Result<SequenceData, DatasetError> {
    let seq_dir = root.join(name);
    let manifest: Manifest = read_json(&seq_dir.join("manifest.json"))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(DatasetError::SchemaVersion {
            sequence: name.to_string(),
            version: manifest.schema_version,
        });
    }
    for w in manifest.frames.windows(2) {
        if w[1].frame_id <= w[0].frame_id {
            return Err(DatasetError::NonMonotonicFrameIds {
                sequence: name.to_string(),
                frame: w[1].frame_id,
            });
        }
        if w[1].timestamp <= w[0].timestamp {
            return Err(DatasetError::NonMonotonicTimestamps {
                sequence: name.to_string(),
                frame: w[1].frame_id,
            });
        }
    }

    let detections_dir = seq_dir.join("detections");
    let has_detections = detections_dir.is_dir();
    if has_detections {
        // detection files must reference known frames
        let known: Vec<u64> = manifest.frames.iter().map(|f| f.frame_id).collect();
        let mut extra = Vec::new();
        let entries = std::fs::read_dir(&detections_dir)
            .map_err(|source| DatasetError::Io { path: detections_dir.clone(), source })?;
        for entry in entries {
            let entry = entry
                .map_err(|source| DatasetError::Io { path: detections_dir.clone(), source })?;
            let file = entry.file_name();
            let stem = Path::new(&file).file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if let Ok(id) = stem.parse::<u64>() {
                if !known.contains(&id) {
                    extra.push(id);
                }
            }
        }
        if !extra.is_empty() {
            extra.sort_unstable();
            return Err(DatasetError::ExtraDetectionFrames {
                sequence: name.to_string(),
                ids: extra,
            });
        }
    }

    let mut warnings = Vec::new();
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for meta in &manifest.frames {
        let require = |path: PathBuf| -> Result<PathBuf, DatasetError> {
            if path.is_file() {
                Ok(path)
            } else {
                Err(DatasetError::MissingFile {
                    sequence: name.to_string(),
                    frame: meta.frame_id,
                    path,
                })
            }
        };
        let cloud_path = require(frame_file(&seq_dir.join("clouds"), meta.frame_id, "sfc"))?;
        let pose_path = require(frame_file(&seq_dir.join("poses"), meta.frame_id, "json"))?;
        let boxes_path = require(frame_file(&seq_dir.join("boxes"), meta.frame_id, "json"))?;

        let points = binfile::load_cloud_points(&cloud_path)?;
        let ego_pose: SE3Pose = read_json(&pose_path)?;
        let boxes: Vec<Box3D> = read_json(&boxes_path)?;
        let detections = if has_detections {
            let det_path = frame_file(&detections_dir, meta.frame_id, "json");
            if det_path.is_file() {
                Some(read_json::<Vec<Box3D>>(&det_path)?)
            } else {
                warnings.push(format!(
                    "sequence `{name}`, frame {}: no detection file, assuming zero detections",
                    meta.frame_id
                ));
                Some(Vec::new())
            }
        } else {
            None
        };

        frames.push(FrameRecord {
            frame_id: meta.frame_id,
            timestamp: meta.timestamp,
            ego_pose,
            cloud_sensor: PointCloud { points, frame_id: meta.frame_id, timestamp: meta.timestamp },
            boxes,
            detections,
        });
    }

    Ok(SequenceData { name: name.to_string(), frames, warnings })
}

/// Sequence names under `root` (directories with a manifest), sorted so
/// iteration order is stable across platforms and runs.
pub fn list_sequences(root: &Path) -> Result<Vec<String>, DatasetError> {
    let entries = std::fs::read_dir(root)
        .map_err(|source| DatasetError::Io { path: root.to_path_buf(), source })?;
    let mut names = Vec::new();
    for entry in entries {
        let entry =
            entry.map_err(|source| DatasetError::Io { path: root.to_path_buf(), source })?;
        let path = entry.path();
        if path.is_dir() && path.join("manifest.json").is_file() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}
