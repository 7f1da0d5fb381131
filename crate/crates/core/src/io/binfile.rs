//! Binary on-disk formats for point clouds and flow fields.
//!
//! Both formats are little-endian, f32-precision, and end in a CRC-32 of
//! everything after the magic, so silent corruption is caught at load time.
//!
//! ```text
//! cloud:  "SFCLOUD1" | count: u32 | count * (x, y, z): f32 | crc32: u32
//! flow:   "SFFLOW01" | count: u32 | count * valid: u8
//!                    | count * (dx, dy, dz): f32 | crc32: u32
//! ```

use crate::cloud::FlowField;
use crate::geometry::Vec3;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CLOUD_MAGIC: &[u8; 8] = b"SFCLOUD1";
pub const FLOW_MAGIC: &[u8; 8] = b"SFFLOW01";

const fn make_crc_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

static CRC_TABLE: [u32; 256] = make_crc_table();

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(data: &[u8]) -> u32 {
    let mut c = 0xFFFF_FFFFu32;
    for &b in data {
        c = CRC_TABLE[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

#[derive(Debug, Error)]
pub enum BinFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic, expected a {expected} file")]
    BadMagic { path: PathBuf, expected: &'static str },
    #[error("{path}: truncated ({got} bytes, need {need})")]
    Truncated { path: PathBuf, got: usize, need: usize },
    #[error("{path}: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { path: PathBuf, stored: u32, computed: u32 },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BinFileError + '_ {
    move |source| BinFileError::Io { path: path.to_path_buf(), source }
}

fn push_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&(v as f32).to_le_bytes());
}

fn read_f32(buf: &[u8], off: usize) -> f64 {
    f32::from_le_bytes([buf[off], buf[off + 1], buf[off + 2], buf[off + 3]]) as f64
}

fn check_header(
    path: &Path,
    data: &[u8],
    magic: &'static [u8; 8],
    expected: &'static str,
) -> Result<usize, BinFileError> {
    if data.len() < 12 {
        return Err(BinFileError::Truncated {
            path: path.to_path_buf(),
            got: data.len(),
            need: 12,
        });
    }
    if &data[..8] != magic {
        return Err(BinFileError::BadMagic { path: path.to_path_buf(), expected });
    }
    Ok(u32::from_le_bytes([data[8], data[9], data[10], data[11]]) as usize)
}

fn check_len_and_crc(path: &Path, data: &[u8], need: usize) -> Result<(), BinFileError> {
    if data.len() < need {
        return Err(BinFileError::Truncated { path: path.to_path_buf(), got: data.len(), need });
    }
    let stored =
        u32::from_le_bytes([data[need - 4], data[need - 3], data[need - 2], data[need - 1]]);
    let computed = crc32(&data[8..need - 4]);
    if stored != computed {
        return Err(BinFileError::ChecksumMismatch { path: path.to_path_buf(), stored, computed });
    }
    Ok(())
}

/// Writes points as f32 triples. Values are narrowed from f64; for
/// coordinates below ~1 km that loses under a tenth of a millimeter.
pub fn save_cloud_points(path: &Path, points: &[Vec3]) -> Result<(), BinFileError> {
    let mut buf = Vec::with_capacity(16 + points.len() * 12);
    buf.extend_from_slice(CLOUD_MAGIC);
    buf.extend_from_slice(&(points.len() as u32).to_le_bytes());
    for p in points {
        push_f32(&mut buf, p.x);
        push_f32(&mut buf, p.y);
        push_f32(&mut buf, p.z);
    }
    let crc = crc32(&buf[8..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, &buf).map_err(io_err(path))
}

pub fn load_cloud_points(path: &Path) -> Result<Vec<Vec3>, BinFileError> {
    let data = std::fs::read(path).map_err(io_err(path))?;
    let count = check_header(path, &data, CLOUD_MAGIC, "cloud")?;
    let need = 12 + count * 12 + 4;
    check_len_and_crc(path, &data, need)?;
    Ok((0..count)
        .map(|i| {
            let off = 12 + i * 12;
            Vec3::new(read_f32(&data, off), read_f32(&data, off + 4), read_f32(&data, off + 8))
        })
        .collect())
}

/// Writes a flow field: per-point validity bytes followed by f32 vectors.
pub fn save_flow(path: &Path, flow: &FlowField) -> Result<(), BinFileError> {
    let n = flow.len();
    let mut buf = Vec::with_capacity(16 + n * 13);
    buf.extend_from_slice(FLOW_MAGIC);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend(flow.valid.iter().map(|&v| v as u8));
    for v in &flow.vectors {
        push_f32(&mut buf, v.x);
        push_f32(&mut buf, v.y);
        push_f32(&mut buf, v.z);
    }
    let crc = crc32(&buf[8..]);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, &buf).map_err(io_err(path))
}

pub fn load_flow(path: &Path) -> Result<FlowField, BinFileError> {
    let data = std::fs::read(path).map_err(io_err(path))?;
    let count = check_header(path, &data, FLOW_MAGIC, "flow")?;
    let need = 12 + count + count * 12 + 4;
    check_len_and_crc(path, &data, need)?;
    let valid: Vec<bool> = data[12..12 + count].iter().map(|&b| b != 0).collect();
    let base = 12 + count;
    let vectors: Vec<Vec3> = (0..count)
        .map(|i| {
            let off = base + i * 12;
            Vec3::new(read_f32(&data, off), read_f32(&data, off + 4), read_f32(&data, off + 8))
        })
        .collect();
    Ok(FlowField::new(vectors, valid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn crc32_matches_the_standard_check_value() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32(b""), 0);
    }

    #[test]
    fn cloud_round_trip_is_exact_at_f32_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.sfc");
        // f32-representable coordinates survive the trip bit for bit
        let points = vec![Vec3::new(1.5, -2.25, 0.125), Vec3::new(1000.5, 0.0, -3.75), Vec3::ZERO];
        save_cloud_points(&path, &points).unwrap();
        assert_eq!(load_cloud_points(&path).unwrap(), points);

        // arbitrary f64s come back as their f32 narrowing
        let fine = vec![Vec3::new(0.1, 0.2, 0.3)];
        save_cloud_points(&path, &fine).unwrap();
        let loaded = load_cloud_points(&path).unwrap();
        assert_eq!(loaded[0].x, 0.1f32 as f64);
        assert!((loaded[0].x - 0.1).abs() < 1e-7);
    }

    #[test]
    fn flow_round_trip_preserves_validity() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.sff");
        let flow = FlowField::new(
            vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.5, -0.5, 0.25), Vec3::ZERO],
            vec![true, false, true],
        );
        save_flow(&path, &flow).unwrap();
        let loaded = load_flow(&path).unwrap();
        assert_eq!(loaded.vectors, flow.vectors);
        assert_eq!(loaded.valid, flow.valid);
    }

    #[test]
    fn empty_files_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("e.sfc");
        save_cloud_points(&path, &[]).unwrap();
        assert!(load_cloud_points(&path).unwrap().is_empty());
        let path = dir.path().join("e.sff");
        save_flow(&path, &FlowField::zeros(0)).unwrap();
        assert!(load_flow(&path).unwrap().is_empty());
    }

    #[test]
    fn corrupted_payload_is_caught_by_checksum() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.sfc");
        save_cloud_points(&path, &[Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[14] ^= 0x40; // flip one payload bit
        std::fs::write(&path, &bytes).unwrap();
        let err = load_cloud_points(&path).unwrap_err();
        assert!(matches!(err, BinFileError::ChecksumMismatch { .. }), "got {err}");
        assert!(err.to_string().contains("c.sfc"));
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("x.sff");
        save_cloud_points(&path, &[]).unwrap(); // cloud bytes at a flow path
        let err = load_flow(&path).unwrap_err();
        assert!(matches!(err, BinFileError::BadMagic { expected: "flow", .. }));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.sfc");
        save_cloud_points(&path, &[Vec3::ZERO, Vec3::ZERO]).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 6]).unwrap();
        assert!(matches!(load_cloud_points(&path).unwrap_err(), BinFileError::Truncated { .. }));
        std::fs::write(&path, &bytes[..5]).unwrap();
        assert!(matches!(load_cloud_points(&path).unwrap_err(), BinFileError::Truncated { .. }));
    }

    #[test]
    fn missing_file_reports_the_path() {
        let err = load_cloud_points(Path::new("/nonexistent/q.sfc")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/q.sfc"));
    }
}
