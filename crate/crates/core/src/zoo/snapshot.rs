//! Parameter snapshots: a JSON manifest (shapes and partition) next to a
//! binary little-endian f64 array. The round trip is bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ZooError;

pub const SNAPSHOT_FORMAT: &str = "gamedyn-params-v1";

/// Shape manifest for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub format: String,
    /// Total number of values in the binary file.
    pub len: usize,
    /// Player partition of the vector.
    pub split: usize,
    /// Weight-matrix shapes `(out, in)` in layer order, generator layers
    /// first; empty for analytic games. Bias lengths are implied by `out`.
    pub layers: Vec<(usize, usize)>,
    /// Binary payload file name, relative to the manifest.
    pub bin: String,
}

impl SnapshotManifest {
    pub fn new(len: usize, split: usize, layers: Vec<(usize, usize)>, bin: String) -> Self {
        Self {
            format: SNAPSHOT_FORMAT.to_string(),
            len,
            split,
            layers,
            bin,
        }
    }
}

/// Writes `<name>.json` and `<name>.bin` under `dir`.
pub fn write_snapshot(
    dir: &Path,
    name: &str,
    split: usize,
    layers: Vec<(usize, usize)>,
    values: &[f64],
) -> Result<PathBuf, ZooError> {
    let manifest = SnapshotManifest::new(values.len(), split, layers, format!("{name}.bin"));
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(dir.join(format!("{name}.bin")), bytes)?;
    let json_path = dir.join(format!("{name}.json"));
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&json_path, text)?;
    Ok(json_path)
}

/// Reads a manifest and its binary payload back.
pub fn read_snapshot(json_path: &Path) -> Result<(SnapshotManifest, Vec<f64>), ZooError> {
    let manifest: SnapshotManifest = serde_json::from_str(&fs::read_to_string(json_path)?)?;
    if manifest.format != SNAPSHOT_FORMAT {
        return Err(ZooError::BadSnapshot {
            reason: format!("unsupported format {:?}", manifest.format),
        });
    }
    let bin_path = json_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.bin);
    let bytes = fs::read(bin_path)?;
    if bytes.len() != manifest.len * 8 {
        return Err(ZooError::BadSnapshot {
            reason: format!(
                "payload has {} bytes, manifest says {} values",
                bytes.len(),
                manifest.len
            ),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if manifest.split >= manifest.len && manifest.len > 0 {
        return Err(ZooError::BadSnapshot {
            reason: format!("split {} out of range for {}", manifest.split, manifest.len),
        });
    }
    Ok((manifest, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let values = vec![
            0.1,
            -1.0 / 3.0,
            f64::MIN_POSITIVE,
            1.23456789e300,
            -0.0,
            std::f64::consts::E,
        ];
        let path = write_snapshot(dir.path(), "params", 2, vec![(2, 1)], &values).unwrap();
        let (manifest, back) = read_snapshot(&path).unwrap();
        assert_eq!(manifest.split, 2);
        assert_eq!(manifest.layers, vec![(2, 1)]);
        assert_eq!(values.len(), back.len());
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn length_mismatch_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_snapshot(dir.path(), "p", 1, vec![], &[1.0, 2.0]).unwrap();
        std::fs::write(dir.path().join("p.bin"), [0u8; 9]).unwrap();
        assert!(matches!(
            read_snapshot(&path),
            Err(ZooError::BadSnapshot { .. })
        ));
    }
}
