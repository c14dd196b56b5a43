//! Raw little-endian `f32` payload with a JSON sidecar next to it
//! (`scan.raw` + `scan.json`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DType, Volume4D};
use crate::error::{Error, LoadError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    shape: Vec<usize>,
    #[serde(default = "unit_voxels")]
    voxel_dims: [f64; 3],
}

fn unit_voxels() -> [f64; 3] {
    [1.0; 3]
}

pub(super) fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub(super) fn read(path: &Path) -> std::result::Result<Volume4D, LoadError> {
    let sidecar_file = sidecar_path(path);
    let sidecar_err = |detail: String| LoadError::Sidecar {
        path: sidecar_file.clone(),
        detail,
    };
    let text = fs::read_to_string(&sidecar_file).map_err(|e| sidecar_err(e.to_string()))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| sidecar_err(e.to_string()))?;
    if !(3..=4).contains(&sidecar.shape.len()) || sidecar.shape.contains(&0) {
        return Err(sidecar_err(format!(
            "shape must have 3 or 4 positive entries, got {:?}",
            sidecar.shape
        )));
    }
    let mut dims = [1usize; 4];
    dims[..sidecar.shape.len()].copy_from_slice(&sidecar.shape);

    let bytes = fs::read(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let count: usize = dims.iter().product();
    if bytes.len() < 4 * count {
        return Err(LoadError::Truncated {
            path: path.to_path_buf(),
            expected: 4 * count,
            found: bytes.len(),
        });
    }
    let mut clamped = 0;
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in bytes[..4 * count].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        if !v.is_finite() {
            return Err(LoadError::NonFinite {
                path: path.to_path_buf(),
                index: i,
            });
        }
        if v < 0.0 {
            clamped += 1;
        }
        data.push(v.max(0.0));
    }
    Ok(Volume4D {
        dims,
        data,
        voxel_dims: sidecar.voxel_dims,
        dtype_origin: DType::F32,
        scl_slope: 1.0,
        scl_inter: 0.0,
        orientation: None,
        clamped_negatives: clamped,
    })
}

pub(super) fn write(volume: &Volume4D, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = volume.data().iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let sidecar = Sidecar {
        shape: volume.dims().to_vec(),
        voxel_dims: volume.voxel_dims,
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Serialize(e.to_string()))?;
    fs::write(&side, text).map_err(|e| Error::io(side, e))
}
