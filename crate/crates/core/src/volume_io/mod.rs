//! 4D volumes and their on-disk formats.
//!
//! Supported inputs are NIfTI-1 (`.nii`, `.nii.gz`, `.hdr`/`.img` pairs,
//! either byte order) and raw little-endian `f32` files accompanied by a
//! JSON sidecar `{"shape": [...], "voxel_dims": [...]}`. Samples are held in
//! double precision after applying `scl_slope`/`scl_inter`.

mod nifti;
mod raw;
mod report;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, LoadError, Result};
use crate::field::{Field3, Mask3};

pub use nifti::Orientation;
pub use report::{read_report, write_report, Report, ReportFormat, ReportMetadata, ReportRecord};

/// Storage type a volume was decoded from, or will be encoded to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    I16,
    U16,
    I32,
    #[default]
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::I16 | DType::U16 => 2,
            DType::I32 | DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

impl std::str::FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "u8" | "uint8" => Ok(DType::U8),
            "i16" | "int16" => Ok(DType::I16),
            "u16" | "uint16" => Ok(DType::U16),
            "i32" | "int32" => Ok(DType::I32),
            "f32" | "float32" => Ok(DType::F32),
            "f64" | "float64" => Ok(DType::F64),
            other => Err(format!("unknown dtype `{other}`")),
        }
    }
}

/// An `X × Y × Z × K` grid of magnitude samples, `x` varying fastest and
/// the volume index `k` slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume4D {
    dims: [usize; 4],
    data: Vec<f64>,
    pub voxel_dims: [f64; 3],
    pub dtype_origin: DType,
    pub scl_slope: f64,
    pub scl_inter: f64,
    pub orientation: Option<Orientation>,
    /// Negative samples clamped to zero at load time.
    pub clamped_negatives: usize,
}

impl Volume4D {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.contains(&0) || data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: dims.to_vec(),
                actual: vec![data.len()],
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(
                "Volume4D::new",
                format!("non-finite sample at element {i}"),
            ));
        }
        Ok(Self {
            dims,
            data,
            voxel_dims: [1.0; 3],
            dtype_origin: DType::F64,
            scl_slope: 1.0,
            scl_inter: 0.0,
            orientation: None,
            clamped_negatives: 0,
        })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self::new(dims, vec![0.0; dims.iter().product()]).expect("valid zero volume")
    }

    /// A single-volume (`K = 1`) view of a 3D field.
    pub fn from_field(field: &Field3) -> Self {
        let [x, y, z] = field.shape();
        Self::new([x, y, z, 1], field.values().to_vec()).expect("field values are finite")
    }

    pub fn from_mask(mask: &Mask3) -> Self {
        let [x, y, z] = mask.shape();
        let data = mask.values().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::new([x, y, z, 1], data).expect("mask values are finite")
    }

    /// Replaces the samples, keeping the geometry metadata.
    pub fn with_data(&self, data: Vec<f64>) -> Result<Self> {
        let mut out = Self::new(self.dims, data)?;
        out.voxel_dims = self.voxel_dims;
        out.orientation = self.orientation.clone();
        out.dtype_origin = self.dtype_origin;
        Ok(out)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn spatial_dims(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims[2]]
    }

    pub fn spatial_len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Number of volumes `K`.
    pub fn k(&self) -> usize {
        self.dims[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Samples of volume `k`.
    pub fn frame(&self, k: usize) -> &[f64] {
        let n = self.spatial_len();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, z: usize, k: usize) -> f64 {
        self.data[x + self.dims[0] * (y + self.dims[1] * (z + self.dims[2] * k))]
    }

    /// The first volume as a 3D field.
    pub fn to_field(&self) -> Field3 {
        Field3::new(self.spatial_dims(), self.frame(0).to_vec()).expect("consistent shape")
    }

    /// Nonzero voxels of the first volume.
    pub fn to_mask(&self) -> Mask3 {
        Mask3::new(self.spatial_dims(), self.frame(0).iter().map(|&v| v != 0.0).collect()).expect("consistent shape")
    }
}

fn has_suffix(path: &Path, suffix: &str) -> bool {
    path.to_string_lossy().to_ascii_lowercase().ends_with(suffix)
}

/// Loads a volume, dispatching on content (gzip / NIfTI magic) and on the
/// `.raw` extension for the sidecar format. 3D inputs become `K = 1`.
pub fn read_volume(path: impl AsRef<Path>) -> std::result::Result<Volume4D, LoadError> {
    let path = path.as_ref();
    if has_suffix(path, ".raw") {
        return raw::read(path);
    }
    nifti::read(path)
}

/// Writes `volume` as NIfTI-1 (`.nii`, `.nii.gz`) or raw `f32` + sidecar (`.raw`).
pub fn write_volume(volume: &Volume4D, path: impl AsRef<Path>, dtype: DType) -> Result<()> {
    let path = path.as_ref();
    if has_suffix(path, ".raw") {
        if dtype != DType::F32 {
            return Err(Error::Config("raw output is always f32".into()));
        }
        return raw::write(volume, path);
    }
    nifti::write(volume, path, dtype)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_x_fastest() {
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let v = Volume4D::new([2, 3, 2, 2], data).unwrap();
        assert_eq!(v.get(1, 0, 0, 0), 1.0);
        assert_eq!(v.get(0, 1, 0, 0), 2.0);
        assert_eq!(v.get(0, 0, 1, 0), 6.0);
        assert_eq!(v.get(0, 0, 0, 1), 12.0);
        assert_eq!(v.frame(1)[0], 12.0);
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Volume4D::new([2, 2, 2, 1], vec![0.0; 7]).is_err());
        assert!(Volume4D::new([0, 2, 2, 1], vec![]).is_err());
        assert!(Volume4D::new([1, 1, 1, 1], vec![f64::NAN]).is_err());
    }
}
