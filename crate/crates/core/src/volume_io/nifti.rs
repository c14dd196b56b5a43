//! Minimal NIfTI-1 codec.
//!
//! Only the fields needed to place samples in memory are interpreted
//! (`dim`, `datatype`, `pixdim`, `vox_offset`, `scl_slope`, `scl_inter`,
//! magic). Spatial orientation is carried through untouched; header
//! extensions are skipped.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::{DType, Volume4D};
use crate::error::{Error, LoadError, Result};

const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: usize = 352;

/// Orientation fields echoed back on write.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orientation {
    pub qform_code: i16,
    pub sform_code: i16,
    pub qfac: f32,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub xyzt_units: u8,
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    swapped: bool,
}

impl HeaderReader<'_> {
    fn i16(&self, offset: usize) -> i16 {
        let raw = [self.bytes[offset], self.bytes[offset + 1]];
        if self.swapped {
            i16::from_be_bytes(raw)
        } else {
            i16::from_le_bytes(raw)
        }
    }

    fn f32(&self, offset: usize) -> f32 {
        let raw: [u8; 4] = self.bytes[offset..offset + 4].try_into().unwrap();
        if self.swapped {
            f32::from_be_bytes(raw)
        } else {
            f32::from_le_bytes(raw)
        }
    }
}

fn dtype_from_code(code: i16) -> Option<DType> {
    Some(match code {
        2 => DType::U8,
        4 => DType::I16,
        8 => DType::I32,
        16 => DType::F32,
        64 => DType::F64,
        512 => DType::U16,
        _ => return None,
    })
}

fn dtype_code(dtype: DType) -> i16 {
    match dtype {
        DType::U8 => 2,
        DType::I16 => 4,
        DType::I32 => 8,
        DType::F32 => 16,
        DType::F64 => 64,
        DType::U16 => 512,
    }
}

fn read_maybe_gz(path: &Path) -> std::result::Result<Vec<u8>, LoadError> {
    let io_err = |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = fs::read(path).map_err(io_err)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn paired_image_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for (from, to) in [(".hdr.gz", ".img.gz"), (".hdr", ".img"), (".HDR", ".IMG")] {
        if let Some(stem) = s.strip_suffix(from) {
            return PathBuf::from(format!("{stem}{to}"));
        }
    }
    path.with_extension("img")
}

pub(super) fn read(path: &Path) -> std::result::Result<Volume4D, LoadError> {
    let bytes = read_maybe_gz(path)?;
    if bytes.len() < HEADER_SIZE {
        return Err(LoadError::UnknownFormat {
            path: path.to_path_buf(),
            detail: format!("{} bytes is shorter than a NIfTI-1 header", bytes.len()),
        });
    }
    let magic = &bytes[344..348];
    let single_file = match magic {
        b"n+1\0" => true,
        b"ni1\0" => false,
        _ => {
            return Err(LoadError::UnknownFormat {
                path: path.to_path_buf(),
                detail: "missing NIfTI-1 magic".into(),
            })
        }
    };
    let le_dim0 = i16::from_le_bytes([bytes[40], bytes[41]]);
    let header = HeaderReader {
        bytes: &bytes,
        swapped: !(1..=7).contains(&le_dim0),
    };
    let bad = |field: &'static str, detail: String| LoadError::BadField {
        path: path.to_path_buf(),
        field,
        detail,
    };

    let ndim = header.i16(40);
    if !(1..=7).contains(&ndim) {
        return Err(bad("dim[0]", format!("{ndim} is outside 1..=7 in either byte order")));
    }
    let mut dims = [1usize; 4];
    for i in 1..=ndim as usize {
        let d = header.i16(40 + 2 * i);
        if d < 1 {
            return Err(bad("dim", format!("dim[{i}] = {d}")));
        }
        if i <= 4 {
            dims[i - 1] = d as usize;
        } else if d != 1 {
            return Err(bad(
                "dim",
                format!("dimensions beyond the fourth are unsupported (dim[{i}] = {d})"),
            ));
        }
    }
    let code = header.i16(70);
    let dtype = dtype_from_code(code).ok_or(LoadError::UnsupportedDtype {
        path: path.to_path_buf(),
        code,
    })?;
    let mut voxel_dims = [1.0; 3];
    for (i, v) in voxel_dims.iter_mut().enumerate() {
        let p = header.f32(76 + 4 * (i + 1)).abs() as f64;
        if p.is_finite() && p > 0.0 {
            *v = p;
        }
    }
    let vox_offset = header.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= 0.0) {
        return Err(bad("vox_offset", format!("{vox_offset}")));
    }
    let mut slope = header.f32(112) as f64;
    let mut inter = header.f32(116) as f64;
    if slope == 0.0 || !slope.is_finite() {
        slope = 1.0;
        inter = 0.0;
    }
    if !inter.is_finite() {
        inter = 0.0;
    }
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = header.f32(280 + 16 * r + 4 * c);
        }
    }
    let orientation = Orientation {
        qform_code: header.i16(252),
        sform_code: header.i16(254),
        qfac: header.f32(76),
        quatern: [header.f32(256), header.f32(260), header.f32(264)],
        qoffset: [header.f32(268), header.f32(272), header.f32(276)],
        srow,
        xyzt_units: bytes[123],
    };

    let (payload, offset) = if single_file {
        let offset = vox_offset as usize;
        if offset < SINGLE_FILE_OFFSET {
            return Err(bad(
                "vox_offset",
                format!("{offset} < {SINGLE_FILE_OFFSET} for a single-file image"),
            ));
        }
        (bytes.as_slice(), offset)
    } else {
        (&[][..], vox_offset as usize)
    };
    let image_storage;
    let payload = if single_file {
        payload
    } else {
        image_storage = read_maybe_gz(&paired_image_path(path))?;
        image_storage.as_slice()
    };

    let count: usize = dims.iter().product();
    let needed = count * dtype.size();
    let available = payload.len().saturating_sub(offset);
    if available < needed {
        return Err(LoadError::Truncated {
            path: path.to_path_buf(),
            expected: needed,
            found: available,
        });
    }
    let raw = &payload[offset..offset + needed];
    let mut data = decode(raw, dtype, header.swapped);
    let mut clamped = 0;
    for (i, v) in data.iter_mut().enumerate() {
        *v = *v * slope + inter;
        if !v.is_finite() {
            return Err(LoadError::NonFinite {
                path: path.to_path_buf(),
                index: i,
            });
        }
        if *v < 0.0 {
            *v = 0.0;
            clamped += 1;
        }
    }
    if clamped > 0 {
        log::warn!("{}: clamped {clamped} negative samples to zero", path.display());
    }
    Ok(Volume4D {
        dims,
        data,
        voxel_dims,
        dtype_origin: dtype,
        scl_slope: slope,
        scl_inter: inter,
        orientation: Some(orientation),
        clamped_negatives: clamped,
    })
}

fn decode(raw: &[u8], dtype: DType, swapped: bool) -> Vec<f64> {
    macro_rules! decode_as {
        ($t:ty, $n:expr) => {
            raw.chunks_exact($n)
                .map(|c| {
                    let arr: [u8; $n] = c.try_into().unwrap();
                    (if swapped {
                        <$t>::from_be_bytes(arr)
                    } else {
                        <$t>::from_le_bytes(arr)
                    }) as f64
                })
                .collect()
        };
    }
    match dtype {
        DType::U8 => raw.iter().map(|&b| b as f64).collect(),
        DType::I16 => decode_as!(i16, 2),
        DType::U16 => decode_as!(u16, 2),
        DType::I32 => decode_as!(i32, 4),
        DType::F32 => decode_as!(f32, 4),
        DType::F64 => decode_as!(f64, 8),
    }
}

fn encode(values: &[f64], dtype: DType) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * dtype.size());
    for &v in values {
        match dtype {
            DType::U8 => out.push(v.round().clamp(0.0, u8::MAX as f64) as u8),
            DType::I16 => out.extend((v.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes()),
            DType::U16 => out.extend((v.round().clamp(0.0, u16::MAX as f64) as u16).to_le_bytes()),
            DType::I32 => out.extend((v.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32).to_le_bytes()),
            DType::F32 => out.extend((v as f32).to_le_bytes()),
            DType::F64 => out.extend(v.to_le_bytes()),
        }
    }
    out
}

pub(super) fn encode_header(volume: &Volume4D, dtype: DType) -> [u8; HEADER_SIZE] {
    let mut h = [0u8; HEADER_SIZE];
    let put_i16 = |h: &mut [u8; HEADER_SIZE], off: usize, v: i16| h[off..off + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |h: &mut [u8; HEADER_SIZE], off: usize, v: f32| h[off..off + 4].copy_from_slice(&v.to_le_bytes());

    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    let [x, y, z, k] = volume.dims();
    let ndim = if k > 1 { 4 } else { 3 };
    let dim = [ndim, x as i16, y as i16, z as i16, k as i16, 1, 1, 1];
    for (i, d) in dim.iter().enumerate() {
        put_i16(&mut h, 40 + 2 * i, *d);
    }
    put_i16(&mut h, 70, dtype_code(dtype));
    put_i16(&mut h, 72, (dtype.size() * 8) as i16);
    let orientation = volume.orientation.clone();
    let qfac = orientation
        .as_ref()
        .map(|o| o.qfac)
        .filter(|q| *q == 1.0 || *q == -1.0)
        .unwrap_or(1.0);
    put_f32(&mut h, 76, qfac);
    for i in 0..3 {
        put_f32(&mut h, 80 + 4 * i, volume.voxel_dims[i] as f32);
    }
    put_f32(&mut h, 92, 1.0);
    put_f32(&mut h, 108, SINGLE_FILE_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    put_f32(&mut h, 116, 0.0);
    if let Some(o) = orientation {
        h[123] = o.xyzt_units;
        put_i16(&mut h, 252, o.qform_code);
        put_i16(&mut h, 254, o.sform_code);
        for i in 0..3 {
            put_f32(&mut h, 256 + 4 * i, o.quatern[i]);
            put_f32(&mut h, 268 + 4 * i, o.qoffset[i]);
        }
        for (r, row) in o.srow.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                put_f32(&mut h, 280 + 16 * r + 4 * c, *v);
            }
        }
    } else {
        h[123] = 2 | 8; // mm, seconds
    }
    h[344..348].copy_from_slice(b"n+1\0");
    h
}

pub(super) fn write(volume: &Volume4D, path: &Path, dtype: DType) -> Result<()> {
    let [x, y, z, k] = volume.dims();
    if [x, y, z, k].iter().any(|&d| d > i16::MAX as usize) {
        return Err(Error::Config(format!(
            "dimension too large for NIfTI-1: {:?}",
            volume.dims()
        )));
    }
    let mut bytes = Vec::with_capacity(SINGLE_FILE_OFFSET + volume.data().len() * dtype.size());
    bytes.extend_from_slice(&encode_header(volume, dtype));
    bytes.extend_from_slice(&[0u8; 4]);
    bytes.extend(encode(volume.data(), dtype));

    let io = |e| Error::io(path, e);
    if super::has_suffix(path, ".gz") {
        let file = fs::File::create(path).map_err(io)?;
        let mut enc = GzEncoder::new(std::io::BufWriter::new(file), Compression::fast());
        enc.write_all(&bytes).map_err(io)?;
        enc.finish().map_err(io)?.flush().map_err(io)?;
    } else {
        fs::write(path, &bytes).map_err(io)?;
    }
    Ok(())
}
