//! Voxelwise `(σ_g, N)` maps from noise-only acquisitions.
//!
//! Every voxel pools the samples of all `K` volumes inside a box window
//! centred on it. Windows are clipped at the volume border rather than
//! padded, so border voxels see fewer samples.

use rayon::prelude::*;
use serde::Serialize;

use crate::descriptive::Summary;
use crate::error::{Error, Result};
use crate::estimators::{estimate, Method, SampleSet};
use crate::field::{Field3, Mask3};
use crate::volume_io::Volume4D;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    /// `σ̂_g` per voxel, NaN where the window was degenerate.
    pub sigma: Field3,
    /// `N̂` per voxel, NaN where the window was degenerate.
    pub n_dof: Field3,
    pub valid: Mask3,
    pub window: [usize; 3],
}

fn check_window(window: [usize; 3]) -> Result<()> {
    if window.iter().any(|&w| w == 0 || w % 2 == 0) {
        return Err(Error::Config(format!(
            "window sides must be odd and >= 1, got {window:?}"
        )));
    }
    Ok(())
}

fn clipped(center: usize, half: usize, extent: usize) -> std::ops::Range<usize> {
    center.saturating_sub(half)..(center + half + 1).min(extent)
}

/// Estimates `(σ_g, N)` in a window around every voxel.
pub fn estimate_field(noise_maps: &Volume4D, window: [usize; 3], method: Method) -> Result<NoiseField> {
    check_window(window)?;
    let dims = noise_maps.spatial_dims();
    let half = window.map(|w| w / 2);
    let frames: Vec<&[f64]> = (0..noise_maps.k()).map(|k| noise_maps.frame(k)).collect();

    let estimates: Vec<Option<(f64, f64)>> = (0..noise_maps.spatial_len())
        .into_par_iter()
        .map(|idx| {
            let (x, y, z) = (idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1]));
            let mut samples = Vec::new();
            for zz in clipped(z, half[2], dims[2]) {
                for yy in clipped(y, half[1], dims[1]) {
                    for xx in clipped(x, half[0], dims[0]) {
                        let v = xx + dims[0] * (yy + dims[1] * zz);
                        samples.extend(frames.iter().map(|f| f[v]));
                    }
                }
            }
            let set = SampleSet::new(samples).ok()?;
            estimate(&set, method).ok().map(|e| (e.sigma_g, e.n_dof))
        })
        .collect();

    let valid: Vec<bool> = estimates.iter().map(Option::is_some).collect();
    let sigma = estimates.iter().map(|e| e.map_or(f64::NAN, |v| v.0)).collect();
    let n_dof = estimates.iter().map(|e| e.map_or(f64::NAN, |v| v.1)).collect();
    Ok(NoiseField {
        sigma: Field3::new(dims, sigma)?,
        n_dof: Field3::new(dims, n_dof)?,
        valid: Mask3::new(dims, valid)?,
        window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSummary {
    pub sigma: Summary,
    pub n_dof: Summary,
}

/// Statistics of the valid voxels of `field` inside `region`.
pub fn field_summary(field: &NoiseField, region: &Mask3) -> Result<FieldSummary> {
    if region.shape() != field.sigma.shape() {
        return Err(Error::ShapeMismatch {
            expected: field.sigma.shape().to_vec(),
            actual: region.shape().to_vec(),
        });
    }
    let selected: Vec<usize> = (0..region.values().len())
        .filter(|&i| region.values()[i] && field.valid.values()[i])
        .collect();
    let pick = |f: &Field3| selected.iter().map(|&i| f.values()[i]).collect::<Vec<_>>();
    match (Summary::of(&pick(&field.sigma)), Summary::of(&pick(&field.n_dof))) {
        (Some(sigma), Some(n_dof)) => Ok(FieldSummary { sigma, n_dof }),
        _ => Err(Error::EmptyRegion("no valid voxels inside the region".into())),
    }
}
