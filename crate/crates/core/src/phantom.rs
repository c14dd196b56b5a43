//! Synthetic magnitude data with known noise parameters.
//!
//! Each sample is the root-sum-of-squares of Gaussian components: the
//! noiseless signal `I` spread over the real components plus `τ σ_g`-scaled
//! noise on every component, where `τ` is a spatial noise profile. The
//! Gaussian standard deviation follows from the SNR as `σ_g = m̄ / SNR`.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::background_id::slice_voxels;
use crate::descriptive::Summary;
use crate::distributions::SamplingPath;
use crate::error::{Error, Result};
use crate::field::{Field3, Mask3};
use crate::volume_io::{read_volume, Volume4D};

/// Noiseless signal of the phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalModel {
    /// Same value in every voxel and volume; `0` gives pure noise maps.
    Uniform { value: f64 },
    /// Constant `inside` within an ellipsoid inscribed in the grid (scaled by
    /// `radius`), `outside` elsewhere, identical across volumes.
    Sphere { inside: f64, outside: f64, radius: f64 },
    /// Diffusion-weighted ellipsoid: volume 0 is an unweighted image whose
    /// intensity rises from `0.6 s0` at the centre to `1.4 s0` at the rim,
    /// the other volumes are attenuated by a single fibre population running
    /// around the `z` axis, sampled along evenly spread gradient directions.
    DiffusionSphere { s0: f64, radius: f64, b_value: f64 },
    /// Noiseless data read from a file; its shape overrides `shape`/`k_volumes`.
    Imported { path: PathBuf },
}

/// Spatial multiplier `τ` of the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauProfile {
    Stationary,
    /// Linear in the distance from the grid centre, from `center` there to
    /// `edge` at the corners.
    SphereRamp {
        center: f64,
        edge: f64,
    },
}

impl TauProfile {
    pub fn sphere_ramp() -> Self {
        TauProfile::SphereRamp {
            center: 1.0,
            edge: 1.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub shape: [usize; 3],
    pub k_volumes: usize,
    pub signal: SignalModel,
    pub snr: f64,
    pub n_dof: f64,
    pub tau: TauProfile,
    pub seed: u64,
    /// Uses this `σ_g` instead of `m̄ / SNR` (needed when the signal is 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
}

impl PhantomSpec {
    fn validate(&self) -> Result<()> {
        if self.shape.contains(&0) || self.k_volumes == 0 {
            return Err(Error::Config(format!(
                "shape {:?} and k_volumes {} must be >= 1",
                self.shape, self.k_volumes
            )));
        }
        if !(self.snr.is_finite() && self.snr > 0.0) {
            return Err(Error::Config(format!("snr must be > 0, got {}", self.snr)));
        }
        if !(self.n_dof.is_finite() && self.n_dof > 0.0) {
            return Err(Error::Config(format!("n_dof must be > 0, got {}", self.n_dof)));
        }
        if let Some(s) = self.noise_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Config(format!("noise sigma must be >= 0, got {s}")));
            }
        }
        match self.signal {
            SignalModel::Sphere { radius, .. } | SignalModel::DiffusionSphere { radius, .. } if !(radius > 0.0) => {
                Err(Error::Config(format!("sphere radius must be > 0, got {radius}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhantomOutput {
    pub noisy: Volume4D,
    pub noiseless: Volume4D,
    /// `σ_g · τ` per voxel.
    pub sigma_true: Field3,
    pub n_true: f64,
    pub sigma_g: f64,
    /// Mean unweighted signal inside the object, the SNR reference.
    pub mean_signal: f64,
    pub object_mask: Mask3,
}

/// `σ_g = m̄ / SNR`.
pub fn sigma_from_snr(mean_signal: f64, snr: f64) -> Result<f64> {
    if !(mean_signal > 0.0 && mean_signal.is_finite()) || !(snr > 0.0) {
        return Err(Error::domain(
            "sigma_from_snr",
            format!("mean signal and snr must be > 0, got {mean_signal} and {snr}"),
        ));
    }
    Ok(mean_signal / snr)
}

/// Voxel centre relative to the grid centre.
fn offset(dims: [usize; 3], idx: usize) -> [f64; 3] {
    let c = [idx % dims[0], (idx / dims[0]) % dims[1], idx / (dims[0] * dims[1])];
    [0, 1, 2].map(|i| c[i] as f64 - (dims[i] as f64 - 1.0) / 2.0)
}

/// Offset in units of the half extents, so the inscribed ellipsoid is `|q| ≤ 1`.
fn normalized(dims: [usize; 3], idx: usize) -> [f64; 3] {
    let o = offset(dims, idx);
    [0, 1, 2].map(|i| o[i] / (dims[i] as f64 / 2.0))
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// `τ` field for a grid.
pub fn tau_field(dims: [usize; 3], profile: TauProfile) -> Field3 {
    match profile {
        TauProfile::Stationary => Field3::filled(dims, 1.0),
        TauProfile::SphereRamp { center, edge } => {
            let r_corner = norm(dims.map(|d| (d as f64 - 1.0) / 2.0));
            let values = (0..dims.iter().product())
                .map(|idx| {
                    if r_corner == 0.0 {
                        center
                    } else {
                        center + (edge - center) * (norm(offset(dims, idx)) / r_corner)
                    }
                })
                .collect();
            Field3::new(dims, values).expect("consistent shape")
        }
    }
}

/// Evenly spread unit vectors on the upper hemisphere.
fn gradient_directions(count: usize) -> Vec<[f64; 3]> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

const AXIAL_DIFFUSIVITY: f64 = 1.7e-3;
const RADIAL_DIFFUSIVITY: f64 = 0.2e-3;

/// Noiseless 4D signal, object mask and SNR reference for a spec.
fn noiseless_signal(spec: &PhantomSpec) -> Result<(Volume4D, Mask3, f64)> {
    let dims = spec.shape;
    let n_vox: usize = dims.iter().product();
    let k = spec.k_volumes;
    match &spec.signal {
        SignalModel::Uniform { value } => {
            let v = Volume4D::new([dims[0], dims[1], dims[2], k], vec![*value; n_vox * k])?;
            Ok((v, Mask3::filled(dims, *value > 0.0), *value))
        }
        SignalModel::Sphere {
            inside,
            outside,
            radius,
        } => {
            let mask: Vec<bool> = (0..n_vox).map(|i| norm(normalized(dims, i)) <= *radius).collect();
            let frame: Vec<f64> = mask.iter().map(|&m| if m { *inside } else { *outside }).collect();
            let data = frame.iter().copied().cycle().take(n_vox * k).collect();
            Ok((
                Volume4D::new([dims[0], dims[1], dims[2], k], data)?,
                Mask3::new(dims, mask)?,
                *inside,
            ))
        }
        SignalModel::DiffusionSphere { s0, radius, b_value } => {
            let dirs = gradient_directions(k.saturating_sub(1));
            let mut data = vec![0.0; n_vox * k];
            let mut mask = vec![false; n_vox];
            let (mut b0_sum, mut inside) = (0.0, 0usize);
            for idx in 0..n_vox {
                let q = normalized(dims, idx);
                let rho = norm(q) / radius;
                if rho > 1.0 {
                    continue;
                }
                mask[idx] = true;
                let base = s0 * (0.6 + 0.8 * rho);
                b0_sum += base;
                inside += 1;
                data[idx] = base;
                let around = norm([q[0], q[1], 0.0]);
                let fibre = if around > 0.0 {
                    [-q[1] / around, q[0] / around, 0.0]
                } else {
                    [0.0, 0.0, 1.0]
                };
                for (j, g) in dirs.iter().enumerate() {
                    let cos = g[0] * fibre[0] + g[1] * fibre[1] + g[2] * fibre[2];
                    let d = RADIAL_DIFFUSIVITY + (AXIAL_DIFFUSIVITY - RADIAL_DIFFUSIVITY) * cos * cos;
                    data[(j + 1) * n_vox + idx] = base * (-b_value * d).exp();
                }
            }
            let mean = if inside > 0 { b0_sum / inside as f64 } else { 0.0 };
            Ok((
                Volume4D::new([dims[0], dims[1], dims[2], k], data)?,
                Mask3::new(dims, mask)?,
                mean,
            ))
        }
        SignalModel::Imported { path } => {
            let v = read_volume(path)?;
            let n = v.spatial_len();
            let mask: Vec<bool> = (0..n).map(|i| (0..v.k()).any(|kk| v.frame(kk)[i] > 0.0)).collect();
            let first: Vec<f64> = v.frame(0).iter().copied().filter(|&x| x > 0.0).collect();
            let mean = if first.is_empty() {
                0.0
            } else {
                first.iter().sum::<f64>() / first.len() as f64
            };
            let mask = Mask3::new(v.spatial_dims(), mask)?;
            Ok((v, mask, mean))
        }
    }
}

/// Builds the noiseless data and draws the noisy volume. Volume `k` uses its
/// own ChaCha stream of `seed`, so the result does not depend on scheduling.
pub fn generate(spec: &PhantomSpec) -> Result<PhantomOutput> {
    spec.validate()?;
    let (noiseless, object_mask, mean_signal) = noiseless_signal(spec)?;
    let sigma_g = match spec.noise_sigma {
        Some(s) => s,
        None => sigma_from_snr(mean_signal, spec.snr)
            .map_err(|_| Error::Config("the SNR reference signal is 0; give an explicit noise sigma".into()))?,
    };
    let dims = noiseless.spatial_dims();
    let tau = tau_field(dims, spec.tau);
    let sigma_true = tau.map(|t| sigma_g * t);

    let signal_path = if noiseless.data().iter().any(|&x| x > 0.0) {
        Some(SamplingPath::select(spec.n_dof, 1.0)?)
    } else {
        None
    };
    let noise_path = SamplingPath::select(spec.n_dof, 0.0)?;
    let n_vox = noiseless.spatial_len();
    let frames: Vec<Vec<f64>> = (0..noiseless.k())
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(k as u64);
            let clean = noiseless.frame(k);
            (0..n_vox)
                .map(|i| {
                    let path = if clean[i] > 0.0 {
                        signal_path.as_ref().unwrap()
                    } else {
                        &noise_path
                    };
                    path.draw(&mut rng, clean[i], sigma_true.values()[i])
                })
                .collect()
        })
        .collect();
    let noisy = noiseless.with_data(frames.concat())?;
    Ok(PhantomOutput {
        noisy,
        noiseless,
        sigma_true,
        n_true: spec.n_dof,
        sigma_g,
        mean_signal,
        object_mask,
    })
}

/// `100 (estimated − true) / true`.
pub fn percentage_error(estimated: f64, truth: f64) -> f64 {
    100.0 * (estimated - truth) / truth
}

/// Estimated `σ_g` to compare against a true field.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimated {
    /// `(slice_index, σ̂)` along `axis`; compared with the mean of the true
    /// field over the region voxels of that slice.
    PerSlice { axis: usize, values: Vec<(usize, f64)> },
    /// Voxelwise; NaN entries are skipped.
    Field(Field3),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceError {
    pub slice_index: usize,
    pub estimated: f64,
    pub true_mean: f64,
    pub percent_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Summary of the signed percentage errors.
    pub summary: Summary,
    pub mean_absolute: f64,
    /// Filled for per-slice comparisons.
    pub slices: Vec<SliceError>,
}

fn report(errors: Vec<f64>, slices: Vec<SliceError>) -> Result<ErrorReport> {
    let summary = Summary::of(&errors).ok_or_else(|| Error::EmptyRegion("no voxels to compare".into()))?;
    let mean_absolute = errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64;
    Ok(ErrorReport {
        summary,
        mean_absolute,
        slices,
    })
}

/// Percentage error of `estimated` against `truth` inside `region`.
pub fn evaluate(estimated: &Estimated, truth: &Field3, region: &Mask3) -> Result<ErrorReport> {
    let dims = truth.shape();
    if region.shape() != dims {
        return Err(Error::ShapeMismatch {
            expected: dims.to_vec(),
            actual: region.shape().to_vec(),
        });
    }
    match estimated {
        Estimated::Field(field) => {
            if field.shape() != dims {
                return Err(Error::ShapeMismatch {
                    expected: dims.to_vec(),
                    actual: field.shape().to_vec(),
                });
            }
            let errors = (0..truth.values().len())
                .filter(|&i| region.values()[i] && field.values()[i].is_finite())
                .map(|i| percentage_error(field.values()[i], truth.values()[i]))
                .collect();
            report(errors, Vec::new())
        }
        Estimated::PerSlice { axis, values } => {
            if *axis > 2 {
                return Err(Error::Config(format!("axis must be 0, 1 or 2, got {axis}")));
            }
            let mut slices = Vec::new();
            for &(s, est) in values {
                if s >= dims[*axis] {
                    return Err(Error::domain("evaluate", format!("slice {s} is out of range")));
                }
                let inside: Vec<f64> = slice_voxels(dims, *axis, s)
                    .into_iter()
                    .filter(|&v| region.values()[v])
                    .map(|v| truth.values()[v])
                    .collect();
                if inside.is_empty() || !est.is_finite() {
                    continue;
                }
                let true_mean = inside.iter().sum::<f64>() / inside.len() as f64;
                slices.push(SliceError {
                    slice_index: s,
                    estimated: est,
                    true_mean,
                    percent_error: percentage_error(est, true_mean),
                });
            }
            report(slices.iter().map(|s| s.percent_error).collect(), slices)
        }
    }
}
