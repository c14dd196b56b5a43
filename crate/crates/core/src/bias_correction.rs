//! Noncentral chi signal bias correction valid for real-valued `N`.
//!
//! Given a first-moment estimate `m̂` of a magnitude voxel together with
//! `σ_g` and `N`, the noiseless signal `η` solves the fixed point
//! `η = √(m̂² + (ξ(η) - 2N)σ_g²)` where `ξ` is the correction factor.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::{ncchi_mean, NcChiParams};
use crate::error::{Error, Result};
use crate::field::Field3;
use crate::specfun::{hyp1f1, lgamma};
use crate::volume_io::Volume4D;

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERATIONS: usize = 500;

/// `β_N = √2 Γ(N + 1/2) / Γ(N)`.
pub fn beta_n(n_dof: f64) -> f64 {
    std::f64::consts::SQRT_2 * (lgamma(n_dof + 0.5) - lgamma(n_dof)).exp()
}

/// Correction factor `ξ(η | σ_g, N) = 2N + η²/σ_g² - (β_N ₁F₁(-1/2; N; -η²/2σ_g²))²`.
pub fn xi(eta: f64, sigma_g: f64, n_dof: f64) -> Result<f64> {
    NcChiParams::new(eta, sigma_g, n_dof)?;
    Ok(xi_unchecked(eta, sigma_g, n_dof))
}

fn xi_unchecked(eta: f64, sigma_g: f64, n_dof: f64) -> f64 {
    let snr2 = eta * eta / (sigma_g * sigma_g);
    let mean = beta_n(n_dof) * hyp1f1(-0.5, n_dof, -0.5 * snr2);
    2.0 * n_dof + snr2 - mean * mean
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionInput {
    pub m_hat: f64,
    pub sigma_g: f64,
    pub n_dof: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrectionOutcome {
    pub eta: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The radicand went negative and `η` was clamped to the noise floor.
    pub clamped: bool,
}

/// Solves for `η` by fixed-point iteration starting at `η₀ = m̂`.
///
/// `σ_g = 0` is the noiseless limit and returns `m̂` unchanged.
pub fn correct_eta(input: CorrectionInput, tolerance: f64, max_iterations: usize) -> Result<CorrectionOutcome> {
    let CorrectionInput { m_hat, sigma_g, n_dof } = input;
    if !(m_hat.is_finite() && m_hat >= 0.0) {
        return Err(Error::domain("correct_eta", format!("m_hat must be >= 0, got {m_hat}")));
    }
    if !(sigma_g.is_finite() && sigma_g >= 0.0) {
        return Err(Error::domain(
            "correct_eta",
            format!("sigma_g must be >= 0, got {sigma_g}"),
        ));
    }
    if !(n_dof.is_finite() && n_dof > 0.0) {
        return Err(Error::domain("correct_eta", format!("n_dof must be > 0, got {n_dof}")));
    }
    if !(tolerance > 0.0) || max_iterations == 0 {
        return Err(Error::Config("tolerance must be > 0 and max_iterations >= 1".into()));
    }
    if sigma_g == 0.0 {
        return Ok(CorrectionOutcome {
            eta: m_hat,
            iterations: 0,
            converged: true,
            clamped: false,
        });
    }
    Ok(fixed_point(m_hat, sigma_g, n_dof, tolerance, max_iterations))
}

fn fixed_point(m_hat: f64, sigma_g: f64, n_dof: f64, tolerance: f64, max_iterations: usize) -> CorrectionOutcome {
    let s2 = sigma_g * sigma_g;
    let mut eta = m_hat;
    let mut clamped = false;
    for iteration in 1..=max_iterations {
        let radicand = m_hat * m_hat + (xi_unchecked(eta, sigma_g, n_dof) - 2.0 * n_dof) * s2;
        clamped = radicand <= 0.0;
        let next = radicand.max(0.0).sqrt();
        let step = (next - eta).abs();
        eta = next;
        if step < tolerance * sigma_g {
            return CorrectionOutcome {
                eta,
                iterations: iteration,
                converged: true,
                clamped,
            };
        }
    }
    CorrectionOutcome {
        eta,
        iterations: max_iterations,
        converged: false,
        clamped,
    }
}

/// A parameter given either once for the whole volume or per voxel.
#[derive(Debug, Clone, PartialEq)]
pub enum SpatialParam {
    Scalar(f64),
    Field(Field3),
}

impl SpatialParam {
    fn check_shape(&self, shape: [usize; 3]) -> Result<()> {
        match self {
            SpatialParam::Field(f) if f.shape() != shape => Err(Error::ShapeMismatch {
                expected: shape.to_vec(),
                actual: f.shape().to_vec(),
            }),
            _ => Ok(()),
        }
    }

    #[inline]
    fn at(&self, voxel: usize) -> f64 {
        match self {
            SpatialParam::Scalar(v) => *v,
            SpatialParam::Field(f) => f.values()[voxel],
        }
    }
}

/// Source of the first-moment estimate `m̂` for each voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Smoothing {
    /// Use the raw magnitude.
    #[default]
    None,
    /// Box average of odd width within each volume, shrinking at borders.
    Boxcar(usize),
}

#[derive(Debug, Clone)]
pub struct VolumeCorrection {
    pub corrected: Volume4D,
    pub clamped: usize,
    pub unconverged: usize,
}

/// Bias-corrects every sample of `volume`.
pub fn correct_volume(
    volume: &Volume4D,
    sigma: &SpatialParam,
    n_dof: &SpatialParam,
    smoothing: Smoothing,
) -> Result<VolumeCorrection> {
    let shape = volume.spatial_dims();
    sigma.check_shape(shape)?;
    n_dof.check_shape(shape)?;
    let m_hat = match smoothing {
        Smoothing::None => volume.data().to_vec(),
        Smoothing::Boxcar(width) => {
            if width == 0 || width % 2 == 0 {
                return Err(Error::Config(format!("boxcar width must be odd and >= 1, got {width}")));
            }
            boxcar(volume, width)
        }
    };
    let spatial = volume.spatial_len();
    let outcomes: Vec<Result<CorrectionOutcome>> = m_hat
        .par_iter()
        .enumerate()
        .map(|(i, &m)| {
            let voxel = i % spatial;
            correct_eta(
                CorrectionInput {
                    m_hat: m,
                    sigma_g: sigma.at(voxel),
                    n_dof: n_dof.at(voxel),
                },
                DEFAULT_TOLERANCE,
                DEFAULT_MAX_ITERATIONS,
            )
        })
        .collect();
    let mut data = Vec::with_capacity(outcomes.len());
    let (mut clamped, mut unconverged) = (0, 0);
    for outcome in outcomes {
        let o = outcome?;
        clamped += o.clamped as usize;
        unconverged += (!o.converged) as usize;
        data.push(o.eta);
    }
    let corrected = volume.with_data(data)?;
    Ok(VolumeCorrection {
        corrected,
        clamped,
        unconverged,
    })
}

fn boxcar(volume: &Volume4D, width: usize) -> Vec<f64> {
    let [nx, ny, nz, nk] = volume.dims();
    let half = width / 2;
    let mut out = vec![0.0; volume.data().len()];
    out.par_chunks_mut(nx * ny * nz).enumerate().for_each(|(k, chunk)| {
        let src = volume.frame(k);
        for z in 0..nz {
            let (z0, z1) = (z.saturating_sub(half), (z + half).min(nz - 1));
            for y in 0..ny {
                let (y0, y1) = (y.saturating_sub(half), (y + half).min(ny - 1));
                for x in 0..nx {
                    let (x0, x1) = (x.saturating_sub(half), (x + half).min(nx - 1));
                    let mut acc = 0.0;
                    let mut count = 0usize;
                    for zz in z0..=z1 {
                        for yy in y0..=y1 {
                            let row = nx * (yy + ny * zz);
                            for xx in x0..=x1 {
                                acc += src[row + xx];
                                count += 1;
                            }
                        }
                    }
                    chunk[x + nx * (y + ny * z)] = acc / count as f64;
                }
            }
        }
    });
    debug_assert_eq!(out.len(), nx * ny * nz * nk);
    out
}

/// First-moment oracle used to validate the correction round trip.
pub fn expected_magnitude(eta: f64, sigma_g: f64, n_dof: f64) -> Result<f64> {
    Ok(ncchi_mean(&NcChiParams::new(eta, sigma_g, n_dof)?))
}
