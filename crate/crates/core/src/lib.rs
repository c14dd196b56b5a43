//! Automated characterization of the noise distribution of magnitude
//! diffusion MRI data.
//!
//! Noise-only magnitude samples follow a central chi distribution with
//! Gaussian standard deviation `σ_g` and `N` degrees of freedom. Under the
//! change of variable `t = m² / (2σ_g²)` they become `Gamma(N, 1)`, whose
//! moment and maximum-likelihood equations give both parameters from the
//! magnitude data alone. The crate is organized as:
//!
//! - [`specfun`]: scalar special functions (gamma family, Bessel, Kummer).
//! - [`distributions`]: noncentral chi / chi / Gamma densities and samplers.
//! - [`estimators`]: moment and maximum-likelihood estimation of `(σ_g, N)`.
//! - [`background_id`]: per-slice automatic selection of noise-only voxels.
//! - [`local_maps`]: windowed estimation on acquired noise maps.
//! - [`bias_correction`]: recovery of the noiseless signal for real-valued `N`.
//! - [`phantom`]: synthetic ground truth and error metrics.
//! - [`volume_io`]: NIfTI-1 / raw volumes and JSON/CSV reports.
//! - [`cli`]: the `dmri-noise` command-line front end.

// Negated comparisons double as NaN guards; reference constants keep all printed digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod background_id;
pub mod bias_correction;
pub mod cli;
pub mod descriptive;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod field;
pub mod local_maps;
pub mod phantom;
pub mod specfun;
mod summation;
pub mod volume_io;

pub use background_id::{
    identify_slice, identify_volume, IdentificationConfig, SliceAxis, SliceResult, VolumeIdentification,
};
pub use error::{Error, LoadError, Result};
pub use estimators::{estimate, EstimateResult, Method, SampleSet};
pub use field::{Field3, Mask3};
pub use volume_io::Volume4D;
