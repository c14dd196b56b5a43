//! Automatic identification of noise-only voxels, slice by slice.
//!
//! Within a slice every voxel sums its `K` samples after the change of
//! variable, `s = Σ_k m_k² / (2σ²)`. For noise-only voxels `s ~ Gamma(KN, 1)`,
//! so the voxels whose sum falls inside the central `1 − p` interval of that
//! law are kept. A grid search over `σ` (and `N` on the first pass) picks the
//! candidate keeping the most voxels, the parameters are re-estimated from
//! those voxels, and the search is repeated on a narrow grid around the new
//! estimate until it stops moving.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimateResult, Method, SampleSet};
use crate::field::Mask3;
use crate::specfun::inv_inc_gamma;
use crate::volume_io::Volume4D;

/// Axis along which 2D slices are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    X,
    Y,
    Z,
    /// The last spatial axis.
    #[default]
    Auto,
}

impl SliceAxis {
    pub fn index(self) -> usize {
        match self {
            SliceAxis::X => 0,
            SliceAxis::Y => 1,
            SliceAxis::Z | SliceAxis::Auto => 2,
        }
    }
}

impl FromStr for SliceAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "x" | "0" => Ok(SliceAxis::X),
            "y" | "1" => Ok(SliceAxis::Y),
            "z" | "2" => Ok(SliceAxis::Z),
            "auto" => Ok(SliceAxis::Auto),
            other => Err(format!("unknown axis `{other}` (expected x, y, z or auto)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationConfig {
    /// Two-sided rejection level.
    pub p: f64,
    /// Number of `σ` candidates in the initial search grid.
    pub grid_length: usize,
    pub n_min: f64,
    pub n_max: f64,
    pub max_outer_iterations: usize,
    pub relative_tolerance: f64,
    pub slice_axis: SliceAxis,
    /// Volume indices left out of the sum and of the estimation.
    pub exclude_volumes: Vec<usize>,
    /// Smallest background (in voxels) accepted for estimation.
    pub min_voxels: usize,
}

impl Default for IdentificationConfig {
    fn default() -> Self {
        Self {
            p: 0.05,
            grid_length: 50,
            n_min: 1.0,
            n_max: 12.0,
            max_outer_iterations: 100,
            relative_tolerance: 1e-4,
            slice_axis: SliceAxis::Auto,
            exclude_volumes: Vec::new(),
            min_voxels: 100,
        }
    }
}

impl IdentificationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.p > 0.0 && self.p < 1.0) {
            return fail(format!("p must lie in (0, 1), got {}", self.p));
        }
        if self.grid_length < 2 {
            return fail(format!("grid length must be >= 2, got {}", self.grid_length));
        }
        if !(self.n_min > 0.0 && self.n_min <= self.n_max && self.n_max.is_finite()) {
            return fail(format!(
                "need 0 < n_min <= n_max, got {} and {}",
                self.n_min, self.n_max
            ));
        }
        if self.max_outer_iterations == 0 {
            return fail("max_outer_iterations must be >= 1".into());
        }
        if !(self.relative_tolerance > 0.0) {
            return fail(format!(
                "relative tolerance must be > 0, got {}",
                self.relative_tolerance
            ));
        }
        if self.min_voxels < 1 {
            return fail("min_voxels must be >= 1".into());
        }
        Ok(())
    }

    /// First-pass `N` candidates: `n_min`, every integer strictly between,
    /// and `n_max`.
    fn n_candidates(&self) -> Vec<f64> {
        let mut out = vec![self.n_min];
        let mut n = self.n_min.floor() + 1.0;
        while n < self.n_max {
            out.push(n);
            n += 1.0;
        }
        if self.n_max > self.n_min {
            out.push(self.n_max);
        }
        out
    }
}

/// One `(σ, N)` step of the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub sigma_g: f64,
    pub n_dof: f64,
    pub mask_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceResult {
    pub slice_index: usize,
    pub estimate: EstimateResult,
    /// Background flags of the slice voxels, in the order of [`slice_voxels`].
    pub mask: Vec<bool>,
    /// Slice voxels outside the final acceptance interval.
    pub rejected_count: usize,
    pub outer_iterations: usize,
    /// Both `σ̂` and `N̂` settled within the relative tolerance.
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

impl SliceResult {
    pub fn voxel_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// `σ_max = median / √(2 P⁻¹(N_max, 1/2))`: the largest `σ` for which the
/// median voxel could still be noise.
pub fn sigma_upper_bound(volume_median: f64, n_max: f64) -> Result<f64> {
    if !(volume_median.is_finite() && volume_median > 0.0) {
        return Err(Error::DegenerateSample(format!(
            "median of the data is {volume_median}; the volume is empty"
        )));
    }
    if !(n_max.is_finite() && n_max > 0.0) {
        return Err(Error::domain(
            "sigma_upper_bound",
            format!("n_max must be > 0, got {n_max}"),
        ));
    }
    Ok(volume_median / (2.0 * inv_inc_gamma(n_max, 0.5)).sqrt())
}

/// `(λ₋, λ₊)`: the `p/2` and `1 − p/2` quantiles of `Gamma(K·N, 1)`.
pub fn selection_bounds(k_volumes: usize, n_dof: f64, p: f64) -> Result<(f64, f64)> {
    if k_volumes == 0 {
        return Err(Error::domain("selection_bounds", "k_volumes must be >= 1"));
    }
    if !(n_dof.is_finite() && n_dof > 0.0) {
        return Err(Error::domain(
            "selection_bounds",
            format!("n_dof must be > 0, got {n_dof}"),
        ));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(
            "selection_bounds",
            format!("p must lie in (0, 1), got {p}"),
        ));
    }
    let alpha = k_volumes as f64 * n_dof;
    Ok((inv_inc_gamma(alpha, 0.5 * p), inv_inc_gamma(alpha, 1.0 - 0.5 * p)))
}

/// Flags voxels of `volume` whose `Σ_k m_k²/(2σ²)` lies in the acceptance
/// interval for `Gamma(K·N, 1)`.
pub fn select_background(volume: &Volume4D, sigma_candidate: f64, n_dof: f64, p: f64) -> Result<Mask3> {
    if !(sigma_candidate > 0.0) {
        return Err(Error::domain(
            "select_background",
            format!("sigma must be > 0, got {sigma_candidate}"),
        ));
    }
    let bounds = selection_bounds(volume.k(), n_dof, p)?;
    let sums = squared_sums(volume, &(0..volume.spatial_len()).collect::<Vec<_>>(), &[]);
    let values = sums.iter().map(|&s| accepted(s, sigma_candidate, bounds)).collect();
    Mask3::new(volume.spatial_dims(), values)
}

#[inline]
fn accepted(sum_m2: f64, sigma: f64, (lo, hi): (f64, f64)) -> bool {
    let s = sum_m2 / (2.0 * sigma * sigma);
    lo <= s && s <= hi
}

/// Linear spatial indices of slice `index` along `axis`, the lower of the
/// two remaining axes varying fastest.
pub fn slice_voxels(spatial_dims: [usize; 3], axis: usize, index: usize) -> Vec<usize> {
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut out = Vec::with_capacity(spatial_dims[a] * spatial_dims[b]);
    let mut coord = [0usize; 3];
    coord[axis] = index;
    for j in 0..spatial_dims[b] {
        for i in 0..spatial_dims[a] {
            coord[a] = i;
            coord[b] = j;
            out.push(coord[0] + spatial_dims[0] * (coord[1] + spatial_dims[1] * coord[2]));
        }
    }
    out
}

fn included_volumes(k: usize, exclude: &[usize]) -> Vec<usize> {
    (0..k).filter(|i| !exclude.contains(i)).collect()
}

fn squared_sums(volume: &Volume4D, voxels: &[usize], exclude: &[usize]) -> Vec<f64> {
    let frames: Vec<&[f64]> = included_volumes(volume.k(), exclude)
        .into_iter()
        .map(|k| volume.frame(k))
        .collect();
    voxels
        .iter()
        .map(|&v| frames.iter().map(|f| f[v] * f[v]).sum())
        .collect()
}

/// Median of every sample in the volume (mean of the two central values for
/// an even count).
pub fn volume_median(volume: &Volume4D) -> f64 {
    let mut values = volume.data().to_vec();
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        return upper;
    }
    let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (lower + upper)
}

/// Runs the identification loop on one slice.
pub fn identify_slice(
    volume: &Volume4D,
    slice_index: usize,
    config: &IdentificationConfig,
    method: Method,
) -> Result<SliceResult> {
    config.validate()?;
    let axis = config.slice_axis.index();
    check_slice(volume, axis, slice_index)?;
    let sigma_max = sigma_upper_bound(volume_median(volume), config.n_max)?;
    identify_slice_inner(volume, slice_index, axis, sigma_max, config, method)
}

fn check_slice(volume: &Volume4D, axis: usize, slice_index: usize) -> Result<()> {
    let extent = volume.spatial_dims()[axis];
    if slice_index >= extent {
        return Err(Error::domain(
            "identify_slice",
            format!("slice {slice_index} is out of range for axis {axis} of extent {extent}"),
        ));
    }
    Ok(())
}

fn best_candidate(sums: &[f64], k: usize, sigmas: &[f64], ns: &[f64], p: f64) -> Result<(f64, f64, usize)> {
    let bounds: Vec<(f64, (f64, f64))> = ns
        .iter()
        .map(|&n| selection_bounds(k, n, p).map(|b| (n, b)))
        .collect::<Result<_>>()?;
    let mut best = (sigmas[0], ns[0], 0usize);
    // Ascending σ with strict improvement: ties keep the smallest σ.
    for &sigma in sigmas {
        for &(n, b) in &bounds {
            let count = sums.iter().filter(|&&s| accepted(s, sigma, b)).count();
            if count > best.2 {
                best = (sigma, n, count);
            }
        }
    }
    Ok(best)
}

fn relative_change(new: f64, old: f64) -> f64 {
    ((new - old) / old).abs()
}

fn identify_slice_inner(
    volume: &Volume4D,
    slice_index: usize,
    axis: usize,
    sigma_max: f64,
    config: &IdentificationConfig,
    method: Method,
) -> Result<SliceResult> {
    let voxels = slice_voxels(volume.spatial_dims(), axis, slice_index);
    let included = included_volumes(volume.k(), &config.exclude_volumes);
    if included.is_empty() {
        return Err(Error::Config("every volume is excluded".into()));
    }
    let k = included.len();
    let sums = squared_sums(volume, &voxels, &config.exclude_volumes);

    let l = config.grid_length;
    let mut sigmas: Vec<f64> = (1..=l).map(|i| i as f64 * sigma_max / l as f64).collect();
    let mut ns = config.n_candidates();
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut previous: Option<EstimateResult> = None;

    for outer in 1..=config.max_outer_iterations {
        let (sigma, n, count) = best_candidate(&sums, k, &sigmas, &ns, config.p)?;
        if count < config.min_voxels {
            return Err(Error::NoBackground(format!(
                "slice {slice_index}: best candidate keeps {count} voxels, fewer than {}",
                config.min_voxels
            )));
        }
        let bounds = selection_bounds(k, n, config.p)?;
        let mask: Vec<bool> = sums.iter().map(|&s| accepted(s, sigma, bounds)).collect();
        let mut samples = Vec::with_capacity(count * k);
        for (&v, _) in voxels.iter().zip(&mask).filter(|(_, &m)| m) {
            samples.extend(included.iter().map(|&kk| volume.frame(kk)[v]));
        }
        let est = estimate(&SampleSet::new(samples)?, method)?;

        let settled = previous.is_some_and(|prev| {
            relative_change(est.sigma_g, prev.sigma_g) < config.relative_tolerance
                && relative_change(est.n_dof, prev.n_dof) < config.relative_tolerance
        });
        // The next grid depends only on the estimate, so a repeat means a cycle.
        let cycled = !settled && history.iter().any(|h| h.sigma_g == est.sigma_g && h.n_dof == est.n_dof);
        if cycled {
            log::debug!("slice {slice_index}: outer iteration entered a cycle after {outer} steps");
        }
        history.push(IterationRecord {
            sigma_g: est.sigma_g,
            n_dof: est.n_dof,
            mask_count: count,
        });
        if settled || cycled || outer == config.max_outer_iterations {
            return Ok(SliceResult {
                slice_index,
                estimate: est,
                rejected_count: voxels.len() - count,
                mask,
                outer_iterations: outer,
                converged: settled,
                history,
            });
        }
        previous = Some(est);
        ns = vec![est.n_dof];
        sigmas = (0..11).map(|i| est.sigma_g * (0.95 + 0.01 * i as f64)).collect();
    }
    unreachable!("the loop returns on its last iteration")
}

/// Per-slice results of a whole volume plus the assembled background mask.
#[derive(Debug)]
pub struct VolumeIdentification {
    pub axis: usize,
    pub median: f64,
    pub sigma_max: f64,
    /// One entry per slice in slice order; failures do not stop other slices.
    pub slices: Vec<Result<SliceResult>>,
}

impl VolumeIdentification {
    /// Background mask over the whole volume (false in failed slices).
    pub fn mask(&self, spatial_dims: [usize; 3]) -> Mask3 {
        let mut mask = Mask3::filled(spatial_dims, false);
        for result in self.slices.iter().flatten() {
            let voxels = slice_voxels(spatial_dims, self.axis, result.slice_index);
            for (&v, &m) in voxels.iter().zip(&result.mask) {
                mask.values_mut()[v] = m;
            }
        }
        mask
    }

    pub fn successes(&self) -> impl Iterator<Item = &SliceResult> {
        self.slices.iter().flatten()
    }
}

/// Runs [`identify_slice`] on every slice along the configured axis, in
/// parallel, with results in slice order.
pub fn identify_volume(
    volume: &Volume4D,
    config: &IdentificationConfig,
    method: Method,
) -> Result<VolumeIdentification> {
    config.validate()?;
    let axis = config.slice_axis.index();
    let median = volume_median(volume);
    let sigma_max = sigma_upper_bound(median, config.n_max)?;
    let slices = (0..volume.spatial_dims()[axis])
        .into_par_iter()
        .map(|s| identify_slice_inner(volume, s, axis, sigma_max, config, method))
        .collect();
    Ok(VolumeIdentification {
        axis,
        median,
        sigma_max,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_ncchi, NcChiParams};
    use crate::specfun::inc_gamma;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `nx × ny × 1 × k` slice: the first `1 − bg_fraction` of the voxels
    /// carry signal around `level` that varies across voxels and volumes,
    /// chi noise everywhere.
    #[allow(clippy::too_many_arguments)]
    fn slice_stack(
        nx: usize,
        ny: usize,
        k: usize,
        bg_fraction: f64,
        sigma: f64,
        n: f64,
        level: f64,
        seed: u64,
    ) -> Volume4D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_signal = ((1.0 - bg_fraction) * (nx * ny) as f64).round() as usize;
        let mut data = Vec::with_capacity(nx * ny * k);
        for kk in 0..k {
            for v in 0..nx * ny {
                let eta = if v < n_signal {
                    let spatial = 0.4 + 1.2 * v as f64 / n_signal as f64;
                    let angular = 0.5 + 0.05 * ((7 * kk + v) % 11) as f64;
                    level * spatial * angular
                } else {
                    0.0
                };
                let p = NcChiParams::new(eta, sigma, n).unwrap();
                data.push(sample_ncchi(&mut rng, &p, 1).unwrap()[0]);
            }
        }
        Volume4D::new([nx, ny, 1, k], data).unwrap()
    }

    #[test]
    fn upper_bound_examples() {
        assert_relative_eq!(
            sigma_upper_bound(100.0, 12.0).unwrap(),
            20.700_461_775_633_804_637,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            sigma_upper_bound(1.0, 1.0).unwrap(),
            1.0 / (2.0 * 2f64.ln()).sqrt(),
            max_relative = 1e-13
        );
        assert!(sigma_upper_bound(0.0, 12.0).is_err());
    }

    #[test]
    fn exponential_bounds_and_coverage() {
        let (lo, hi) = selection_bounds(1, 1.0, 0.05).unwrap();
        assert_relative_eq!(lo, -(0.975f64).ln(), max_relative = 1e-12);
        assert_relative_eq!(hi, -(0.025f64).ln(), max_relative = 1e-12);
        for &(k, n) in &[(1, 1.0), (65, 1.0), (33, 4.0), (5, 0.5), (65, 12.0)] {
            let (lo, hi) = selection_bounds(k, n, 0.05).unwrap();
            assert!(lo < hi);
            let a = k as f64 * n;
            assert!((inc_gamma(a, hi).0 - inc_gamma(a, lo).0 - 0.95).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_noise_coverage_at_the_true_parameters() {
        let v = slice_stack(100, 100, 4, 1.0, 3.0, 2.0, 0.0, 1);
        let mask = select_background(&v, 3.0, 2.0, 0.05).unwrap();
        let frac = mask.count() as f64 / 10_000.0;
        assert!((frac - 0.95).abs() < 0.01, "{frac}");
    }

    #[test]
    fn masks_nest_as_p_shrinks() {
        let v = slice_stack(40, 40, 3, 0.5, 2.0, 1.0, 30.0, 2);
        let wide = select_background(&v, 2.0, 1.0, 0.01).unwrap();
        let narrow = select_background(&v, 2.0, 1.0, 0.1).unwrap();
        assert!(narrow.values().iter().zip(wide.values()).all(|(&n, &w)| !n || w));
    }

    #[test]
    fn extreme_candidates_select_nothing() {
        let v = Volume4D::new([10, 10, 1, 2], vec![1000.0; 200]).unwrap();
        assert_eq!(select_background(&v, 1.0, 1.0, 0.05).unwrap().count(), 0);
        let v = slice_stack(20, 20, 2, 1.0, 1.0, 1.0, 0.0, 3);
        assert_eq!(select_background(&v, 1e12, 1.0, 0.05).unwrap().count(), 0);
    }

    #[test]
    fn recovers_a_synthetic_slice() {
        let v = slice_stack(64, 64, 65, 0.4, 20.0, 4.0, 600.0, 4);
        let r = identify_slice(&v, 0, &IdentificationConfig::default(), Method::Moments).unwrap();
        assert!(r.converged, "{:?}", r.history);
        assert!((r.estimate.sigma_g / 20.0 - 1.0).abs() < 0.03, "{:?}", r.estimate);
        assert!((r.estimate.n_dof / 4.0 - 1.0).abs() < 0.10, "{:?}", r.estimate);
        assert_eq!(r.voxel_count() + r.rejected_count, 64 * 64);
    }

    #[test]
    fn all_signal_slice_has_no_background() {
        // two noise-only slices set the median; the third is bright everywhere
        let mut data = Vec::new();
        let blocks: Vec<Vec<f64>> = [(0.0, 8), (0.0, 9), (1.0, 10)]
            .iter()
            .map(|&(bg, seed)| slice_stack(32, 32, 5, 1.0 - bg, 1.0, 1.0, 80.0, seed).into_data())
            .collect();
        for kk in 0..5 {
            for b in &blocks {
                data.extend_from_slice(&b[kk * 1024..(kk + 1) * 1024]);
            }
        }
        let v = Volume4D::new([32, 32, 3, 5], data).unwrap();
        let out = identify_volume(&v, &IdentificationConfig::default(), Method::Moments).unwrap();
        assert!(out.slices[0].is_ok() && out.slices[1].is_ok());
        assert!(
            matches!(out.slices[2], Err(Error::NoBackground(_))),
            "{:?}",
            out.slices[2]
        );
        assert!(matches!(
            identify_slice(&v, 2, &IdentificationConfig::default(), Method::Moments),
            Err(Error::NoBackground(_))
        ));
    }

    #[test]
    fn results_are_deterministic_and_ordered() {
        let a0 = slice_stack(24, 24, 6, 0.4, 5.0, 1.0, 200.0, 6).into_data();
        let a1 = slice_stack(24, 24, 6, 0.4, 5.0, 1.0, 200.0, 7).into_data();
        let mut data = Vec::new();
        for kk in 0..6 {
            data.extend_from_slice(&a0[kk * 576..(kk + 1) * 576]);
            data.extend_from_slice(&a1[kk * 576..(kk + 1) * 576]);
        }
        let v = Volume4D::new([24, 24, 2, 6], data).unwrap();
        let a = identify_volume(&v, &IdentificationConfig::default(), Method::Moments).unwrap();
        let b = identify_volume(&v, &IdentificationConfig::default(), Method::Moments).unwrap();
        assert_eq!(a.slices.len(), 2);
        for (x, y) in a.slices.iter().zip(&b.slices) {
            let (x, y) = (x.as_ref().unwrap(), y.as_ref().unwrap());
            assert_eq!(x, y);
        }
        assert_eq!(a.successes().map(|r| r.slice_index).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(a.mask(v.spatial_dims()), b.mask(v.spatial_dims()));
    }

    #[test]
    fn slice_voxels_cover_each_axis() {
        let dims = [2, 3, 4];
        assert_eq!(slice_voxels(dims, 2, 1), (6..12).collect::<Vec<_>>());
        assert_eq!(slice_voxels(dims, 0, 1).len(), 12);
        assert_eq!(slice_voxels(dims, 1, 2)[..2], [4, 5]);
    }

    #[test]
    fn n_candidates_include_both_ends() {
        let mut c = IdentificationConfig::default();
        assert_eq!(c.n_candidates(), (1..=12).map(f64::from).collect::<Vec<_>>());
        c.n_min = 0.5;
        c.n_max = 2.5;
        assert_eq!(c.n_candidates(), vec![0.5, 1.0, 2.0, 2.5]);
        c.n_min = 3.0;
        c.n_max = 3.0;
        assert_eq!(c.n_candidates(), vec![3.0]);
    }

    #[test]
    fn median_handles_even_counts() {
        let v = Volume4D::new([2, 2, 1, 1], vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(volume_median(&v), 2.5);
    }
}
