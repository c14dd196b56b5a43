//! Gamma, central chi and noncentral chi distributions.
//!
//! Densities are evaluated in log space and exponentiated at the end so
//! that large `N` and large `m/σ_g` ratios neither overflow nor underflow
//! in intermediate terms.

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaSampler, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bias_correction::beta_n;
use crate::error::{Error, Result};
use crate::specfun::{self, hyp1f1, inc_gamma, inv_inc_gamma, lgamma, ln_bessel_i_scaled};

/// Shape/scale parametrization of the Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    alpha: f64,
    beta: f64,
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::domain("GammaParams", format!("alpha must be > 0, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::domain("GammaParams", format!("beta must be > 0, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    /// `Gamma(shape, 1)`, the law of `t = m²/(2σ_g²)` for noise-only voxels.
    pub fn unit_scale(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mean(&self) -> f64 {
        self.alpha * self.beta
    }

    pub fn variance(&self) -> f64 {
        self.alpha * self.beta * self.beta
    }
}

/// Parameters of the noncentral chi distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcChiParams {
    eta: f64,
    sigma_g: f64,
    n_dof: f64,
}

impl NcChiParams {
    pub fn new(eta: f64, sigma_g: f64, n_dof: f64) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::domain("NcChiParams", format!("eta must be >= 0, got {eta}")));
        }
        if !(sigma_g.is_finite() && sigma_g > 0.0) {
            return Err(Error::domain(
                "NcChiParams",
                format!("sigma_g must be > 0, got {sigma_g}"),
            ));
        }
        if !(n_dof.is_finite() && n_dof > 0.0) {
            return Err(Error::domain("NcChiParams", format!("n_dof must be > 0, got {n_dof}")));
        }
        Ok(Self { eta, sigma_g, n_dof })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn sigma_g(&self) -> f64 {
        self.sigma_g
    }

    pub fn n_dof(&self) -> f64 {
        self.n_dof
    }

    /// `E[m²] = η² + 2Nσ_g²`.
    pub fn second_moment(&self) -> f64 {
        self.eta * self.eta + 2.0 * self.n_dof * self.sigma_g * self.sigma_g
    }
}

fn check_nonnegative(function: &'static str, m: f64) -> Result<()> {
    if m.is_finite() && m >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(
            function,
            format!("argument must be finite and >= 0, got {m}"),
        ))
    }
}

/// Noncentral chi density of a magnitude sample `m`.
pub fn ncchi_pdf(m: f64, params: &NcChiParams) -> Result<f64> {
    check_nonnegative("ncchi_pdf", m)?;
    Ok(ncchi_ln_pdf(m, params).exp())
}

pub(crate) fn ncchi_ln_pdf(m: f64, params: &NcChiParams) -> f64 {
    let NcChiParams { eta, sigma_g, n_dof } = *params;
    if eta == 0.0 {
        return central_chi_ln_pdf(m, sigma_g, n_dof);
    }
    let s2 = sigma_g * sigma_g;
    if m == 0.0 {
        // m^{2N-1} behaviour at the origin.
        let exponent = 2.0 * n_dof - 1.0;
        return if exponent > 0.0 {
            f64::NEG_INFINITY
        } else if exponent < 0.0 {
            f64::INFINITY
        } else {
            central_chi_ln_pdf(0.0, sigma_g, n_dof) - eta * eta / (2.0 * s2)
        };
    }
    let z = m * eta / s2;
    // exp(-(m² + η²)/2σ²) I_{N-1}(z) = exp(-(m - η)²/2σ²) e^{-z} I_{N-1}(z)
    n_dof * m.ln() - 2.0 * sigma_g.ln() - (n_dof - 1.0) * eta.ln() - (m - eta) * (m - eta) / (2.0 * s2)
        + ln_bessel_i_scaled(n_dof - 1.0, z)
}

/// Central chi density (`η = 0`).
pub fn central_chi_pdf(m: f64, sigma_g: f64, n_dof: f64) -> Result<f64> {
    check_nonnegative("central_chi_pdf", m)?;
    NcChiParams::new(0.0, sigma_g, n_dof)?;
    Ok(central_chi_ln_pdf(m, sigma_g, n_dof).exp())
}

pub(crate) fn central_chi_ln_pdf(m: f64, sigma_g: f64, n_dof: f64) -> f64 {
    let exponent = 2.0 * n_dof - 1.0;
    let ln_m_term = if m == 0.0 {
        if exponent > 0.0 {
            return f64::NEG_INFINITY;
        } else if exponent < 0.0 {
            return f64::INFINITY;
        }
        0.0
    } else {
        exponent * m.ln()
    };
    ln_m_term
        - (n_dof - 1.0) * std::f64::consts::LN_2
        - 2.0 * n_dof * sigma_g.ln()
        - lgamma(n_dof)
        - m * m / (2.0 * sigma_g * sigma_g)
}

/// Gamma density at `t > 0`.
pub fn gamma_pdf(t: f64, params: &GammaParams) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain("gamma_pdf", format!("t must be > 0, got {t}")));
    }
    let GammaParams { alpha, beta } = *params;
    Ok(((alpha - 1.0) * t.ln() - lgamma(alpha) - alpha * beta.ln() - t / beta).exp())
}

/// Gamma cumulative distribution function.
pub fn gamma_cdf(t: f64, params: &GammaParams) -> Result<f64> {
    check_nonnegative("gamma_cdf", t)?;
    Ok(inc_gamma(params.alpha, t / params.beta).0)
}

/// Gamma quantile function `β · P⁻¹(α, p)`.
pub fn gamma_icdf(params: &GammaParams, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("gamma_icdf", format!("p must lie in (0, 1), got {p}")));
    }
    Ok(params.beta * inv_inc_gamma(params.alpha, p))
}

/// First moment of the noncentral chi distribution,
/// `σ_g β_N ₁F₁(-1/2; N; -η²/(2σ_g²))`.
pub fn ncchi_mean(params: &NcChiParams) -> f64 {
    let NcChiParams { eta, sigma_g, n_dof } = *params;
    let x = -eta * eta / (2.0 * sigma_g * sigma_g);
    sigma_g * beta_n(n_dof) * hyp1f1(-0.5, n_dof, x)
}

/// How draws for a given `(η, N)` are produced.
#[derive(Debug, Clone, Copy)]
pub enum SamplingPath {
    /// Root-sum-of-squares of Gaussian components; the noiseless signal is
    /// spread evenly over the `real` components so it equals `η`.
    Components { real: u32, imag: u32 },
    /// `t ~ Gamma(N, 1)`, `m = σ_g √(2t)`; only valid for `η = 0`.
    GammaChange(GammaSampler<f64>),
}

fn is_integer(x: f64) -> bool {
    x.fract() == 0.0
}

impl SamplingPath {
    /// Integer `N` uses `N` real and `N` imaginary components. Half-integer
    /// `N` with signal uses `⌈N⌉` real and `⌊N⌋` imaginary components. Any
    /// other non-integer `N` is only supported for `η = 0`.
    pub fn select(n_dof: f64, eta: f64) -> Result<Self> {
        if !(n_dof.is_finite() && n_dof > 0.0) {
            return Err(Error::domain("sample_ncchi", format!("n_dof must be > 0, got {n_dof}")));
        }
        if is_integer(n_dof) {
            let n = n_dof as u32;
            return Ok(SamplingPath::Components { real: n, imag: n });
        }
        if eta == 0.0 {
            let gamma = GammaSampler::new(n_dof, 1.0).map_err(|e| Error::domain("sample_ncchi", e.to_string()))?;
            return Ok(SamplingPath::GammaChange(gamma));
        }
        if is_integer(2.0 * n_dof) {
            let real = n_dof.ceil() as u32;
            let imag = n_dof.floor() as u32;
            return Ok(SamplingPath::Components { real, imag });
        }
        Err(Error::Unsupported(format!(
            "non-integer N = {n_dof} with nonzero signal eta = {eta}"
        )))
    }

    /// One draw with noiseless signal `eta` and Gaussian standard deviation `sigma`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, eta: f64, sigma: f64) -> f64 {
        match self {
            SamplingPath::Components { real, imag } => {
                let shift = eta / (*real as f64).sqrt();
                let mut acc = 0.0;
                for _ in 0..*real {
                    let e: f64 = rng.sample(StandardNormal);
                    let c = shift + sigma * e;
                    acc += c * c;
                }
                for _ in 0..*imag {
                    let e: f64 = rng.sample(StandardNormal);
                    acc += sigma * sigma * e * e;
                }
                acc.sqrt()
            }
            SamplingPath::GammaChange(gamma) => sigma * (2.0 * gamma.sample(rng)).sqrt(),
        }
    }
}

/// Draws `count` i.i.d. noncentral chi samples from `rng`.
pub fn sample_ncchi<R: Rng + ?Sized>(rng: &mut R, params: &NcChiParams, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::domain("sample_ncchi", "count must be >= 1"));
    }
    let path = SamplingPath::select(params.n_dof, params.eta)?;
    Ok((0..count).map(|_| path.draw(rng, params.eta, params.sigma_g)).collect())
}

/// Pearson χ² goodness-of-fit of `samples` against `Gamma(α, β)` using
/// `bins` equiprobable cells. Returns `(statistic, p_value)`.
pub fn gamma_goodness_of_fit(samples: &[f64], params: &GammaParams, bins: usize) -> Result<(f64, f64)> {
    if bins < 2 || samples.len() < 5 * bins {
        return Err(Error::Config(format!(
            "need at least 2 bins and 5 samples per bin, got {bins} bins for {} samples",
            samples.len()
        )));
    }
    let edges: Vec<f64> = (1..bins)
        .map(|i| gamma_icdf(params, i as f64 / bins as f64))
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; bins];
    for &t in samples {
        let cell = edges.partition_point(|&e| e < t);
        counts[cell] += 1;
    }
    let expected = samples.len() as f64 / bins as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = (bins - 1) as f64;
    let p_value = specfun::reg_inc_gamma_q(0.5 * dof, 0.5 * statistic)?;
    Ok((statistic, p_value))
}
