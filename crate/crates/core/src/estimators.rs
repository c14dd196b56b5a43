//! Estimation of `(σ_g, N)` from noise-only magnitude samples.
//!
//! With `t = m²/(2σ_g²) ~ Gamma(N, 1)` the first two moments of `t` give
//! closed-form estimates, and the likelihood equations reduce to two scalar
//! root-finding problems solved by safeguarded Newton iterations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{psi, psi1, EULER_GAMMA};
use crate::summation::Neumaier;

/// Step-size threshold for the Newton solvers.
pub const NEWTON_TOLERANCE: f64 = 1e-13;
pub const NEWTON_MAX_ITERATIONS: usize = 100;

/// Noise-only magnitude samples `m_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    values: Vec<f64>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::DegenerateSample(format!(
                "at least 2 samples are required, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(
                "SampleSet",
                format!("samples must be finite and >= 0, found {v}"),
            ));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateSample("all samples are zero".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn stats(&self) -> SampleStats {
        SampleStats::from_values(&self.values)
    }
}

/// Sufficient statistics shared by both estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    pub count: usize,
    pub sum_m2: f64,
    pub sum_m4: f64,
    /// Mean of `ln m²` over the nonzero samples.
    pub mean_ln_m2: f64,
    pub zeros: usize,
}

impl SampleStats {
    fn from_values(values: &[f64]) -> Self {
        let (mut s2, mut s4, mut sl) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
        let mut zeros = 0;
        for &m in values {
            let m2 = m * m;
            s2.add(m2);
            s4.add(m2 * m2);
            if m > 0.0 {
                sl.add(2.0 * m.ln());
            } else {
                zeros += 1;
            }
        }
        let nonzero = values.len() - zeros;
        Self {
            count: values.len(),
            sum_m2: s2.total(),
            sum_m4: s4.total(),
            mean_ln_m2: if nonzero > 0 {
                sl.total() / nonzero as f64
            } else {
                f64::NEG_INFINITY
            },
            zeros,
        }
    }

    /// `Σm² / (2V)`, so that `N = a / σ_g²` on the likelihood ridge.
    fn half_mean_m2(&self) -> f64 {
        self.sum_m2 / (2.0 * self.count as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Method {
    #[default]
    #[serde(rename = "moments")]
    Moments,
    #[serde(rename = "ml", alias = "maximum_likelihood")]
    MaximumLikelihood,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Moments => "moments",
            Method::MaximumLikelihood => "ml",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "moments" | "mom" => Ok(Method::Moments),
            "ml" | "maximum_likelihood" | "maximum-likelihood" => Ok(Method::MaximumLikelihood),
            other => Err(format!("unknown method `{other}` (expected `moments` or `ml`)")),
        }
    }
}

/// Outcome of a scalar Newton solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSolve {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|x_n − x_{n−1}|` of the final update.
    pub last_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub sigma_g: f64,
    pub n_dof: f64,
    pub method: Method,
    /// Newton updates spent on `σ_g` and `N` together (0 for moments).
    pub iterations: usize,
    pub converged: bool,
    /// Zero samples left out of the log-moment.
    pub zeros_excluded: usize,
}

/// `σ_g = √(Σm⁴/Σm² − Σm²/V) / √2`.
pub fn sigma_from_moments(samples: &SampleSet) -> Result<f64> {
    sigma_from_stats(&samples.stats())
}

fn sigma_from_stats(stats: &SampleStats) -> Result<f64> {
    let mean_m2 = stats.sum_m2 / stats.count as f64;
    let radicand = stats.sum_m4 / stats.sum_m2 - mean_m2;
    // Constant input leaves only rounding residue.
    if !(radicand > 1e-12 * mean_m2) {
        return Err(Error::DegenerateSample(format!(
            "fourth-moment radicand is {radicand:e}; samples are constant or contaminated"
        )));
    }
    Ok((0.5 * radicand).sqrt())
}

/// `N = Σm² / (2Vσ_g²)`.
pub fn n_from_mean(samples: &SampleSet, sigma_g: f64) -> Result<f64> {
    check_sigma("n_from_mean", sigma_g)?;
    Ok(samples.stats().half_mean_m2() / (sigma_g * sigma_g))
}

fn check_sigma(function: &'static str, sigma_g: f64) -> Result<()> {
    if sigma_g.is_finite() && sigma_g > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(function, format!("sigma_g must be > 0, got {sigma_g}")))
    }
}

/// Profile likelihood equation for `σ_g`:
/// `f(σ) = ψ(Σm²/(2Vσ²)) − mean(ln m²) + ln(2σ²)`. Decreasing in `σ`.
pub fn sigma_objective(stats: &SampleStats, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    psi(stats.half_mean_m2() / s2) - stats.mean_ln_m2 + (2.0 * s2).ln()
}

/// `f′(σ) = −Σm²/(Vσ³) · ψ′(Σm²/(2Vσ²)) + 2/σ`.
pub fn sigma_objective_derivative(stats: &SampleStats, sigma: f64) -> f64 {
    let a = stats.half_mean_m2();
    let s2 = sigma * sigma;
    -2.0 * a / (s2 * sigma) * psi1(a / s2) + 2.0 / sigma
}

/// `g(N) = ψ(N) − y`, increasing in `N`.
pub fn n_objective(y: f64, n: f64) -> f64 {
    psi(n) - y
}

pub fn n_objective_derivative(n: f64) -> f64 {
    psi1(n)
}

/// Starting point for `ψ(N) = y`: `exp(y) + 1/2` if `y ≥ −2.22`,
/// otherwise `−1/(y + ψ(1))`.
pub fn minka_initial(y: f64) -> f64 {
    if y >= -2.22 {
        y.exp() + 0.5
    } else {
        -1.0 / (y - EULER_GAMMA)
    }
}

/// Newton on `(0, ∞)` for a monotone function whose sign just right of 0 is
/// `left_sign`. Steps leaving the current bracket fall back to bisection
/// (or doubling while the bracket is still open above).
fn safeguarded_newton(x0: f64, left_sign: f64, eval: impl Fn(f64) -> (f64, f64)) -> RootSolve {
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    let mut x = x0;
    let mut last_step = f64::INFINITY;
    for iteration in 1..=NEWTON_MAX_ITERATIONS {
        let (f, df) = eval(x);
        if f == 0.0 {
            return RootSolve {
                value: x,
                iterations: iteration - 1,
                converged: true,
                last_step: 0.0,
            };
        }
        if f.signum() == left_sign {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let mut next = x - f / df;
        if !(next.is_finite() && next > lo && next < hi) {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * x.max(lo)
            };
        }
        last_step = (next - x).abs();
        x = next;
        if last_step < NEWTON_TOLERANCE || last_step <= 4.0 * f64::EPSILON * x {
            return RootSolve {
                value: x,
                iterations: iteration,
                converged: true,
                last_step,
            };
        }
    }
    RootSolve {
        value: x,
        iterations: NEWTON_MAX_ITERATIONS,
        converged: false,
        last_step,
    }
}

/// Sample standard deviation (`n − 1` denominator) of `m`.
pub fn sample_sd(samples: &SampleSet) -> f64 {
    let v = samples.values();
    let n = v.len() as f64;
    let mean = crate::summation::compensated_sum(v.iter().copied()) / n;
    let ss = crate::summation::compensated_sum(v.iter().map(|&m| (m - mean) * (m - mean)));
    (ss / (n - 1.0)).sqrt()
}

/// Solves the likelihood equation for `σ_g` starting from `sigma0`.
pub fn sigma_from_ml(samples: &SampleSet, sigma0: f64) -> Result<RootSolve> {
    check_sigma("sigma_from_ml", sigma0)?;
    sigma_from_ml_stats(&samples.stats(), sigma0)
}

fn sigma_from_ml_stats(stats: &SampleStats, sigma0: f64) -> Result<RootSolve> {
    // f(0⁺) = ln(Σm²/V) − mean(ln m²); a root exists only if this is positive.
    let gap = (2.0 * stats.half_mean_m2()).ln() - stats.mean_ln_m2;
    if !(gap > 1e-12) {
        return Err(Error::DegenerateSample(format!(
            "log-moment gap is {gap:e}; samples are constant"
        )));
    }
    let solve = safeguarded_newton(sigma0, 1.0, |s| {
        (sigma_objective(stats, s), sigma_objective_derivative(stats, s))
    });
    if !(solve.value.is_finite() && solve.value > 0.0) {
        return Err(Error::DegenerateSample("sigma iteration left (0, inf)".into()));
    }
    Ok(solve)
}

/// Solves `ψ(N) = mean ln(m²/(2σ_g²))` over the nonzero samples.
pub fn n_from_ml(samples: &SampleSet, sigma_g: f64) -> Result<RootSolve> {
    check_sigma("n_from_ml", sigma_g)?;
    n_from_ml_stats(&samples.stats(), sigma_g)
}

fn n_from_ml_stats(stats: &SampleStats, sigma_g: f64) -> Result<RootSolve> {
    let y = stats.mean_ln_m2 - (2.0 * sigma_g * sigma_g).ln();
    if !y.is_finite() {
        return Err(Error::DegenerateSample("no nonzero samples for the log-moment".into()));
    }
    Ok(solve_digamma(y))
}

/// `ψ⁻¹(y)` by Newton from the Minka starting point.
pub fn solve_digamma(y: f64) -> RootSolve {
    safeguarded_newton(minka_initial(y), -1.0, |n| {
        (n_objective(y, n), n_objective_derivative(n))
    })
}

/// Estimates `(σ_g, N)` with the requested method.
pub fn estimate(samples: &SampleSet, method: Method) -> Result<EstimateResult> {
    let stats = samples.stats();
    match method {
        Method::Moments => {
            let sigma_g = sigma_from_stats(&stats)?;
            Ok(EstimateResult {
                sigma_g,
                n_dof: stats.half_mean_m2() / (sigma_g * sigma_g),
                method,
                iterations: 0,
                converged: true,
                zeros_excluded: stats.zeros,
            })
        }
        Method::MaximumLikelihood => {
            let sigma0 = sample_sd(samples);
            if !(sigma0 > 0.0) {
                return Err(Error::DegenerateSample("samples have zero spread".into()));
            }
            let sigma = sigma_from_ml_stats(&stats, sigma0)?;
            let n = n_from_ml_stats(&stats, sigma.value)?;
            Ok(EstimateResult {
                sigma_g: sigma.value,
                n_dof: n.value,
                method,
                iterations: sigma.iterations + n.iterations,
                converged: sigma.converged && n.converged,
                zeros_excluded: stats.zeros,
            })
        }
    }
}
