//! Scalar special functions: log-gamma, polygamma, regularized incomplete
//! gamma and its inverse, modified Bessel functions of the first kind and
//! Kummer's confluent hypergeometric function.
//!
//! Every public function validates its domain and returns [`Error::Domain`]
//! on invalid input. Crate-internal callers that already hold validated
//! arguments use the unchecked `pub(crate)` variants.

use std::f64::consts::{LN_10, PI};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

// Godfrey's Lanczos approximation, g = 10.900511, 11 terms.
const LANCZOS_G: f64 = 10.900511;
const LANCZOS_COEF: [f64; 11] = [
    2.485_740_891_387_535_6e-5,
    1.051_423_785_817_219_7,
    -3.456_870_972_220_162_5,
    4.512_277_094_668_948,
    -2.982_852_253_235_766_4,
    1.056_397_115_771_267,
    -1.954_287_731_916_458_7e-1,
    1.709_705_434_044_412e-2,
    -5.719_261_174_043_057_8e-4,
    4.633_994_733_599_057e-6,
    -2.719_949_084_886_077_2e-9,
];
// ln(2 * sqrt(e / pi))
const LN_2_SQRT_E_OVER_PI: f64 = 0.620_782_237_635_245_2;

const SERIES_EPS: f64 = 1e-17;
const MAX_SERIES_TERMS: usize = 200_000;

fn check_positive(function: &'static str, name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(
            function,
            format!("{name} must be finite and > 0, got {x}"),
        ))
    }
}

/// `log Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive("ln_gamma", "x", x)?;
    Ok(lgamma(x))
}

pub(crate) fn lgamma(x: f64) -> f64 {
    if x < 0.5 {
        let s = LANCZOS_COEF
            .iter()
            .enumerate()
            .skip(1)
            .fold(LANCZOS_COEF[0], |s, (i, c)| s + c / (i as f64 - x));
        LN_PI
            - (PI * x).sin().ln()
            - s.ln()
            - LN_2_SQRT_E_OVER_PI
            - (0.5 - x) * ((0.5 - x + LANCZOS_G) / std::f64::consts::E).ln()
    } else {
        let s = LANCZOS_COEF
            .iter()
            .enumerate()
            .skip(1)
            .fold(LANCZOS_COEF[0], |s, (i, c)| s + c / (x + i as f64 - 1.0));
        s.ln() + LN_2_SQRT_E_OVER_PI + (x - 0.5) * ((x - 0.5 + LANCZOS_G) / std::f64::consts::E).ln()
    }
}

/// Digamma function `ψ(x) = d/dx log Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", "x", x)?;
    Ok(psi(x))
}

pub(crate) fn psi(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli tail: B2k / (2k x^2k)
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - tail
}

/// Trigamma function `ψ'(x)` for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    check_positive("trigamma", "x", x)?;
    Ok(psi1(x))
}

pub(crate) fn psi1(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x^2) + sum B2k / x^(2k+1)
    let tail = inv
        * inv2
        * (1.0 / 6.0
            - inv2
                * (1.0 / 30.0
                    - inv2
                        * (1.0 / 42.0
                            - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    acc + inv + 0.5 * inv2 + tail
}

// Stirling remainder lnΓ(a) - [(a - 1/2) ln a - a + ln sqrt(2π)].
fn stirling_remainder(a: f64) -> f64 {
    if a < 10.0 {
        return lgamma(a) - ((a - 0.5) * a.ln() - a + LN_SQRT_2PI);
    }
    let inv = 1.0 / a;
    let inv2 = inv * inv;
    inv * (1.0 / 12.0
        - inv2
            * (1.0 / 360.0
                - inv2
                    * (1.0 / 1260.0
                        - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0 - inv2 * (691.0 / 360_360.0 - inv2 / 156.0))))))
}

/// `ln(x^a e^{-x} / Γ(a))`, evaluated without cancellation for large `a`.
pub(crate) fn ln_gamma_kernel(a: f64, x: f64) -> f64 {
    if a < 10.0 {
        a * x.ln() - x - lgamma(a)
    } else {
        let u = (x - a) / a;
        let d = u - u.ln_1p();
        -a * d + 0.5 * (a / (2.0 * PI)).ln() - stirling_remainder(a)
    }
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn reg_inc_gamma_p(a: f64, x: f64) -> Result<f64> {
    check_positive("reg_inc_gamma_p", "a", a)?;
    if !(x >= 0.0) {
        return Err(Error::domain("reg_inc_gamma_p", format!("x must be >= 0, got {x}")));
    }
    Ok(inc_gamma(a, x).0)
}

/// Regularized upper incomplete gamma function `Q(a, x) = 1 - P(a, x)`.
pub fn reg_inc_gamma_q(a: f64, x: f64) -> Result<f64> {
    check_positive("reg_inc_gamma_q", "a", a)?;
    if !(x >= 0.0) {
        return Err(Error::domain("reg_inc_gamma_q", format!("x must be >= 0, got {x}")));
    }
    Ok(inc_gamma(a, x).1)
}

/// Returns `(P(a, x), Q(a, x))`.
pub(crate) fn inc_gamma(a: f64, x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let kernel = ln_gamma_kernel(a, x);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        for n in 1..MAX_SERIES_TERMS {
            term *= x / (a + n as f64);
            sum += term;
            if term < sum * SERIES_EPS {
                break;
            }
        }
        let p = (kernel.exp() * sum).min(1.0);
        (p, 1.0 - p)
    } else {
        // Modified Lentz evaluation of the continued fraction for Q.
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_SERIES_TERMS {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (kernel.exp() * h).min(1.0);
        (1.0 - q, q)
    }
}

// Acklam's rational approximation of the standard normal quantile (~1e-9).
pub(crate) fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Inverse of `P(a, ·)`: the `x >= 0` with `P(a, x) = p`.
pub fn inv_reg_inc_gamma_p(a: f64, p: f64) -> Result<f64> {
    check_positive("inv_reg_inc_gamma_p", "a", a)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(
            "inv_reg_inc_gamma_p",
            format!("p must lie in (0, 1), got {p}"),
        ));
    }
    Ok(inv_inc_gamma(a, p))
}

pub(crate) fn inv_inc_gamma(a: f64, p: f64) -> f64 {
    let mut x = initial_inverse_guess(a, p);
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let upper_tail = p > 0.5;
    for _ in 0..200 {
        let (pp, qq) = inc_gamma(a, x);
        // Residual evaluated on the better-conditioned tail.
        let f = if upper_tail { (1.0 - p) - qq } else { pp - p };
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = (ln_gamma_kernel(a, x)).exp() / x;
        let mut next = if density > 0.0 && density.is_finite() {
            let newton = f / density;
            let curvature = (a - 1.0) / x - 1.0;
            let denom = 1.0 - 0.5 * newton * curvature;
            let step = if denom.abs() > 0.5 { newton / denom } else { newton };
            x - step
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else {
                2.0 * x.max(lo) + 1.0
            };
        }
        let delta = (next - x).abs();
        x = next;
        if delta <= 4.0 * f64::EPSILON * x || (hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * hi) {
            break;
        }
    }
    x
}

fn initial_inverse_guess(a: f64, p: f64) -> f64 {
    if a > 1.0 {
        let z = normal_quantile(p);
        let c = 1.0 / (9.0 * a);
        let x = a * (1.0 - c + z * c.sqrt()).powi(3);
        if x > 0.0 {
            return x;
        }
        // Small-x expansion P(a, x) ~ x^a / Γ(a + 1).
        return ((p.ln() + lgamma(a + 1.0)) / a).exp();
    }
    let t = 1.0 - a * (0.253 + a * 0.12);
    if p < t {
        (p / t).powf(1.0 / a)
    } else {
        1.0 - (1.0 - (p - t) / (1.0 - t)).ln()
    }
}

/// Modified Bessel function of the first kind `I_ν(z)`, `ν >= -1`, `z >= 0`.
///
/// Overflows to `+inf` for large `z`; use [`bessel_i_scaled`] there.
pub fn bessel_i(nu: f64, z: f64) -> Result<f64> {
    check_bessel_args("bessel_i", nu, z)?;
    Ok((ln_bessel_i_scaled(nu, z) + z).exp())
}

/// Exponentially scaled Bessel function `e^{-z} I_ν(z)`.
pub fn bessel_i_scaled(nu: f64, z: f64) -> Result<f64> {
    check_bessel_args("bessel_i_scaled", nu, z)?;
    Ok(ln_bessel_i_scaled(nu, z).exp())
}

fn check_bessel_args(function: &'static str, nu: f64, z: f64) -> Result<()> {
    if !(nu.is_finite() && nu >= -1.0) {
        return Err(Error::domain(
            function,
            format!("order must be finite and >= -1, got {nu}"),
        ));
    }
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::domain(
            function,
            format!("argument must be finite and >= 0, got {z}"),
        ));
    }
    Ok(())
}

/// `ln(e^{-z} I_ν(z))`.
pub(crate) fn ln_bessel_i_scaled(nu: f64, z: f64) -> f64 {
    // I_{-1} = I_1
    let nu = if nu == -1.0 { 1.0 } else { nu };
    if z == 0.0 {
        return if nu == 0.0 {
            0.0
        } else if nu > 0.0 {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        };
    }
    if z > 30.0 && z > nu * nu {
        return ln_bessel_i_scaled_asymptotic(nu, z);
    }
    // Ascending series summed outward from its largest term, in log space.
    let q = 0.5 * z;
    let disc = (nu + 2.0) * (nu + 2.0) - 4.0 * (nu + 1.0 - q * q);
    let peak = if disc > 0.0 {
        ((-(nu + 2.0) + disc.sqrt()) * 0.5).max(0.0).ceil()
    } else {
        0.0
    };
    let ln_peak = (2.0 * peak + nu) * q.ln() - lgamma(peak + 1.0) - lgamma(peak + nu + 1.0) - z;
    let q2 = q * q;
    let mut sum = 1.0;
    let mut term = 1.0;
    let mut k = peak;
    for _ in 0..MAX_SERIES_TERMS {
        term *= q2 / ((k + 1.0) * (k + nu + 1.0));
        sum += term;
        k += 1.0;
        if term < sum * SERIES_EPS {
            break;
        }
    }
    term = 1.0;
    k = peak;
    while k >= 1.0 {
        term *= k * (k + nu) / q2;
        sum += term;
        k -= 1.0;
        if term < sum * SERIES_EPS {
            break;
        }
    }
    ln_peak + sum.ln()
}

fn ln_bessel_i_scaled_asymptotic(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (kf * 8.0 * z);
        if term.abs() >= last {
            break;
        }
        sum += term;
        last = term.abs();
        if last < sum.abs() * SERIES_EPS {
            break;
        }
    }
    sum.ln() - 0.5 * (2.0 * PI * z).ln()
}

/// Kummer's confluent hypergeometric function `₁F₁(a; b; x)`, `b > 0`.
///
/// Negative arguments go through the Kummer transformation
/// `₁F₁(a; b; x) = e^x ₁F₁(b - a; b; -x)` so the summed series has no
/// cancellation; very negative arguments use the large-argument expansion.
pub fn kummer_1f1(a: f64, b: f64, x: f64) -> Result<f64> {
    check_positive("kummer_1f1", "b", b)?;
    if !a.is_finite() || !x.is_finite() {
        return Err(Error::domain("kummer_1f1", "a and x must be finite"));
    }
    let value = hyp1f1(a, b, x);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow { function: "kummer_1f1" })
    }
}

fn is_nonpositive_integer(a: f64) -> bool {
    a <= 0.0 && a.fract() == 0.0
}

pub(crate) fn hyp1f1(a: f64, b: f64, x: f64) -> f64 {
    if x == 0.0 || a == 0.0 {
        return 1.0;
    }
    if a == b {
        return x.exp();
    }
    if x > 0.0 || is_nonpositive_integer(a) {
        return hyp1f1_series(a, b, x);
    }
    let y = -x;
    let c = b - a;
    if c <= 0.0 {
        // Only the first ⌈-c⌉ terms of the transformed series alternate.
        let (sign, ln_abs) = signed_ln_hyp1f1_series(c, b, y);
        return sign * (x + ln_abs).exp();
    }
    let reach = a.abs() + b + 2.0;
    if y > 60.0 && y > 2.0 * reach * reach {
        return hyp1f1_negative_asymptotic(a, b, y);
    }
    (x + ln_hyp1f1_positive_series(c, b, y)).exp()
}

// Direct series with periodic rescaling.
fn hyp1f1_series(a: f64, b: f64, x: f64) -> f64 {
    let (sign, ln_abs) = signed_ln_hyp1f1_series(a, b, x);
    sign * ln_abs.exp()
}

// Sign and log-magnitude of the direct series.
fn signed_ln_hyp1f1_series(a: f64, b: f64, x: f64) -> (f64, f64) {
    const RESCALE: f64 = 1e280;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut log_scale = 0.0;
    for k in 0..MAX_SERIES_TERMS {
        let kf = k as f64;
        let ratio = (a + kf) / (b + kf) * x / (kf + 1.0);
        term *= ratio;
        sum += term;
        if sum.abs() > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            log_scale += 280.0 * LN_10;
        }
        if term == 0.0 || (ratio.abs() < 1.0 && term.abs() < sum.abs() * SERIES_EPS) {
            break;
        }
    }
    (sum.signum(), sum.abs().ln() + log_scale)
}

// ln ₁F₁(c; b; y) for c > 0, b > 0, y > 0: every term is positive.
fn ln_hyp1f1_positive_series(c: f64, b: f64, y: f64) -> f64 {
    const RESCALE: f64 = 1e280;
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    let mut log_scale = 0.0;
    for k in 0..MAX_SERIES_TERMS {
        let kf = k as f64;
        let ratio = (c + kf) / (b + kf) * y / (kf + 1.0);
        term *= ratio;
        sum += term;
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            log_scale += 280.0 * LN_10;
        }
        if ratio < 1.0 && term < sum * SERIES_EPS {
            break;
        }
    }
    sum.ln() + log_scale
}

// ₁F₁(a; b; -y) ~ Γ(b)/Γ(b-a) y^{-a} Σ (a)_s (a-b+1)_s / (s! y^s), y → ∞.
fn hyp1f1_negative_asymptotic(a: f64, b: f64, y: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut last = f64::INFINITY;
    for s in 0..500 {
        let sf = s as f64;
        term *= (a + sf) * (a - b + 1.0 + sf) / ((sf + 1.0) * y);
        if term.abs() >= last || term == 0.0 {
            break;
        }
        sum += term;
        last = term.abs();
        if last < sum.abs() * SERIES_EPS {
            break;
        }
    }
    let ln_prefactor = lgamma(b) - lgamma(b - a) - a * y.ln();
    ln_prefactor.exp() * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    // Reference values from a 50-digit evaluation, truncated to f64.
    const LN_GAMMA_12: f64 = 17.502_307_845_873_885_839;
    const DIGAMMA_QUARTER: f64 = -4.227_453_533_376_265_408;
    const TRIGAMMA_7_5: f64 = 0.142_615_896_696_703_799_77;
    const GAMMA12_MEDIAN: f64 = 11.668_363_153_044_764_84;
    const BESSEL_I0_2_5: f64 = 3.289_839_144_050_123_035_7;
    const KUMMER_M05_1_M8: f64 = 3.293_024_007_035_362_897;

    #[test]
    fn ln_gamma_reference_points() {
        assert!(ln_gamma(1.0).unwrap().abs() < 1e-15);
        assert!(ln_gamma(2.0).unwrap().abs() < 1e-15);
        assert_relative_eq!(ln_gamma(0.5).unwrap(), 0.5 * PI.ln(), max_relative = 1e-14);
        assert_relative_eq!(ln_gamma(12.0).unwrap(), LN_GAMMA_12, max_relative = 1e-13);
    }

    #[test]
    fn ln_gamma_rejects_nonpositive() {
        assert!(ln_gamma(0.0).is_err());
        assert!(ln_gamma(-1.5).is_err());
        assert!(ln_gamma(f64::NAN).is_err());
    }

    #[test]
    fn digamma_reference_points() {
        assert_relative_eq!(digamma(1.0).unwrap(), -EULER_GAMMA, max_relative = 1e-14);
        assert_relative_eq!(digamma(2.0).unwrap(), 1.0 - EULER_GAMMA, max_relative = 1e-13);
        assert_relative_eq!(digamma(0.25).unwrap(), DIGAMMA_QUARTER, max_relative = 1e-13);
        assert!(digamma(0.0).is_err());
    }

    #[test]
    fn trigamma_reference_points() {
        let zeta2 = PI * PI / 6.0;
        assert_relative_eq!(trigamma(1.0).unwrap(), zeta2, max_relative = 1e-13);
        assert_relative_eq!(trigamma(2.0).unwrap(), zeta2 - 1.0, max_relative = 1e-13);
        assert_relative_eq!(trigamma(7.5).unwrap(), TRIGAMMA_7_5, max_relative = 1e-12);
        assert!(trigamma(-2.0).is_err());
    }

    #[test]
    fn incomplete_gamma_reference_points() {
        assert_relative_eq!(reg_inc_gamma_p(1.0, 2f64.ln()).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(reg_inc_gamma_p(3.7, 0.0).unwrap(), 0.0);
        assert_relative_eq!(reg_inc_gamma_p(12.0, GAMMA12_MEDIAN).unwrap(), 0.5, epsilon = 1e-13);
        assert!(reg_inc_gamma_p(0.0, 1.0).is_err());
        assert!(reg_inc_gamma_p(1.0, -1.0).is_err());
    }

    #[test]
    fn inverse_incomplete_gamma_reference_points() {
        assert_relative_eq!(inv_reg_inc_gamma_p(1.0, 0.5).unwrap(), 2f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(
            inv_reg_inc_gamma_p(1.0, 0.025).unwrap(),
            -(0.975f64).ln(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            inv_reg_inc_gamma_p(12.0, 0.5).unwrap(),
            GAMMA12_MEDIAN,
            max_relative = 1e-13
        );
        assert!(inv_reg_inc_gamma_p(2.0, 0.0).is_err());
        assert!(inv_reg_inc_gamma_p(2.0, 1.0).is_err());
    }

    #[test]
    fn bessel_reference_points() {
        assert_eq!(bessel_i(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i(1.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(bessel_i(0.0, 2.5).unwrap(), BESSEL_I0_2_5, max_relative = 1e-13);
        assert_relative_eq!(
            bessel_i(-1.0, 2.5).unwrap(),
            bessel_i(1.0, 2.5).unwrap(),
            max_relative = 1e-15
        );
        assert!(bessel_i(-1.5, 1.0).is_err());
        assert!(bessel_i(0.0, -1.0).is_err());
    }

    #[test]
    fn bessel_scaled_survives_large_arguments() {
        let scaled = bessel_i_scaled(3.0, 5000.0).unwrap();
        assert!(scaled.is_finite() && scaled > 0.0);
        assert!(bessel_i(3.0, 5000.0).unwrap().is_infinite());
        // e^{-z} I_ν(z) -> 1/sqrt(2πz)
        assert_relative_eq!(scaled * (2.0 * PI * 5000.0).sqrt(), 1.0, max_relative = 1e-3);
    }

    #[test]
    fn bessel_series_and_asymptotic_agree_at_switch() {
        for &nu in &[0.0, 0.5, 1.0, 3.0, 5.0] {
            let z = 31.0f64.max(nu * nu + 1.0);
            let asym = ln_bessel_i_scaled_asymptotic(nu, z);
            // Force the series branch by evaluating just below the threshold and
            // compare against the asymptotic value through the derivative-free ratio.
            let series = {
                let q = 0.5 * z;
                let mut sum = 0.0;
                let mut k = 0.0;
                loop {
                    let t = ((2.0 * k + nu) * q.ln() - lgamma(k + 1.0) - lgamma(k + nu + 1.0) - z).exp();
                    sum += t;
                    k += 1.0;
                    if k > 2.0 * z + 50.0 && t < sum * 1e-18 {
                        break;
                    }
                }
                sum.ln()
            };
            assert_relative_eq!(asym.exp(), series.exp(), max_relative = 1e-11);
        }
    }

    #[test]
    fn kummer_reference_points() {
        assert_eq!(kummer_1f1(-0.5, 1.0, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            kummer_1f1(1.0, 1.0, 1.0).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-15
        );
        assert_relative_eq!(
            kummer_1f1(-0.5, 1.0, -8.0).unwrap(),
            KUMMER_M05_1_M8,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            kummer_1f1(-0.5, 0.5, -30.0).unwrap(),
            9.708_129_562_778_497_757_6,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            kummer_1f1(-0.5, 12.0, -200.0).unwrap(),
            4.242_298_043_042_458_624,
            max_relative = 1e-12
        );
        assert!(kummer_1f1(-0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn kummer_negative_argument_with_b_below_a() {
        // 40-digit references.
        assert_relative_eq!(
            kummer_1f1(1.5, 1.0, -30.0).unwrap(),
            -1.861_160_660_859_262_747_6e-3,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            kummer_1f1(4.5, 4.0, -30.0).unwrap(),
            -4.940_714_719_456_522_092_6e-7,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            kummer_1f1(12.5, 12.0, -30.0).unwrap(),
            -9.732_696_469_193_973_208_4e-12,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            kummer_1f1(4.5, 4.0, -5.0).unwrap(),
            6.962_025_350_715_095_345_2e-4,
            max_relative = 1e-12
        );
    }

    #[test]
    fn kummer_overflow_is_reported() {
        assert!(matches!(kummer_1f1(2.0, 1.0, 1000.0), Err(Error::Overflow { .. })));
    }

    #[test]
    fn kummer_asymptotic_matches_series_at_switch() {
        for &b in &[0.5, 1.0, 2.0, 4.0] {
            let reach: f64 = 0.5 + b + 2.0;
            let y = (2.0 * reach * reach).max(60.0) + 1.0;
            let asym = hyp1f1_negative_asymptotic(-0.5, b, y);
            let series = (-y + ln_hyp1f1_positive_series(b + 0.5, b, y)).exp();
            assert_relative_eq!(asym, series, max_relative = 1e-12);
        }
    }

    #[test]
    fn normal_quantile_is_close() {
        assert!(normal_quantile(0.5).abs() < 1e-12);
        assert_relative_eq!(normal_quantile(0.975), 1.959_963_984_540_054, max_relative = 1e-8);
        assert_relative_eq!(normal_quantile(0.001), -3.090_232_306_167_813_5, max_relative = 1e-8);
    }
}
