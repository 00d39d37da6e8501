//! Standard normal density, distribution and quantile functions.
//!
//! `Φ` is built on the musl-derived `erfc`, which is accurate to a few ulps
//! across the whole real line.

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::{Error, Result};

/// `1 / sqrt(2π)`.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Arguments fed to `Φ` and `exp(-c²/2)` inside level-set integrands are
/// clamped to `[-LEVEL_CLAMP, LEVEL_CLAMP]`; beyond that both are
/// indistinguishable from their limits in double precision.
pub const LEVEL_CLAMP: f64 = 38.0;

/// Clamp a level-set value before it reaches the normal functions.
#[inline]
pub fn clamp_level(c: f64) -> f64 {
    c.clamp(-LEVEL_CLAMP, LEVEL_CLAMP)
}

/// Standard normal density `φ(x)`.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution `Φ(x)`, accurate in both tails.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
///
/// The inverse complementary error function gives a starting point that is
/// then refined by one Newton step on whichever tail has full relative
/// precision.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!(
            "normal quantile requires p in (0, 1), got {p}"
        )));
    }
    if p > 0.5 {
        // 1 - p is exact for p >= 0.5.
        Ok(-lower_tail_quantile(1.0 - p))
    } else {
        Ok(lower_tail_quantile(p))
    }
}

fn lower_tail_quantile(p: f64) -> f64 {
    let mut x = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    // The initial guess is only good to ~1e-10; Newton against the
    // full-precision distribution function recovers the last digits.
    for _ in 0..2 {
        let dens = std_normal_pdf(x);
        if !(dens > 0.0 && x.is_finite()) {
            break;
        }
        let step = (std_normal_cdf(x) - p) / dens;
        if !step.is_finite() {
            break;
        }
        x -= step;
    }
    x
}

/// Upper quantile `Φ⁻¹(1 - t)` computed without forming `1 - t`.
pub fn std_normal_upper_quantile(t: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::domain(format!(
            "upper normal quantile requires t in (0, 1), got {t}"
        )));
    }
    Ok(-std_normal_quantile(t)?)
}
