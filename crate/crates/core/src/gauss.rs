//! Standard-normal numerics and the one-sided z-test.
//!
//! Every solver residual in the crate bottoms out in [`cdf`], [`sf`] and
//! [`inv_cdf`], so these are computed from `erfc` (tail-accurate) and the
//! Wichura AS241 rational approximations rather than from `1 − Φ`.

use core::f64::consts::FRAC_1_SQRT_2;

use libm::{erfc, exp, log, sqrt};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Φ(x). Saturates to 0 / 1 at ∓∞.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), without cancellation for large x.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn pdf(x: f64) -> f64 {
    exp(-0.5 * x * x - LN_SQRT_2PI)
}

/// ln(1 − Φ(x)), finite far past the point where `sf` underflows.
pub fn ln_sf(x: f64) -> f64 {
    if x < 30.0 {
        return log(sf(x));
    }
    // Mills-ratio asymptotic series.
    let r = 1.0 / (x * x);
    let series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
    -0.5 * x * x - log(x) - LN_SQRT_2PI + log(series)
}

/// Φ⁻¹(p) by AS241 (relative accuracy about 1e-16). Returns ∓∞ at p = 0 / 1.
#[allow(clippy::excessive_precision)]
pub fn inv_cdf(p: f64) -> f64 {
    const SPLIT1: f64 = 0.425;
    const SPLIT2: f64 = 5.0;
    const CONST1: f64 = 0.180625;
    const CONST2: f64 = 1.6;

    const A: [f64; 8] = [
        3.387_132_872_796_366_608_0E0,
        1.331_416_678_917_843_774_5E2,
        1.971_590_950_306_551_442_7E3,
        1.373_169_376_550_946_112_5E4,
        4.592_195_393_154_987_145_7E4,
        6.726_577_092_700_870_085_3E4,
        3.343_057_558_358_812_810_5E4,
        2.509_080_928_730_122_672_7E3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2E1,
        6.871_870_074_920_579_083_0E2,
        5.394_196_021_424_751_107_7E3,
        2.121_379_430_158_659_586_7E4,
        3.930_789_580_009_271_061_0E4,
        2.872_908_573_572_194_267_4E4,
        5.226_495_278_852_854_561_0E3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34E0,
        4.630_337_846_156_545_295_90E0,
        5.769_497_221_460_691_405_50E0,
        3.647_848_324_763_204_605_04E0,
        1.270_458_252_452_368_382_58E0,
        2.417_807_251_774_506_117_70E-1,
        2.272_384_498_926_918_458_33E-2,
        7.745_450_142_783_414_076_40E-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87E0,
        1.676_384_830_183_803_849_40E0,
        6.897_673_349_851_000_045_50E-1,
        1.481_039_764_274_800_745_90E-1,
        1.519_866_656_361_645_719_66E-2,
        5.475_938_084_995_344_946_00E-4,
        1.050_750_071_644_416_843_24E-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_20E0,
        5.463_784_911_164_114_369_90E0,
        1.784_826_539_917_291_335_80E0,
        2.965_605_718_285_048_912_30E-1,
        2.653_218_952_657_612_309_30E-2,
        1.242_660_947_388_078_438_60E-3,
        2.711_555_568_743_487_578_15E-5,
        2.010_334_399_292_288_132_65E-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_90E-1,
        1.369_298_809_227_358_053_10E-1,
        1.487_536_129_085_061_485_25E-2,
        7.868_691_311_456_132_591_00E-4,
        1.846_318_317_510_054_681_80E-5,
        1.421_511_758_316_445_888_70E-7,
        2.044_263_103_389_939_785_64E-15,
    ];

    fn horner(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= SPLIT1 {
        let r = CONST1 - q * q;
        return q * horner(&A, r) / horner(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = sqrt(-log(tail));
    let z = if r <= SPLIT2 {
        r -= CONST2;
        horner(&C, r) / horner(&D, r)
    } else {
        r -= SPLIT2;
        horner(&E, r) / horner(&F, r)
    };
    if q < 0.0 {
        -z
    } else {
        z
    }
}

/// z_{1−α} = Φ⁻¹(1 − α), evaluated as −Φ⁻¹(α) so tiny levels keep full precision.
#[inline]
pub fn upper_z(alpha: f64) -> f64 {
    -inv_cdf(alpha)
}

/// Φ(x) for finite x.
pub fn std_normal_cdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain("std_normal_cdf requires a finite argument"));
    }
    Ok(cdf(x))
}

/// Φ⁻¹(p) for p in the open unit interval.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("std_normal_quantile requires 0 < p < 1"));
    }
    Ok(inv_cdf(p))
}

/// Inputs to the best-power function of a one-sided z-test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerQuery {
    pub alpha_j: f64,
    pub theta_bar: f64,
    pub sigma: f64,
    pub n: f64,
}

impl PowerQuery {
    pub fn new(alpha_j: f64, theta_bar: f64, sigma: f64, n: f64) -> Result<Self> {
        let q = PowerQuery {
            alpha_j,
            theta_bar,
            sigma,
            n,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_j > 0.0 && self.alpha_j < 1.0) {
            return Err(Error::Domain("level must lie in (0, 1)"));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain("sigma must be positive"));
        }
        if !(self.n > 0.0) || !self.n.is_finite() {
            return Err(Error::Domain("sample size must be positive"));
        }
        if !(self.theta_bar >= 0.0) || !self.theta_bar.is_finite() {
            return Err(Error::Domain("effect bound must be nonnegative"));
        }
        Ok(())
    }

    /// Standardized shift θ̄·√n/σ.
    pub fn shift(&self) -> f64 {
        self.theta_bar * sqrt(self.n) / self.sigma
    }
}

/// Standardized shift θ̄·√n/σ of the test statistic under the alternative bound.
#[inline]
pub fn shift(theta_bar: f64, sigma: f64, n: f64) -> f64 {
    theta_bar * sqrt(n) / sigma
}

/// ρ = 1 − Φ(z_{1−α} − shift), unchecked.
#[inline]
pub fn power(alpha_j: f64, shift: f64) -> f64 {
    sf(upper_z(alpha_j) - shift)
}

/// Best power ρ = 1 − Φ(z_{1−α_j} − θ̄√n/σ) of the one-sided z-test.
pub fn power_one_sided(q: &PowerQuery) -> Result<f64> {
    q.validate()?;
    Ok(power(q.alpha_j, q.shift()))
}

/// Continuous sample size at which the one-sided z-test at level `alpha_j`
/// reaches power `rho`: n = ((z_{1−α_j} + z_ρ)·σ/θ̄)².
pub fn sample_size_for_power(alpha_j: f64, rho: f64, theta_bar: f64, sigma: f64) -> Result<f64> {
    if !(alpha_j > 0.0 && alpha_j < 1.0) || !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Domain("level and power must lie in (0, 1)"));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain("sigma must be positive"));
    }
    if !(theta_bar > 0.0) {
        return Err(Error::Infeasible("zero effect bound: power never exceeds the level"));
    }
    if rho <= alpha_j {
        return Err(Error::Infeasible("power must exceed the level for a positive sample size"));
    }
    let d = (upper_z(alpha_j) + inv_cdf(rho)) * sigma / theta_bar;
    if !(d > 0.0) {
        return Err(Error::Infeasible("power too close to the level"));
    }
    Ok(d * d)
}

/// Standardized statistic and one-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ZTest {
    pub z: f64,
    pub p: f64,
}

/// One-sided z-test of H₀: μ = `mu0` against μ > `mu0` with known σ.
pub fn z_test_one_sided(samples: &[f64], mu0: f64, sigma: f64) -> Result<ZTest> {
    if samples.is_empty() {
        return Err(Error::Domain("z-test needs at least one sample"));
    }
    if !(sigma > 0.0) {
        return Err(Error::Domain("sigma must be positive"));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let z = (mean - mu0) * sqrt(n) / sigma;
    Ok(ZTest { z, p: sf(z) })
}
