//! Reference distributions and the limiting covariance of the estimated
//! empirical process.
//!
//! The standard normal functions are accurate to roughly machine precision:
//! the CDF goes through `erfc` so both tails keep full relative accuracy, and
//! the quantile is Wichura's AS 241 rational approximation followed by one
//! Newton correction against the CDF.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Guard band for [`durbin_sigma`]: probabilities closer than this to 0 or 1
/// are rejected.
pub const SIGMA_GUARD: f64 = 1e-8;

/// Standard normal distribution function Φ.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), without cancellation for large x.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal density φ.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal quantile Φ⁻¹ with domain checking.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile requires p in (0,1), got {p}")));
    }
    Ok(norm_ppf(p))
}

/// Unchecked Φ⁻¹: returns −∞ at 0, +∞ at 1 and NaN outside [0,1].
pub fn norm_ppf(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let x = as241(p);
    // One Newton step. The residual is formed on the tail that p lies in so
    // that 1 − p stays exact.
    let resid = if p < 0.5 {
        norm_cdf(x) - p
    } else {
        (1.0 - p) - norm_sf(x)
    };
    let dens = norm_pdf(x);
    if dens > 0.0 && dens.is_finite() {
        x - resid / dens
    } else {
        x
    }
}

fn poly(coeffs: &[f64], r: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c)
}

// Wichura (1988), algorithm AS 241, PPND16.
fn as241(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// A continuous reference distribution F₀ for the simple null hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ReferenceCdf {
    StdNormal,
    Uniform01,
    /// CDF given by monotone interpolation of user-supplied (x, p) pairs.
    Tabulated(MonotoneCubic),
}

impl ReferenceCdf {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ReferenceCdf::StdNormal => norm_cdf(x),
            ReferenceCdf::Uniform01 => x.clamp(0.0, 1.0),
            ReferenceCdf::Tabulated(t) => t.eval(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            ReferenceCdf::StdNormal => norm_pdf(x),
            ReferenceCdf::Uniform01 => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            ReferenceCdf::Tabulated(t) => t.derivative(x),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        match self {
            ReferenceCdf::StdNormal => norm_quantile(p),
            ReferenceCdf::Uniform01 => {
                if (0.0..=1.0).contains(&p) {
                    Ok(p)
                } else {
                    Err(Error::Domain(format!("uniform quantile requires p in [0,1], got {p}")))
                }
            }
            ReferenceCdf::Tabulated(t) => t.inverse(p),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ReferenceCdf::StdNormal => "std-normal",
            ReferenceCdf::Uniform01 => "uniform",
            ReferenceCdf::Tabulated(_) => "tabulated",
        }
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes)
/// through strictly increasing knots. Values below the first knot map to 0
/// and above the last knot to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ps: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        if xs.len() != ps.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter(
                "tabulated CDF needs at least two (x, p) pairs of equal length".into(),
            ));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter("tabulated x values must increase strictly".into()));
            }
        }
        for w in ps.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidParameter("tabulated p values must increase strictly".into()));
            }
        }
        if ps[0] < 0.0 || ps[ps.len() - 1] > 1.0 || xs.iter().chain(&ps).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("tabulated p values must lie in [0,1]".into()));
        }

        let m = xs.len();
        let secants: Vec<f64> = (0..m - 1)
            .map(|k| (ps[k + 1] - ps[k]) / (xs[k + 1] - xs[k]))
            .collect();
        let mut slopes = vec![0.0; m];
        slopes[0] = secants[0];
        slopes[m - 1] = secants[m - 2];
        for k in 1..m - 1 {
            slopes[k] = if secants[k - 1] * secants[k] <= 0.0 {
                0.0
            } else {
                0.5 * (secants[k - 1] + secants[k])
            };
        }
        for k in 0..m - 1 {
            let a = slopes[k] / secants[k];
            let b = slopes[k + 1] / secants[k];
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                slopes[k] = tau * a * secants[k];
                slopes[k + 1] = tau * b * secants[k];
            }
        }
        Ok(Self { xs, ps, slopes })
    }

    fn segment(&self, x: f64) -> usize {
        let k = self.xs.partition_point(|&v| v <= x);
        k.saturating_sub(1).min(self.xs.len() - 2)
    }

    fn hermite(&self, k: usize, x: f64) -> (f64, f64) {
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let (p0, p1) = (self.ps[k], self.ps[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let val = (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * m1;
        let der = ((6.0 * t2 - 6.0 * t) * p0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * p1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (val, der)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        if x < self.xs[0] {
            return 0.0;
        }
        if x > self.xs[last] {
            return 1.0;
        }
        if x == self.xs[last] {
            return self.ps[last];
        }
        self.hermite(self.segment(x), x).0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x < self.xs[0] || x >= self.xs[self.xs.len() - 1] {
            return 0.0;
        }
        self.hermite(self.segment(x), x).1.max(0.0)
    }

    pub fn inverse(&self, p: f64) -> Result<f64> {
        let last = self.ps.len() - 1;
        if !(p >= self.ps[0] && p <= self.ps[last]) {
            return Err(Error::Domain(format!(
                "p = {p} outside the tabulated range [{}, {}]",
                self.ps[0], self.ps[last]
            )));
        }
        let k = self.ps.partition_point(|&v| v <= p).saturating_sub(1).min(last - 1);
        let (mut lo, mut hi) = (self.xs[k], self.xs[k + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.hermite(k, mid).0 < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// ρ₁(t) = φ(Φ⁻¹(t)), with the limits ρ₁(0) = ρ₁(1) = 0.
pub fn rho1(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    norm_pdf(norm_ppf(t))
}

/// ρ₂(t) = φ(Φ⁻¹(t))·Φ⁻¹(t)/√2, with the limits ρ₂(0) = ρ₂(1) = 0.
pub fn rho2(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let z = norm_ppf(t);
    norm_pdf(z) * z / SQRT_2
}

/// Limiting covariance kernel of √n(F̄ₙ(p; β̃) − p) for the Gaussian
/// location-scale model with maximum-likelihood estimates.
pub fn durbin_rho(t: f64, v: f64) -> f64 {
    t.min(v) - t * v - rho1(t) * rho1(v) - rho2(t) * rho2(v)
}

/// σ(p) = √ρ(p, p), the standard deviation that normalises composite-mode bars.
pub fn durbin_sigma(p: f64) -> Result<f64> {
    if !(p > SIGMA_GUARD && p < 1.0 - SIGMA_GUARD) {
        return Err(Error::Domain(format!("durbin_sigma requires p in (1e-8, 1 - 1e-8), got {p}")));
    }
    let z = norm_ppf(p);
    let r1 = norm_pdf(z);
    let r2 = r1 * z / SQRT_2;
    let radicand = p * (1.0 - p) - r1 * r1 - r2 * r2;
    if !(radicand > 0.0) {
        return Err(Error::Numerical(format!("non-positive Durbin variance {radicand:e} at p = {p}")));
    }
    Ok(radicand.sqrt())
}

/// Covariance of an estimated empirical process. Only the Gaussian MLE
/// kernel is provided.
pub trait EstimatedProcessCovariance {
    fn rho(&self, t: f64, v: f64) -> f64;
    fn sigma(&self, p: f64) -> Result<f64>;
}

/// The Gaussian location-scale model with (X̄, S²) estimates.
#[derive(Debug, Clone, Copy, Default)]
pub struct GaussianMle;

impl EstimatedProcessCovariance for GaussianMle {
    fn rho(&self, t: f64, v: f64) -> f64 {
        durbin_rho(t, v)
    }

    fn sigma(&self, p: f64) -> Result<f64> {
        durbin_sigma(p)
    }
}
