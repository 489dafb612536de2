//! Alternative distributions used as simulation truth.
//!
//! Two suites of nine families each are addressable by string id:
//! `A1_0` … `A9_0` for the simple null Φ and `A1` … `A9` for the composite
//! Gaussian null. Each family embeds N(0,1) at θ = 0 except the Tukey lambda
//! (`A1`, logistic at θ = 0) and Johnson SU (`A8`, defined for θ > 0 only).
//! A plain Gaussian `N:<mean>:<sd>` is also accepted.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quad;
use crate::refmodels::{norm_cdf, norm_pdf, norm_ppf, norm_sf};

/// Exponent of the Lehmann component Φ(x)^δ.
pub const LEHMANN_DELTA: f64 = 0.175;
/// Tail fraction of the Mason–Schuenemeyer family in the simple suite.
pub const TAIL_Q_SIMPLE: f64 = 0.25;
/// Tail fraction of the Mason–Schuenemeyer family in the composite suite.
pub const TAIL_Q_COMPOSITE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    /// Φ(x − θ)
    Location,
    /// Φ(x / (1 + θ))
    Scale,
    /// Two-piece normal with right half scaled by 1 + θ.
    TwoPiece,
    /// Fan's local departure, perturbation polynomial in z = 2Φ(x) − 1.
    Fan,
    /// (1 − θ)Φ(x) + θΦ(x − 2)
    NormalContamination,
    /// Anderson's skewed law: Z/(1 − θ) for Z < 0, Z(1 − θ) otherwise.
    AndersonSkewed,
    /// Mason–Schuenemeyer tail alternative H(Φ(x), q, θ).
    TailWeight { q: f64 },
    /// Anderson's kurtotic law Z|Z|^θ.
    AndersonKurtotic,
    /// (1 − θ)Φ(x) + θΦ(x)^δ
    LehmannContamination,
    /// Tukey lambda with quantile (q^θ − (1 − q)^θ)/θ.
    TukeyLambda,
    /// Density φ(x)[1 + θ cos(4πΦ(x))].
    Cosine,
    /// Johnson SU: sinh(Z/θ).
    JohnsonSu,
    /// N(mean, sd²); θ is unused.
    Gaussian { mean: f64, sd: f64 },
}

/// A family together with its parameter, e.g. `A5_0:0.15`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltSpec {
    id: String,
    family: Family,
    theta: f64,
}

const SIMPLE_IDS: [&str; 9] = ["A1_0", "A2_0", "A3_0", "A4_0", "A5_0", "A6_0", "A7_0", "A8_0", "A9_0"];
const COMPOSITE_IDS: [&str; 9] = ["A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9"];

impl AltSpec {
    /// Build from a family id such as `"A4_0"` or `"A8"`.
    pub fn new(id: &str, theta: f64) -> Result<Self> {
        let family = match id {
            "A1_0" => Family::Location,
            "A2_0" => Family::Scale,
            "A3_0" | "A3" => Family::TwoPiece,
            "A4_0" | "A4" => Family::Fan,
            "A5_0" | "A5" => Family::NormalContamination,
            "A6_0" | "A6" => Family::AndersonSkewed,
            "A7_0" => Family::TailWeight { q: TAIL_Q_SIMPLE },
            "A7" => Family::TailWeight { q: TAIL_Q_COMPOSITE },
            "A8_0" => Family::AndersonKurtotic,
            "A9_0" | "A9" => Family::LehmannContamination,
            "A1" => Family::TukeyLambda,
            "A2" => Family::Cosine,
            "A8" => Family::JohnsonSu,
            other => return Err(Error::InvalidParameter(format!("unknown alternative family '{other}'"))),
        };
        let spec = AltSpec { id: id.to_string(), family, theta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        let spec = AltSpec { id: "N".into(), family: Family::Gaussian { mean, sd }, theta: 0.0 };
        spec.validate()?;
        Ok(spec)
    }

    /// Override the tail fraction of a Mason–Schuenemeyer family.
    pub fn with_tail_fraction(mut self, q: f64) -> Result<Self> {
        match &mut self.family {
            Family::TailWeight { q: old } => *old = q,
            _ => return Err(Error::InvalidParameter(format!("{} has no tail fraction", self.id))),
        }
        self.validate()?;
        Ok(self)
    }

    pub fn simple_suite_ids() -> &'static [&'static str] {
        &SIMPLE_IDS
    }

    pub fn composite_suite_ids() -> &'static [&'static str] {
        &COMPOSITE_IDS
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn validate(&self) -> Result<()> {
        let t = self.theta;
        let ok = t.is_finite()
            && match self.family {
                Family::Location | Family::TukeyLambda => true,
                Family::Scale | Family::TwoPiece => t > -1.0,
                Family::Fan | Family::NormalContamination | Family::Cosine | Family::LehmannContamination => {
                    (0.0..=1.0).contains(&t)
                }
                Family::AndersonSkewed => (0.0..1.0).contains(&t),
                Family::TailWeight { q } => t > -1.0 && q > 0.0 && q <= 0.5,
                Family::AndersonKurtotic => t >= 0.0,
                Family::JohnsonSu => t > 0.0,
                Family::Gaussian { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("theta = {t} outside the domain of {}", self.id)))
        }
    }

    /// CDF of the alternative.
    pub fn cdf(&self, x: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Location => norm_cdf(x - t),
            Family::Scale => norm_cdf(x / (1.0 + t)),
            Family::TwoPiece => {
                let k = 2.0 + t;
                if x < 0.0 {
                    2.0 * norm_cdf(x) / k
                } else {
                    1.0 / k + 2.0 * (1.0 + t) / k * (norm_cdf(x / (1.0 + t)) - 0.5)
                }
            }
            Family::Fan => {
                let base = norm_cdf(x);
                let z = 2.0 * base - 1.0;
                if t == 0.0 || z.abs() >= t {
                    return base;
                }
                let c = 4.0 / (t * t);
                let shift = if z <= 0.0 {
                    c * (t * z * z / 2.0 + z * z * z / 3.0 - t * t * t / 6.0)
                } else {
                    c * (t * z * z / 2.0 - z * z * z / 3.0 - t * t * t / 6.0)
                };
                base + 0.5 * shift
            }
            Family::NormalContamination => (1.0 - t) * norm_cdf(x) + t * norm_cdf(x - 2.0),
            Family::AndersonSkewed => {
                if x < 0.0 {
                    norm_cdf(x * (1.0 - t))
                } else {
                    norm_cdf(x / (1.0 - t))
                }
            }
            Family::TailWeight { q } => {
                let e = 1.0 / (t + 1.0);
                let c = q.powf(t * e);
                let u = norm_cdf(x);
                if u < q {
                    c * u.powf(e)
                } else if u <= 1.0 - q {
                    u
                } else {
                    1.0 - c * norm_sf(x).powf(e)
                }
            }
            Family::AndersonKurtotic => {
                let g = x.abs().powf(1.0 / (1.0 + t));
                norm_cdf(g.copysign(x))
            }
            Family::LehmannContamination => {
                let u = norm_cdf(x);
                (1.0 - t) * u + t * u.powf(LEHMANN_DELTA)
            }
            Family::TukeyLambda => tukey_cdf(t, x),
            Family::Cosine => {
                let u = norm_cdf(x);
                u + t * (4.0 * PI * u).sin() / (4.0 * PI)
            }
            Family::JohnsonSu => norm_cdf(t * x.asinh()),
            Family::Gaussian { mean, sd } => norm_cdf((x - mean) / sd),
        }
    }

    /// Survival function 1 − F(x), evaluated without cancellation in the
    /// upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Location => norm_sf(x - t),
            Family::Scale => norm_sf(x / (1.0 + t)),
            Family::TwoPiece if x >= 0.0 => 2.0 * (1.0 + t) / (2.0 + t) * norm_sf(x / (1.0 + t)),
            Family::NormalContamination => (1.0 - t) * norm_sf(x) + t * norm_sf(x - 2.0),
            Family::AndersonSkewed if x >= 0.0 => norm_sf(x / (1.0 - t)),
            Family::TailWeight { .. } | Family::AndersonKurtotic | Family::TukeyLambda | Family::Cosine => {
                self.cdf(-x)
            }
            Family::JohnsonSu => norm_sf(t * x.asinh()),
            Family::Gaussian { mean, sd } => norm_sf((x - mean) / sd),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// Density of the alternative.
    pub fn pdf(&self, x: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Location => norm_pdf(x - t),
            Family::Scale => norm_pdf(x / (1.0 + t)) / (1.0 + t),
            Family::TwoPiece => {
                let c = 2.0 / ((2.0 * PI).sqrt() * (2.0 + t));
                if x < 0.0 {
                    c * (-0.5 * x * x).exp()
                } else {
                    c * (-0.5 * x * x / ((1.0 + t) * (1.0 + t))).exp()
                }
            }
            Family::Fan => norm_pdf(x) * (1.0 + fan_perturbation(t, 2.0 * norm_cdf(x) - 1.0)),
            Family::NormalContamination => (1.0 - t) * norm_pdf(x) + t * norm_pdf(x - 2.0),
            Family::AndersonSkewed => {
                if x < 0.0 {
                    (1.0 - t) * norm_pdf(x * (1.0 - t))
                } else {
                    norm_pdf(x / (1.0 - t)) / (1.0 - t)
                }
            }
            Family::TailWeight { q } => {
                let e = 1.0 / (t + 1.0);
                let c = q.powf(t * e);
                let u = norm_cdf(x);
                let h = if u < q {
                    c * e * u.powf(e - 1.0)
                } else if u <= 1.0 - q {
                    1.0
                } else {
                    c * e * norm_sf(x).powf(e - 1.0)
                };
                h * norm_pdf(x)
            }
            Family::AndersonKurtotic => {
                let a = x.abs();
                if a == 0.0 {
                    return if t == 0.0 { norm_pdf(0.0) } else { f64::INFINITY };
                }
                let e = 1.0 / (1.0 + t);
                norm_pdf(a.powf(e)) * e * a.powf(e - 1.0)
            }
            Family::LehmannContamination => {
                let u = norm_cdf(x);
                let phi = norm_pdf(x);
                let leh = if u > 0.0 { LEHMANN_DELTA * u.powf(LEHMANN_DELTA - 1.0) * phi } else { 0.0 };
                (1.0 - t) * phi + t * leh
            }
            Family::TukeyLambda => {
                if t == 0.0 {
                    let e = (-x.abs()).exp();
                    return e / ((1.0 + e) * (1.0 + e));
                }
                let q = tukey_cdf(t, x);
                if q <= 0.0 || q >= 1.0 {
                    return 0.0;
                }
                1.0 / (q.powf(t - 1.0) + (1.0 - q).powf(t - 1.0))
            }
            Family::Cosine => norm_pdf(x) * (1.0 + t * (4.0 * PI * norm_cdf(x)).cos()),
            Family::JohnsonSu => t * norm_pdf(t * x.asinh()) / (1.0 + x * x).sqrt(),
            Family::Gaussian { mean, sd } => norm_pdf((x - mean) / sd) / sd,
        }
    }

    /// Kinks or singular points of the density, used to split integrals.
    fn breakpoints(&self) -> Vec<f64> {
        let t = self.theta;
        let mut b = vec![0.0];
        match self.family {
            Family::Fan if t > 0.0 => {
                b.push(norm_ppf((1.0 - t) / 2.0));
                b.push(norm_ppf((1.0 + t) / 2.0));
            }
            Family::TailWeight { q } => {
                b.push(norm_ppf(q));
                b.push(-norm_ppf(q));
            }
            Family::NormalContamination => b.push(2.0),
            Family::TukeyLambda if t > 0.0 => {
                b.push(-1.0 / t);
                b.push(1.0 / t);
            }
            Family::Gaussian { mean, .. } => b.push(mean),
            _ => {}
        }
        b.retain(|v| v.is_finite());
        b.sort_by(|a, c| a.total_cmp(c));
        b.dedup();
        b
    }

    /// Draw one observation.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = self.theta;
        let z = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
        let u = |rng: &mut R| -> f64 { rng.sample(Open01) };
        match self.family {
            Family::Location => t + z(rng),
            Family::Scale => (1.0 + t) * z(rng),
            Family::TwoPiece => {
                let left = u(rng) < 1.0 / (2.0 + t);
                let a = z(rng).abs();
                if left {
                    -a
                } else {
                    (1.0 + t) * a
                }
            }
            Family::Fan => {
                // Rejection on the z = 2Φ(x) − 1 scale where the null is
                // uniform on (−1, 1) and the perturbation is at most 1.
                let bound = if t > 0.0 { 2.0 } else { 1.0 };
                loop {
                    let v = 2.0 * u(rng) - 1.0;
                    if bound * u(rng) <= 1.0 + fan_perturbation(t, v) {
                        return norm_ppf(0.5 * (v + 1.0));
                    }
                }
            }
            Family::NormalContamination => {
                let shift = if u(rng) < t { 2.0 } else { 0.0 };
                shift + z(rng)
            }
            Family::AndersonSkewed => {
                let v = z(rng);
                if v < 0.0 {
                    v / (1.0 - t)
                } else {
                    v * (1.0 - t)
                }
            }
            Family::TailWeight { q } => {
                let v = u(rng);
                let qt = q.powf(t);
                if v < q {
                    norm_ppf(v.powf(t + 1.0) / qt)
                } else if v <= 1.0 - q {
                    norm_ppf(v)
                } else {
                    -norm_ppf((1.0 - v).powf(t + 1.0) / qt)
                }
            }
            Family::AndersonKurtotic => {
                let v = z(rng);
                v * v.abs().powf(t)
            }
            Family::LehmannContamination => {
                if u(rng) < t {
                    norm_ppf(u(rng).powf(1.0 / LEHMANN_DELTA))
                } else {
                    z(rng)
                }
            }
            Family::TukeyLambda => tukey_quantile(t, u(rng)),
            Family::Cosine => loop {
                let v = u(rng);
                if (1.0 + t) * u(rng) <= 1.0 + t * (4.0 * PI * v).cos() {
                    return norm_ppf(v);
                }
            },
            Family::JohnsonSu => (z(rng) / t).sinh(),
            Family::Gaussian { mean, sd } => mean + sd * z(rng),
        }
    }

    /// `n` i.i.d. draws from `rng`.
    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// `n` i.i.d. draws from a generator seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(n, &mut rng)
    }

    /// Mean and standard deviation by numerical integration of the CDF tails.
    pub fn moments(&self) -> Result<(f64, f64)> {
        if let Family::Gaussian { mean, sd } = self.family {
            return Ok((mean, sd));
        }
        let tol = 1e-10;
        let pieces = self.breakpoints();
        let upper = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
            // Integrate over [0, ∞) split at positive breakpoints.
            let mut acc = 0.0;
            let mut lo = 0.0;
            for &b in pieces.iter().filter(|&&b| b > 0.0) {
                acc += quad::integrate(&g, lo, b, tol)?;
                lo = b;
            }
            Ok(acc + quad::integrate_upper(&g, lo, tol)?)
        };
        let lower = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
            let mut acc = 0.0;
            let mut hi = 0.0;
            for &b in pieces.iter().rev().filter(|&&b| b < 0.0) {
                acc += quad::integrate(&g, b, hi, tol)?;
                hi = b;
            }
            Ok(acc + quad::integrate_lower(&g, hi, tol)?)
        };
        let sf = |x: f64| self.sf(x);
        let mean = upper(&sf)? - lower(&|x| self.cdf(x))?;
        let second = upper(&|x| 2.0 * x * sf(x))? + lower(&|x| -2.0 * x * self.cdf(x))?;
        let var = second - mean * mean;
        if !(var > 0.0) || !var.is_finite() {
            return Err(Error::Divergent(format!("variance of {} is not finite and positive", self)));
        }
        Ok((mean, var.sqrt()))
    }

    /// True when the family reduces to N(0,1) at this parameter.
    pub fn is_standard_normal(&self) -> bool {
        match self.family {
            Family::TukeyLambda | Family::JohnsonSu => false,
            Family::Gaussian { mean, sd } => mean == 0.0 && sd == 1.0,
            _ => self.theta == 0.0,
        }
    }
}

impl fmt::Display for AltSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Gaussian { mean, sd } => write!(f, "N:{mean}:{sd}"),
            Family::TailWeight { q } if q != TAIL_Q_SIMPLE && q != TAIL_Q_COMPOSITE => {
                write!(f, "{}:{}:q={q}", self.id, self.theta)
            }
            _ => write!(f, "{}:{}", self.id, self.theta),
        }
    }
}

impl FromStr for AltSpec {
    type Err = Error;

    /// Parses `A5_0:0.15`, `A7:2:q=0.2` or `N:1.5:2`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad number '{v}' in alternative '{s}'")))
        };
        match parts.as_slice() {
            ["N", m, sd] => AltSpec::gaussian(num(m)?, num(sd)?),
            [id, theta] => AltSpec::new(id, num(theta)?),
            [id, theta, q] if q.starts_with("q=") => AltSpec::new(id, num(theta)?)?.with_tail_fraction(num(&q[2..])?),
            _ => Err(Error::InvalidParameter(format!("cannot parse alternative '{s}' (expected ID:THETA)"))),
        }
    }
}

fn fan_perturbation(t: f64, z: f64) -> f64 {
    if t > 0.0 && z.abs() < t {
        4.0 * z * (t - z.abs()) / (t * t)
    } else {
        0.0
    }
}

fn tukey_quantile(t: f64, q: f64) -> f64 {
    if t == 0.0 {
        (q / (1.0 - q)).ln()
    } else {
        (q.powf(t) - (1.0 - q).powf(t)) / t
    }
}

fn tukey_cdf(t: f64, x: f64) -> f64 {
    if t == 0.0 {
        return 1.0 / (1.0 + (-x).exp());
    }
    if t > 0.0 {
        if x <= -1.0 / t {
            return 0.0;
        }
        if x >= 1.0 / t {
            return 1.0;
        }
    }
    // The quantile function is increasing; bisect on (0, 1).
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..1100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tukey_quantile(t, mid) < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_mid_specs() -> Vec<AltSpec> {
        [
            "A1_0:0.3", "A2_0:0.2", "A3_0:0.3", "A4_0:0.4", "A5_0:0.15", "A6_0:0.3", "A7_0:0.5", "A8_0:0.5",
            "A9_0:0.1", "A1:3.0", "A2:0.7", "A3:-0.5", "A4:0.4", "A5:0.15", "A6:0.3", "A7:2.0", "A8:1.6",
            "A9:0.1",
        ]
        .iter()
        .map(|s| s.parse().unwrap())
        .collect()
    }

    #[test]
    fn parse_and_display() {
        let a: AltSpec = "A5_0:0.15".parse().unwrap();
        assert_eq!(a.family(), Family::NormalContamination);
        assert_eq!(a.to_string(), "A5_0:0.15");
        let b: AltSpec = "A7:2:q=0.2".parse().unwrap();
        assert_eq!(b.family(), Family::TailWeight { q: 0.2 });
        let n: AltSpec = "N:1.5:2".parse().unwrap();
        assert_eq!(n.moments().unwrap(), (1.5, 2.0));
        assert!("A10:1".parse::<AltSpec>().is_err());
        assert!("A5_0".parse::<AltSpec>().is_err());
    }

    #[test]
    fn domain_checks() {
        assert!(AltSpec::new("A2_0", -1.0).is_err());
        assert!(AltSpec::new("A4_0", 1.2).is_err());
        assert!(AltSpec::new("A6_0", 1.0).is_err());
        assert!(AltSpec::new("A8_0", -0.1).is_err());
        assert!(AltSpec::new("A8", 0.0).is_err());
        assert!(AltSpec::new("A5", f64::NAN).is_err());
        assert!(AltSpec::gaussian(0.0, 0.0).is_err());
    }

    #[test]
    fn contamination_cdf_at_zero() {
        // 0.85·0.5 + 0.15·Φ(−2); mpmath: 0.428412519792226881080042395575
        let a = AltSpec::new("A5_0", 0.15).unwrap();
        assert!((a.cdf(0.0) - 0.428_412_519_792_226_9).abs() < 1e-15);
    }

    #[test]
    fn tail_pieces_meet() {
        for &t in &[-0.5, 0.5, 2.0] {
            let a = AltSpec::new("A7_0", t).unwrap();
            let xq = norm_ppf(TAIL_Q_SIMPLE);
            let eps = 1e-9;
            assert!((a.cdf(xq - eps) - TAIL_Q_SIMPLE).abs() < 1e-8);
            assert!((a.cdf(xq + eps) - TAIL_Q_SIMPLE).abs() < 1e-8);
            assert!((a.cdf(-xq - eps) - (1.0 - TAIL_Q_SIMPLE)).abs() < 1e-8);
            assert!((a.cdf(-xq + eps) - (1.0 - TAIL_Q_SIMPLE)).abs() < 1e-8);
        }
    }

    #[test]
    fn theta_zero_is_normal() {
        for id in SIMPLE_IDS.iter().chain(COMPOSITE_IDS[1..7].iter()).chain(std::iter::once(&"A9")) {
            let a = AltSpec::new(id, 0.0).unwrap();
            assert!(a.is_standard_normal());
            for k in -40..=40 {
                let x = k as f64 * 0.2;
                assert!((a.cdf(x) - norm_cdf(x)).abs() < 1e-9, "{id} at {x}");
            }
        }
    }

    #[test]
    fn cdf_matches_quadrature_of_density() {
        for a in all_mid_specs() {
            let mut pts = a.breakpoints();
            pts.retain(|&b| b > -6.0 && b < 6.0);
            for &x in &[-2.5, -1.0, -0.3, 0.0, 0.4, 1.1, 2.6] {
                // F(x) − F(−6) by quadrature of the density, split at kinks.
                let mut knots = vec![-6.0];
                knots.extend(pts.iter().copied().filter(|&b| b < x));
                knots.push(x);
                let mut acc = 0.0;
                for w in knots.windows(2) {
                    acc += quad::integrate(&|y| a.pdf(y), w[0], w[1], 1e-11).unwrap();
                }
                let expect = a.cdf(x) - a.cdf(-6.0);
                assert!((acc - expect).abs() < 1e-8, "{a} at {x}: {acc} vs {expect}");
            }
        }
    }

    #[test]
    fn survival_agrees_with_cdf() {
        for a in all_mid_specs() {
            for k in -30..=30 {
                let x = k as f64 * 0.25;
                assert!((a.sf(x) + a.cdf(x) - 1.0).abs() < 1e-14, "{a} at {x}");
            }
        }
    }

    #[test]
    fn cdfs_are_monotone() {
        for a in all_mid_specs() {
            let mut prev = 0.0;
            for k in -800..=800 {
                let v = a.cdf(k as f64 * 0.01);
                assert!(v >= prev - 1e-15, "{a} decreases at {}", k as f64 * 0.01);
                assert!((0.0..=1.0).contains(&v));
                prev = v;
            }
        }
    }

    #[test]
    fn closed_form_moments() {
        let close = |a: &str, m: f64, s: f64| {
            let spec: AltSpec = a.parse().unwrap();
            let (mm, ss) = spec.moments().unwrap();
            assert!((mm - m).abs() < 1e-8 && (ss - s).abs() < 1e-8, "{a}: ({mm}, {ss}) vs ({m}, {s})");
        };
        close("A1_0:0.3", 0.3, 1.0);
        close("A1_0:-1.2", -1.2, 1.0);
        close("A2_0:0.2", 0.0, 1.2);
        // Mixture: mean 2θ, variance 1 + 4θ(1 − θ).
        close("A5_0:0.15", 0.3, (1.0_f64 + 4.0 * 0.15 * 0.85).sqrt());
        // sinh(Z/θ): variance (e^{2/θ²} − 1)/2.
        let v = ((2.0 / (1.6_f64 * 1.6)).exp() - 1.0) / 2.0;
        close("A8:1.6", 0.0, v.sqrt());
        // mpmath: sd of sinh(Z/3.5) = 0.297782644017823915
        close("A8:3.5", 0.0, 0.297_782_644_017_823_9);
        // Tukey λ = 0.14: mpmath sd 1.45268614029820089638
        close("A1:0.14", 0.0, 1.452_686_140_298_200_9);
        // Z|Z|^θ: E X² = 2^{1+θ} Γ(1.5 + θ)/√π; θ = 0.5 gives 2^1.5·Γ(2)/√π.
        close("A8_0:0.5", 0.0, (2.0_f64.powf(1.5) / PI.sqrt()).sqrt());
        // Two-piece: mean ((1+θ)² − 1)/(2+θ)·√(2/π).
        let t = 0.3_f64;
        let m = ((1.0 + t) * (1.0 + t) - 1.0) / (2.0 + t) * (2.0 / PI).sqrt();
        let e2 = (1.0 + (1.0 + t).powi(3)) / (2.0 + t);
        close("A3_0:0.3", m, (e2 - m * m).sqrt());
    }

    #[test]
    fn symmetric_families_have_zero_mean() {
        for s in ["A1:3.0", "A2:0.7", "A7:2.0", "A8:1.6"] {
            let (m, _) = s.parse::<AltSpec>().unwrap().moments().unwrap();
            assert!(m.abs() < 1e-8, "{s}: {m}");
        }
    }

    #[test]
    fn divergent_second_moment_is_reported() {
        let a = AltSpec::new("A1", -0.6).unwrap();
        assert!(matches!(a.moments(), Err(Error::Divergent(_))));
    }

    #[test]
    fn two_piece_branch_weight() {
        let a = AltSpec::new("A3_0", 0.3).unwrap();
        let xs = a.sample(1_000_000, 5);
        let left = xs.iter().filter(|&&x| x < 0.0).count() as f64 / xs.len() as f64;
        assert!((left - 1.0 / 2.3).abs() < 0.002, "{left}");
    }

    #[test]
    fn tukey_near_normal_moments() {
        // Tukey λ = 0.14 sample moments, n = 10⁶.
        let a = AltSpec::new("A1", 0.14).unwrap();
        let xs = a.sample(1_000_000, 9);
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
        assert!(m.abs() < 0.01);
        assert!((sd - 1.452_686).abs() < 0.02, "{sd}");
    }
}
