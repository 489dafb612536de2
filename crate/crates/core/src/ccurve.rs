//! Empirical and population comparison curves.
//!
//! In simple mode the bar at grid point p is
//! √n (p − F̂ₙ(F₀⁻¹(p))) / √(p(1 − p)), computed on the probability scale
//! U = F₀(X). In composite Gaussian mode the threshold is β̃₂Φ⁻¹(p) + β̃₁ with
//! the maximum-likelihood estimates and the denominator is the Durbin σ(p).

use serde::{Deserialize, Serialize};

use crate::alternatives::AltSpec;
use crate::dyadic::{dim, haar_projected, DyadicGrid};
use crate::error::{Error, Result};
use crate::refmodels::{durbin_sigma, norm_ppf, ReferenceCdf};

/// Smallest sample accepted in composite mode.
pub const MIN_COMPOSITE_N: usize = 8;

/// A validated sample of finite observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Sample { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Sample> {
        Sample::new(self.values.iter().map(|&x| f(x)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullMode {
    Simple,
    Composite,
}

impl NullMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            NullMode::Simple => "simple",
            NullMode::Composite => "composite",
        }
    }

    /// Recommended grid level: 6 for simple, 4 for composite.
    pub fn default_level(&self) -> u32 {
        match self {
            NullMode::Simple => 6,
            NullMode::Composite => 4,
        }
    }
}

impl std::str::FromStr for NullMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(NullMode::Simple),
            "composite" => Ok(NullMode::Composite),
            _ => Err(Error::InvalidParameter(format!("unknown mode '{s}' (simple|composite)"))),
        }
    }
}

/// The null hypothesis: a fully specified F₀, or the Gaussian location-scale
/// family with estimated parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NullSpec {
    Simple(ReferenceCdf),
    CompositeGaussian,
}

impl NullSpec {
    pub fn mode(&self) -> NullMode {
        match self {
            NullSpec::Simple(_) => NullMode::Simple,
            NullSpec::CompositeGaussian => NullMode::Composite,
        }
    }
}

/// Scaled components √n·ĈC(p_{s,j}) at one grid level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcSeries {
    pub grid_level: u32,
    pub level: u32,
    pub n: usize,
    pub mode: NullMode,
    pub points: Vec<f64>,
    pub bars: Vec<f64>,
    /// (mean, sd) maximum-likelihood estimates in composite mode.
    pub beta_hat: Option<(f64, f64)>,
}

impl CcSeries {
    /// Level-t bars extracted by nesting, t ≤ level.
    pub fn bars_at(&self, t: u32) -> Result<Vec<f64>> {
        if t > self.level {
            return Err(Error::InvalidParameter(format!("level {t} exceeds series level {}", self.level)));
        }
        let stride = 1usize << (self.level - t);
        Ok(self.bars.iter().skip(stride - 1).step_by(stride).copied().collect())
    }

    /// Σ of squared bars at each level 0..=level, i.e. P_{d(0)}, …, P_{d(level)}.
    pub fn chi2_profile(&self) -> Vec<f64> {
        chi2_profile(&self.bars, self.level)
    }
}

/// Cumulative P_{d(s)} for s = 0..=level from level-`level` bars, using the
/// nesting: level-t points are those whose 1-based index is a multiple of
/// 2^(level − t).
pub fn chi2_profile(bars: &[f64], level: u32) -> Vec<f64> {
    debug_assert_eq!(bars.len(), dim(level));
    let mut by_level = vec![0.0; level as usize + 1];
    for (i, b) in bars.iter().enumerate() {
        let idx = i + 1;
        // The coarsest level containing this point.
        let t = level - idx.trailing_zeros().min(level);
        by_level[t as usize] += b * b;
    }
    let mut acc = 0.0;
    by_level
        .into_iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Precomputed per-point constants for filling bars repeatedly, as the
/// Monte-Carlo engine does.
#[derive(Debug, Clone)]
pub struct BarKernel {
    level: u32,
    mode: NullMode,
    points: Vec<f64>,
    z: Vec<f64>,
    denom: Vec<f64>,
}

impl BarKernel {
    pub fn new(mode: NullMode, level: u32) -> Result<Self> {
        let grid = DyadicGrid::new(level)?;
        let points = grid.points_f64().to_vec();
        let z: Vec<f64> = match mode {
            NullMode::Simple => Vec::new(),
            NullMode::Composite => points.iter().map(|&p| norm_ppf(p)).collect(),
        };
        let denom = match mode {
            NullMode::Simple => points.iter().map(|&p| (p * (1.0 - p)).sqrt()).collect(),
            NullMode::Composite => points.iter().map(|&p| durbin_sigma(p)).collect::<Result<Vec<_>>>()?,
        };
        Ok(BarKernel { level, mode, points, z, denom })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn mode(&self) -> NullMode {
        self.mode
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.points.len()
    }

    /// Bars from sorted probability-scale values U₍₁₎ ≤ … ≤ U₍ₙ₎.
    pub fn fill_simple(&self, sorted_u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.mode, NullMode::Simple);
        let n = sorted_u.len();
        let rn = (n as f64).sqrt();
        let nf = n as f64;
        let mut i = 0;
        for (j, &p) in self.points.iter().enumerate() {
            while i < n && sorted_u[i] <= p {
                i += 1;
            }
            out[j] = rn * (p - i as f64 / nf) / self.denom[j];
        }
    }

    /// Bars from a sorted sample and the estimates (mean, sd).
    pub fn fill_composite(&self, sorted_x: &[f64], mean: f64, sd: f64, out: &mut [f64]) {
        debug_assert_eq!(self.mode, NullMode::Composite);
        let n = sorted_x.len();
        let rn = (n as f64).sqrt();
        let nf = n as f64;
        let mut i = 0;
        for (j, &p) in self.points.iter().enumerate() {
            let thr = sd * self.z[j] + mean;
            while i < n && sorted_x[i] <= thr {
                i += 1;
            }
            out[j] = rn * (p - i as f64 / nf) / self.denom[j];
        }
    }
}

/// Maximum-likelihood estimates (X̄, S) with divisor n.
pub fn mle_normal(x: &[f64]) -> Result<(f64, f64)> {
    if x.is_empty() {
        return Err(Error::EmptySample);
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Err(Error::Degenerate("constant sample has zero scale".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Degenerate("sample variance is zero".into()));
    }
    Ok((mean, var.sqrt()))
}

/// Simple-mode empirical CC at level `s` of `grid`.
pub fn empirical_cc_simple(sample: &Sample, f0: &ReferenceCdf, grid: &DyadicGrid, s: u32) -> Result<CcSeries> {
    if s > grid.level() {
        return Err(Error::LevelOutOfRange(s));
    }
    let mut u: Vec<f64> = sample.values().iter().map(|&x| f0.cdf(x)).collect();
    u.sort_by(f64::total_cmp);
    let kernel = BarKernel::new(NullMode::Simple, s)?;
    let mut bars = vec![0.0; kernel.dim()];
    kernel.fill_simple(&u, &mut bars);
    Ok(CcSeries {
        grid_level: grid.level(),
        level: s,
        n: sample.len(),
        mode: NullMode::Simple,
        points: kernel.points().to_vec(),
        bars,
        beta_hat: None,
    })
}

/// Simple-mode bars as √n times the sample mean of h_{s,j}(F₀(Xᵢ)).
pub fn empirical_cc_simple_haar(sample: &Sample, f0: &ReferenceCdf, grid: &DyadicGrid, s: u32) -> Result<CcSeries> {
    let points = grid.points_at(s)?;
    let u: Vec<f64> = sample.values().iter().map(|&x| f0.cdf(x)).collect();
    let n = u.len() as f64;
    let mut bars = Vec::with_capacity(points.len());
    for &p in &points {
        let mut acc = 0.0;
        for &v in &u {
            acc += haar_projected(p, v)?;
        }
        bars.push(n.sqrt() * acc / n);
    }
    Ok(CcSeries {
        grid_level: grid.level(),
        level: s,
        n: sample.len(),
        mode: NullMode::Simple,
        points,
        bars,
        beta_hat: None,
    })
}

/// Composite Gaussian-mode empirical CC at level `s` of `grid`.
pub fn empirical_cc_composite(sample: &Sample, grid: &DyadicGrid, s: u32) -> Result<CcSeries> {
    if s > grid.level() {
        return Err(Error::LevelOutOfRange(s));
    }
    if sample.len() < MIN_COMPOSITE_N {
        return Err(Error::InvalidParameter(format!(
            "composite mode needs at least {MIN_COMPOSITE_N} observations, got {}",
            sample.len()
        )));
    }
    let (mean, sd) = mle_normal(sample.values())?;
    let x = sample.sorted();
    let kernel = BarKernel::new(NullMode::Composite, s)?;
    let mut bars = vec![0.0; kernel.dim()];
    kernel.fill_composite(&x, mean, sd, &mut bars);
    Ok(CcSeries {
        grid_level: grid.level(),
        level: s,
        n: sample.len(),
        mode: NullMode::Composite,
        points: kernel.points().to_vec(),
        bars,
        beta_hat: Some((mean, sd)),
    })
}

/// Dispatch on the null specification.
pub fn empirical_cc(sample: &Sample, null: &NullSpec, grid: &DyadicGrid, s: u32) -> Result<CcSeries> {
    match null {
        NullSpec::Simple(f0) => empirical_cc_simple(sample, f0, grid, s),
        NullSpec::CompositeGaussian => empirical_cc_composite(sample, grid, s),
    }
}

/// Pairs (q̃_{s,j}, bar_j) with q̃ = β̃₂Φ⁻¹(p) + β̃₁, for the B_q plot.
pub fn bq_transform(series: &CcSeries) -> Result<Vec<(f64, f64)>> {
    let (mean, sd) = match (series.mode, series.beta_hat) {
        (NullMode::Composite, Some(b)) => b,
        _ => return Err(Error::UnsupportedMode("simple")),
    };
    Ok(series.points.iter().zip(&series.bars).map(|(&p, &b)| (sd * norm_ppf(p) + mean, b)).collect())
}

/// Population comparison curve of a known alternative.
#[derive(Debug, Clone)]
pub struct PopulationCc {
    alt: AltSpec,
    null: NullSpec,
    beta: Option<(f64, f64)>,
}

impl PopulationCc {
    pub fn alt(&self) -> &AltSpec {
        &self.alt
    }

    /// β(F) = (mean, sd) of the alternative in composite mode.
    pub fn beta(&self) -> Option<(f64, f64)> {
        self.beta
    }

    pub fn cc(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("comparison curve needs p in (0,1), got {p}")));
        }
        match &self.null {
            NullSpec::Simple(f0) => {
                let x = f0.quantile(p)?;
                Ok((p - self.alt.cdf(x)) / (p * (1.0 - p)).sqrt())
            }
            NullSpec::CompositeGaussian => {
                let (m, s) = self.beta.expect("composite curve carries β(F)");
                let x = s * norm_ppf(p) + m;
                Ok((p - self.alt.cdf(x)) / durbin_sigma(p)?)
            }
        }
    }

    /// Sign changes of cc on a uniform mesh of `mesh` interior points,
    /// refined by bisection. Values within 1e-12 of zero count as zero and do
    /// not start a crossing.
    pub fn zero_crossings(&self, mesh: usize) -> Result<Vec<f64>> {
        let mesh = mesh.max(2);
        let ps: Vec<f64> = (1..=mesh).map(|k| k as f64 / (mesh + 1) as f64).collect();
        let vals = ps.iter().map(|&p| self.cc(p)).collect::<Result<Vec<_>>>()?;
        let tiny = 1e-12;
        let mut out = Vec::new();
        for k in 0..ps.len() {
            if vals[k].abs() <= tiny {
                continue;
            }
            if k + 1 < ps.len() && vals[k + 1].abs() > tiny && vals[k].signum() != vals[k + 1].signum() {
                let (mut lo, mut hi) = (ps[k], ps[k + 1]);
                let slo = vals[k].signum();
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.cc(mid)?.signum() == slo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        Ok(out)
    }
}

/// Population CC of `alt` relative to `null`. Composite mode computes
/// β(F) from the alternative's first two moments.
pub fn population_cc(alt: &AltSpec, null: &NullSpec) -> Result<PopulationCc> {
    let beta = match null {
        NullSpec::Simple(_) => None,
        NullSpec::CompositeGaussian => Some(alt.moments()?),
    };
    Ok(PopulationCc { alt: alt.clone(), null: null.clone(), beta })
}
