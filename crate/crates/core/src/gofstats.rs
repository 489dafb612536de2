//! Test statistics and the data-driven selection rules.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::ccurve::{empirical_cc_composite, empirical_cc_simple, mle_normal, CcSeries, NullMode, NullSpec, Sample};
use crate::dyadic::{dim, DyadicGrid};
use crate::error::{Error, Result};
use crate::refmodels::{norm_cdf, norm_pdf, norm_ppf, ReferenceCdf};

/// Penalty used by the composite rule when the BCMR oracle rejects.
pub const COMPOSITE_REJECT_PENALTY: f64 = 1.5;

/// P_{d(s)}: sum of squared level-s bars.
pub fn chi2_stat(series: &CcSeries, s: u32) -> Result<f64> {
    Ok(series.bars_at(s)?.iter().map(|b| b * b).sum())
}

/// M: largest absolute bar of the series.
pub fn max_stat(series: &CcSeries) -> f64 {
    max_abs(&series.bars)
}

pub fn max_abs(bars: &[f64]) -> f64 {
    bars.iter().fold(0.0_f64, |m, b| m.max(b.abs()))
}

/// Weights φ(Φ⁻¹((i−1)/n)) − φ(Φ⁻¹(i/n)) of the BCMR scale estimate.
#[derive(Debug, Clone)]
pub struct BcmrWeights {
    w: Vec<f64>,
}

impl BcmrWeights {
    pub fn new(n: usize) -> Self {
        let g = |i: usize| -> f64 {
            if i == 0 || i == n {
                0.0
            } else {
                norm_pdf(norm_ppf(i as f64 / n as f64))
            }
        };
        BcmrWeights { w: (1..=n).map(|i| g(i - 1) - g(i)).collect() }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// σ̂ₙ = ∫₀¹ F̂ₙ⁻¹(t)Φ⁻¹(t)dt for a sorted sample of matching size.
    pub fn sigma_hat(&self, sorted_x: &[f64]) -> f64 {
        debug_assert_eq!(sorted_x.len(), self.w.len());
        // The weights sum to zero, so centring only removes cancellation.
        let c = sorted_x[sorted_x.len() / 2];
        sorted_x.iter().zip(&self.w).map(|(x, w)| (x - c) * w).sum()
    }

    /// T = n(1 − σ̂ₙ²/S²) given the divisor-n standard deviation.
    pub fn stat(&self, sorted_x: &[f64], sd: f64) -> f64 {
        let s = self.sigma_hat(sorted_x) / sd;
        sorted_x.len() as f64 * (1.0 - s * s)
    }
}

/// BCMR statistic T = n(1 − σ̂ₙ²/S²).
pub fn bcmr_stat(sample: &Sample) -> Result<f64> {
    if sample.len() < 3 {
        return Err(Error::InvalidParameter(format!("BCMR needs n ≥ 3, got {}", sample.len())));
    }
    let (_, sd) = mle_normal(sample.values())?;
    let x = sample.sorted();
    Ok(BcmrWeights::new(x.len()).stat(&x, sd))
}

/// Index s* of the minimal dimension maximising P_{d(s)} − a·d(s), given
/// the cumulative profile P_{d(0)}, …, P_{d(S)}.
pub fn select_level(profile: &[f64], a: f64) -> u32 {
    let mut best = 0;
    let mut best_val = profile[0] - a;
    for (s, &p) in profile.iter().enumerate().skip(1) {
        let v = p - a * dim(s as u32) as f64;
        if v > best_val {
            best = s;
            best_val = v;
        }
    }
    best as u32
}

/// A(a): the selected dimension d(s*).
pub fn select_a(series: &CcSeries, a: f64) -> Result<usize> {
    if !(a >= 0.0) {
        return Err(Error::InvalidParameter(format!("penalty must be nonnegative, got {a}")));
    }
    Ok(dim(select_level(&series.chi2_profile(), a)))
}

/// Constants for one data-driven test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub mode: NullMode,
    pub alpha: f64,
    pub level: u32,
    /// a(n, α) or a(n, α; β̃).
    pub penalty_a: f64,
    /// m(n, α) or t(n, α).
    pub oracle_cut: f64,
    /// 0 in simple mode, 1.5 in composite mode.
    pub reject_penalty: f64,
    /// c(n, α) or c̃(n, α).
    pub critical: f64,
}

impl SelectionConfig {
    pub fn new(mode: NullMode, alpha: f64, level: u32, penalty_a: f64, oracle_cut: f64, critical: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
        }
        if !(penalty_a > 0.0) || !(oracle_cut > 0.0) {
            return Err(Error::InvalidParameter("penalty and oracle cut must be positive".into()));
        }
        let reject_penalty = match mode {
            NullMode::Simple => 0.0,
            NullMode::Composite => COMPOSITE_REJECT_PENALTY,
        };
        Ok(SelectionConfig { mode, alpha, level, penalty_a, oracle_cut, reject_penalty, critical })
    }

    /// Selected level and statistic value from a cumulative profile and an
    /// oracle value. The oracle accepts when its value is ≤ the cut.
    pub fn apply(&self, profile: &[f64], oracle: f64) -> (u32, f64) {
        let a = if oracle <= self.oracle_cut { self.penalty_a } else { self.reject_penalty };
        let s = select_level(profile, a);
        (s, profile[s as usize])
    }
}

/// Outcome of a test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: String,
    pub selected_dim: Option<usize>,
    pub statistic: f64,
    pub critical: f64,
    pub oracle: Option<f64>,
    pub oracle_cut: Option<f64>,
    pub reject: bool,
    pub components: Vec<f64>,
    pub p_value: Option<f64>,
}

impl TestReport {
    pub fn new(kind: impl Into<String>, statistic: f64, critical: f64) -> Self {
        TestReport {
            kind: kind.into(),
            selected_dim: None,
            statistic,
            critical,
            oracle: None,
            oracle_cut: None,
            reject: statistic >= critical,
            components: Vec::new(),
            p_value: None,
        }
    }
}

fn data_driven_report(series: &CcSeries, oracle: f64, cfg: &SelectionConfig, kind: &str) -> TestReport {
    let profile = series.chi2_profile();
    let (s, stat) = cfg.apply(&profile, oracle);
    let mut r = TestReport::new(kind, stat, cfg.critical);
    r.selected_dim = Some(dim(s));
    r.oracle = Some(oracle);
    r.oracle_cut = Some(cfg.oracle_cut);
    r.components = series.bars.clone();
    r
}

/// P_{R(α)}: A(a) when M ≤ m, A(0) otherwise.
pub fn data_driven_simple(sample: &Sample, f0: &ReferenceCdf, cfg: &SelectionConfig) -> Result<TestReport> {
    if cfg.mode != NullMode::Simple {
        return Err(Error::UnsupportedMode("composite"));
    }
    let grid = DyadicGrid::new(cfg.level)?;
    let series = empirical_cc_simple(sample, f0, &grid, cfg.level)?;
    let m = max_stat(&series);
    Ok(data_driven_report(&series, m, cfg, "P_R"))
}

/// P_{Q̃(α)}(β̃): A(a; β̃) when T ≤ t, A(1.5; β̃) otherwise.
pub fn data_driven_composite(sample: &Sample, cfg: &SelectionConfig) -> Result<TestReport> {
    if cfg.mode != NullMode::Composite {
        return Err(Error::UnsupportedMode("simple"));
    }
    let grid = DyadicGrid::new(cfg.level)?;
    let series = empirical_cc_composite(sample, &grid, cfg.level)?;
    let t = bcmr_stat(sample)?;
    Ok(data_driven_report(&series, t, cfg, "P_Q"))
}

/// Classical EDF statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Competitor {
    AD,
    KS,
    CvM,
    BJ,
}

impl Competitor {
    pub const ALL: [Competitor; 4] = [Competitor::AD, Competitor::KS, Competitor::CvM, Competitor::BJ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Competitor::AD => "AD",
            Competitor::KS => "KS",
            Competitor::CvM => "CvM",
            Competitor::BJ => "BJ",
        }
    }

    /// Statistic from sorted probability-scale values.
    pub fn from_sorted_u(&self, u: &[f64]) -> f64 {
        match self {
            Competitor::AD => anderson_darling(u),
            Competitor::KS => kolmogorov_smirnov(u),
            Competitor::CvM => cramer_von_mises(u),
            Competitor::BJ => berk_jones(u),
        }
    }
}

impl fmt::Display for Competitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Competitor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AD" => Ok(Competitor::AD),
            "KS" => Ok(Competitor::KS),
            "CVM" => Ok(Competitor::CvM),
            "BJ" => Ok(Competitor::BJ),
            _ => Err(Error::InvalidParameter(format!("unknown competitor '{s}'"))),
        }
    }
}

/// Sorted U = F₀(X) in simple mode, or Φ((X − X̄)/S) in composite mode.
pub fn probability_scale(sample: &Sample, null: &NullSpec) -> Result<Vec<f64>> {
    let mut u: Vec<f64> = match null {
        NullSpec::Simple(f0) => sample.values().iter().map(|&x| f0.cdf(x)).collect(),
        NullSpec::CompositeGaussian => {
            let (m, s) = mle_normal(sample.values())?;
            sample.values().iter().map(|&x| norm_cdf((x - m) / s)).collect()
        }
    };
    u.sort_by(f64::total_cmp);
    Ok(u)
}

pub fn competitor_stat(sample: &Sample, kind: Competitor, null: &NullSpec) -> Result<f64> {
    Ok(kind.from_sorted_u(&probability_scale(sample, null)?))
}

const LOG_FLOOR: f64 = 1e-300;

pub fn anderson_darling(u: &[f64]) -> f64 {
    let n = u.len();
    let nf = n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let a = u[i].max(LOG_FLOOR).ln();
        let b = (1.0 - u[n - 1 - i]).max(LOG_FLOOR).ln();
        acc += (2 * i + 1) as f64 * (a + b);
    }
    -nf - acc / nf
}

pub fn kolmogorov_smirnov(u: &[f64]) -> f64 {
    let nf = u.len() as f64;
    let mut d = 0.0_f64;
    for (i, &v) in u.iter().enumerate() {
        d = d.max((i + 1) as f64 / nf - v).max(v - i as f64 / nf);
    }
    d
}

pub fn cramer_von_mises(u: &[f64]) -> f64 {
    let nf = u.len() as f64;
    let mut acc = 1.0 / (12.0 * nf);
    for (i, &v) in u.iter().enumerate() {
        let e = v - (2 * i + 1) as f64 / (2.0 * nf);
        acc += e * e;
    }
    acc
}

/// Binomial Kullback–Leibler divergence K(x, u) with 0·ln 0 = 0.
fn kl(x: f64, u: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(x, u) + term(1.0 - x, 1.0 - u)
}

/// Two-sided Berk–Jones statistic n·sup K(F̂ₙ, F₀), evaluated on both sides
/// of every jump.
pub fn berk_jones(u: &[f64]) -> f64 {
    let nf = u.len() as f64;
    let mut best = 0.0_f64;
    for (i, &v) in u.iter().enumerate() {
        best = best.max(kl((i + 1) as f64 / nf, v)).max(kl(i as f64 / nf, v));
    }
    nf * best
}
