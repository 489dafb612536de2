//! One-sample analysis: ingestion, the data-driven test, competitors,
//! pre-declared acceptance bands and a versioned report.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibrate::{
    calibrate, mc_p_value, AcceptanceBand, BandSide, CalibrationTable, NullEnsemble, StatKind, StatRequest,
    DEFAULT_REPS, DEFAULT_SEED,
};
use crate::ccurve::{empirical_cc, CcSeries, NullMode, NullSpec, Sample};
use crate::dyadic::{dim, DyadicGrid};
use crate::error::{Error, Result};
use crate::gofstats::{
    competitor_stat, data_driven_composite, data_driven_simple, BcmrWeights, Competitor, SelectionConfig, TestReport,
};
use crate::render::flagged;

pub const REPORT_SCHEMA: &str = "ccgof-report/1";

/// A contiguous index set r..=s with the side of its simultaneous bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSpec {
    pub first: usize,
    pub last: usize,
    pub side: BandSide,
}

impl FromStr for BandSpec {
    type Err = Error;

    /// `r:s:upper` or `r:s:lower`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParameter(format!("band must look like r:s:upper|lower, got '{s}'"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let first: usize = parts[0].trim().parse().map_err(|_| bad())?;
        let last: usize = parts[1].trim().parse().map_err(|_| bad())?;
        let side = parts[2].trim().parse()?;
        if first == 0 || first > last {
            return Err(Error::InvalidParameter(format!("band index set {first}..={last} is empty or 0-based")));
        }
        Ok(BandSpec { first, last, side })
    }
}

impl fmt::Display for BandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            BandSide::Upper => "upper",
            BandSide::Lower => "lower",
        };
        write!(f, "{}:{}:{}", self.first, self.last, side)
    }
}

/// Pre-transform applied to raw values before testing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Transform {
    /// x / θ, e.g. onto [0, 1] for a uniform null.
    Scale { theta: f64 },
    /// ln(x / (c − x)) for percentages (c = 100).
    Logit { c: f64 },
}

impl Transform {
    pub fn apply(&self, x: f64) -> Result<f64> {
        match *self {
            Transform::Scale { theta } => Ok(x / theta),
            Transform::Logit { c } => {
                if x > 0.0 && x < c {
                    Ok((x / (c - x)).ln())
                } else {
                    Err(Error::Domain(format!("logit needs 0 < x < {c}, got {x}")))
                }
            }
        }
    }

    pub fn apply_all(&self, sample: &Sample) -> Result<Sample> {
        let v = sample.values().iter().map(|&x| self.apply(x)).collect::<Result<Vec<_>>>()?;
        Sample::new(v)
    }
}

impl FromStr for Transform {
    type Err = Error;

    /// `scale:<θ>`, `logit` or `logit:<c>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<Option<f64>> {
            a.map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad transform argument '{t}'")))
            })
            .transpose()
        };
        match name {
            "scale" => match num(arg)? {
                Some(theta) if theta.is_finite() && theta > 0.0 => Ok(Transform::Scale { theta }),
                _ => Err(Error::InvalidParameter("scale needs a positive θ, e.g. scale:23.5".into())),
            },
            "logit" => match num(arg)?.unwrap_or(100.0) {
                c if c.is_finite() && c > 0.0 => Ok(Transform::Logit { c }),
                _ => Err(Error::InvalidParameter("logit bound must be positive".into())),
            },
            _ => Err(Error::InvalidParameter(format!("unknown transform '{s}'"))),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Transform::Scale { theta } => write!(f, "scale:{theta}"),
            Transform::Logit { c } => write!(f, "logit:{c}"),
        }
    }
}

/// Numeric field `column` (0-based) of each record. Fields are separated by
/// commas, semicolons or whitespace; blank lines and `#` comments are skipped.
pub fn parse_values(text: &str, column: usize, skip_header: bool) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut header_pending = skip_header;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let field = line
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .nth(column)
            .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("no column {column}") })?;
        let v: f64 = field
            .trim_matches('"')
            .parse()
            .map_err(|_| Error::Parse { line: i + 1, msg: format!("'{field}' is not a number") })?;
        if !v.is_finite() {
            return Err(Error::Parse { line: i + 1, msg: format!("non-finite value '{field}'") });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRequest {
    pub null: NullSpec,
    pub alpha: f64,
    pub level: u32,
    pub transform: Option<Transform>,
    pub bands: Vec<BandSpec>,
    pub competitors: Vec<Competitor>,
    pub reps: usize,
    pub seed: u64,
    /// Simulate missing constants instead of failing.
    pub auto_calibrate: bool,
    /// Accept constants interpolated in n from the table.
    pub allow_interpolation: bool,
    /// Run the null ensemble to attach Monte-Carlo p-values.
    pub p_values: bool,
    pub source: Option<String>,
}

impl AnalysisRequest {
    pub fn new(null: NullSpec) -> Self {
        let level = null.mode().default_level();
        AnalysisRequest {
            null,
            alpha: 0.05,
            level,
            transform: None,
            bands: Vec::new(),
            competitors: Vec::new(),
            reps: DEFAULT_REPS,
            seed: DEFAULT_SEED,
            auto_calibrate: false,
            allow_interpolation: false,
            p_values: false,
            source: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        DyadicGrid::new(self.level)?;
        if self.level == 0 {
            return Err(Error::InvalidParameter("level must be at least 1".into()));
        }
        let d = dim(self.level);
        for b in &self.bands {
            if b.first == 0 || b.first > b.last || b.last > d {
                return Err(Error::InvalidParameter(format!("band {b} does not fit the {d} bars of level {}", self.level)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub transform: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandOutcome {
    pub first: usize,
    pub last: usize,
    pub side: BandSide,
    pub bound: f64,
    pub interpolated: bool,
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub index: usize,
    pub p: f64,
    pub value: f64,
    pub band: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationInfo {
    /// Constants simulated in this run rather than read from a table.
    pub computed: bool,
    pub interpolated: bool,
    /// Replications and seed of the ensemble run here, if any.
    pub reps: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: String,
    pub source: Option<String>,
    pub mode: NullMode,
    pub null: String,
    pub alpha: f64,
    pub level: u32,
    pub sample: SampleSummary,
    pub beta_hat: Option<(f64, f64)>,
    pub points: Vec<f64>,
    pub components: Vec<f64>,
    pub test: TestReport,
    pub competitors: Vec<TestReport>,
    pub bands: Vec<BandOutcome>,
    pub flags: Vec<Flag>,
    pub calibration: CalibrationInfo,
    pub decision: String,
}

impl ReportDocument {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn reject(&self) -> bool {
        self.test.reject
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: ReportDocument,
    pub series: CcSeries,
    pub bands: Vec<AcceptanceBand>,
}

fn summary(sample: &Sample, transform: Option<Transform>) -> SampleSummary {
    let v = sample.values();
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
    SampleSummary {
        n,
        mean,
        sd,
        min: v.iter().copied().fold(f64::INFINITY, f64::min),
        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        transform: transform.map(|t| t.to_string()),
    }
}

fn band_stat(b: &BandSpec) -> StatKind {
    match b.side {
        BandSide::Upper => StatKind::Upper(b.first, b.last),
        BandSide::Lower => StatKind::Lower(b.first, b.last),
    }
}

fn oracle_stat(mode: NullMode) -> StatKind {
    match mode {
        NullMode::Simple => StatKind::M,
        NullMode::Composite => StatKind::T,
    }
}

/// Runs the data-driven test, the requested competitors and the declared
/// bands on `raw` (before any transform). Missing constants are simulated
/// into `table` when the request allows it.
pub fn analyze(raw: &Sample, req: &AnalysisRequest, table: &mut CalibrationTable) -> Result<Analysis> {
    req.validate()?;
    let sample = match req.transform {
        Some(t) => t.apply_all(raw)?,
        None => raw.clone(),
    };
    let n = sample.len();
    let mode = req.null.mode();
    let (alpha, level) = (req.alpha, req.level);

    let mut stats = vec![oracle_stat(mode), StatKind::A, StatKind::P];
    stats.extend(req.competitors.iter().map(|&c| StatKind::from(c)));
    stats.extend(req.bands.iter().map(band_stat));
    let lookup = |table: &CalibrationTable, stat: StatKind| {
        if req.allow_interpolation {
            table.find_interpolated(n, alpha, level, mode, stat)
        } else {
            table.find(n, alpha, level, mode, stat).map(|value| crate::calibrate::Lookup { value, interpolated_from: None })
        }
    };
    let missing = stats.iter().any(|&s| lookup(table, s).is_err());

    let mut ensemble = None;
    if missing || req.p_values {
        if missing && !req.auto_calibrate {
            let first = stats.iter().find(|&&s| lookup(table, s).is_err()).expect("a missing entry");
            return Err(Error::CalibrationRequired(format!(
                "n={n} alpha={alpha:?} level={level} mode={} stat={first}",
                mode.as_str()
            )));
        }
        let ens = NullEnsemble::new(n, mode, level, req.reps, req.seed)?;
        if missing {
            let mut requests = vec![StatRequest::new(StatKind::P, level)];
            requests.extend(stats[3..].iter().map(|&s| StatRequest::new(s, level)));
            table.extend(calibrate(&ens, &[alpha], &requests)?);
        }
        ensemble = Some(ens);
    }

    let (cfg, mut interpolated) = table.selection_config(n, alpha, level, mode, req.allow_interpolation)?;
    let grid = DyadicGrid::new(level)?;
    let series = empirical_cc(&sample, &req.null, &grid, level)?;
    let mut test = match &req.null {
        NullSpec::Simple(f0) => data_driven_simple(&sample, f0, &cfg)?,
        NullSpec::CompositeGaussian => data_driven_composite(&sample, &cfg)?,
    };

    let mut competitors = Vec::new();
    for &c in &req.competitors {
        let crit = lookup(table, StatKind::from(c))?;
        interpolated |= crit.interpolated_from.is_some();
        competitors.push(TestReport::new(c.as_str(), competitor_stat(&sample, c, &req.null)?, crit.value));
    }

    let mut bands = Vec::new();
    let mut outcomes = Vec::new();
    for b in &req.bands {
        let bound = lookup(table, band_stat(b))?;
        let band = AcceptanceBand { first: b.first, last: b.last, side: b.side, bound: bound.value, n, alpha, mode, level };
        outcomes.push(BandOutcome {
            first: b.first,
            last: b.last,
            side: b.side,
            bound: bound.value,
            interpolated: bound.interpolated_from.is_some(),
            violations: band.violations(&series.bars),
        });
        bands.push(band);
    }
    let flags = flagged(&series.bars, &bands)
        .into_iter()
        .map(|(j, b)| Flag {
            index: j,
            p: series.points[j - 1],
            value: series.bars[j - 1],
            band: BandSpec { first: bands[b].first, last: bands[b].last, side: bands[b].side }.to_string(),
        })
        .collect();

    if req.p_values {
        let ens = ensemble.as_ref().expect("ensemble built for p-values");
        let nulls = null_statistics(ens, &cfg, &req.competitors);
        let col = |k: usize| -> Vec<f64> { nulls.iter().map(|row| row[k]).collect() };
        test.p_value = Some(mc_p_value(test.statistic, &col(0)));
        for (k, r) in competitors.iter_mut().enumerate() {
            r.p_value = Some(mc_p_value(r.statistic, &col(k + 1)));
        }
    }

    let computed = ensemble.is_some() && missing;
    let report = ReportDocument {
        schema: REPORT_SCHEMA.into(),
        source: req.source.clone(),
        mode,
        null: match &req.null {
            NullSpec::Simple(f0) => f0.name().into(),
            NullSpec::CompositeGaussian => "gaussian-location-scale".into(),
        },
        alpha,
        level,
        sample: summary(&sample, req.transform),
        beta_hat: series.beta_hat,
        points: series.points.clone(),
        components: series.bars.clone(),
        decision: if test.reject { "reject" } else { "accept" }.into(),
        test,
        competitors,
        bands: outcomes,
        flags,
        calibration: CalibrationInfo {
            computed,
            interpolated,
            reps: ensemble.as_ref().map(|e| e.reps()),
            seed: ensemble.as_ref().map(|e| e.seed()),
        },
    };
    Ok(Analysis { report, series, bands })
}

/// Per-replication null values of the data-driven statistic followed by each
/// competitor.
fn null_statistics(ens: &NullEnsemble, cfg: &SelectionConfig, competitors: &[Competitor]) -> Vec<Vec<f64>> {
    let bcmr = (cfg.mode == NullMode::Composite).then(|| BcmrWeights::new(ens.n()));
    ens.map(|rep| {
        let oracle = match &bcmr {
            None => rep.max_at(cfg.level),
            Some(w) => w.stat(rep.sorted, rep.beta.map(|b| b.1).unwrap_or(1.0)),
        };
        let mut row = vec![cfg.apply(&rep.profile(), oracle).1];
        if !competitors.is_empty() {
            let u = rep.u();
            row.extend(competitors.iter().map(|c| c.from_sorted_u(&u)));
        }
        row
    })
}
