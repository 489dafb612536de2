//! Power-study harness: rejection percentages of several tests against a
//! list of alternatives, with calibration shared across alternatives.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::alternatives::AltSpec;
use crate::calibrate::{self, CalibrationKey, CalibrationTable, NullEnsemble, SeedStream, StatKind, StatRequest, MIN_REPS};
use crate::ccurve::{chi2_profile, mle_normal, BarKernel, NullMode};
use crate::dyadic::{dim, level_of_dim, MAX_LEVEL};
use crate::error::{Error, Result};
use crate::gofstats::{BcmrWeights, Competitor, SelectionConfig};
use crate::refmodels::norm_cdf;

/// Smallest accepted number of power replications.
pub const MIN_RUNS: usize = 1000;

/// A test whose power is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    /// The data-driven test P_R (simple) or P_Q̃ (composite) at the config level.
    DataDriven,
    /// Max |bar| at the given level.
    Max(u32),
    /// BCMR.
    Bcmr,
    Edf(Competitor),
}

impl TestKind {
    pub fn label(&self, mode: NullMode) -> String {
        match self {
            TestKind::DataDriven => match mode {
                NullMode::Simple => "P_R".into(),
                NullMode::Composite => "P_Q".into(),
            },
            TestKind::Max(s) => format!("M{}", dim(*s)),
            TestKind::Bcmr => "BCMR".into(),
            TestKind::Edf(c) => c.as_str().into(),
        }
    }
}

impl FromStr for TestKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(c) = t.parse::<Competitor>() {
            return Ok(TestKind::Edf(c));
        }
        match t {
            "P" | "P_R" | "P_Q" | "PR" | "PQ" => return Ok(TestKind::DataDriven),
            "T" | "BCMR" => return Ok(TestKind::Bcmr),
            _ => {}
        }
        if let Some(d) = t.strip_prefix('M') {
            let d: usize = d.parse().map_err(|_| Error::InvalidParameter(format!("bad max-test dimension in '{t}'")))?;
            let s = level_of_dim(d)
                .filter(|&s| s <= MAX_LEVEL)
                .ok_or_else(|| Error::InvalidParameter(format!("M{d}: dimension must be 2^(s+1) − 1")))?;
            return Ok(TestKind::Max(s));
        }
        Err(Error::InvalidParameter(format!("unknown test '{t}'")))
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestKind::DataDriven => f.write_str("P"),
            TestKind::Max(s) => write!(f, "M{}", dim(*s)),
            TestKind::Bcmr => f.write_str("BCMR"),
            TestKind::Edf(c) => f.write_str(c.as_str()),
        }
    }
}

/// A θ sweep over one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub family: String,
    pub thetas: Vec<f64>,
    /// Tail fraction override for the Mason–Schuenemeyer families.
    #[serde(default)]
    pub q: Option<f64>,
}

/// Declarative description of a power study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub n: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub level: Option<u32>,
    pub mode: NullMode,
    #[serde(default)]
    pub alternatives: Vec<String>,
    #[serde(default, rename = "sweep")]
    pub sweeps: Vec<Sweep>,
    pub tests: Vec<String>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_cal_reps")]
    pub calibration_reps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_runs() -> usize {
    10_000
}
fn default_cal_reps() -> usize {
    calibrate::DEFAULT_REPS
}
fn default_seed() -> u64 {
    calibrate::DEFAULT_SEED
}

impl PowerConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PowerConfig =
            toml::from_str(text).map_err(|e| Error::Parse { line: 0, msg: format!("power config: {e}") })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn level(&self) -> u32 {
        self.level.unwrap_or_else(|| self.mode.default_level())
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < MIN_RUNS {
            return Err(Error::InvalidParameter(format!("runs must be at least {MIN_RUNS}, got {}", self.runs)));
        }
        if self.calibration_reps < MIN_REPS {
            return Err(Error::InvalidParameter(format!(
                "calibration_reps must be at least {MIN_REPS}, got {}",
                self.calibration_reps
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        if self.level() > MAX_LEVEL {
            return Err(Error::LevelOutOfRange(self.level()));
        }
        let tests = self.test_kinds()?;
        if tests.is_empty() {
            return Err(Error::InvalidParameter("no tests requested".into()));
        }
        if self.alt_specs()?.is_empty() {
            return Err(Error::InvalidParameter("no alternatives requested".into()));
        }
        Ok(())
    }

    pub fn test_kinds(&self) -> Result<Vec<TestKind>> {
        self.tests.iter().map(|t| t.parse()).collect()
    }

    /// Listed alternatives followed by expanded sweeps.
    pub fn alt_specs(&self) -> Result<Vec<AltSpec>> {
        let mut out: Vec<AltSpec> = self.alternatives.iter().map(|s| s.parse()).collect::<Result<_>>()?;
        for sw in &self.sweeps {
            for &t in &sw.thetas {
                let mut a = AltSpec::new(&sw.family, t)?;
                if let Some(q) = sw.q {
                    a = a.with_tail_fraction(q)?;
                }
                out.push(a);
            }
        }
        Ok(out)
    }
}

/// Critical values for one test.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Rule {
    DataDriven(SelectionConfig),
    Plain(f64),
}

/// One row of the power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub alternative: String,
    /// Rejection percentages, one per test.
    pub power: Vec<f64>,
    /// Monte-Carlo standard errors in percentage points.
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub n: usize,
    pub alpha: f64,
    pub level: u32,
    pub mode: NullMode,
    pub runs: usize,
    pub tests: Vec<String>,
    pub critical: Vec<f64>,
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["alternative".to_string()];
        for t in &self.tests {
            header.push(t.clone());
            header.push(format!("{t}_se"));
        }
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.alternative.clone()];
            for (p, s) in r.power.iter().zip(&r.se) {
                rec.push(format!("{p:.2}"));
                rec.push(format!("{s:.2}"));
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }

    /// Aligned text with rounded percentages.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.alternative.len()).max().unwrap_or(0).max(11);
        let mut s = format!(
            "n={} alpha={} S={} mode={} runs={}\n",
            self.n,
            self.alpha,
            self.level,
            self.mode.as_str(),
            self.runs
        );
        s.push_str(&format!("{:<width$}", "Alternative"));
        for t in &self.tests {
            s.push_str(&format!(" {t:>6}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!("{:<width$}", r.alternative));
            for p in &r.power {
                s.push_str(&format!(" {:>6.0}", p));
            }
            s.push('\n');
        }
        s
    }

    pub fn get(&self, alternative: &str, test: &str) -> Option<f64> {
        let j = self.tests.iter().position(|t| t == test)?;
        self.rows.iter().find(|r| r.alternative == alternative).map(|r| r.power[j])
    }
}

fn calibration_requests(tests: &[TestKind], level: u32) -> Vec<StatRequest> {
    let mut reqs = Vec::new();
    for t in tests {
        let r = match t {
            TestKind::DataDriven => StatRequest::new(StatKind::P, level),
            TestKind::Max(s) => StatRequest::new(StatKind::M, *s),
            TestKind::Bcmr => StatRequest::new(StatKind::T, level),
            TestKind::Edf(c) => StatRequest::new(
                match c {
                    Competitor::AD => StatKind::AD,
                    Competitor::KS => StatKind::KS,
                    Competitor::CvM => StatKind::CvM,
                    Competitor::BJ => StatKind::BJ,
                },
                level,
            ),
        };
        if !reqs.contains(&r) {
            reqs.push(r);
        }
    }
    reqs
}

fn max_level(tests: &[TestKind], level: u32) -> u32 {
    tests.iter().fold(level, |m, t| if let TestKind::Max(s) = t { m.max(*s) } else { m })
}

/// Ensure the table holds every constant the config needs, computing
/// missing ones from a single null ensemble.
pub fn ensure_calibration(cfg: &PowerConfig, table: &mut CalibrationTable) -> Result<()> {
    let tests = cfg.test_kinds()?;
    let level = cfg.level();
    let reqs = calibration_requests(&tests, level);
    let have = |k: &CalibrationKey| table.get(k).is_ok();
    let missing = reqs.iter().any(|r| {
        let stats: Vec<StatKind> = match (r.stat, cfg.mode) {
            (StatKind::P, NullMode::Simple) => vec![StatKind::P, StatKind::A, StatKind::M],
            (StatKind::P, NullMode::Composite) => vec![StatKind::P, StatKind::A, StatKind::T],
            (s, _) => vec![s],
        };
        stats.into_iter().any(|s| {
            !have(&CalibrationKey::new(cfg.n, cfg.alpha, r.level, cfg.mode, s, cfg.calibration_reps, cfg.seed))
        })
    });
    if missing {
        let ens = NullEnsemble::new(cfg.n, cfg.mode, max_level(&tests, level), cfg.calibration_reps, cfg.seed)?;
        table.extend(calibrate::calibrate(&ens, &[cfg.alpha], &reqs)?);
    }
    Ok(())
}

fn rules(cfg: &PowerConfig, tests: &[TestKind], table: &CalibrationTable) -> Result<Vec<Rule>> {
    let level = cfg.level();
    let key = |stat, lvl| CalibrationKey::new(cfg.n, cfg.alpha, lvl, cfg.mode, stat, cfg.calibration_reps, cfg.seed);
    tests
        .iter()
        .map(|t| {
            Ok(match t {
                TestKind::DataDriven => {
                    let oracle = if cfg.mode == NullMode::Simple { StatKind::M } else { StatKind::T };
                    let cut = table.get(&key(oracle, level))?;
                    let a = table.get(&key(StatKind::A, level))?;
                    let c = table.get(&key(StatKind::P, level))?;
                    let mut sc = SelectionConfig::new(cfg.mode, cfg.alpha, level, a.max(calibrate::PENALTY_STEP), cut, c)?;
                    sc.penalty_a = a;
                    Rule::DataDriven(sc)
                }
                TestKind::Max(s) => Rule::Plain(table.get(&key(StatKind::M, *s))?),
                TestKind::Bcmr => Rule::Plain(table.get(&key(StatKind::T, level))?),
                TestKind::Edf(c) => {
                    let stat: StatKind = c.as_str().parse()?;
                    Rule::Plain(table.get(&key(stat, level))?)
                }
            })
        })
        .collect()
}

/// Evaluates every test on one sample.
struct Evaluator {
    mode: NullMode,
    level: u32,
    kernel: BarKernel,
    bcmr: Option<BcmrWeights>,
    tests: Vec<TestKind>,
    rules: Vec<Rule>,
}

impl Evaluator {
    fn decisions(&self, mut x: Vec<f64>, bars: &mut [f64], out: &mut [bool]) -> Result<()> {
        let top = self.kernel.level();
        let u: Vec<f64>;
        let mut beta = None;
        match self.mode {
            NullMode::Simple => {
                u = {
                    let mut v: Vec<f64> = x.iter().map(|&v| norm_cdf(v)).collect();
                    v.sort_unstable_by(f64::total_cmp);
                    v
                };
                self.kernel.fill_simple(&u, bars);
            }
            NullMode::Composite => {
                x.sort_unstable_by(f64::total_cmp);
                let (m, s) = mle_normal(&x)?;
                self.kernel.fill_composite(&x, m, s, bars);
                beta = Some((m, s));
                u = x.iter().map(|&v| norm_cdf((v - m) / s)).collect();
            }
        }
        let max_at = |t: u32| -> f64 {
            let stride = 1usize << (top - t);
            bars.iter().skip(stride - 1).step_by(stride).fold(0.0_f64, |m, b| m.max(b.abs()))
        };
        let t_val = self.bcmr.as_ref().map(|w| w.stat(&x, beta.map(|b| b.1).unwrap_or(1.0)));
        for (k, (t, r)) in self.tests.iter().zip(&self.rules).enumerate() {
            out[k] = match (t, r) {
                (TestKind::DataDriven, Rule::DataDriven(sc)) => {
                    let stride = 1usize << (top - self.level);
                    let sub: Vec<f64> = bars.iter().skip(stride - 1).step_by(stride).copied().collect();
                    let prof = chi2_profile(&sub, self.level);
                    let oracle = match self.mode {
                        NullMode::Simple => max_at(self.level),
                        NullMode::Composite => t_val.expect("BCMR weights prepared"),
                    };
                    sc.apply(&prof, oracle).1 >= sc.critical
                }
                (TestKind::Max(s), Rule::Plain(c)) => max_at(*s) >= *c,
                (TestKind::Bcmr, Rule::Plain(c)) => t_val.expect("BCMR weights prepared") >= *c,
                (TestKind::Edf(comp), Rule::Plain(c)) => comp.from_sorted_u(&u) >= *c,
                _ => unreachable!("rule kinds follow test kinds"),
            };
        }
        Ok(())
    }
}

/// Seed domain for the power replications of one alternative.
pub fn power_domain(alt: &AltSpec, n: usize) -> String {
    format!("power/{alt}/n={n}")
}

/// Rejection counts for each test over `runs` samples from `alt`.
fn reject_counts(ev: &Evaluator, alt: &AltSpec, n: usize, runs: usize, seed: u64) -> Result<Vec<usize>> {
    let seeds = SeedStream::new(seed, &power_domain(alt, n));
    let d = ev.kernel.dim();
    let k = ev.tests.len();
    let one = |i: usize, bars: &mut Vec<f64>| -> Result<Vec<bool>> {
        let mut rng = seeds.rng(i as u64);
        let x: Vec<f64> = (0..n).map(|_| alt.draw(&mut rng)).collect();
        let mut out = vec![false; k];
        ev.decisions(x, bars, &mut out)?;
        Ok(out)
    };
    #[cfg(feature = "parallel")]
    let decisions: Vec<Result<Vec<bool>>> = {
        use rayon::prelude::*;
        (0..runs).into_par_iter().map_init(|| vec![0.0; d], |b, i| one(i, b)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let decisions: Vec<Result<Vec<bool>>> = {
        let mut b = vec![0.0; d];
        (0..runs).map(|i| one(i, &mut b)).collect()
    };
    let mut counts = vec![0usize; k];
    for r in decisions {
        for (c, rej) in counts.iter_mut().zip(r?) {
            *c += rej as usize;
        }
    }
    Ok(counts)
}

/// Run the study. Missing constants are calibrated into `table` first.
pub fn run_power(cfg: &PowerConfig, table: &mut CalibrationTable) -> Result<PowerTable> {
    cfg.validate()?;
    ensure_calibration(cfg, table)?;
    let tests = cfg.test_kinds()?;
    let level = cfg.level();
    let rules = rules(cfg, &tests, table)?;
    let needs_t = cfg.mode == NullMode::Composite || tests.contains(&TestKind::Bcmr);
    let ev = Evaluator {
        mode: cfg.mode,
        level,
        kernel: BarKernel::new(cfg.mode, max_level(&tests, level))?,
        bcmr: needs_t.then(|| BcmrWeights::new(cfg.n)),
        tests: tests.clone(),
        rules: rules.clone(),
    };
    let runs = cfg.runs as f64;
    let mut rows = Vec::new();
    for alt in cfg.alt_specs()? {
        let counts = reject_counts(&ev, &alt, cfg.n, cfg.runs, cfg.seed)?;
        let p: Vec<f64> = counts.iter().map(|&c| c as f64 / runs).collect();
        rows.push(PowerRow {
            alternative: alt.to_string(),
            power: p.iter().map(|v| 100.0 * v).collect(),
            se: p.iter().map(|v| 100.0 * (v * (1.0 - v) / runs).sqrt()).collect(),
        });
    }
    Ok(PowerTable {
        n: cfg.n,
        alpha: cfg.alpha,
        level,
        mode: cfg.mode,
        runs: cfg.runs,
        tests: tests.iter().map(|t| t.label(cfg.mode)).collect(),
        critical: rules
            .iter()
            .map(|r| match r {
                Rule::DataDriven(sc) => sc.critical,
                Rule::Plain(c) => *c,
            })
            .collect(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"
n = 50
mode = "simple"
level = 4
tests = ["AD", "M31", "P", "KS"]
alternatives = ["A1_0:0", "A1_0:0.6"]
runs = 2000
calibration_reps = 25000
seed = 7

[[sweep]]
family = "A7_0"
thetas = [1.0]
q = 0.2
"#;

    #[test]
    fn parse_config() {
        let c = PowerConfig::from_toml(CFG).unwrap();
        assert_eq!(c.level(), 4);
        let alts = c.alt_specs().unwrap();
        assert_eq!(alts.len(), 3);
        assert_eq!(alts[2].to_string(), "A7_0:1:q=0.2");
        assert_eq!(c.test_kinds().unwrap()[1], TestKind::Max(4));
        assert!(PowerConfig::from_toml(&CFG.replace("runs = 2000", "runs = 10")).is_err());
        assert!(PowerConfig::from_toml(&CFG.replace("\"KS\"", "\"SW\"")).is_err());
        assert!("M30".parse::<TestKind>().is_err());
        assert_eq!("M127".parse::<TestKind>().unwrap(), TestKind::Max(6));
    }

    #[test]
    fn study_is_reproducible_and_sane() {
        let c = PowerConfig::from_toml(CFG).unwrap();
        let mut t1 = CalibrationTable::new();
        let a = run_power(&c, &mut t1).unwrap();
        let mut t2 = CalibrationTable::new();
        let b = run_power(&c, &mut t2).unwrap();
        assert_eq!(a, b);
        // Null row sits near α, the shifted row well above it.
        for (j, p) in a.rows[0].power.iter().enumerate() {
            assert!((p - 5.0).abs() < 2.0, "{}: {p}", a.tests[j]);
        }
        for p in &a.rows[1].power {
            assert!(*p > 50.0);
        }
        let csv = a.to_csv();
        assert!(csv.starts_with("alternative,AD,AD_se,M31,M31_se,P_R,P_R_se,KS,KS_se\n"));
        assert!(a.to_text().contains("A1_0:0.6"));
        // A second run reuses the stored constants.
        let before = t1.len();
        run_power(&c, &mut t1).unwrap();
        assert_eq!(t1.len(), before);
    }
}
