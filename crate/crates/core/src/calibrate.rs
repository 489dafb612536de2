//! Monte-Carlo calibration of critical values, penalties and acceptance
//! bands, and the persisted calibration table.
//!
//! Replication `i` of an ensemble draws its sample from a ChaCha8 stream
//! selected by `i` under a key derived from (master seed, domain), so the
//! output does not depend on how replications are scheduled across workers.
//! Simple-mode ensembles sample U(0,1) directly; composite-mode ensembles
//! sample N(0,1) (any location-scale member gives the same law).

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::ccurve::{chi2_profile, mle_normal, BarKernel, NullMode};
use crate::dyadic::{dim, MAX_LEVEL};
use crate::error::{Error, Result};
use crate::gofstats::{max_abs, select_level, BcmrWeights, Competitor, SelectionConfig};
use crate::refmodels::norm_cdf;

pub const ENGINE_VERSION: &str = "ccgof-mc/1";
pub const GENERATOR: &str = "chacha8-stream/sha256-key";
pub const TABLE_FORMAT: u32 = 1;
pub const DEFAULT_REPS: usize = 100_000;
pub const MIN_REPS: usize = 25_000;
pub const DEFAULT_SEED: u64 = 20240601;
/// Upper end of the penalty search interval.
pub const PENALTY_MAX: f64 = 50.0;
/// Resolution of the penalty search.
pub const PENALTY_STEP: f64 = 0.01;

/// Seed domain for calibration ensembles.
pub const CALIBRATION_DOMAIN: &str = "calibration";

/// Counter-mode source of per-replication generators.
#[derive(Debug, Clone)]
pub struct SeedStream {
    base: ChaCha8Rng,
}

impl SeedStream {
    pub fn new(master: u64, domain: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"ccgof-seed\0");
        h.update(domain.as_bytes());
        h.update(b"\0");
        h.update(master.to_le_bytes());
        let key: [u8; 32] = h.finalize().into();
        SeedStream { base: ChaCha8Rng::from_seed(key) }
    }

    /// Generator for replication `index`.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut r = self.base.clone();
        r.set_stream(index);
        r.set_word_pos(0);
        r
    }
}

/// One null replication as seen by an ensemble consumer.
pub struct Replication<'a> {
    pub index: u64,
    /// Sorted U (simple mode) or sorted X (composite mode).
    pub sorted: &'a [f64],
    /// Bars at the ensemble level.
    pub bars: &'a [f64],
    /// (mean, sd) in composite mode.
    pub beta: Option<(f64, f64)>,
    level: u32,
}

impl Replication<'_> {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Cumulative P_{d(s)}, s = 0..=level.
    pub fn profile(&self) -> Vec<f64> {
        chi2_profile(self.bars, self.level)
    }

    /// Bars at a coarser level t.
    pub fn bars_at(&self, t: u32) -> impl Iterator<Item = f64> + '_ {
        let stride = 1usize << (self.level - t);
        self.bars.iter().skip(stride - 1).step_by(stride).copied()
    }

    pub fn max_at(&self, t: u32) -> f64 {
        if t == self.level {
            max_abs(self.bars)
        } else {
            self.bars_at(t).fold(0.0_f64, |m, b| m.max(b.abs()))
        }
    }

    /// Sorted probability-scale values (composite mode uses Φ((x − X̄)/S)).
    pub fn u(&self) -> Vec<f64> {
        match self.beta {
            None => self.sorted.to_vec(),
            Some((m, s)) => self.sorted.iter().map(|&x| norm_cdf((x - m) / s)).collect(),
        }
    }
}

/// The null replications for (n, mode, level, reps, seed).
#[derive(Debug, Clone)]
pub struct NullEnsemble {
    n: usize,
    mode: NullMode,
    reps: usize,
    seed: u64,
    kernel: BarKernel,
    seeds: SeedStream,
    generator: (f64, f64),
}

impl NullEnsemble {
    pub fn new(n: usize, mode: NullMode, level: u32, reps: usize, seed: u64) -> Result<Self> {
        Self::with_domain(n, mode, level, reps, seed, CALIBRATION_DOMAIN)
    }

    pub fn with_domain(n: usize, mode: NullMode, level: u32, reps: usize, seed: u64, domain: &str) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange(level));
        }
        let min_n = if mode == NullMode::Composite { crate::ccurve::MIN_COMPOSITE_N } else { 1 };
        if n < min_n {
            return Err(Error::InvalidParameter(format!("sample size {n} too small for {} mode", mode.as_str())));
        }
        if reps == 0 {
            return Err(Error::InvalidParameter("replication count must be positive".into()));
        }
        Ok(NullEnsemble {
            n,
            mode,
            reps,
            seed,
            kernel: BarKernel::new(mode, level)?,
            seeds: SeedStream::new(seed, domain),
            generator: (0.0, 1.0),
        })
    }

    /// Generate composite-mode samples from N(mean, sd²) instead of N(0,1).
    pub fn with_generator(mut self, mean: f64, sd: f64) -> Self {
        self.generator = (mean, sd);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> NullMode {
        self.mode
    }

    pub fn level(&self) -> u32 {
        self.kernel.level()
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn run_one<T>(&self, i: usize, sample: &mut Vec<f64>, bars: &mut [f64], f: &impl Fn(&Replication) -> T) -> T {
        let mut rng = self.seeds.rng(i as u64);
        sample.clear();
        let beta = match self.mode {
            NullMode::Simple => {
                sample.extend((0..self.n).map(|_| rng.sample::<f64, _>(Open01)));
                sample.sort_unstable_by(f64::total_cmp);
                self.kernel.fill_simple(sample, bars);
                None
            }
            NullMode::Composite => {
                let (gm, gs) = self.generator;
                sample.extend((0..self.n).map(|_| gm + gs * rng.sample::<f64, _>(StandardNormal)));
                sample.sort_unstable_by(f64::total_cmp);
                let (m, s) = mle_normal(sample).expect("continuous null sample is not constant");
                self.kernel.fill_composite(sample, m, s, bars);
                Some((m, s))
            }
        };
        f(&Replication { index: i as u64, sorted: sample, bars, beta, level: self.kernel.level() })
    }

    /// Apply `f` to every replication; results are in replication order.
    pub fn map<T: Send>(&self, f: impl Fn(&Replication) -> T + Sync) -> Vec<T> {
        let d = self.kernel.dim();
        let init = || (Vec::with_capacity(self.n), vec![0.0; d]);
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (0..self.reps)
                .into_par_iter()
                .map_init(init, |(s, b), i| self.run_one(i, s, b, &f))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            let (mut s, mut b) = init();
            (0..self.reps).map(|i| self.run_one(i, &mut s, &mut b, &f)).collect()
        }
    }

    /// SHA-256 of a per-replication statistic vector (bit patterns in order).
    pub fn digest(&self, f: impl Fn(&Replication) -> f64 + Sync) -> String {
        digest_values(&self.map(f))
    }
}

pub fn digest_values(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Rank k = ⌈(1 − α)(M + 1)⌉ of the upper order statistic.
pub fn upper_rank(alpha: f64, reps: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1), got {alpha}")));
    }
    let k = ((1.0 - alpha) * (reps as f64 + 1.0) - 1e-9).ceil() as usize;
    if k > reps || k == 0 {
        return Err(Error::InsufficientReplications { reps, needed: k });
    }
    Ok(k)
}

/// Empirical (1 − α)-quantile: the k-th smallest value, k = ⌈(1 − α)(M + 1)⌉.
pub fn upper_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    let k = upper_rank(alpha, values.len())?;
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Empirical α-quantile with the mirrored convention: −upper_quantile(−v).
pub fn lower_quantile(values: &[f64], alpha: f64) -> Result<f64> {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    Ok(-upper_quantile(&neg, alpha)?)
}

/// Smallest a on the 0.01 grid in [0, 50] such that the fraction of
/// profiles with A(a) = 1 is at least 1 − α. Found by bisection, which is
/// valid because A(a) = 1 is monotone in a for each replication.
pub fn calibrate_a(profiles: &[Vec<f64>], alpha: f64) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::InsufficientReplications { reps: 0, needed: 1 });
    }
    let need = ((1.0 - alpha) * profiles.len() as f64 - 1e-9).ceil() as usize;
    let ok = |k: u32| -> bool {
        let a = k as f64 * PENALTY_STEP;
        profiles.iter().filter(|p| select_level(p, a) == 0).count() >= need
    };
    let hi_k = (PENALTY_MAX / PENALTY_STEP).round() as u32;
    if !ok(hi_k) {
        return Err(Error::PenaltyBound(PENALTY_MAX));
    }
    if ok(0) {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0u32, hi_k);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi as f64 * PENALTY_STEP)
}

/// What is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StatKind {
    /// Max |bar| over the level (m(n, α) in simple mode; M_D tests).
    M,
    /// BCMR T (t(n, α)).
    T,
    /// Data-driven statistic P_R or P_Q̃ (c or c̃).
    P,
    /// Selection penalty a(n, α).
    A,
    AD,
    KS,
    CvM,
    BJ,
    /// u over bars r..=s (1-based, level-S numbering).
    Upper(usize, usize),
    /// ℓ over bars r..=s.
    Lower(usize, usize),
}

impl StatKind {
    /// Statistics that do not depend on the grid level.
    pub fn level_free(&self) -> bool {
        matches!(self, StatKind::T | StatKind::AD | StatKind::KS | StatKind::CvM | StatKind::BJ)
    }

    pub fn competitor(&self) -> Option<Competitor> {
        match self {
            StatKind::AD => Some(Competitor::AD),
            StatKind::KS => Some(Competitor::KS),
            StatKind::CvM => Some(Competitor::CvM),
            StatKind::BJ => Some(Competitor::BJ),
            _ => None,
        }
    }
}

impl From<Competitor> for StatKind {
    fn from(c: Competitor) -> Self {
        match c {
            Competitor::AD => StatKind::AD,
            Competitor::KS => StatKind::KS,
            Competitor::CvM => StatKind::CvM,
            Competitor::BJ => StatKind::BJ,
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatKind::M => f.write_str("M"),
            StatKind::T => f.write_str("T"),
            StatKind::P => f.write_str("P"),
            StatKind::A => f.write_str("a"),
            StatKind::AD => f.write_str("AD"),
            StatKind::KS => f.write_str("KS"),
            StatKind::CvM => f.write_str("CvM"),
            StatKind::BJ => f.write_str("BJ"),
            StatKind::Upper(r, s) => write!(f, "u[{r}:{s}]"),
            StatKind::Lower(r, s) => write!(f, "l[{r}:{s}]"),
        }
    }
}

impl FromStr for StatKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown statistic '{s}'"));
        Ok(match s {
            "M" => StatKind::M,
            "T" => StatKind::T,
            "P" => StatKind::P,
            "a" => StatKind::A,
            "AD" => StatKind::AD,
            "KS" => StatKind::KS,
            "CvM" => StatKind::CvM,
            "BJ" => StatKind::BJ,
            _ => {
                let (side, rest) = s.split_at(1.min(s.len()));
                let inner = rest.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?;
                let (a, b) = inner.split_once(':').ok_or_else(bad)?;
                let r: usize = a.parse().map_err(|_| bad())?;
                let t: usize = b.parse().map_err(|_| bad())?;
                match side {
                    "u" => StatKind::Upper(r, t),
                    "l" => StatKind::Lower(r, t),
                    _ => return Err(bad()),
                }
            }
        })
    }
}

/// Identifies one calibrated constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationKey {
    pub n: usize,
    pub alpha: f64,
    pub level: u32,
    pub mode: NullMode,
    pub stat: StatKind,
    pub reps: usize,
    pub seed: u64,
}

impl CalibrationKey {
    pub fn new(n: usize, alpha: f64, level: u32, mode: NullMode, stat: StatKind, reps: usize, seed: u64) -> Self {
        let level = if stat.level_free() { 0 } else { level };
        CalibrationKey { n, alpha, level, mode, stat, reps, seed }
    }

    fn canonical(&self) -> String {
        format!(
            "n={} alpha={:?} level={} mode={} stat={} reps={} seed={}",
            self.n,
            self.alpha,
            self.level,
            self.mode.as_str(),
            self.stat,
            self.reps,
            self.seed
        )
    }

    fn slot(&self) -> (usize, u64, u32, NullMode, StatKind) {
        (self.n, self.alpha.to_bits(), self.level, self.mode, self.stat)
    }
}

/// A calibration request: which statistics at which level.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatRequest {
    pub stat: StatKind,
    pub level: u32,
}

impl StatRequest {
    pub fn new(stat: StatKind, level: u32) -> Self {
        StatRequest { stat, level }
    }
}

/// Calibrate every requested statistic for every α from one ensemble pass.
/// The ensemble level must be at least every request's level. A `P`
/// request also yields the oracle cut (`M` or `T`) and the penalty `a` it
/// was built from.
pub fn calibrate(ens: &NullEnsemble, alphas: &[f64], requests: &[StatRequest]) -> Result<Vec<(CalibrationKey, f64)>> {
    if ens.reps() < MIN_REPS {
        return Err(Error::InvalidParameter(format!(
            "at least {MIN_REPS} replications are required, got {}",
            ens.reps()
        )));
    }
    calibrate_unchecked(ens, alphas, requests)
}

/// As [`calibrate`] without the minimum-replication check (for tests and
/// quick previews).
pub fn calibrate_unchecked(
    ens: &NullEnsemble,
    alphas: &[f64],
    requests: &[StatRequest],
) -> Result<Vec<(CalibrationKey, f64)>> {
    for r in requests {
        if !r.stat.level_free() && r.level > ens.level() {
            return Err(Error::InvalidParameter(format!(
                "request level {} exceeds ensemble level {}",
                r.level,
                ens.level()
            )));
        }
        if let StatKind::Upper(a, b) | StatKind::Lower(a, b) = r.stat {
            if a == 0 || a > b || b > dim(r.level) {
                return Err(Error::InvalidParameter(format!("index set {a}..={b} invalid at level {}", r.level)));
            }
        }
    }
    let mode = ens.mode();
    let needs_t = requests.iter().any(|r| r.stat == StatKind::T || (mode == NullMode::Composite && matches!(r.stat, StatKind::P | StatKind::A)));
    let bcmr = needs_t.then(|| BcmrWeights::new(ens.n()));
    let needs_u = requests.iter().any(|r| r.stat.competitor().is_some());

    // Raw per-replication values, one block per request.
    let raw: Vec<Vec<f64>> = ens.map(|rep| {
        let mut out = Vec::new();
        let u = if needs_u { rep.u() } else { Vec::new() };
        let t_val = bcmr.as_ref().map(|w| w.stat(rep.sorted, rep.beta.map(|b| b.1).unwrap_or(1.0)));
        for r in requests {
            match r.stat {
                StatKind::M => out.push(rep.max_at(r.level)),
                StatKind::T => out.push(t_val.expect("BCMR weights prepared")),
                StatKind::P | StatKind::A => {
                    let prof = rep.profile();
                    out.extend_from_slice(&prof[..=r.level as usize]);
                    out.push(match mode {
                        NullMode::Simple => rep.max_at(r.level),
                        NullMode::Composite => t_val.expect("BCMR weights prepared"),
                    });
                }
                StatKind::Upper(a, b) => {
                    out.push(rep.bars_at(r.level).skip(a - 1).take(b - a + 1).fold(f64::NEG_INFINITY, f64::max))
                }
                StatKind::Lower(a, b) => {
                    out.push(rep.bars_at(r.level).skip(a - 1).take(b - a + 1).fold(f64::INFINITY, f64::min))
                }
                k => out.push(k.competitor().expect("competitor kind").from_sorted_u(&u)),
            }
        }
        out
    });

    let mut results = Vec::new();
    let mut offset = 0;
    for r in requests {
        let width = match r.stat {
            StatKind::P | StatKind::A => r.level as usize + 2,
            _ => 1,
        };
        let col = |j: usize| -> Vec<f64> { raw.iter().map(|row| row[offset + j]).collect() };
        let key = |stat: StatKind, alpha: f64| CalibrationKey::new(ens.n(), alpha, r.level, mode, stat, ens.reps(), ens.seed());
        for &alpha in alphas {
            match r.stat {
                StatKind::P | StatKind::A => {
                    let profiles: Vec<Vec<f64>> =
                        raw.iter().map(|row| row[offset..offset + r.level as usize + 1].to_vec()).collect();
                    let oracle = col(r.level as usize + 1);
                    let a = calibrate_a(&profiles, alpha)?;
                    results.push((key(StatKind::A, alpha), a));
                    if r.stat == StatKind::P {
                        let cut = upper_quantile(&oracle, alpha)?;
                        let oracle_kind = if mode == NullMode::Simple { StatKind::M } else { StatKind::T };
                        results.push((key(oracle_kind, alpha), cut));
                        let cfg = SelectionConfig::new(mode, alpha, r.level, a.max(PENALTY_STEP), cut, 0.0)?;
                        let cfg = SelectionConfig { penalty_a: a, ..cfg };
                        let stats: Vec<f64> = profiles.iter().zip(&oracle).map(|(p, &o)| cfg.apply(p, o).1).collect();
                        results.push((key(StatKind::P, alpha), upper_quantile(&stats, alpha)?));
                    }
                }
                StatKind::Lower(..) => results.push((key(r.stat, alpha), lower_quantile(&col(0), alpha)?)),
                _ => results.push((key(r.stat, alpha), upper_quantile(&col(0), alpha)?)),
            }
        }
        offset += width;
    }
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandSide {
    Upper,
    Lower,
}

impl FromStr for BandSide {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" | "u" => Ok(BandSide::Upper),
            "lower" | "l" => Ok(BandSide::Lower),
            _ => Err(Error::InvalidParameter(format!("band side must be upper or lower, got '{s}'"))),
        }
    }
}

/// Simultaneous one-sided bound for a pre-declared contiguous set of bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceBand {
    pub first: usize,
    pub last: usize,
    pub side: BandSide,
    pub bound: f64,
    pub n: usize,
    pub alpha: f64,
    pub mode: NullMode,
    pub level: u32,
}

impl AcceptanceBand {
    pub fn stat(&self) -> StatKind {
        match self.side {
            BandSide::Upper => StatKind::Upper(self.first, self.last),
            BandSide::Lower => StatKind::Lower(self.first, self.last),
        }
    }

    /// 1-based indices of bars that cross the bound.
    pub fn violations(&self, bars: &[f64]) -> Vec<usize> {
        (self.first..=self.last.min(bars.len()))
            .filter(|&j| match self.side {
                BandSide::Upper => bars[j - 1] > self.bound,
                BandSide::Lower => bars[j - 1] < self.bound,
            })
            .collect()
    }
}

/// u(n, α; {r..s}) or ℓ(n, α; {r..s}) from an ensemble at the band's level.
pub fn acceptance_bounds(ens: &NullEnsemble, alpha: f64, first: usize, last: usize, side: BandSide) -> Result<AcceptanceBand> {
    if first == 0 || first > last {
        return Err(Error::InvalidParameter(format!("empty index set {first}..={last}")));
    }
    let stat = match side {
        BandSide::Upper => StatKind::Upper(first, last),
        BandSide::Lower => StatKind::Lower(first, last),
    };
    let out = calibrate_unchecked(ens, &[alpha], &[StatRequest::new(stat, ens.level())])?;
    Ok(AcceptanceBand {
        first,
        last,
        side,
        bound: out[0].1,
        n: ens.n(),
        alpha,
        mode: ens.mode(),
        level: ens.level(),
    })
}

/// Monte-Carlo p-value (1 + #{null ≥ observed}) / (M + 1).
pub fn mc_p_value(observed: f64, null_values: &[f64]) -> f64 {
    let k = null_values.iter().filter(|&&v| v >= observed).count();
    (k + 1) as f64 / (null_values.len() + 1) as f64
}

/// Result of a table lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookup {
    pub value: f64,
    /// Set when the value was linearly interpolated between these sample sizes.
    pub interpolated_from: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
struct Record {
    key: CalibrationKey,
    value: f64,
}

/// Persisted calibration constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    pub engine: String,
    pub generator: String,
    pub created: u64,
    records: BTreeMap<String, Record>,
}

impl Default for CalibrationTable {
    fn default() -> Self {
        Self::new()
    }
}

fn record_hash(key: &CalibrationKey, value: f64) -> String {
    let mut h = Sha256::new();
    h.update(ENGINE_VERSION.as_bytes());
    h.update(GENERATOR.as_bytes());
    h.update(key.canonical().as_bytes());
    h.update(value.to_bits().to_le_bytes());
    hex(&h.finalize()[..8])
}

impl CalibrationTable {
    pub fn new() -> Self {
        // no clock on wasm32-unknown-unknown
        let created = if cfg!(target_arch = "wasm32") {
            0
        } else {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        };
        CalibrationTable { engine: ENGINE_VERSION.into(), generator: GENERATOR.into(), created, records: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, key: CalibrationKey, value: f64) {
        let key = CalibrationKey::new(key.n, key.alpha, key.level, key.mode, key.stat, key.reps, key.seed);
        self.records.insert(key.canonical(), Record { key, value });
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = (CalibrationKey, f64)>) {
        for (k, v) in entries {
            self.insert(k, v);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&CalibrationKey, f64)> {
        self.records.values().map(|r| (&r.key, r.value))
    }

    /// Exact lookup.
    pub fn get(&self, key: &CalibrationKey) -> Result<f64> {
        let key = CalibrationKey::new(key.n, key.alpha, key.level, key.mode, key.stat, key.reps, key.seed);
        self.records
            .get(&key.canonical())
            .map(|r| r.value)
            .ok_or_else(|| Error::CalibrationRequired(key.canonical()))
    }

    /// Lookup ignoring replication count and seed; prefers the entry with
    /// the most replications.
    pub fn find(&self, n: usize, alpha: f64, level: u32, mode: NullMode, stat: StatKind) -> Result<f64> {
        let probe = CalibrationKey::new(n, alpha, level, mode, stat, 0, 0);
        self.records
            .values()
            .filter(|r| r.key.slot() == probe.slot())
            .max_by_key(|r| r.key.reps)
            .map(|r| r.value)
            .ok_or_else(|| {
                Error::CalibrationRequired(format!(
                    "n={n} alpha={alpha:?} level={} mode={} stat={stat}",
                    probe.level,
                    mode.as_str()
                ))
            })
    }

    /// As [`find`](Self::find), falling back to linear interpolation in n
    /// between the nearest tabulated sizes. Never extrapolates.
    pub fn find_interpolated(&self, n: usize, alpha: f64, level: u32, mode: NullMode, stat: StatKind) -> Result<Lookup> {
        if let Ok(v) = self.find(n, alpha, level, mode, stat) {
            return Ok(Lookup { value: v, interpolated_from: None });
        }
        let probe = CalibrationKey::new(n, alpha, level, mode, stat, 0, 0);
        let mut sizes: Vec<usize> = self
            .records
            .values()
            .filter(|r| {
                let (_, a, l, m, s) = r.key.slot();
                let (_, pa, pl, pm, ps) = probe.slot();
                a == pa && l == pl && m == pm && s == ps
            })
            .map(|r| r.key.n)
            .collect();
        sizes.sort_unstable();
        sizes.dedup();
        let lo = sizes.iter().rev().find(|&&m| m < n).copied();
        let hi = sizes.iter().find(|&&m| m > n).copied();
        match (lo, hi) {
            (Some(a), Some(b)) => {
                let va = self.find(a, alpha, level, mode, stat)?;
                let vb = self.find(b, alpha, level, mode, stat)?;
                let w = (n - a) as f64 / (b - a) as f64;
                Ok(Lookup { value: va + w * (vb - va), interpolated_from: Some((a, b)) })
            }
            _ => Err(Error::CalibrationRequired(format!(
                "n={n} outside the tabulated range for alpha={alpha:?} mode={} stat={stat}",
                mode.as_str()
            ))),
        }
    }

    /// Constants of the data-driven test. The flag reports whether any
    /// constant was interpolated.
    pub fn selection_config(
        &self,
        n: usize,
        alpha: f64,
        level: u32,
        mode: NullMode,
        allow_interpolation: bool,
    ) -> Result<(SelectionConfig, bool)> {
        let get = |stat| {
            if allow_interpolation {
                self.find_interpolated(n, alpha, level, mode, stat)
            } else {
                self.find(n, alpha, level, mode, stat).map(|value| Lookup { value, interpolated_from: None })
            }
        };
        let oracle = if mode == NullMode::Simple { StatKind::M } else { StatKind::T };
        let cut = get(oracle)?;
        let a = get(StatKind::A)?;
        let c = get(StatKind::P)?;
        let mut cfg = SelectionConfig::new(mode, alpha, level, a.value.max(PENALTY_STEP), cut.value, c.value)?;
        cfg.penalty_a = a.value;
        let interp = cut.interpolated_from.is_some() || a.interpolated_from.is_some() || c.interpolated_from.is_some();
        Ok((cfg, interp))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("# ccgof-calibration-table\n");
        s.push_str(&format!(
            "# format={TABLE_FORMAT} engine={} generator={} created={}\n",
            self.engine, self.generator, self.created
        ));
        for r in self.records.values() {
            s.push_str(&format!("{} value={:?} hash={}\n", r.key.canonical(), r.value, record_hash(&r.key, r.value)));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let perr = |line: usize, msg: &str| Error::Parse { line: line + 1, msg: msg.to_string() };
        match lines.next() {
            Some((_, "# ccgof-calibration-table")) => {}
            _ => return Err(perr(0, "missing calibration table header")),
        }
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "missing provenance line"))?;
        let fields = parse_fields(header.trim_start_matches('#').trim(), hl)?;
        let field = |k: &str| fields.get(k).cloned().ok_or_else(|| perr(hl, &format!("missing field '{k}'")));
        let format = field("format")?;
        if format != TABLE_FORMAT.to_string() {
            return Err(Error::VersionMismatch { found: format!("format {format}"), expected: format!("format {TABLE_FORMAT}") });
        }
        let engine = field("engine")?;
        if engine != ENGINE_VERSION {
            return Err(Error::VersionMismatch { found: engine, expected: ENGINE_VERSION.into() });
        }
        let generator = field("generator")?;
        if generator != GENERATOR {
            return Err(Error::VersionMismatch { found: generator, expected: GENERATOR.into() });
        }
        let created = field("created")?.parse().map_err(|_| perr(hl, "bad created timestamp"))?;
        let mut table = CalibrationTable { engine, generator, created, records: BTreeMap::new() };
        for (ln, line) in lines {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f = parse_fields(line, ln)?;
            let get = |k: &str| f.get(k).ok_or_else(|| perr(ln, &format!("missing field '{k}'")));
            let num = |k: &str| -> Result<f64> { get(k)?.parse::<f64>().map_err(|_| perr(ln, &format!("bad number in '{k}'"))) };
            let int = |k: &str| -> Result<u64> { get(k)?.parse::<u64>().map_err(|_| perr(ln, &format!("bad integer in '{k}'"))) };
            let key = CalibrationKey::new(
                int("n")? as usize,
                num("alpha")?,
                int("level")? as u32,
                get("mode")?.parse().map_err(|_| perr(ln, "bad mode"))?,
                get("stat")?.parse().map_err(|_| perr(ln, "bad statistic"))?,
                int("reps")? as usize,
                int("seed")?,
            );
            let value = num("value")?;
            if *get("hash")? != record_hash(&key, value) {
                return Err(perr(ln, "record hash does not match its contents"));
            }
            table.insert(key, value);
        }
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Atomic write: temp file in the target directory, then rename.
    pub fn store(&self, path: &Path) -> Result<()> {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(self.to_text().as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

fn parse_fields(line: &str, ln: usize) -> Result<BTreeMap<String, String>> {
    line.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse { line: ln + 1, msg: format!("expected key=value, got '{tok}'") })
        })
        .collect()
}
