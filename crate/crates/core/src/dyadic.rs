//! Nested dyadic partition of (0,1) and the projected Haar system.
//!
//! Level `s` holds the d(s) = 2^(s+1) − 1 points j/2^(s+1), j = 1..d(s),
//! which is the sorted union of the odd dyadics (2k−1)/2^(t+1) for t ≤ s.
//! Points are kept as exact dyadic rationals; every level-s point sits at
//! index j·2^(S−s) of the level-S grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported grid level.
pub const MAX_LEVEL: u32 = 20;

/// Number of points at level `s`: d(s) = 2^(s+1) − 1.
pub fn dim(s: u32) -> usize {
    (1usize << (s + 1)) - 1
}

/// Level whose dimension is `d`, if `d` is of the form 2^(s+1) − 1.
pub fn level_of_dim(d: usize) -> Option<u32> {
    let m = d.checked_add(1)?;
    if m < 2 || !m.is_power_of_two() {
        return None;
    }
    Some(m.trailing_zeros() - 1)
}

/// An exact dyadic rational `num / 2^exp` in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Dyadic {
    num: u64,
    exp: u32,
}

impl Dyadic {
    pub fn new(num: u64, exp: u32) -> Self {
        let mut d = Dyadic { num, exp };
        while d.exp > 0 && d.num % 2 == 0 && d.num > 0 {
            d.num /= 2;
            d.exp -= 1;
        }
        d
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator_exp(&self) -> u32 {
        self.exp
    }

    /// Exact for exp ≤ 52.
    pub fn value(&self) -> f64 {
        self.num as f64 / (1u64 << self.exp) as f64
    }

    /// 1 − self.
    pub fn complement(&self) -> Dyadic {
        Dyadic::new((1u64 << self.exp) - self.num, self.exp)
    }
}

impl std::fmt::Display for Dyadic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, 1u64 << self.exp)
    }
}

/// The nested point sets for levels 0..=S.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicGrid {
    level: u32,
    points: Vec<f64>,
}

impl DyadicGrid {
    pub fn new(level: u32) -> Result<Self> {
        if level > MAX_LEVEL {
            return Err(Error::LevelOutOfRange(level));
        }
        let denom = (1u64 << (level + 1)) as f64;
        let points = (1..=dim(level)).map(|j| j as f64 / denom).collect();
        Ok(Self { level, points })
    }

    /// Maximum level S.
    pub fn level(&self) -> u32 {
        self.level
    }

    /// D = d(S).
    pub fn max_dim(&self) -> usize {
        dim(self.level)
    }

    /// The dimension set {d(0), …, d(S)}.
    pub fn dims(&self) -> Vec<usize> {
        (0..=self.level).map(dim).collect()
    }

    /// Exact grid point p_{s,j}, j in 1..=d(s).
    pub fn point(&self, s: u32, j: usize) -> Result<Dyadic> {
        if s > self.level {
            return Err(Error::InvalidParameter(format!("level {s} exceeds grid level {}", self.level)));
        }
        if j == 0 || j > dim(s) {
            return Err(Error::InvalidParameter(format!("index {j} outside 1..={}", dim(s))));
        }
        Ok(Dyadic::new(j as u64, s + 1))
    }

    pub fn dyadic_points(&self, s: u32) -> Result<Vec<Dyadic>> {
        (1..=dim(s.min(self.level))).map(|j| self.point(s, j)).collect()
    }

    /// Level-S points as floating point values.
    pub fn points_f64(&self) -> &[f64] {
        &self.points
    }

    /// Level-s points as floating point values.
    pub fn points_at(&self, s: u32) -> Result<Vec<f64>> {
        let stride = self.stride(s)?;
        Ok(self.points.iter().skip(stride - 1).step_by(stride).copied().collect())
    }

    /// Spacing, in level-S indices, between consecutive level-s points.
    pub fn stride(&self, s: u32) -> Result<usize> {
        if s > self.level {
            return Err(Error::InvalidParameter(format!("level {s} exceeds grid level {}", self.level)));
        }
        Ok(1usize << (self.level - s))
    }
}

/// Projected Haar function with jump at `p_star`:
/// (p* − I(p ≤ p*)) / √(p*(1 − p*)).
pub fn haar_projected(p_star: f64, p: f64) -> Result<f64> {
    if !(p_star > 0.0 && p_star < 1.0) {
        return Err(Error::Domain(format!("Haar jump point must lie in (0,1), got {p_star}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("Haar argument must lie in [0,1], got {p}")));
    }
    let ind = if p <= p_star { 1.0 } else { 0.0 };
    Ok((p_star - ind) / (p_star * (1.0 - p_star)).sqrt())
}
