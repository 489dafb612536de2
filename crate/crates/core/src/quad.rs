//! Thin wrappers over double-exponential quadrature for finite and
//! half-infinite ranges.

use crate::error::{Error, Result};

const MAX_SPLIT_DEPTH: u32 = 12;

/// ∫ₐᵇ f with absolute tolerance `tol` (floored at 1e-13 relative). Intervals whose error estimate is too
/// large are bisected.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    integrate_rec(f, a, b, tol, 0)
}

fn integrate_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let out = quadrature::integrate(f, a, b, tol * 0.1);
    if !out.integral.is_finite() {
        return Err(Error::Numerical(format!("non-finite integral on [{a}, {b}]")));
    }
    if out.error_estimate <= tol.max(1e-13 * out.integral.abs()) {
        return Ok(out.integral);
    }
    if depth >= MAX_SPLIT_DEPTH {
        // Integrable endpoint singularities leave a pessimistic estimate on
        // the innermost piece; accept it when it is small in relative terms.
        if out.error_estimate <= 1e-7 * out.integral.abs().max(1.0) {
            return Ok(out.integral);
        }
        return Err(Error::Numerical(format!(
            "quadrature on [{a}, {b}] did not reach tolerance {tol:e} (estimate {:e})",
            out.error_estimate
        )));
    }
    let mid = 0.5 * (a + b);
    Ok(integrate_rec(f, a, mid, 0.5 * tol, depth + 1)? + integrate_rec(f, mid, b, 0.5 * tol, depth + 1)?)
}

/// ∫ₐ^∞ f, summed over doubling segments until a segment contributes less
/// than `tol`. A tail that keeps contributing is reported as divergent.
pub fn integrate_upper<F: Fn(f64) -> f64>(f: &F, a: f64, tol: f64) -> Result<f64> {
    let mut total = 0.0;
    let mut lo = a;
    let mut width = 1.0;
    let mut quiet = 0;
    for _ in 0..80 {
        let hi = lo + width;
        let piece = integrate(f, lo, hi, tol * 0.01)?;
        total += piece;
        if piece.abs() < tol * 0.01 {
            quiet += 1;
            if quiet >= 3 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 2.0;
    }
    Err(Error::Divergent(format!("tail integral from {a} keeps growing (partial sum {total:e})")))
}

/// ∫_{−∞}^b f.
pub fn integrate_lower<F: Fn(f64) -> f64>(f: &F, b: f64, tol: f64) -> Result<f64> {
    integrate_upper(&|x: f64| f(-x), -b, tol)
}
