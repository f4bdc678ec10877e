//! Confluent hypergeometric function of the first kind, `M(a, b, x)`, for real
//! `a, b > 0` and `x ≥ 0`.
//!
//! Below [`CROSSOVER`] the defining power series is summed directly (all terms
//! are positive, so there is no cancellation). Above it the large-argument
//! expansion `Γ(b)/Γ(a) · eˣ · x^(a−b) · Σ (b−a)ₖ(1−a)ₖ / (k! xᵏ)` is used
//! whenever it is accurate to double precision; otherwise the series is summed
//! with running rescaling so that `ln M` never overflows.

use crate::error::{Error, Result};

/// Argument above which the asymptotic expansion is preferred.
pub const CROSSOVER: f64 = 30.0;

const SERIES_MAX_TERMS: usize = 1_000_000;

/// `M(a, b, x)`. Overflows to `+∞` for very large `x`; use [`log_kummer_m`]
/// when the value itself is not needed.
pub fn kummer_m(a: f64, b: f64, x: f64) -> Result<f64> {
    Ok(log_kummer_m(a, b, x)?.exp())
}

/// `ln M(a, b, x)`.
pub fn log_kummer_m(a: f64, b: f64, x: f64) -> Result<f64> {
    check_domain(a, b, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < CROSSOVER {
        return Ok(log_series(a, b, x));
    }
    Ok(log_asymptotic(a, b, x).unwrap_or_else(|| log_series(a, b, x)))
}

fn check_domain(a: f64, b: f64, x: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::DomainError(format!("kummer_m requires a > 0, got {a}")));
    }
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::DomainError(format!("kummer_m requires b > 0, got {b}")));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::DomainError(format!("kummer_m requires finite x ≥ 0, got {x}")));
    }
    Ok(())
}

/// Power series, returned as a logarithm. Partial sums are rescaled once they
/// grow past `1e250`.
pub(crate) fn log_series(a: f64, b: f64, x: f64) -> f64 {
    const RESCALE: f64 = 1e250;
    let mut log_scale = 0.0;
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 0..SERIES_MAX_TERMS {
        let kf = k as f64;
        term *= (a + kf) / (b + kf) * x / (kf + 1.0);
        sum += term;
        if sum > RESCALE {
            sum /= RESCALE;
            term /= RESCALE;
            log_scale += RESCALE.ln();
        }
        // Terms decrease monotonically once k exceeds x - a - b (roughly).
        if term <= sum * 1e-17 && kf + 1.0 > x {
            break;
        }
    }
    sum.ln() + log_scale
}

/// Large-argument expansion, returned as a logarithm, or `None` when it cannot
/// deliver close to double precision at this `x`.
pub(crate) fn log_asymptotic(a: f64, b: f64, x: f64) -> Option<f64> {
    // The recessive branch Γ(b)/Γ(b−a)·(−x)^(−a) is dropped; require it to be
    // negligible relative to the dominant one.
    let (lg_bma, _) = libm::lgamma_r(b - a);
    let recessive = -x + (b - 2.0 * a) * x.ln() + libm::lgamma(a) - lg_bma;
    if recessive.is_finite() && recessive > (5e-11f64).ln() {
        return None;
    }

    let mut sum: f64 = 1.0;
    let mut term: f64 = 1.0;
    let mut converged = false;
    for k in 0..200 {
        let kf = k as f64;
        let next = term * (b - a + kf) * (1.0 - a + kf) / ((kf + 1.0) * x);
        if next == 0.0 {
            converged = true;
            break;
        }
        if next.abs() > term.abs() {
            // Divergent tail: acceptable only if we already got there.
            converged = term.abs() <= 1e-12 * sum.abs();
            break;
        }
        term = next;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            converged = true;
            break;
        }
    }
    if !converged || sum <= 0.0 {
        return None;
    }
    Some(libm::lgamma(b) - libm::lgamma(a) + x + (a - b) * x.ln() + sum.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Straight 200-term summation of the defining series.
    fn series_oracle(a: f64, b: f64, x: f64) -> f64 {
        let mut sum = 0.0;
        for k in 0..200 {
            let mut t = 1.0;
            for j in 0..k {
                let j = j as f64;
                t *= (a + j) / (b + j) * x / (j + 1.0);
            }
            sum += t;
        }
        sum
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn value_at_zero_is_one() {
        for &(a, b) in &[(0.25, 1.0), (1.25, 2.0), (3.0, 0.5)] {
            assert_eq!(kummer_m(a, b, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn exponential_identity() {
        let v = kummer_m(1.0, 1.0, 3.0).unwrap();
        assert!(rel(v, 3f64.exp()) < 1e-12, "{v}");
        assert!((v - 20.085_536_923_187_668).abs() < 1e-9);
        // M(a, a, x) = eˣ also holds in the asymptotic branch
        for &x in &[30.0, 100.0, 1e4] {
            assert!(rel(log_kummer_m(0.7, 0.7, x).unwrap(), x) < 1e-14);
        }
    }

    #[test]
    fn matches_series_oracle() {
        let v = kummer_m(0.25, 1.0, 10.0).unwrap();
        let oracle = series_oracle(0.25, 1.0, 10.0);
        assert!(rel(v, oracle) < 1e-10, "{v} vs {oracle}");
        for &(a, b, x) in &[(1.25, 2.0, 5.0), (0.5, 1.0, 20.0), (2.0, 1.5, 0.3)] {
            assert!(rel(kummer_m(a, b, x).unwrap(), series_oracle(a, b, x)) < 1e-10);
        }
    }

    #[test]
    fn branches_agree_at_crossover() {
        for &nu in &[0.1, 0.25, 0.5, 0.75, 1.0] {
            for &(a, b) in &[(nu + 1.0, 2.0), (nu, 1.0)] {
                for &x in &[CROSSOVER, CROSSOVER + 5.0] {
                    let s = log_series(a, b, x);
                    let asy = log_asymptotic(a, b, x).unwrap_or_else(|| panic!("no asymptotic for a={a} b={b} x={x}"));
                    assert!(rel(asy.exp(), s.exp()) < 1e-8, "a={a} b={b} x={x}: {s} vs {asy}");
                }
            }
        }
    }

    #[test]
    fn contiguous_relation() {
        // a·M(a+1) = (x + 2a − b)·M(a) + (b − a)·M(a−1)
        for &(a, b) in &[(1.25, 2.0), (1.5, 1.0), (1.1, 2.0)] {
            for &x in &[0.5, 7.0, 29.0, 31.0, 80.0, 400.0] {
                let m_up = log_kummer_m(a + 1.0, b, x).unwrap();
                let m = log_kummer_m(a, b, x).unwrap();
                let m_dn = log_kummer_m(a - 1.0, b, x).unwrap();
                // divide through by M(a) to stay in range
                let lhs = a * (m_up - m).exp();
                let rhs = (x + 2.0 * a - b) + (b - a) * (m_dn - m).exp();
                assert!(rel(lhs, rhs) < 1e-7, "a={a} b={b} x={x}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn huge_argument_stays_finite() {
        let l = log_kummer_m(1.25, 2.0, 1e8).unwrap();
        assert!(l.is_finite());
        assert!(rel(l, 1e8 + (1.25 - 2.0) * 1e8f64.ln() - libm::lgamma(1.25)) < 1e-12);
        // fallback series with rescaling
        let ls = log_series(0.25, 1.0, 2000.0);
        let la = log_asymptotic(0.25, 1.0, 2000.0).unwrap();
        assert!((ls - la).abs() < 1e-9);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(kummer_m(0.0, 1.0, 1.0), Err(Error::DomainError(_))));
        assert!(matches!(kummer_m(1.0, -1.0, 1.0), Err(Error::DomainError(_))));
        assert!(matches!(kummer_m(1.0, 1.0, -1.0), Err(Error::DomainError(_))));
    }
}
