//! Special functions not covered by `statrs`.

use crate::{Error, Result};

/// Riemann zeta function for real `s > 1`.
///
/// Direct summation of the first `M - 1` terms followed by the Euler-Maclaurin
/// tail `M^{1-s}/(s-1) + M^{-s}/2 + Σ B_{2j}/(2j)! (s)_{2j-1} M^{-s-2j+1}` with three
/// Bernoulli corrections. With `M = 64` the remainder is below `1e-13` for every
/// `s > 1`.
pub fn zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::invalid(format!("zeta requires s > 1, got {s}")));
    }
    const M: u32 = 64;
    let head: f64 = (1..M).rev().map(|n| f64::from(n).powf(-s)).sum();
    let m = f64::from(M);
    let mut tail = m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s);
    // B2/2!, B4/4!, B6/6!
    let coeffs = [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0];
    let mut rising = s; // (s)(s+1)...(s+2j-2)
    let mut power = m.powf(-s - 1.0);
    for (j, c) in coeffs.iter().enumerate() {
        tail += c * rising * power;
        let k = 2.0 * j as f64;
        rising *= (s + k + 1.0) * (s + k + 2.0);
        power /= m * m;
    }
    Ok(head + tail)
}

/// Sum of `t^{-p}` for `t = 1..=n` (generalized harmonic number).
pub fn power_sum(p: f64, n: u64) -> f64 {
    (1..=n).rev().map(|t| (t as f64).powf(-p)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_known_values() {
        let pi = std::f64::consts::PI;
        assert!((zeta(2.0).unwrap() - pi * pi / 6.0).abs() < 1e-13);
        assert!((zeta(4.0).unwrap() - pi.powi(4) / 90.0).abs() < 1e-13);
        assert!((zeta(3.0).unwrap() - 1.202_056_903_159_594_2).abs() < 1e-13);
    }

    #[test]
    fn zeta_near_one_matches_series_with_integral_tail() {
        // Independent route: brute-force partial sum plus the midpoint of the
        // integral bracket ∫_{M+1}^∞ ≤ Σ_{n>M} ≤ ∫_M^∞.
        let s = 1.2;
        let m = 2_000_000u64;
        let head = power_sum(s, m);
        let lo = ((m + 1) as f64).powf(1.0 - s) / (s - 1.0);
        let hi = (m as f64).powf(1.0 - s) / (s - 1.0);
        let oracle = head + 0.5 * (lo + hi);
        let half_gap = 0.5 * (hi - lo);
        assert!((zeta(s).unwrap() - oracle).abs() <= half_gap + 1e-9);
        assert!((zeta(s).unwrap() - 5.591_582_441_177_75).abs() < 1e-9);
    }

    #[test]
    fn zeta_rejects_pole() {
        assert!(zeta(1.0).is_err());
        assert!(zeta(0.5).is_err());
    }
}
