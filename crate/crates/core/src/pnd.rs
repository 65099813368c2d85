//! Envelope bounds on the conditional output photon-number distribution of
//! untagged pulses.
//!
//! An untagged pulse enters with some photon number m in the window
//! [(1-delta)M, (1+delta)M] and leaves through an attenuator of effective
//! transmission p, so the emitted count is Binomial(m, p). The exact m is
//! unknown; under the weak-output condition (1+delta) M p < 1 the binomial
//! mass at any n >= 1 is increasing in m across the window, which yields the
//! pointwise envelopes below.

use crate::error::Error;
use crate::stats::{binomial_pmf, poisson_pmf};
use crate::Result;

/// Pointwise upper/lower envelopes of P(n | untagged input).
#[derive(Debug, Clone)]
pub struct PndBounds {
    /// Envelope values for n = 0..=n_max.
    pub p_upper: Vec<f64>,
    pub p_lower: Vec<f64>,
    /// Integer window endpoints: floor((1-delta) M), ceil((1+delta) M).
    pub window: (u64, u64),
    /// Effective encoding-arm transmission.
    pub effective_p: f64,
}

impl PndBounds {
    pub fn upper(&self, n: usize) -> f64 {
        self.p_upper.get(n).copied().unwrap_or(0.0)
    }

    pub fn lower(&self, n: usize) -> f64 {
        self.p_lower.get(n).copied().unwrap_or(0.0)
    }

    /// Degenerate envelopes from an exact Poisson distribution; used for the
    /// trusted-source baseline where no window applies.
    pub fn poisson(mean: f64, n_max: usize) -> Result<PndBounds> {
        let mut mass = Vec::with_capacity(n_max + 1);
        for n in 0..=n_max as u64 {
            mass.push(poisson_pmf(n, mean)?);
        }
        Ok(PndBounds {
            p_upper: mass.clone(),
            p_lower: mass,
            window: (0, u64::MAX),
            effective_p: 0.0,
        })
    }
}

/// Computes the untagged-pulse PND envelopes.
///
/// ```text
/// upper(0) = (1-p)^((1-delta)M)          lower(0) = (1-p)^((1+delta)M)
/// upper(n) = Binom((1+delta)M, p)(n)     lower(n) = Binom((1-delta)M, p)(n)
/// ```
/// for 1 <= n inside the respective window, zero beyond it. Window endpoints
/// are rounded outward so the envelopes stay valid for non-integer delta*M.
pub fn pnd_bounds(m_mean: f64, delta: f64, eff_p: f64, n_max: usize) -> Result<PndBounds> {
    if !(m_mean > 0.0) {
        return Err(Error::Domain(format!("M must be > 0, got {m_mean}")));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Domain(format!("delta must be in [0,1), got {delta}")));
    }
    if !(0.0..=1.0).contains(&eff_p) {
        return Err(Error::Domain(format!(
            "effective transmission must be in [0,1], got {eff_p}"
        )));
    }
    if n_max < 2 {
        return Err(Error::Domain("n_max must be >= 2".into()));
    }
    let m_lo = ((1.0 - delta) * m_mean).floor().max(1.0) as u64;
    let m_hi = ((1.0 + delta) * m_mean).ceil() as u64;
    if (1.0 + delta) * m_mean * eff_p >= 1.0 {
        return Err(Error::Validation(
            "untagged weak-output condition violated: (1+delta) M p >= 1".into(),
        ));
    }

    let mut p_upper = Vec::with_capacity(n_max + 1);
    let mut p_lower = Vec::with_capacity(n_max + 1);
    if eff_p == 0.0 {
        p_upper.push(1.0);
        p_lower.push(1.0);
        for _ in 1..=n_max {
            p_upper.push(0.0);
            p_lower.push(0.0);
        }
    } else {
        p_upper.push((m_lo as f64 * (-eff_p).ln_1p()).exp());
        p_lower.push((m_hi as f64 * (-eff_p).ln_1p()).exp());
        for n in 1..=n_max as u64 {
            p_upper.push(if n <= m_hi {
                binomial_pmf(n, m_hi, eff_p)?
            } else {
                0.0
            });
            p_lower.push(if n <= m_lo {
                binomial_pmf(n, m_lo, eff_p)?
            } else {
                0.0
            });
        }
    }
    Ok(PndBounds {
        p_upper,
        p_lower,
        window: (m_lo, m_hi),
        effective_p: eff_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_transmission_is_vacuum() {
        let b = pnd_bounds(1e6, 0.01, 0.0, 8).unwrap();
        assert_eq!(b.upper(0), 1.0);
        assert_eq!(b.lower(0), 1.0);
        for n in 1..=8 {
            assert_eq!(b.upper(n), 0.0);
            assert_eq!(b.lower(n), 0.0);
        }
    }

    #[test]
    fn collapsed_window_matches_binomial() {
        // With delta = 0 (and integer M) the envelopes pinch onto the
        // binomial mass for n >= 1.
        let m = 1000.0;
        let p = 2e-4;
        let b = pnd_bounds(m, 0.0, p, 6).unwrap();
        for n in 1..=6u64 {
            let exact = binomial_pmf(n, 1000, p).unwrap();
            assert!((b.upper(n as usize) - exact).abs() / exact.max(1e-300) < 1e-9);
            assert!((b.lower(n as usize) - exact).abs() / exact.max(1e-300) < 1e-9);
        }
    }

    #[test]
    fn envelopes_bracket_every_window_member() {
        // exhaustive check on a desk-scale instance
        let m = 1000.0;
        let delta = 0.05;
        let p = 5e-4;
        let b = pnd_bounds(m, delta, p, 10).unwrap();
        let (m_lo, m_hi) = b.window;
        for m_true in m_lo..=m_hi {
            for n in 0..=10u64 {
                let mass = if n <= m_true {
                    binomial_pmf(n, m_true, p).unwrap()
                } else {
                    0.0
                };
                assert!(
                    b.lower(n as usize) <= mass + 1e-15,
                    "lower violated at m={m_true}, n={n}"
                );
                assert!(
                    mass <= b.upper(n as usize) + 1e-15,
                    "upper violated at m={m_true}, n={n}"
                );
            }
        }
    }

    #[test]
    fn envelopes_converge_as_delta_shrinks() {
        let m = 1e6;
        let p = 1e-7;
        let mut prev_gap = f64::INFINITY;
        for delta in [0.2, 0.1, 0.05, 0.01, 0.001] {
            let b = pnd_bounds(m, delta, p, 5).unwrap();
            let gap: f64 = (0..=5).map(|n| b.upper(n) - b.lower(n)).sum();
            assert!(gap >= -1e-15);
            assert!(gap <= prev_gap);
            prev_gap = gap;
        }
    }

    #[test]
    fn envelopes_bracket_the_poisson_limit() {
        // mean output 0.1 photons: the Poisson mass sits inside the
        // (1 +/- delta) envelope
        let m = 1e7;
        let p = 1e-8;
        let b = pnd_bounds(m, 0.01, p, 5).unwrap();
        let pois1 = poisson_pmf(1, 0.1).unwrap();
        assert!(b.lower(1) <= pois1 && pois1 <= b.upper(1));
        // and the envelope values match Poisson at the shifted means to ~p
        let lo_ref = poisson_pmf(1, 0.099).unwrap();
        let hi_ref = poisson_pmf(1, 0.101).unwrap();
        assert!((b.lower(1) - lo_ref).abs() / lo_ref < 1e-4);
        assert!((b.upper(1) - hi_ref).abs() / hi_ref < 1e-4);
    }

    #[test]
    fn mass_totals_bracket_one() {
        // full-support sums: sum(lower) <= 1 <= sum(upper)
        let m = 1000.0;
        let b = pnd_bounds(m, 0.05, 5e-4, 1060).unwrap();
        let up: f64 = b.p_upper.iter().sum();
        let lo: f64 = b.p_lower.iter().sum();
        assert!(lo <= 1.0 + 1e-9, "{lo}");
        assert!(up >= 1.0 - 1e-9, "{up}");
    }

    #[test]
    fn weak_output_condition_enforced() {
        let err = pnd_bounds(1e6, 0.01, 2e-6, 8).unwrap_err();
        assert!(err.to_string().contains("weak-output"));
    }
}
