//! Elementary distributions and special functions.
//!
//! Everything here is evaluated in the log domain where magnitudes demand it:
//! binomial trial counts reach ~1e9 with success probabilities down to ~1e-10,
//! which underflows any naive evaluation. The error function is implemented
//! internally (series + continued fraction) so results are bit-stable across
//! platforms; its absolute error is below 1e-14 on the real line and its
//! relative error below 1e-13 for `erfc` up to the f64 underflow threshold.

use crate::error::Error;
use crate::Result;

/// Error function, odd in `x`.
///
/// Maclaurin series for |x| < 2, complement of the continued-fraction `erfc`
/// beyond. Absolute error < 1e-14.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 2.0 {
        erf_series(x)
    } else {
        1.0 - erfc_cf(x)
    }
}

/// Complementary error function `1 - erf(x)`.
///
/// Uses the Laplace continued fraction for x >= 2, which keeps the relative
/// error small deep into the tail (down to the underflow of exp(-x^2)).
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 2.0 {
        1.0 - erf_series(x)
    } else {
        erfc_cf(x)
    }
}

fn erf_series(x: f64) -> f64 {
    // erf(x) = 2/sqrt(pi) * sum_k (-1)^k x^(2k+1) / (k! (2k+1))
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0u32;
    loop {
        k += 1;
        term *= -x2 / k as f64;
        let contrib = term / (2 * k + 1) as f64;
        sum += contrib;
        if contrib.abs() < 1e-18 * sum.abs().max(1e-300) || k > 200 {
            break;
        }
    }
    std::f64::consts::FRAC_2_SQRT_PI * sum
}

fn erfc_cf(x: f64) -> f64 {
    // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
    // evaluated by the modified Lentz algorithm.
    let tiny = 1e-300;
    let mut f = x.max(tiny);
    let mut c = f;
    let mut d = 0.0;
    for k in 1..400 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

/// Cumulative distribution function of a normal with the given mean and
/// variance.
pub fn gaussian_cdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) {
        return Err(Error::Domain(format!(
            "gaussian_cdf requires variance > 0, got {variance}"
        )));
    }
    let z = (x - mean) / (2.0 * variance).sqrt();
    Ok(0.5 * erfc(-z))
}

/// Quantile `n` such that the two-sided Gaussian tail P(|Z| > n) equals
/// `budget`.
pub fn two_sided_sigma(budget: f64) -> Result<f64> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(Error::Domain(format!(
            "two_sided_sigma requires budget in (0,1], got {budget}"
        )));
    }
    // P(|Z| > n) = erfc(n / sqrt(2)); bisect on n.
    let f = |n: f64| erfc(n / std::f64::consts::SQRT_2) - budget;
    let (mut lo, mut hi) = (0.0_f64, 50.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Binary entropy in bits, with H2(0) = H2(1) = 0 by continuity.
pub fn binary_entropy(x: f64) -> f64 {
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&x));
    let x = x.clamp(0.0, 1.0);
    if x == 0.0 || x == 1.0 {
        return 0.0;
    }
    -(x * x.ln() + (1.0 - x) * (1.0 - x).ln()) / std::f64::consts::LN_2
}

/// Natural log of n!.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= 1024 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// Natural log of the binomial coefficient C(m, n).
///
/// For small `min(n, m-n)` the product form is used: it stays accurate for
/// trial counts up to ~1e9 where a difference of two `ln_gamma` values of
/// magnitude ~1e10 would lose the answer to cancellation.
pub fn ln_binomial_coeff(m: u64, n: u64) -> f64 {
    debug_assert!(n <= m);
    let k = n.min(m - n);
    if k == 0 {
        return 0.0;
    }
    if k <= 512 {
        let mf = m as f64;
        let mut s = 0.0;
        for i in 0..k {
            s += (mf - i as f64).ln() - (i as f64 + 1.0).ln();
        }
        s
    } else {
        let g = statrs::function::gamma::ln_gamma;
        g(m as f64 + 1.0) - g(n as f64 + 1.0) - g((m - n) as f64 + 1.0)
    }
}

/// Binomial probability mass C(m,n) p^n (1-p)^(m-n), log-domain.
///
/// Stable for m up to ~1e9 and p down to ~1e-10.
pub fn binomial_pmf(n: u64, m: u64, p: f64) -> Result<f64> {
    if n > m {
        return Err(Error::Domain(format!(
            "binomial_pmf requires n <= m, got n={n}, m={m}"
        )));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "binomial_pmf requires p in [0,1], got {p}"
        )));
    }
    if p == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if p == 1.0 {
        return Ok(if n == m { 1.0 } else { 0.0 });
    }
    let mut ln = ln_binomial_coeff(m, n);
    if n > 0 {
        ln += n as f64 * p.ln();
    }
    if m > n {
        ln += (m - n) as f64 * (-p).ln_1p();
    }
    Ok(ln.exp())
}

/// Poisson probability mass exp(-mu) mu^n / n!, log-domain for large n.
pub fn poisson_pmf(n: u64, mu: f64) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::Domain(format!(
            "poisson_pmf requires mu >= 0, got {mu}"
        )));
    }
    if mu == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let ln = n as f64 * mu.ln() - mu - ln_factorial(n);
    Ok(ln.exp())
}

/// ln(1-p) + p evaluated without cancellation for small p.
fn ln1p_neg_plus(p: f64) -> f64 {
    if p < 1e-3 {
        // -(p^2/2 + p^3/3 + p^4/4 + p^5/5), truncation error < p^6
        -p * p * (0.5 + p * (1.0 / 3.0 + p * (0.25 + p * 0.2)))
    } else {
        (-p).ln_1p() + p
    }
}

/// Total variation distance between Binomial(m, p) and Poisson(m p).
///
/// The per-point difference is formed from the log-ratio of the two masses,
/// so the result stays accurate even when the distance is ~1e-9. The sum is
/// truncated once both tails drop below 1e-15.
pub fn poisson_limit_distance(m: u64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "poisson_limit_distance requires p in [0,1], got {p}"
        )));
    }
    if p == 0.0 || m == 0 {
        return Ok(0.0);
    }
    let mf = m as f64;
    let mu = mf * p;
    let n_hi = (mu + 12.0 * (mu + 1.0).sqrt() + 40.0).ceil() as u64;
    let mg = mf * ln1p_neg_plus(p);
    let ln1p_negp = (-p).ln_1p();

    let mut tv = 0.0_f64;
    let mut comp = 0.0_f64; // Kahan compensation
    let mut ln_ratio_head = 0.0_f64; // sum_{i<n} ln(1 - i/m)
    for n in 0..=n_hi {
        let q = poisson_pmf(n, mu)?;
        let diff = if n > m {
            q
        } else {
            // ln b - ln q, all pieces O(1)
            let delta = ln_ratio_head + mg - n as f64 * ln1p_negp;
            q * delta.exp_m1().abs()
        };
        let y = diff - comp;
        let t = tv + y;
        comp = (t - tv) - y;
        tv = t;
        if n < m {
            ln_ratio_head += (-(n as f64) / mf).ln_1p();
        }
        if n > mu as u64 + 2 && q < 1e-18 {
            break;
        }
    }
    Ok(0.5 * tv)
}

/// A finitely supported probability mass function over 0..=support_max.
#[derive(Debug, Clone)]
pub struct Pmf {
    pub support_max: usize,
    pub mass: Vec<f64>,
}

impl Pmf {
    /// Binomial(m, p) truncated to 0..=support_max.
    pub fn binomial(m: u64, p: f64, support_max: usize) -> Result<Self> {
        let mut mass = Vec::with_capacity(support_max + 1);
        for n in 0..=support_max as u64 {
            mass.push(if n <= m { binomial_pmf(n, m, p)? } else { 0.0 });
        }
        Ok(Pmf { support_max, mass })
    }

    /// Poisson(mu) truncated to 0..=support_max.
    pub fn poisson(mu: f64, support_max: usize) -> Result<Self> {
        let mut mass = Vec::with_capacity(support_max + 1);
        for n in 0..=support_max as u64 {
            mass.push(poisson_pmf(n, mu)?);
        }
        Ok(Pmf { support_max, mass })
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn get(&self, n: usize) -> f64 {
        self.mass.get(n).copied().unwrap_or(0.0)
    }
}
