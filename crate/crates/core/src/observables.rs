//! Measured gains and error rates per intensity pair and basis, their
//! finite-data deviation intervals, and the interval bounds on the untagged
//! subset derived from the certified untagged fraction.

use crate::error::Error;
use crate::params::Level;
use crate::stats::two_sided_sigma;
use crate::Result;

/// Measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const ALL: [Basis; 2] = [Basis::Z, Basis::X];
}

/// A closed interval [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn point(v: f64) -> Interval {
        Interval { lo: v, hi: v }
    }

    pub fn new(lo: f64, hi: f64) -> Interval {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// One measured cell: gain and error-gain for a given (intensity_a,
/// intensity_b, basis) combination.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    /// Coincidence gain Q.
    pub gain: Interval,
    /// Error-gain E*Q.
    pub error_gain: Interval,
    /// Number of same-basis pulse pairs behind this cell, if finite-data
    /// statistics apply.
    pub pair_count: Option<f64>,
}

impl Cell {
    pub fn point(gain: f64, qber: f64) -> Cell {
        Cell {
            gain: Interval::point(gain),
            error_gain: Interval::point(gain * qber),
            pair_count: None,
        }
    }

    /// E = (E*Q)/Q at the interval midpoints; 0 when the gain vanishes.
    pub fn qber(&self) -> f64 {
        let q = self.gain.mid();
        if q > 0.0 {
            (self.error_gain.mid() / q).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Gains and QBERs for all nine intensity pairs in both bases.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    cells: [[[Cell; 3]; 3]; 2],
}

impl ObservableSet {
    pub fn from_fn(mut f: impl FnMut(Level, Level, Basis) -> Cell) -> ObservableSet {
        let zero = Cell::point(0.0, 0.0);
        let mut cells = [[[zero; 3]; 3]; 2];
        for (bi, basis) in Basis::ALL.iter().enumerate() {
            for a in Level::ALL {
                for b in Level::ALL {
                    cells[bi][a.index()][b.index()] = f(a, b, *basis);
                }
            }
        }
        ObservableSet { cells }
    }

    pub fn get(&self, a: Level, b: Level, basis: Basis) -> &Cell {
        &self.cells[basis as usize][a.index()][b.index()]
    }

    pub fn get_mut(&mut self, a: Level, b: Level, basis: Basis) -> &mut Cell {
        &mut self.cells[basis as usize][a.index()][b.index()]
    }

    /// Attaches the same pair count to every cell.
    pub fn with_pair_count(mut self, n: f64) -> ObservableSet {
        for basis in Basis::ALL {
            for a in Level::ALL {
                for b in Level::ALL {
                    self.get_mut(a, b, basis).pair_count = Some(n);
                }
            }
        }
        self
    }
}

/// Replaces every measured point value by its standard-error deviation
/// interval.
///
/// The overall security budget is split evenly across the constrained
/// observables (one per cell); the per-cell quantile n_sigma is the two-sided
/// Gaussian tail at that per-cell budget. A measured value v backed by N
/// pairs becomes [v - n_sigma sqrt(v/N), v + n_sigma sqrt(v/N)], clamped to
/// [0,1]; a zero value becomes the counting-limit interval [0, n_sigma^2/N].
pub fn finite_key_deviation(obs: &ObservableSet, epsilon_sec: f64) -> Result<ObservableSet> {
    let mut count = 0usize;
    for basis in Basis::ALL {
        for a in Level::ALL {
            for b in Level::ALL {
                if obs.get(a, b, basis).pair_count.is_some() {
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::NoStatistics(
            "finite_key_deviation requires pair counts".into(),
        ));
    }
    let n_sigma = two_sided_sigma(epsilon_sec / count as f64)?;

    let widened = |v: f64, n: f64| -> Interval {
        if v == 0.0 {
            Interval::new(0.0, (n_sigma * n_sigma / n).min(1.0))
        } else {
            let dev = n_sigma * (v / n).sqrt();
            Interval::new((v - dev).max(0.0), (v + dev).min(1.0))
        }
    };

    let mut out = obs.clone();
    for basis in Basis::ALL {
        for a in Level::ALL {
            for b in Level::ALL {
                let cell = out.get_mut(a, b, basis);
                let Some(n) = cell.pair_count else {
                    continue;
                };
                if !(n > 0.0) {
                    return Err(Error::NoStatistics(format!(
                        "cell ({a:?},{b:?},{basis:?}) has no pulse pairs"
                    )));
                }
                cell.gain = widened(cell.gain.mid(), n);
                cell.error_gain = widened(cell.error_gain.mid(), n);
            }
        }
    }
    Ok(out)
}

/// Two-sided bound on a probability of the untagged subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedObservable {
    pub lower: f64,
    pub upper: f64,
}

/// Bounds on the untagged gain from the measured overall gain.
///
/// With untagged fractions fa, fb of the two users,
///
/// ```text
/// upper = Q_e / (fa fb)            (clamped to 1)
/// lower = max(0, (Q_e - 1 + fa fb) / (fa fb))
/// ```
pub fn untagged_gain_bounds(q_e: f64, fa: f64, fb: f64) -> Result<BoundedObservable> {
    bound_overall(q_e, q_e, fa, fb)
}

/// The same algebra applied to the error-gain product E_e * Q_e.
pub fn untagged_error_gain_bounds(
    q_e: f64,
    e_e: f64,
    fa: f64,
    fb: f64,
) -> Result<BoundedObservable> {
    let eq = q_e * e_e;
    bound_overall(eq, eq, fa, fb)
}

/// Interval form: the measured value itself carries a deviation interval, and
/// the untagged transformation is applied to its endpoints.
pub fn untagged_bounds_interval(v: Interval, fa: f64, fb: f64) -> Result<BoundedObservable> {
    bound_overall(v.lo, v.hi, fa, fb)
}

fn bound_overall(lo: f64, hi: f64, fa: f64, fb: f64) -> Result<BoundedObservable> {
    if !(fa > 0.0 && fb > 0.0) {
        return Err(Error::Validation("no untagged pulses".into()));
    }
    let ff = fa * fb;
    let upper = (hi / ff).min(1.0);
    let lower = ((lo - 1.0 + ff) / ff).max(0.0);
    Ok(BoundedObservable { lower, upper })
}

/// Untagged bounds for every cell of an observable set.
#[derive(Debug, Clone)]
pub struct UntaggedObservables {
    gain: [[[BoundedObservable; 3]; 3]; 2],
    error_gain: [[[BoundedObservable; 3]; 3]; 2],
}

impl UntaggedObservables {
    pub fn from_set(obs: &ObservableSet, fa: f64, fb: f64) -> Result<UntaggedObservables> {
        let zero = BoundedObservable {
            lower: 0.0,
            upper: 0.0,
        };
        let mut gain = [[[zero; 3]; 3]; 2];
        let mut error_gain = [[[zero; 3]; 3]; 2];
        for (bi, basis) in Basis::ALL.iter().enumerate() {
            for a in Level::ALL {
                for b in Level::ALL {
                    let cell = obs.get(a, b, *basis);
                    gain[bi][a.index()][b.index()] = untagged_bounds_interval(cell.gain, fa, fb)?;
                    error_gain[bi][a.index()][b.index()] =
                        untagged_bounds_interval(cell.error_gain, fa, fb)?;
                }
            }
        }
        Ok(UntaggedObservables { gain, error_gain })
    }

    pub fn gain(&self, a: Level, b: Level, basis: Basis) -> BoundedObservable {
        self.gain[basis as usize][a.index()][b.index()]
    }

    pub fn error_gain(&self, a: Level, b: Level, basis: Basis) -> BoundedObservable {
        self.error_gain[basis as usize][a.index()][b.index()]
    }
}
