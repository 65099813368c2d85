//! Key-rate assembly: combines the untagged fractions, the certified decoy
//! bounds and the measured signal observables into a secret-key rate,
//! optimizes the signal intensity per distance, and sweeps distances.

use rayon::prelude::*;

use crate::channel::expected_observables;
use crate::decoy::{self, DecoyBounds};
use crate::monitor::{untagged_stats, untagged_stats_asymptotic, MonitorModel, UntaggedStats};
use crate::observables::{finite_key_deviation, Basis, ObservableSet, UntaggedObservables};
use crate::params::{derive_side_params, ExperimentParams, Level};
use crate::stats::binary_entropy;
use crate::Result;

/// Finite-data handling of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Infinitely many signals: no sampling fluctuation, no observable
    /// deviation intervals.
    Asymptotic,
    /// Finite pulse counts: sampling fluctuation epsilon and standard-error
    /// intervals on every observable.
    Finite,
}

/// One optimized sweep point.
#[derive(Debug, Clone)]
pub struct KeyRatePoint {
    pub distance_km: f64,
    pub mu_opt: f64,
    pub rate_untrusted: f64,
    pub rate_trusted: f64,
    pub q11_lower: f64,
    pub e11_upper: f64,
    pub delta_frac: f64,
    pub epsilon_sample: f64,
}

/// Secret-key rate per pulse pair:
///
/// ```text
/// R = max(0, fa fb Q11_lower (1 - H2(e11_upper)) - Q_sig f_e H2(E_sig))
/// ```
///
/// An error bound beyond 1/2 carries no usable privacy, so the entropy
/// argument saturates there.
pub fn key_rate(
    fa: f64,
    fb: f64,
    q11_lower: f64,
    e11_upper: f64,
    q_sig: f64,
    e_sig: f64,
    f_e: f64,
) -> f64 {
    raw_key_rate(fa, fb, q11_lower, e11_upper, q_sig, e_sig, f_e).max(0.0)
}

fn raw_key_rate(
    fa: f64,
    fb: f64,
    q11_lower: f64,
    e11_upper: f64,
    q_sig: f64,
    e_sig: f64,
    f_e: f64,
) -> f64 {
    let priv_term = fa * fb * q11_lower * (1.0 - binary_entropy(e11_upper.min(0.5)));
    let ec_term = q_sig * f_e * binary_entropy(e_sig.clamp(0.0, 1.0));
    priv_term - ec_term
}

/// Full evaluation of one (distance, signal intensity) point.
#[derive(Debug, Clone)]
pub struct PointEval {
    pub rate: f64,
    pub raw_rate: f64,
    pub q11_lower: f64,
    pub e11_upper: f64,
    pub s11_z_lower: f64,
    pub delta_frac: f64,
    pub epsilon_sample: f64,
}

impl PointEval {
    fn zero(stats: &UntaggedStats) -> PointEval {
        PointEval {
            rate: 0.0,
            raw_rate: 0.0,
            q11_lower: 0.0,
            e11_upper: 0.5,
            s11_z_lower: 0.0,
            delta_frac: stats.delta_frac,
            epsilon_sample: stats.epsilon_sample,
        }
    }
}

/// Same-basis pulse pairs behind each (intensity_a, intensity_b, basis) cell:
/// both users encode (1/4), intensities uniform over the 3x3 grid, bases
/// agree on Z or X with probability 1/4 each.
fn pairs_per_cell(p: &ExperimentParams) -> f64 {
    p.k_pulses / 72.0
}

fn measured_observables(p: &ExperimentParams, distance_km: f64, mode: Mode) -> Result<ObservableSet> {
    let cp = expected_observables(p, distance_km);
    match mode {
        Mode::Asymptotic => Ok(cp.observables),
        Mode::Finite => {
            let obs = cp.observables.with_pair_count(pairs_per_cell(p));
            finite_key_deviation(&obs, p.epsilon_sec)
        }
    }
}

fn decoy_for(
    p: &ExperimentParams,
    obs: &ObservableSet,
    f_untagged: f64,
    pnd: &[crate::pnd::PndBounds; 3],
) -> Result<DecoyBounds> {
    let untagged = UntaggedObservables::from_set(obs, f_untagged, f_untagged)?;
    decoy::estimate_lp(&untagged, pnd, (p.a_cut, p.b_cut))
}

/// Untrusted-source evaluation at a fixed signal intensity.
pub fn evaluate_untrusted(p: &ExperimentParams, distance_km: f64, mode: Mode) -> Result<PointEval> {
    let side = derive_side_params(p, distance_km)?;
    let monitor = MonitorModel::new(p, &side)?;
    let stats = match mode {
        Mode::Asymptotic => untagged_stats_asymptotic(&monitor),
        Mode::Finite => untagged_stats(&monitor, p.tau_conf, p.k_pulses)?,
    };
    if stats.untagged_fraction <= 0.0 {
        return Ok(PointEval::zero(&stats));
    }
    let obs = measured_observables(p, distance_km, mode)?;
    let pnd = decoy::untagged_pnd(p, &side)?;
    let bounds = decoy_for(p, &obs, stats.untagged_fraction, &pnd)?;
    let sig = obs.get(Level::Signal, Level::Signal, Basis::Z);
    let f = stats.untagged_fraction;
    let raw = raw_key_rate(
        f,
        f,
        bounds.q11_z_lower,
        bounds.e11_x_upper,
        sig.gain.mid(),
        sig.qber(),
        p.f_e,
    );
    Ok(PointEval {
        rate: raw.max(0.0),
        raw_rate: raw,
        q11_lower: bounds.q11_z_lower,
        e11_upper: bounds.e11_x_upper,
        s11_z_lower: bounds.s11_z_lower,
        delta_frac: stats.delta_frac,
        epsilon_sample: stats.epsilon_sample,
    })
}

/// Conventional decoy-state baseline: the same pipeline with a trusted
/// source, i.e. no tagged pulses, no sampling fluctuation and exact Poisson
/// photon-number statistics.
pub fn evaluate_trusted(p: &ExperimentParams, distance_km: f64, mode: Mode) -> Result<PointEval> {
    let obs = measured_observables(p, distance_km, mode)?;
    let n_max = p.a_cut.max(p.b_cut) + 1;
    let pnd = decoy::poisson_pnd(&p.intensities, n_max)?;
    let bounds = decoy_for(p, &obs, 1.0, &pnd)?;
    let sig = obs.get(Level::Signal, Level::Signal, Basis::Z);
    let raw = raw_key_rate(
        1.0,
        1.0,
        bounds.q11_z_lower,
        bounds.e11_x_upper,
        sig.gain.mid(),
        sig.qber(),
        p.f_e,
    );
    Ok(PointEval {
        rate: raw.max(0.0),
        raw_rate: raw,
        q11_lower: bounds.q11_z_lower,
        e11_upper: bounds.e11_x_upper,
        s11_z_lower: bounds.s11_z_lower,
        delta_frac: 0.0,
        epsilon_sample: 0.0,
    })
}

/// Trusted-source rate at a distance with the signal intensity optimized on
/// the default grid.
pub fn trusted_baseline(p: &ExperimentParams, distance_km: f64, mode: Mode) -> Result<f64> {
    let (_, best) = argmax_over_grid(p, distance_km, &default_mu_grid(), mode, true)?;
    Ok(best.map(|(_, e)| e.rate).unwrap_or(0.0))
}

/// Signal intensities kept by the validity filter: above the decoy intensity
/// and inside the weak-output window.
fn valid_mu(p: &ExperimentParams, mu: f64) -> bool {
    mu > p.intensities.nu && (1.0 + p.delta) * mu < 1.0
}

/// Coarse default grid; the optimizer refines around its argmax.
pub fn default_mu_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

type Best = Option<(f64, PointEval)>;

fn argmax_over_grid(
    p: &ExperimentParams,
    distance_km: f64,
    grid: &[f64],
    mode: Mode,
    trusted: bool,
) -> Result<(Vec<f64>, Best)> {
    let mut best: Best = None;
    let mut evaluated = Vec::new();
    for &mu in grid {
        if !valid_mu(p, mu) {
            continue;
        }
        let pp = p.with_mu(mu)?;
        let eval = if trusted {
            evaluate_trusted(&pp, distance_km, mode)?
        } else {
            evaluate_untrusted(&pp, distance_km, mode)?
        };
        evaluated.push(mu);
        let replace = match &best {
            None => true,
            // ties break toward smaller mu, which the ascending grid
            // guarantees with a strict comparison
            Some((_, incumbent)) => eval.rate > incumbent.rate,
        };
        if replace {
            best = Some((mu, eval));
        }
    }
    Ok((evaluated, best))
}

fn refined_grid(center: f64, coarse_step: f64) -> Vec<f64> {
    let fine = coarse_step / 5.0;
    (-4..=4)
        .map(|i| center + i as f64 * fine)
        .filter(|&m| m > 0.0)
        .collect()
}

/// Optimizes the signal intensity over `grid` (argmax; ties go to the
/// smaller intensity) and returns that point together with the trusted
/// baseline optimized over the same grid.
pub fn optimize_mu(
    p: &ExperimentParams,
    distance_km: f64,
    grid: &[f64],
    mode: Mode,
) -> Result<KeyRatePoint> {
    let (_, best) = argmax_over_grid(p, distance_km, grid, mode, false)?;
    let (_, trusted_best) = argmax_over_grid(p, distance_km, grid, mode, true)?;
    let rate_trusted = trusted_best.map(|(_, e)| e.rate).unwrap_or(0.0);
    let (mu_opt, eval) = match best {
        Some((mu, e)) => (mu, e),
        None => (
            p.intensities.mu,
            PointEval {
                rate: 0.0,
                raw_rate: 0.0,
                q11_lower: 0.0,
                e11_upper: 0.5,
                s11_z_lower: 0.0,
                delta_frac: 1.0,
                epsilon_sample: 0.0,
            },
        ),
    };
    Ok(KeyRatePoint {
        distance_km,
        mu_opt,
        rate_untrusted: eval.rate,
        rate_trusted,
        q11_lower: eval.q11_lower,
        e11_upper: eval.e11_upper,
        delta_frac: eval.delta_frac,
        epsilon_sample: eval.epsilon_sample,
    })
}

fn merge_points(a: KeyRatePoint, b: KeyRatePoint) -> KeyRatePoint {
    let mut out = if b.rate_untrusted > a.rate_untrusted {
        b.clone()
    } else {
        a.clone()
    };
    out.rate_trusted = a.rate_trusted.max(b.rate_trusted);
    out
}

/// One sweep point: coarse grid argmax plus a refinement pass at a fifth of
/// the grid spacing around it.
pub fn optimized_point(p: &ExperimentParams, distance_km: f64, mode: Mode) -> Result<KeyRatePoint> {
    optimized_point_opts(p, distance_km, mode, true)
}

/// As [`optimized_point`], optionally skipping the trusted baseline (its
/// column then reads NaN).
pub fn optimized_point_opts(
    p: &ExperimentParams,
    distance_km: f64,
    mode: Mode,
    with_trusted: bool,
) -> Result<KeyRatePoint> {
    let grid = default_mu_grid();
    let coarse = optimize_point_on(p, distance_km, &grid, mode, with_trusted)?;
    let step = grid[1] - grid[0];
    let fine = optimize_point_on(
        p,
        distance_km,
        &refined_grid(coarse.mu_opt, step),
        mode,
        with_trusted,
    )?;
    Ok(merge_points(coarse, fine))
}

fn optimize_point_on(
    p: &ExperimentParams,
    distance_km: f64,
    grid: &[f64],
    mode: Mode,
    with_trusted: bool,
) -> Result<KeyRatePoint> {
    let mut point = if with_trusted {
        optimize_mu(p, distance_km, grid, mode)?
    } else {
        let (_, best) = argmax_over_grid(p, distance_km, grid, mode, false)?;
        let (mu_opt, eval) = match best {
            Some((mu, e)) => (mu, e),
            None => (
                p.intensities.mu,
                PointEval {
                    rate: 0.0,
                    raw_rate: 0.0,
                    q11_lower: 0.0,
                    e11_upper: 0.5,
                    s11_z_lower: 0.0,
                    delta_frac: 1.0,
                    epsilon_sample: 0.0,
                },
            ),
        };
        KeyRatePoint {
            distance_km,
            mu_opt,
            rate_untrusted: eval.rate,
            rate_trusted: f64::NAN,
            q11_lower: eval.q11_lower,
            e11_upper: eval.e11_upper,
            delta_frac: eval.delta_frac,
            epsilon_sample: eval.epsilon_sample,
        }
    };
    if !with_trusted {
        point.rate_trusted = f64::NAN;
    }
    Ok(point)
}

/// Per-distance optimized sweep. Points evaluate in parallel; the output
/// preserves the input order.
pub fn sweep(p: &ExperimentParams, distances: &[f64], mode: Mode) -> Result<Vec<KeyRatePoint>> {
    sweep_opts(p, distances, mode, true)
}

/// As [`sweep`], optionally skipping the trusted baseline.
pub fn sweep_opts(
    p: &ExperimentParams,
    distances: &[f64],
    mode: Mode,
    with_trusted: bool,
) -> Result<Vec<KeyRatePoint>> {
    distances
        .par_iter()
        .map(|&d| optimized_point_opts(p, d, mode, with_trusted))
        .collect()
}

/// Last distance with a strictly positive untrusted rate, if any.
pub fn cutoff_distance(points: &[KeyRatePoint]) -> Option<f64> {
    points
        .iter()
        .filter(|pt| pt.rate_untrusted > 0.0)
        .map(|pt| pt.distance_km)
        .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.max(d))))
}
