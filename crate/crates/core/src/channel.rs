//! Fiber channel and relay detection model: expected gains and error rates
//! per intensity pair, Fock-input yields for test fixtures, and a Monte Carlo
//! photon-counting oracle for the Z basis.
//!
//! The relay holds two threshold detectors behind a 50:50 beam splitter and
//! announces a singlet event when the two detectors click in the two distinct
//! time bins (one early, one late) with the other two detector/bin slots
//! silent. Model choices, applied consistently in the closed forms, the
//! yields and the oracle:
//!
//! * detectors are threshold detectors with independent dark probability `y0`
//!   per detector per bin;
//! * light in the Z basis occupies a single bin per user and combines
//!   incoherently (photons route independently at the beam splitter);
//! * the X basis splits each pulse across both bins and interferes with the
//!   partner's pulse at a uniformly random global phase, with misalignment
//!   expressed as mode mismatch: a fraction `2 e_d` of the partner intensity
//!   sits in an orthogonal mode, scaling the interference cross term by
//!   `sqrt(1 - 2 e_d)`;
//! * in the Z basis misalignment flips the heralded bit relation with
//!   probability `e_d`.
//!
//! X-basis observables are analytic only: two-photon interference has no
//! classical sampling procedure, so their validation rests on limiting-case
//! identities (no error source => no X error; vacuum => QBER 1/2).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;

use crate::error::Error;
use crate::observables::{Basis, Cell, ObservableSet};
use crate::params::ExperimentParams;
use crate::Result;

const PHASE_QUADRATURE_POINTS: usize = 64;

/// One-way transmittance of a single side of the symmetric link.
pub fn side_transmittance(alpha_db_per_km: f64, distance_km: f64) -> f64 {
    10f64.powf(-alpha_db_per_km * (distance_km / 2.0) / 10.0)
}

/// Probability that a given detector clicks and the other stays silent, for a
/// bin carrying mean photon number `s` split 50:50 onto both detectors.
fn one_sided_click(s: f64, y0: f64) -> f64 {
    let em = (-s / 2.0).exp();
    let silent = (1.0 - y0) * em;
    let click = -(-s / 2.0).exp_m1() + y0 * em;
    click * silent
}

/// Z-basis gain and error-gain for bin intensities s = gamma * t * eta_d.
fn z_pair(s_a: f64, s_b: f64, y0: f64, e_d: f64) -> (f64, f64) {
    // different bits: each bin lit by one user
    let q_diff = 2.0 * one_sided_click(s_a, y0) * one_sided_click(s_b, y0);
    // same bits: one bin carries everything, the other only dark counts
    let q_same = 2.0 * one_sided_click(s_a + s_b, y0) * one_sided_click(0.0, y0);
    let gain = 0.5 * (q_diff + q_same);
    let error_gain = 0.5 * ((1.0 - e_d) * q_same + e_d * q_diff);
    (gain, error_gain)
}

/// X-basis gain and error-gain by phase-averaged interference of the two
/// weak pulses.
fn x_pair(s_a: f64, s_b: f64, y0: f64, e_d: f64) -> (f64, f64) {
    let vis = (1.0 - 2.0 * e_d).max(0.0).sqrt();
    let c = (s_a + s_b) / 4.0;
    let z = vis * (s_a * s_b).sqrt() / 2.0;
    let click = |i: f64| -> f64 { -(-i).exp_m1() + y0 * (-i).exp() };
    let silent = |i: f64| -> f64 { (1.0 - y0) * (-i).exp() };
    let mut pat = [0.0f64; 2]; // [same, diff]
    for (idx, sign) in [1.0f64, -1.0].into_iter().enumerate() {
        let mut acc = 0.0;
        for k in 0..PHASE_QUADRATURE_POINTS {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / PHASE_QUADRATURE_POINTS as f64;
            let t = z * theta.cos();
            let (i0e, i1e) = (c + t, c - t);
            let (i0l, i1l) = (c + sign * t, c - sign * t);
            acc += click(i0e) * silent(i1e) * click(i1l) * silent(i0l)
                + click(i1e) * silent(i0e) * click(i0l) * silent(i1l);
        }
        pat[idx] = acc / PHASE_QUADRATURE_POINTS as f64;
    }
    let gain = 0.5 * (pat[0] + pat[1]);
    let error_gain = 0.5 * pat[0];
    (gain, error_gain)
}

/// Expected observables at a distance, plus the per-side transmittance.
#[derive(Debug, Clone)]
pub struct ChannelPoint {
    pub distance_km: f64,
    pub t_side: f64,
    pub observables: ObservableSet,
    pub yields: Option<TrueYields>,
}

/// Expected gains and QBERs for all nine intensity pairs in both bases.
pub fn expected_observables(p: &ExperimentParams, distance_km: f64) -> ChannelPoint {
    let t_side = side_transmittance(p.alpha_db_per_km, distance_km);
    let eta = t_side * p.eta_d;
    let observables = ObservableSet::from_fn(|a, b, basis| {
        let s_a = p.intensities.get(a) * eta;
        let s_b = p.intensities.get(b) * eta;
        let (gain, error_gain) = match basis {
            Basis::Z => z_pair(s_a, s_b, p.y0, p.e_d),
            Basis::X => x_pair(s_a, s_b, p.y0, p.e_d),
        };
        let mut cell = Cell::point(gain, 0.0);
        cell.error_gain = crate::observables::Interval::point(error_gain);
        cell
    });
    ChannelPoint {
        distance_km,
        t_side,
        observables,
        yields: None,
    }
}

/// Fock-input yields used as ground truth by the estimator tests. The decoy
/// estimator itself never sees these.
#[derive(Debug, Clone)]
pub struct TrueYields {
    /// Truncation (n_a <= a_cut, n_b <= b_cut).
    pub s_cut: (usize, usize),
    /// Z-basis yield per photon-number pair.
    pub y_z: Vec<Vec<f64>>,
    /// Z-basis error rate within each yield.
    pub e_z: Vec<Vec<f64>>,
    /// X-basis single-pair yield and error rate.
    pub y_x_11: f64,
    pub e_x_11: f64,
}

impl TrueYields {
    pub fn y_z_at(&self, n_a: usize, n_b: usize) -> f64 {
        self.y_z[n_a][n_b]
    }
}

/// Expected one-detector-only click probability after binomial thinning of
/// `n` photons with survival `eta`.
fn fock_one_sided(n: u64, eta: f64, y0: f64) -> f64 {
    // E[(1/2)^k] = (1 - eta/2)^n over k ~ Binomial(n, eta); the k = 0 case
    // needs a dark count instead of a photon click.
    let half = (1.0 - eta / 2.0).powi(n as i32);
    let none = (1.0 - eta).powi(n as i32);
    (1.0 - y0) * (half - (1.0 - y0) * none)
}

fn fock_z_yield(n_a: u64, n_b: u64, eta_a: f64, eta_b: f64, y0: f64, e_d: f64) -> (f64, f64) {
    let u_a = fock_one_sided(n_a, eta_a, y0);
    let u_b = fock_one_sided(n_b, eta_b, y0);
    // both users' photons in one bin: expectation over joint thinning
    let half = (1.0 - eta_a / 2.0).powi(n_a as i32) * (1.0 - eta_b / 2.0).powi(n_b as i32);
    let none = (1.0 - eta_a).powi(n_a as i32) * (1.0 - eta_b).powi(n_b as i32);
    let u_joint = (1.0 - y0) * (half - (1.0 - y0) * none);
    let dark_side = y0 * (1.0 - y0);
    let y = u_a * u_b + u_joint * dark_side;
    let eq = e_d * u_a * u_b + (1.0 - e_d) * u_joint * dark_side;
    (y, eq)
}

/// X-basis single-photon-pair yield and error by exact two-photon
/// interference over the four detector/bin modes.
fn fock_x_pair_11(eta_a: f64, eta_b: f64, y0: f64, e_d: f64) -> (f64, f64) {
    let xi = 2.0 * e_d; // distinguishable fraction
    let pattern_given_occ = |occ: [u8; 4]| -> f64 {
        let click = |i: usize| if occ[i] > 0 { 1.0 } else { y0 };
        let silent = |i: usize| if occ[i] > 0 { 0.0 } else { 1.0 - y0 };
        // modes: 0 = D0 early, 1 = D1 early, 2 = D0 late, 3 = D1 late
        click(0) * silent(1) * click(3) * silent(2) + click(1) * silent(0) * click(2) * silent(3)
    };
    let pattern_for_bits = |sign_a: f64, sign_b: f64| -> f64 {
        let ca = [0.5, 0.5, sign_a / 2.0, sign_a / 2.0];
        let cb = [0.5, -0.5, sign_b / 2.0, -sign_b / 2.0];
        let mut total = 0.0;
        // both photons survive
        let p_both = eta_a * eta_b;
        if p_both > 0.0 {
            let mut interfering = 0.0;
            let mut classical = 0.0;
            for i in 0..4 {
                for j in i..4 {
                    let amp2 = if i == j {
                        2.0 * (ca[i] * cb[i]) * (ca[i] * cb[i])
                    } else {
                        let a = ca[i] * cb[j] + ca[j] * cb[i];
                        a * a
                    };
                    let mut occ = [0u8; 4];
                    occ[i] += 1;
                    occ[j] += 1;
                    interfering += amp2 * pattern_given_occ(occ);
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    let mut occ = [0u8; 4];
                    occ[i] += 1;
                    occ[j] += 1;
                    classical += 0.0625 * pattern_given_occ(occ);
                }
            }
            total += p_both * ((1.0 - xi) * interfering + xi * classical);
        }
        // exactly one photon survives: uniform over its four modes
        for p_case in [eta_a * (1.0 - eta_b), (1.0 - eta_a) * eta_b] {
            if p_case > 0.0 {
                let mut one = 0.0;
                for i in 0..4 {
                    let mut occ = [0u8; 4];
                    occ[i] = 1;
                    one += 0.25 * pattern_given_occ(occ);
                }
                total += p_case * one;
            }
        }
        // neither survives
        total += (1.0 - eta_a) * (1.0 - eta_b) * pattern_given_occ([0; 4]);
        total
    };
    let same = pattern_for_bits(1.0, 1.0);
    let diff = pattern_for_bits(1.0, -1.0);
    let y = 0.5 * (same + diff);
    let eq = 0.5 * same;
    let e = if y > 0.0 { eq / y } else { 0.0 };
    (y, e)
}

/// True yields of the detector model for Fock inputs, truncated at `s_cut`.
pub fn true_untagged_yields(
    p: &ExperimentParams,
    distance_km: f64,
    s_cut: (usize, usize),
) -> Result<TrueYields> {
    if s_cut.0 < 2 || s_cut.1 < 2 {
        return Err(Error::Domain("s_cut must be at least (2,2)".into()));
    }
    let eta = side_transmittance(p.alpha_db_per_km, distance_km) * p.eta_d;
    let mut y_z = vec![vec![0.0; s_cut.1 + 1]; s_cut.0 + 1];
    let mut e_z = vec![vec![0.0; s_cut.1 + 1]; s_cut.0 + 1];
    for na in 0..=s_cut.0 {
        for nb in 0..=s_cut.1 {
            let (y, eq) = fock_z_yield(na as u64, nb as u64, eta, eta, p.y0, p.e_d);
            y_z[na][nb] = y;
            e_z[na][nb] = if y > 0.0 { eq / y } else { 0.0 };
        }
    }
    let (y_x_11, e_x_11) = fock_x_pair_11(eta, eta, p.y0, p.e_d);
    Ok(TrueYields {
        s_cut,
        y_z,
        e_z,
        y_x_11,
        e_x_11,
    })
}

/// Result of a Monte Carlo oracle run.
#[derive(Debug, Clone, Copy)]
pub struct OracleEstimate {
    pub gain: f64,
    pub qber: f64,
    pub gain_stderr: f64,
    pub qber_stderr: f64,
    pub coincidences: u64,
    pub samples: u64,
    pub seed: u64,
}

impl OracleEstimate {
    pub fn csv_header() -> &'static str {
        "gain,qber,gain_stderr,qber_stderr,coincidences,samples,seed"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.9e},{:.9e},{:.9e},{:.9e},{},{},{}",
            self.gain,
            self.qber,
            self.gain_stderr,
            self.qber_stderr,
            self.coincidences,
            self.samples,
            self.seed
        )
    }
}

const ORACLE_BATCH: u64 = 1 << 16;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Photon-level Monte Carlo of the Z basis: Poisson draws per pulse, binomial
/// thinning through the channel and detector efficiency, 50:50 routing at the
/// relay splitter, independent dark counts per detector per bin, the strict
/// singlet coincidence rule, and a misalignment flip on heralded events.
///
/// Deterministic for a fixed seed: samples are split into fixed-size batches
/// with seeds derived from the batch index, so the thread count does not
/// change the result.
pub fn z_basis_oracle(
    p: &ExperimentParams,
    gamma_a: f64,
    gamma_b: f64,
    distance_km: f64,
    n_samples: u64,
    seed: u64,
) -> Result<OracleEstimate> {
    if n_samples == 0 {
        return Err(Error::Domain("n_samples must be positive".into()));
    }
    let eta = side_transmittance(p.alpha_db_per_km, distance_km) * p.eta_d;
    let n_batches = n_samples.div_ceil(ORACLE_BATCH);
    let counts: Vec<(u64, u64)> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let this_batch = ORACLE_BATCH.min(n_samples - batch * ORACLE_BATCH);
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ (batch + 1)));
            run_z_batch(&mut rng, gamma_a, gamma_b, eta, p.y0, p.e_d, this_batch)
        })
        .collect();
    let coincidences: u64 = counts.iter().map(|c| c.0).sum();
    let errors: u64 = counts.iter().map(|c| c.1).sum();
    let gain = coincidences as f64 / n_samples as f64;
    let qber = if coincidences > 0 {
        errors as f64 / coincidences as f64
    } else {
        0.0
    };
    Ok(OracleEstimate {
        gain,
        qber,
        gain_stderr: (gain * (1.0 - gain) / n_samples as f64).sqrt(),
        qber_stderr: if coincidences > 0 {
            (qber * (1.0 - qber) / coincidences as f64).sqrt()
        } else {
            0.0
        },
        coincidences,
        samples: n_samples,
        seed,
    })
}

fn run_z_batch(
    rng: &mut ChaCha8Rng,
    gamma_a: f64,
    gamma_b: f64,
    eta: f64,
    y0: f64,
    e_d: f64,
    n: u64,
) -> (u64, u64) {
    let pois_a = (gamma_a > 0.0).then(|| Poisson::new(gamma_a).unwrap());
    let pois_b = (gamma_b > 0.0).then(|| Poisson::new(gamma_b).unwrap());
    let thin = |rng: &mut ChaCha8Rng, pois: &Option<Poisson<f64>>| -> u64 {
        let Some(d) = pois else { return 0 };
        let n_src = d.sample(rng) as u64;
        if n_src == 0 || eta == 0.0 {
            0
        } else {
            Binomial::new(n_src, eta).unwrap().sample(rng)
        }
    };
    let mut coincidences = 0u64;
    let mut errors = 0u64;
    for _ in 0..n {
        let bit_a = rng.random_bool(0.5);
        let bit_b = rng.random_bool(0.5);
        let k_a = thin(rng, &pois_a);
        let k_b = thin(rng, &pois_b);
        // photons[detector][bin]: each photon routes 50:50; a user's light
        // fills the early bin for bit 0 and the late bin for bit 1
        let mut photons = [[0u64; 2]; 2];
        for (k, bit) in [(k_a, bit_a), (k_b, bit_b)] {
            if k > 0 {
                let bin = usize::from(bit);
                let d0 = Binomial::new(k, 0.5).unwrap().sample(rng);
                photons[0][bin] += d0;
                photons[1][bin] += k - d0;
            }
        }
        let mut clicks = [[false; 2]; 2];
        for det in 0..2 {
            for bin in 0..2 {
                clicks[det][bin] = photons[det][bin] > 0 || (y0 > 0.0 && rng.random_bool(y0));
            }
        }
        // singlet pattern: opposite detectors in opposite bins, others silent
        let pat_a = clicks[0][0] && !clicks[1][0] && clicks[1][1] && !clicks[0][1];
        let pat_b = clicks[1][0] && !clicks[0][0] && clicks[0][1] && !clicks[1][1];
        if pat_a || pat_b {
            coincidences += 1;
            let mut error = bit_a == bit_b;
            if e_d > 0.0 && rng.random_bool(e_d) {
                error = !error;
            }
            if error {
                errors += 1;
            }
        }
    }
    (coincidences, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Intensities, Level};

    pub(crate) fn table1() -> ExperimentParams {
        ExperimentParams {
            eta_d: 0.20,
            y0: 3e-6,
            e_d: 0.001,
            rep_rate: 75e6,
            alpha_db_per_km: 0.21,
            eta_id: 0.7,
            sigma_id: 6.55e4,
            q: 0.01,
            k_pulses: 3.5e13,
            epsilon_sec: 1e-10,
            m_c: 1e9,
            delta: 0.01,
            varsigma: 0.0,
            f_e: 1.16,
            intensities: Intensities {
                mu: 0.5,
                nu: 0.01,
                omega: 0.0,
            },
            tau_conf: 1.0 - 1e-7,
            a_cut: 7,
            b_cut: 7,
        }
    }

    #[test]
    fn vacuum_gain_is_dark_floor_and_qber_half() {
        let p = table1();
        let cp = expected_observables(&p, 50.0);
        let cell = cp.observables.get(Level::Vacuum, Level::Vacuum, Basis::Z);
        let dark = p.y0 * (1.0 - p.y0);
        let expect = 2.0 * dark * dark;
        assert!((cell.gain.mid() - expect).abs() / expect < 1e-9);
        assert!((cell.qber() - 0.5).abs() < 1e-9);
        let cell = cp.observables.get(Level::Vacuum, Level::Vacuum, Basis::X);
        assert!((cell.gain.mid() - expect).abs() / expect < 1e-6);
        assert!((cell.qber() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn no_error_mechanism_no_qber() {
        let mut p = table1();
        p.y0 = 0.0;
        p.e_d = 0.0;
        let cp = expected_observables(&p, 0.0);
        let z = cp.observables.get(Level::Signal, Level::Signal, Basis::Z);
        assert!(z.gain.mid() > 0.0);
        assert_eq!(z.error_gain.mid(), 0.0);
        // X basis: multi-photon events still cause errors, but the
        // single-pair error must vanish
        let y = true_untagged_yields(&p, 0.0, (7, 7)).unwrap();
        assert_eq!(y.e_x_11, 0.0);
        assert!(y.y_x_11 > 0.0);
    }

    #[test]
    fn x_basis_wcp_error_near_one_quarter() {
        // matched weak intensities, perfect alignment, no darks: the
        // phase-averaged singlet rate gives QBER ~ 1/4
        let mut p = table1();
        p.y0 = 0.0;
        p.e_d = 0.0;
        let cp = expected_observables(&p, 0.0);
        let x = cp.observables.get(Level::Decoy, Level::Decoy, Basis::X);
        let e = x.qber();
        assert!((e - 0.25).abs() < 0.01, "X QBER {e}");
    }

    #[test]
    fn fock_yields_match_exhaustive_enumeration() {
        let p = table1();
        let eta = 0.3;
        let y0 = p.y0;
        let e_d = p.e_d;
        // enumerate thinning, routing and dark counts exactly
        let brute = |n_a: u64, n_b: u64| -> (f64, f64) {
            let binom =
                |n: u64, k: u64, q: f64| -> f64 { crate::stats::binomial_pmf(k, n, q).unwrap() };
            let mut y = 0.0;
            let mut eq = 0.0;
            for same in [true, false] {
                for k_a in 0..=n_a {
                    for k_b in 0..=n_b {
                        let p_thin = binom(n_a, k_a, eta) * binom(n_b, k_b, eta);
                        for j_a in 0..=k_a {
                            for j_b in 0..=k_b {
                                let p_route = binom(k_a, j_a, 0.5) * binom(k_b, j_b, 0.5);
                                // user a in bin 0; user b in bin 0 if same else 1
                                let mut occ = [[0u64; 2]; 2];
                                occ[0][0] += j_a;
                                occ[1][0] += k_a - j_a;
                                let bin_b = usize::from(!same);
                                occ[0][bin_b] += j_b;
                                occ[1][bin_b] += k_b - j_b;
                                for dmask in 0..16u32 {
                                    let mut p_dark = 1.0;
                                    let mut clicks = [[false; 2]; 2];
                                    for det in 0..2 {
                                        for bin in 0..2 {
                                            let dark = dmask >> (det * 2 + bin) & 1 == 1;
                                            p_dark *= if dark { y0 } else { 1.0 - y0 };
                                            clicks[det][bin] = occ[det][bin] > 0 || dark;
                                        }
                                    }
                                    let pat = (clicks[0][0]
                                        && !clicks[1][0]
                                        && clicks[1][1]
                                        && !clicks[0][1])
                                        || (clicks[1][0]
                                            && !clicks[0][0]
                                            && clicks[0][1]
                                            && !clicks[1][1]);
                                    if pat {
                                        let w = 0.5 * p_thin * p_route * p_dark;
                                        y += w;
                                        let err_prob = if same { 1.0 - e_d } else { e_d };
                                        eq += w * err_prob;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            (y, eq)
        };
        for (n_a, n_b) in [(0, 0), (1, 1), (1, 2), (2, 2), (3, 1)] {
            let (y_ref, eq_ref) = brute(n_a, n_b);
            let (y, eq) = fock_z_yield(n_a, n_b, eta, eta, y0, e_d);
            assert!(
                (y - y_ref).abs() / y_ref.max(1e-300) < 1e-10,
                "Y({n_a},{n_b}): {y} vs {y_ref}"
            );
            assert!(
                (eq - eq_ref).abs() / eq_ref.max(1e-300) < 1e-10,
                "EQ({n_a},{n_b}): {eq} vs {eq_ref}"
            );
        }
    }

    #[test]
    fn single_pair_yield_ideal_limit() {
        // distance 0, perfect detectors, no darks: the singlet pattern fires
        // for half of the different-bit pairs, i.e. Y_11 = 1/4
        let mut p = table1();
        p.y0 = 0.0;
        p.e_d = 0.0;
        p.eta_d = 1.0;
        let y = true_untagged_yields(&p, 0.0, (3, 3)).unwrap();
        assert!((y.y_z_at(1, 1) - 0.25).abs() < 1e-12);
        assert_eq!(y.y_z_at(0, 0), 0.0);
        // the X-basis pair behaves identically in the ideal limit
        assert!((y.y_x_11 - 0.25).abs() < 1e-12);
        assert_eq!(y.e_x_11, 0.0);
    }

    #[test]
    fn x_single_pair_error_tracks_misalignment() {
        let mut p = table1();
        p.y0 = 0.0;
        p.eta_d = 1.0;
        for e_d in [0.0, 0.001, 0.01, 0.05] {
            p.e_d = e_d;
            let y = true_untagged_yields(&p, 0.0, (3, 3)).unwrap();
            assert!(
                (y.e_x_11 - e_d).abs() < 1e-12,
                "e_x_11 {} for e_d {e_d}",
                y.e_x_11
            );
        }
    }

    #[test]
    fn decoy_consistency_forward_sums() {
        // Poisson mixture of the Fock yields reproduces the closed-form gains
        let p = table1();
        for distance in [0.0, 50.0] {
            for mu in [0.1, 0.3, 0.6] {
                let mut pp = p.clone();
                pp.intensities.mu = mu;
                let cp = expected_observables(&pp, distance);
                let yields = true_untagged_yields(&pp, distance, (7, 7)).unwrap();
                for (la, lb) in [
                    (Level::Signal, Level::Signal),
                    (Level::Signal, Level::Decoy),
                    (Level::Decoy, Level::Decoy),
                    (Level::Vacuum, Level::Signal),
                ] {
                    let ga = pp.intensities.get(la);
                    let gb = pp.intensities.get(lb);
                    let mut q = 0.0;
                    for na in 0..=7usize {
                        for nb in 0..=7usize {
                            let w = crate::stats::poisson_pmf(na as u64, ga).unwrap()
                                * crate::stats::poisson_pmf(nb as u64, gb).unwrap();
                            q += w * yields.y_z_at(na, nb);
                        }
                    }
                    let closed = cp.observables.get(la, lb, Basis::Z).gain.mid();
                    let rel = (q - closed).abs() / closed.max(1e-300);
                    assert!(
                        rel < 1e-3,
                        "forward sum mismatch at d={distance} mu={mu} ({la:?},{lb:?}): {rel}"
                    );
                }
            }
        }
    }

    #[test]
    fn yields_symmetric_and_monotone() {
        let p = table1();
        let y = true_untagged_yields(&p, 80.0, (7, 7)).unwrap();
        for na in 0..=7 {
            for nb in 0..=7 {
                let a = y.y_z_at(na, nb);
                let b = y.y_z_at(nb, na);
                assert!((a - b).abs() <= 1e-14 * a.max(b).max(1e-300));
            }
        }
        // more photons never hurt the yield in this model
        assert!(y.y_z_at(2, 1) >= y.y_z_at(1, 1));
        assert!(y.y_z_at(1, 2) >= y.y_z_at(1, 1));
        // dark floor present
        assert!(y.y_z_at(0, 0) > 0.0);
    }

    #[test]
    fn oracle_deterministic_and_exact_on_trivial_case() {
        let mut p = table1();
        p.y0 = 0.0;
        let a = z_basis_oracle(&p, 0.0, 0.0, 10.0, 100_000, 7).unwrap();
        assert_eq!(a.gain, 0.0);
        let p = table1();
        let b1 = z_basis_oracle(&p, 0.5, 0.5, 10.0, 200_000, 42).unwrap();
        let b2 = z_basis_oracle(&p, 0.5, 0.5, 10.0, 200_000, 42).unwrap();
        assert_eq!(b1.gain, b2.gain);
        assert_eq!(b1.qber, b2.qber);
        assert_eq!(b1.coincidences, b2.coincidences);
    }

    #[test]
    fn oracle_brackets_closed_form() {
        let p = table1();
        for (distance, mu, seed) in [(0.0, 0.5, 1u64), (25.0, 0.3, 2), (50.0, 0.5, 3)] {
            let mut pp = p.clone();
            pp.intensities.mu = mu;
            let cp = expected_observables(&pp, distance);
            let cell = cp.observables.get(Level::Signal, Level::Signal, Basis::Z);
            let est = z_basis_oracle(&pp, mu, mu, distance, 400_000, seed).unwrap();
            let diff = (est.gain - cell.gain.mid()).abs();
            assert!(
                diff <= 4.0 * est.gain_stderr.max(1e-12),
                "d={distance} mu={mu}: oracle {} vs model {} (se {})",
                est.gain,
                cell.gain.mid(),
                est.gain_stderr
            );
            if est.coincidences > 500 {
                let dq = (est.qber - cell.qber()).abs();
                assert!(
                    dq <= 4.0 * est.qber_stderr.max(1e-12),
                    "qber {} vs {}",
                    est.qber,
                    cell.qber()
                );
            }
        }
    }
}
