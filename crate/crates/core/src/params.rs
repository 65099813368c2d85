//! Run configuration: hardware constants, protocol choices, and the per-side
//! quantities derived from them at a given distance.
//!
//! The configuration file is a flat `key = value` text format with `#`
//! comments; see the repository README for the field-by-field description.

use std::collections::HashSet;
use std::path::Path;

use crate::error::Error;
use crate::Result;

/// The three intensity settings each user can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Signal,
    Decoy,
    Vacuum,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Signal, Level::Decoy, Level::Vacuum];

    pub fn index(self) -> usize {
        match self {
            Level::Signal => 0,
            Level::Decoy => 1,
            Level::Vacuum => 2,
        }
    }
}

/// Signal / decoy / vacuum mean output photon numbers per pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intensities {
    pub mu: f64,
    pub nu: f64,
    pub omega: f64,
}

impl Intensities {
    pub fn get(&self, level: Level) -> f64 {
        match level {
            Level::Signal => self.mu,
            Level::Decoy => self.nu,
            Level::Vacuum => self.omega,
        }
    }
}

/// Every named constant and user choice of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentParams {
    /// Single-photon detector efficiency, in (0,1].
    pub eta_d: f64,
    /// Dark count probability per detector per gate.
    pub y0: f64,
    /// Channel misalignment error probability.
    pub e_d: f64,
    /// System repetition rate in Hz (recorded; the engine works per pulse).
    pub rep_rate: f64,
    /// Fiber loss coefficient in dB/km.
    pub alpha_db_per_km: f64,
    /// Intensity-detector efficiency, in (0,1].
    pub eta_id: f64,
    /// Intensity-detector Gaussian noise standard deviation, photons.
    pub sigma_id: f64,
    /// Monitoring beam-splitter tap ratio: fraction of the input routed to the
    /// encoder arm, in (0,1).
    pub q: f64,
    /// Half the total pulses emitted toward each user.
    pub k_pulses: f64,
    /// Overall security bound for statistical fluctuation analysis.
    pub epsilon_sec: f64,
    /// Mean photon number of the relay source per pulse.
    pub m_c: f64,
    /// Untagged window half-width (relative).
    pub delta: f64,
    /// Conservative interval on measured photon numbers, photons.
    pub varsigma: f64,
    /// Error-correction inefficiency, >= 1.
    pub f_e: f64,
    /// Signal / decoy / vacuum output intensities.
    pub intensities: Intensities,
    /// Confidence level for the untagged-sampling estimate, in (0,1).
    pub tau_conf: f64,
    /// Photon-number truncation of the estimation program, per side.
    pub a_cut: usize,
    pub b_cut: usize,
}

impl ExperimentParams {
    /// Checks every invariant, naming the violated one on failure.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Validation(msg.to_string()));
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return fail("eta_d must be in (0,1]");
        }
        if !(self.eta_id > 0.0 && self.eta_id <= 1.0) {
            return fail("eta_id must be in (0,1]");
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return fail("q must be in (0,1)");
        }
        if !(self.y0 >= 0.0 && self.y0 < 1.0) {
            return fail("y0 must be in [0,1)");
        }
        if !(self.e_d >= 0.0 && self.e_d < 0.5) {
            return fail("e_d must be in [0,0.5)");
        }
        let i = &self.intensities;
        if !(i.omega >= 0.0 && i.omega < i.nu && i.nu < i.mu) {
            return fail("decoy ordering requires omega < nu < mu with omega >= 0");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail("delta must be in (0,1)");
        }
        if !(self.f_e >= 1.0) {
            return fail("f_e must be >= 1");
        }
        if !(self.tau_conf > 0.0 && self.tau_conf < 1.0) {
            return fail("tau_conf must be in (0,1)");
        }
        if !(self.sigma_id >= 0.0) {
            return fail("sigma_id must be >= 0");
        }
        if !(self.varsigma >= 0.0) {
            return fail("varsigma must be >= 0");
        }
        if !(self.m_c > 0.0) {
            return fail("m_c must be > 0");
        }
        if !(self.k_pulses >= 1.0) {
            return fail("k_pulses must be >= 1");
        }
        if !(self.epsilon_sec > 0.0 && self.epsilon_sec < 1.0) {
            return fail("epsilon_sec must be in (0,1)");
        }
        if self.a_cut < 2 || self.b_cut < 2 {
            return fail("a_cut and b_cut must be >= 2");
        }
        // Weak-output condition: with the encoder transmittance set so that the
        // mean output is gamma, (1+delta)*M*lambda*q reduces to (1+delta)*gamma,
        // which must stay below one photon for every configured intensity.
        if (1.0 + self.delta) * i.mu >= 1.0 {
            return fail("untagged weak-output condition violated: (1+delta)*mu >= 1");
        }
        Ok(())
    }

    /// Replaces the signal intensity, revalidating the decoy ordering.
    pub fn with_mu(&self, mu: f64) -> Result<ExperimentParams> {
        let mut p = self.clone();
        p.intensities.mu = mu;
        p.validate()?;
        Ok(p)
    }
}

/// Per-side derived quantities at a given total distance.
#[derive(Debug, Clone)]
pub struct SideParams {
    pub distance_km: f64,
    /// One-way transmittance of one side's fiber.
    pub t_side: f64,
    /// Mean input photon number M per pulse arriving at a user.
    pub m_in: f64,
    /// Mean measured photon number M' = M * eta_id * (1 - q) at the monitor.
    pub m_prime: f64,
    /// Encoder-arm internal transmittance per intensity level.
    pub lambda: [f64; 3],
    /// Effective encoding-arm transmission lambda*q = gamma / M per level.
    pub eff_p: [f64; 3],
}

impl SideParams {
    pub fn lambda_for(&self, level: Level) -> f64 {
        self.lambda[level.index()]
    }

    pub fn eff_p_for(&self, level: Level) -> f64 {
        self.eff_p[level.index()]
    }
}

/// Derives the per-side quantities for a symmetric link.
///
/// The relay splits each pulse 50:50 and each half crosses one side's fiber,
/// so M = m_c/2 * 10^(-alpha*(L/2)/10). The encoder transmittance is then set
/// per intensity so that M * lambda * q reproduces the target output mean.
pub fn derive_side_params(p: &ExperimentParams, distance_km: f64) -> Result<SideParams> {
    if !(distance_km >= 0.0) {
        return Err(Error::Domain(format!(
            "distance must be >= 0, got {distance_km}"
        )));
    }
    let t_side = 10f64.powf(-p.alpha_db_per_km * (distance_km / 2.0) / 10.0);
    let m_in = p.m_c / 2.0 * t_side;
    let m_prime = m_in * p.eta_id * (1.0 - p.q);
    let mut lambda = [0.0; 3];
    let mut eff_p = [0.0; 3];
    for level in Level::ALL {
        let gamma = p.intensities.get(level);
        let lam = gamma / (m_in * p.q);
        if lam > 1.0 {
            return Err(Error::Validation(format!(
                "encoder transmittance {lam:.3e} exceeds 1 for intensity {gamma} at {distance_km} km"
            )));
        }
        if (1.0 + p.delta) * m_in * lam * p.q >= 1.0 {
            return Err(Error::Validation(
                "untagged weak-output condition violated".to_string(),
            ));
        }
        lambda[level.index()] = lam;
        eff_p[level.index()] = lam * p.q;
    }
    Ok(SideParams {
        distance_km,
        t_side,
        m_in,
        m_prime,
        lambda,
        eff_p,
    })
}

/// Field defaults applied when a key is omitted from the config file.
mod defaults {
    pub const DELTA: f64 = 0.01;
    pub const F_E: f64 = 1.16;
    pub const NU: f64 = 0.01;
    pub const OMEGA: f64 = 0.0;
    pub const MU: f64 = 0.5;
    pub const VARSIGMA: f64 = 0.0;
    pub const TAU_CONF: f64 = 1.0 - 1e-7;
    pub const A_CUT: usize = 7;
    pub const B_CUT: usize = 7;
}

/// Loads and validates a configuration file.
pub fn load_config<P: AsRef<Path>>(path: P) -> Result<ExperimentParams> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::ConfigParse(format!("cannot read {}: {e}", path.as_ref().display()))
    })?;
    parse_config(&text)
}

/// Parses the `key = value` configuration format.
pub fn parse_config(text: &str) -> Result<ExperimentParams> {
    let mut seen = HashSet::new();
    let mut fields: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::ConfigParse(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !seen.insert(key.clone()) {
            return Err(Error::ConfigParse(format!(
                "line {}: duplicate key `{key}`",
                lineno + 1
            )));
        }
        fields.push((key, value));
    }

    let mut p = ExperimentParams {
        eta_d: f64::NAN,
        y0: f64::NAN,
        e_d: f64::NAN,
        rep_rate: f64::NAN,
        alpha_db_per_km: f64::NAN,
        eta_id: f64::NAN,
        sigma_id: f64::NAN,
        q: f64::NAN,
        k_pulses: f64::NAN,
        epsilon_sec: f64::NAN,
        m_c: f64::NAN,
        delta: defaults::DELTA,
        varsigma: defaults::VARSIGMA,
        f_e: defaults::F_E,
        intensities: Intensities {
            mu: defaults::MU,
            nu: defaults::NU,
            omega: defaults::OMEGA,
        },
        tau_conf: defaults::TAU_CONF,
        a_cut: defaults::A_CUT,
        b_cut: defaults::B_CUT,
    };

    for (key, value) in &fields {
        let num = || -> Result<f64> {
            value.parse::<f64>().map_err(|_| {
                Error::ConfigParse(format!("key `{key}`: cannot parse `{value}` as a number"))
            })
        };
        let int = || -> Result<usize> {
            value.parse::<usize>().map_err(|_| {
                Error::ConfigParse(format!("key `{key}`: cannot parse `{value}` as an integer"))
            })
        };
        match key.as_str() {
            "eta_d" => p.eta_d = num()?,
            "y0" => p.y0 = num()?,
            "e_d" => p.e_d = num()?,
            "rep_rate" => p.rep_rate = num()?,
            "alpha_db_per_km" => p.alpha_db_per_km = num()?,
            "eta_id" => p.eta_id = num()?,
            "sigma_id" => p.sigma_id = num()?,
            "q" => p.q = num()?,
            "k_pulses" => p.k_pulses = num()?,
            "epsilon_sec" => p.epsilon_sec = num()?,
            "m_c" => p.m_c = num()?,
            "delta" => p.delta = num()?,
            "varsigma" => p.varsigma = num()?,
            "f_e" => p.f_e = num()?,
            "mu" => p.intensities.mu = num()?,
            "nu" => p.intensities.nu = num()?,
            "omega" => p.intensities.omega = num()?,
            "tau_conf" => p.tau_conf = num()?,
            "a_cut" => p.a_cut = int()?,
            "b_cut" => p.b_cut = int()?,
            _ => {
                return Err(Error::ConfigParse(format!("unknown key `{key}`")));
            }
        }
    }

    for (name, v) in [
        ("eta_d", p.eta_d),
        ("y0", p.y0),
        ("e_d", p.e_d),
        ("rep_rate", p.rep_rate),
        ("alpha_db_per_km", p.alpha_db_per_km),
        ("eta_id", p.eta_id),
        ("sigma_id", p.sigma_id),
        ("q", p.q),
        ("k_pulses", p.k_pulses),
        ("epsilon_sec", p.epsilon_sec),
        ("m_c", p.m_c),
    ] {
        if v.is_nan() {
            return Err(Error::ConfigParse(format!("missing required key `{name}`")));
        }
    }

    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TABLE1: &str = "\
# detector and channel
eta_d = 0.20
y0 = 3e-6
e_d = 0.001
rep_rate = 75e6
alpha_db_per_km = 0.21
# intensity monitor
eta_id = 0.7
sigma_id = 6.55e4
q = 0.01
# finite-data
k_pulses = 3.5e13
epsilon_sec = 1e-10
# relay source
m_c = 1e9
";

    #[test]
    fn parses_table1_with_defaults() {
        let p = parse_config(TABLE1).unwrap();
        assert_eq!(p.eta_d, 0.20);
        assert_eq!(p.y0, 3e-6);
        assert_eq!(p.e_d, 0.001);
        assert_eq!(p.alpha_db_per_km, 0.21);
        assert_eq!(p.eta_id, 0.7);
        assert_eq!(p.sigma_id, 6.55e4);
        assert_eq!(p.q, 0.01);
        assert_eq!(p.epsilon_sec, 1e-10);
        assert_eq!(p.k_pulses, 3.5e13);
        // defaults
        assert_eq!(p.delta, 0.01);
        assert_eq!(p.f_e, 1.16);
        assert_eq!(p.intensities.nu, 0.01);
        assert_eq!(p.intensities.omega, 0.0);
        assert_eq!(p.a_cut, 7);
        assert_eq!(p.b_cut, 7);
    }

    #[test]
    fn rejects_decoy_ordering_violation() {
        let text = format!("{TABLE1}nu = 0.02\nmu = 0.01\n");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("decoy ordering"), "{err}");
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let err = parse_config(&format!("{TABLE1}nope = 1\n")).unwrap_err();
        assert!(err.to_string().contains("unknown key"));
        let err = parse_config(&format!("{TABLE1}eta_d = 0.3\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn rejects_missing_required_key() {
        let err = parse_config("eta_d = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("missing required key"));
    }

    #[test]
    fn load_config_reads_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, TABLE1).unwrap();
        let p = load_config(&path).unwrap();
        assert_eq!(p.m_c, 1e9);
        assert!(load_config(dir.path().join("missing.conf")).is_err());
    }

    #[test]
    fn side_params_at_zero_distance() {
        let p = parse_config(TABLE1).unwrap();
        let s = derive_side_params(&p, 0.0).unwrap();
        // only the 50:50 split applies
        assert!((s.m_in - 5e8).abs() / 5e8 < 1e-12);
        assert!((s.m_prime - 5e8 * 0.7 * 0.99).abs() / s.m_prime < 1e-12);
    }

    #[test]
    fn side_params_follow_the_loss_law() {
        let p = parse_config(TABLE1).unwrap();
        let s = derive_side_params(&p, 100.0).unwrap();
        // m_c/2 * 10^(-0.21 * 50 / 10)
        let expect = 5e8 * 10f64.powf(-1.05);
        assert!((s.m_in - expect).abs() / expect < 1e-12);
        // definition inversion: lambda = gamma / (M q)
        let lam = s.lambda_for(Level::Signal);
        assert!((lam - 0.5 / (s.m_in * 0.01)).abs() / lam < 1e-12);
    }

    #[test]
    fn side_params_reproduce_intensities() {
        let p = parse_config(TABLE1).unwrap();
        for d in [0.0, 10.0, 50.0, 150.0, 220.0] {
            let s = derive_side_params(&p, d).unwrap();
            for level in Level::ALL {
                let gamma = p.intensities.get(level);
                let back = s.m_in * s.lambda_for(level) * p.q;
                if gamma > 0.0 {
                    assert!((back - gamma).abs() / gamma < 1e-12);
                } else {
                    assert_eq!(back, 0.0);
                }
            }
        }
    }

    #[test]
    fn side_params_monotone_in_distance() {
        let p = parse_config(TABLE1).unwrap();
        let mut prev_m = f64::INFINITY;
        let mut prev_lambda = 0.0;
        for d in [0.0, 25.0, 50.0, 100.0, 200.0] {
            let s = derive_side_params(&p, d).unwrap();
            assert!(s.m_in < prev_m);
            assert!(s.lambda_for(Level::Signal) > prev_lambda);
            prev_m = s.m_in;
            prev_lambda = s.lambda_for(Level::Signal);
        }
    }

    #[test]
    fn weak_output_condition_rejected() {
        let mut p = parse_config(TABLE1).unwrap();
        p.intensities.mu = 0.999;
        let err = p.validate().unwrap_err();
        assert!(err.to_string().contains("weak-output"));
    }
}
