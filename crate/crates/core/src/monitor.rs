//! The monitoring unit: tagged-pulse ratio under a noisy intensity detector,
//! and the sampling-confidence bounds for the untagged-pulse count.
//!
//! Each user taps the incoming strong pulse onto a classical intensity
//! detector and accepts a pulse as *untagged* when its measured photon number
//! falls inside the window (1 +/- delta) M', shrunk by the conservative
//! interval varsigma. Pulses are split 50/50 into sampling and encoding roles;
//! Hoeffding's inequality converts the sampled untagged count into a
//! high-confidence lower bound on the untagged encoding count.

use crate::error::Error;
use crate::params::{ExperimentParams, SideParams};
use crate::stats::erf;
use crate::Result;

/// Monitor-side quantities of one user.
#[derive(Debug, Clone)]
pub struct MonitorModel {
    /// Mean input photon number M per pulse.
    pub m_mean: f64,
    /// Intensity-detector efficiency.
    pub eta_id: f64,
    /// Intensity-detector Gaussian noise standard deviation, photons.
    pub sigma_id: f64,
    /// Fraction of the input routed to the encoder arm.
    pub q: f64,
    /// Untagged window half-width (relative).
    pub delta: f64,
    /// Conservative interval, photons.
    pub varsigma: f64,
}

impl MonitorModel {
    pub fn new(p: &ExperimentParams, side: &SideParams) -> Result<MonitorModel> {
        let m = MonitorModel {
            m_mean: side.m_in,
            eta_id: p.eta_id,
            sigma_id: p.sigma_id,
            q: p.q,
            delta: p.delta,
            varsigma: p.varsigma,
        };
        if !(m.m_mean > 0.0) {
            return Err(Error::Validation("monitor requires M > 0".into()));
        }
        if !(m.measured_mean() > 0.0) {
            return Err(Error::Validation("monitor requires M' > 0".into()));
        }
        if m.varsigma < 0.0 {
            return Err(Error::Validation("varsigma must be >= 0".into()));
        }
        Ok(m)
    }

    /// Mean measured photon number M' = M eta_id (1-q).
    pub fn measured_mean(&self) -> f64 {
        self.m_mean * self.eta_id * (1.0 - self.q)
    }
}

/// Sampling statistics of one user's untagged pulses.
#[derive(Debug, Clone, Copy)]
pub struct UntaggedStats {
    /// Tagged ratio Delta.
    pub delta_frac: f64,
    /// Statistical fluctuation epsilon of the sampling estimate.
    pub epsilon_sample: f64,
    /// Confidence level tau backing epsilon_sample.
    pub confidence: f64,
    /// max(0, 1 - Delta - epsilon): certified untagged fraction.
    pub untagged_fraction: f64,
}

/// Probability that a pulse is tagged, i.e. its measured photon number falls
/// outside the acceptance window.
///
/// The Poisson input (mean M, variance M) is treated as Gaussian and the
/// detector adds independent Gaussian noise of variance sigma_id^2, so
///
/// ```text
/// Delta = 1 - erf( (delta M' + varsigma) / sqrt(2 M + 2 sigma_id^2) )
/// ```
pub fn tagged_ratio(model: &MonitorModel) -> f64 {
    let arg = (model.delta * model.measured_mean() + model.varsigma)
        / (2.0 * model.m_mean + 2.0 * model.sigma_id * model.sigma_id).sqrt();
    (1.0 - erf(arg)).clamp(0.0, 1.0)
}

/// Fluctuation bound epsilon = sqrt(-ln(1-tau)/k) required to reach
/// confidence level tau with k pulses.
pub fn epsilon_from_confidence(tau: f64, k: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("tau must be in (0,1), got {tau}")));
    }
    if !(k >= 1.0) {
        return Err(Error::Domain(format!("k must be >= 1, got {k}")));
    }
    Ok((-(1.0 - tau).ln() / k).sqrt())
}

/// Hoeffding bound exp(-k epsilon^2) on the probability that the untagged
/// encoding count falls short of the sampled count by more than 2 epsilon k,
/// for the symmetric 50/50 role assignment.
pub fn sampling_violation_bound(k: f64, epsilon: f64) -> f64 {
    debug_assert!(k >= 1.0 && epsilon >= 0.0);
    (-k * epsilon * epsilon).exp()
}

/// Generalized bound exp(-4 k epsilon^2 beta^2) for role assignment with
/// encoding probability beta, covering the event
/// `V_e <= beta/(1-beta) (V_s - 2 epsilon k)`.
pub fn sampling_violation_bound_general(k: f64, epsilon: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("beta must be in (0,1), got {beta}")));
    }
    Ok((-4.0 * k * epsilon * epsilon * beta * beta).exp())
}

/// Combines the tagged ratio and the sampling fluctuation into the certified
/// untagged fraction, clamped at zero.
pub fn untagged_stats(model: &MonitorModel, tau: f64, k: f64) -> Result<UntaggedStats> {
    let delta_frac = tagged_ratio(model);
    let epsilon_sample = epsilon_from_confidence(tau, k)?;
    Ok(UntaggedStats {
        delta_frac,
        epsilon_sample,
        confidence: tau,
        untagged_fraction: (1.0 - delta_frac - epsilon_sample).max(0.0),
    })
}

/// The same statistics in the asymptotic limit: no sampling fluctuation.
pub fn untagged_stats_asymptotic(model: &MonitorModel) -> UntaggedStats {
    let delta_frac = tagged_ratio(model);
    UntaggedStats {
        delta_frac,
        epsilon_sample: 0.0,
        confidence: 1.0,
        untagged_fraction: (1.0 - delta_frac).max(0.0),
    }
}
