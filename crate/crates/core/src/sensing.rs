//! Detector statistics and the probabilities derived from them.
//!
//! Every player senses each carrier with an energy-type detector whose test
//! statistic is approximately Gaussian under both hypotheses. With a sensing
//! time `τ` and sampling frequency `f`, the probabilities of false alarm and
//! detection for threshold `γ` are
//!
//! ```text
//! pfa = Q(√(τ f)(γ − μ0)/σ0)      pd = Q(√(τ f)(γ − μ1)/σ1)
//! ```
//!
//! Solvers work in the scaled sensing coordinate `τ̂ = √(τ f)`, where the
//! missed-detection probability at a prescribed false-alarm rate is
//! `Q(s)` with `s = (Δμ τ̂ − σ0 Q⁻¹(pfa))/σ1`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{PI, SQRT_2};

use crate::error::invalid;
use crate::{Error, Result};

/// Guard used to keep probabilities away from {0, 1} before inverting `Q`.
pub const PROB_GUARD: f64 = 1e-15;

/// Gaussian tail probability `Q(x) = P(Z > x)`.
///
/// Saturates smoothly at extreme arguments (returns 0 or 1 once the tail
/// underflows).
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`q_function`] on `(0, 1)`.
///
/// Starts from the inverse complementary error function and polishes the
/// result with two Newton steps on `Q(x) − p`.
pub fn q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("Q⁻¹ needs p in (0,1), got {p}")));
    }
    let mut x = SQRT_2 * erfc_inv(2.0 * p);
    for _ in 0..2 {
        let dens = normal_pdf(x);
        if dens <= 0.0 || !dens.is_finite() {
            break;
        }
        x += (q_function(x) - p) / dens;
    }
    Ok(x)
}

pub(crate) fn q_inverse_guarded(p: f64) -> f64 {
    q_inverse(p.clamp(PROB_GUARD, 1.0 - PROB_GUARD)).expect("guarded probability")
}

/// Gaussian statistics of one detector on one carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorStats {
    /// Mean of the test statistic when the carrier is idle.
    pub mu0: f64,
    /// Mean when the primary user is active.
    pub mu1: f64,
    /// Standard deviation when idle.
    pub sigma0: f64,
    /// Standard deviation when active.
    pub sigma1: f64,
}

impl DetectorStats {
    /// Energy detector with unit noise power: `μ0 = σ0 = 1`, `μ1 = σ1 = 1 + snr`.
    pub fn energy_detector(snr_linear: f64) -> Self {
        Self {
            mu0: 1.0,
            mu1: 1.0 + snr_linear,
            sigma0: 1.0,
            sigma1: 1.0 + snr_linear,
        }
    }

    /// Mean separation `μ1 − μ0`.
    pub fn delta_mu(&self) -> f64 {
        self.mu1 - self.mu0
    }

    /// Detection SNR, taken as `(μ1 − μ0)/σ0`.
    pub fn snr_d(&self) -> f64 {
        self.delta_mu() / self.sigma0
    }
}

/// Detector statistics for every player/carrier plus per-player timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingModel {
    /// `stats[q][k]`.
    pub stats: Vec<Vec<DetectorStats>>,
    /// Sampling frequency per player (Hz).
    pub f: Vec<f64>,
    /// Frame duration per player (s).
    pub frame: Vec<f64>,
}

impl SensingModel {
    /// Homogeneous energy-detector model with detection SNR given in dB.
    pub fn from_snr_db(players: usize, carriers: usize, snr_db: f64, f: f64, frame: f64) -> Self {
        let snr = 10f64.powf(snr_db / 10.0);
        Self {
            stats: vec![vec![DetectorStats::energy_detector(snr); carriers]; players],
            f: vec![f; players],
            frame: vec![frame; players],
        }
    }

    /// Energy-detector model with one detection SNR (dB) per player.
    pub fn from_player_snr_db(snr_db: &[f64], carriers: usize, f: f64, frame: f64) -> Self {
        Self {
            stats: snr_db
                .iter()
                .map(|s| vec![DetectorStats::energy_detector(10f64.powf(s / 10.0)); carriers])
                .collect(),
            f: vec![f; snr_db.len()],
            frame: vec![frame; snr_db.len()],
        }
    }

    pub fn players(&self) -> usize {
        self.stats.len()
    }

    pub fn carriers(&self) -> usize {
        self.stats.first().map_or(0, Vec::len)
    }

    pub fn stat(&self, q: usize, k: usize) -> &DetectorStats {
        &self.stats[q][k]
    }

    /// Detection SNR `(μ1 − μ0)/σ0` for `(q, k)`.
    pub fn snr_d(&self, q: usize, k: usize) -> f64 {
        self.stats[q][k].snr_d()
    }

    /// Checks the model invariants.
    pub fn validate(&self) -> Result<()> {
        let qn = self.stats.len();
        if qn == 0 {
            return Err(Error::Dimension("sensing model has no players".into()));
        }
        if self.f.len() != qn || self.frame.len() != qn {
            return Err(Error::Dimension(
                "sensing model timing vectors must have one entry per player".into(),
            ));
        }
        let n = self.stats[0].len();
        for (q, row) in self.stats.iter().enumerate() {
            if row.len() != n || n == 0 {
                return Err(Error::Dimension(format!("sensing model row {q} has wrong length")));
            }
            for (k, s) in row.iter().enumerate() {
                if !(s.mu1 > s.mu0) {
                    return Err(invalid(format!("model.stats[{q}][{k}].mu1"), "must exceed mu0"));
                }
                if !(s.sigma0 > 0.0 && s.sigma1 > 0.0) {
                    return Err(invalid(format!("model.stats[{q}][{k}].sigma"), "must be positive"));
                }
            }
            if !(self.f[q] > 0.0) {
                return Err(invalid(format!("model.f[{q}]"), "must be positive"));
            }
            if !(self.frame[q] > 0.0) {
                return Err(invalid(format!("model.frame[{q}]"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// False-alarm and detection probabilities for threshold `gamma` and sensing time `tau`.
pub fn pfa_pd(gamma: f64, tau: f64, model: &SensingModel, q: usize, k: usize) -> (f64, f64) {
    let s = model.stat(q, k);
    let root = (tau * model.f[q]).sqrt();
    (
        q_function(root * (gamma - s.mu0) / s.sigma0),
        q_function(root * (gamma - s.mu1) / s.sigma1),
    )
}

/// Argument `s` of the missed-detection tail, `(Δμ τ̂ − σ0 Q⁻¹(pfa))/σ1`.
pub fn miss_argument(pfa: f64, tau_hat: f64, stats: &DetectorStats) -> f64 {
    (stats.delta_mu() * tau_hat - stats.sigma0 * q_inverse_guarded(pfa)) / stats.sigma1
}

/// Missed-detection probability at false-alarm rate `pfa` and scaled sensing time `tau_hat`.
///
/// Equals `1 − pd` of [`pfa_pd`] at the threshold that produces `pfa`.
pub fn pmiss_hat(pfa: f64, tau_hat: f64, model: &SensingModel, q: usize, k: usize) -> Result<f64> {
    if !(pfa > 0.0 && pfa < 1.0) {
        return Err(Error::Domain(format!("pfa must lie in (0,1), got {pfa}")));
    }
    Ok(q_function(miss_argument(pfa, tau_hat, model.stat(q, k))))
}

/// Decision threshold producing false-alarm rate `pfa` at sensing time `tau`.
pub fn threshold_from_pfa(pfa: f64, tau: f64, model: &SensingModel, q: usize, k: usize) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let s = model.stat(q, k);
    Ok(s.mu0 + s.sigma0 * q_inverse(pfa)? / (tau * model.f[q]).sqrt())
}

/// Missed-detection probability together with its first and second partial
/// derivatives in `(τ̂, pfa)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissDerivatives {
    pub value: f64,
    pub d_tau: f64,
    pub d_pfa: f64,
    pub d_tau_tau: f64,
    pub d_tau_pfa: f64,
    pub d_pfa_pfa: f64,
}

/// Evaluates [`MissDerivatives`] in closed form.
///
/// With `u = Q⁻¹(pfa)`, `s` the miss argument and `φ` the normal density:
/// `∂τ̂ = −φ(s)Δμ/σ1`, `∂pfa = −(σ0/σ1)φ(s)/φ(u)`, and the second
/// derivatives follow by the chain rule (`φ' = −xφ`, `du/dpfa = −1/φ(u)`).
pub fn miss_derivatives(pfa: f64, tau_hat: f64, stats: &DetectorStats) -> MissDerivatives {
    miss_derivatives_at_quantile(q_inverse_guarded(pfa), tau_hat, stats)
}

/// [`miss_derivatives`] with the quantile `u = Q⁻¹(pfa)` supplied by the caller.
pub fn miss_derivatives_at_quantile(u: f64, tau_hat: f64, stats: &DetectorStats) -> MissDerivatives {
    let s = (stats.delta_mu() * tau_hat - stats.sigma0 * u) / stats.sigma1;
    let a = stats.delta_mu() / stats.sigma1;
    let b = stats.sigma0 / stats.sigma1;
    let phi_s = normal_pdf(s);
    // φ(s)/φ(u) and φ(s)/φ(u)² without overflowing for large u.
    let ratio = (0.5 * (u * u - s * s)).exp();
    let ratio2 = ratio * (0.5 * u * u).exp() * (2.0 * PI).sqrt();
    MissDerivatives {
        value: q_function(s),
        d_tau: -phi_s * a,
        d_pfa: -b * ratio,
        d_tau_tau: s * phi_s * a * a,
        d_tau_pfa: a * b * s * ratio,
        d_pfa_pfa: b * ratio2 * (s * b + u),
    }
}
