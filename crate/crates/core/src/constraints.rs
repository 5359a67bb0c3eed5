//! Feasible sets, interference violations and feasibility pre-checks.
//!
//! A player's convex set `Y_q` collects
//!
//! * the detection bound `Pmiss(τ̂, pfa) ≤ α_k` on every carrier, which in
//!   the `(τ̂, pfa)` plane reads `pfa ≥ g_k(τ̂) = Q((σ1 α̂_k + Δμ τ̂)/σ0)` with
//!   `α̂_k = Q⁻¹(1 − α_k)`,
//! * the false-alarm cap `pfa ≤ β`,
//! * the sensing box `τ̂ ∈ [√(τmin f), √(τmax f)]`,
//! * the power set `{Σ p ≤ P, 0 ≤ p ≤ pmax}`.
//!
//! The nonconvex interference constraints `I_q ≤ 0` and `I ≤ 0` are kept
//! separately.

use serde::{Deserialize, Serialize};

use crate::network::{Profile, Scenario, Strategy};
use crate::sensing::{q_function, q_inverse, q_inverse_guarded, SensingModel, PROB_GUARD};
use crate::{Error, Result};

/// `α̂_qk = Q⁻¹(1 − α_qk)` (≤ 0 because `α ≤ 1/2`).
pub fn alpha_hat(sc: &Scenario, q: usize, k: usize) -> f64 {
    -q_inverse(sc.alpha[q][k]).expect("alpha validated in (0, 1/2]")
}

/// Smallest false-alarm rate compatible with the detection bounds at `tau_hat`:
/// `max(max_k g_k(τ̂), 1e-15)`.
pub fn pfa_floor(sc: &Scenario, model: &SensingModel, q: usize, tau_hat: f64) -> f64 {
    pfa_floor_with_slope(sc, model, q, tau_hat).0
}

/// [`pfa_floor`] together with the derivative of the active branch.
pub fn pfa_floor_with_slope(sc: &Scenario, model: &SensingModel, q: usize, tau_hat: f64) -> (f64, f64) {
    FloorCurve::new(sc, model, q).eval(tau_hat)
}

/// The detection-bound curve `τ̂ ↦ max_k g_k(τ̂)` with its per-carrier
/// constants precomputed; `g_k(τ̂) = Q(a_k + b_k τ̂)`, so the maximum is
/// attained at the smallest argument.
#[derive(Debug, Clone)]
pub struct FloorCurve {
    offset: Vec<f64>,
    slope: Vec<f64>,
}

impl FloorCurve {
    pub fn new(sc: &Scenario, model: &SensingModel, q: usize) -> Self {
        let (offset, slope) = (0..sc.carriers)
            .map(|k| {
                let st = model.stat(q, k);
                (st.sigma1 * alpha_hat(sc, q, k) / st.sigma0, st.delta_mu() / st.sigma0)
            })
            .unzip();
        Self { offset, slope }
    }

    /// `(max(max_k g_k(τ̂), 1e-15), derivative of the active branch)`.
    pub fn eval(&self, tau_hat: f64) -> (f64, f64) {
        let (arg, b) = self
            .offset
            .iter()
            .zip(&self.slope)
            .map(|(a, b)| (a + b * tau_hat, *b))
            .fold((f64::INFINITY, 0.0), |m, v| if v.0 < m.0 { v } else { m });
        let g = q_function(arg);
        if g > PROB_GUARD {
            (g, -crate::sensing::normal_pdf(arg) * b)
        } else {
            (PROB_GUARD, 0.0)
        }
    }
}

/// Feasible `τ̂` interval of `Y_q` (the box intersected with `g(τ̂) ≤ β`).
pub fn tau_hat_interval(sc: &Scenario, model: &SensingModel, q: usize) -> Result<(f64, f64)> {
    let (lo, hi) = sc.tau_hat_bounds(q, model);
    let qb = q_inverse(sc.beta[q]).expect("beta validated");
    let need = (0..sc.carriers)
        .map(|k| {
            let st = model.stat(q, k);
            (st.sigma0 * qb - st.sigma1 * alpha_hat(sc, q, k)) / st.delta_mu()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let lower = lo.max(need);
    if lower > hi {
        return Err(Error::Infeasible(format!(
            "player {q}: detection bounds need τ̂ ≥ {need:.6} but τ̂max = {hi:.6}"
        )));
    }
    Ok((lower, hi))
}

/// Σ_k Pmiss·w·p for one strategy (the interference generated by one player).
pub fn interference_sum(q: usize, s: &Strategy, sc: &Scenario, model: &SensingModel) -> f64 {
    let u = q_inverse_guarded(s.pfa);
    (0..sc.carriers)
        .map(|k| {
            let st = model.stat(q, k);
            q_function((st.delta_mu() * s.tau_hat - st.sigma0 * u) / st.sigma1) * sc.w[q][k] * s.p[k]
        })
        .sum()
}

/// Local violation `I_q = Σ_k Pmiss·w·p − I_q^max`.
pub fn interference_local(q: usize, s: &Strategy, sc: &Scenario, model: &SensingModel) -> f64 {
    interference_sum(q, s, sc, model) - sc.imax_local[q]
}

/// Global violation `I = Σ_q Σ_k Pmiss·w·p − I^max`.
pub fn interference_global(profile: &Profile, sc: &Scenario, model: &SensingModel) -> f64 {
    (0..sc.players)
        .map(|q| interference_sum(q, &profile.x[q], sc, model))
        .sum::<f64>()
        - sc.imax_global
}

/// Outcome of a feasibility pre-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub pass: bool,
    /// `(q, k)` with the largest sensing-time requirement.
    pub binding: Option<(usize, usize)>,
    /// Smallest common sensing time (s) meeting all requirements (common check only).
    pub min_common_tau: Option<f64>,
    pub messages: Vec<String>,
}

/// Required `√(f τ)` for `(q, k)`: `[Q⁻¹(β) + |Q⁻¹(α)|·σ1/σ0]/snr_d`.
fn required_root(sc: &Scenario, model: &SensingModel, q: usize, k: usize) -> f64 {
    let st = model.stat(q, k);
    let qb = q_inverse(sc.beta[q]).expect("beta validated");
    let qa = q_inverse(sc.alpha[q][k]).expect("alpha validated").abs();
    (qb + qa * st.sigma1 / st.sigma0) / st.snr_d()
}

fn per_carrier_check(sc: &Scenario, model: &SensingModel, taus: impl Fn(usize) -> f64, report: &mut FeasibilityReport) {
    let mut worst = f64::NEG_INFINITY;
    for q in 0..sc.players {
        let avail = (model.f[q] * taus(q)).sqrt();
        for k in 0..sc.carriers {
            let need = required_root(sc, model, q, k);
            if need - avail > worst {
                worst = need - avail;
                report.binding = Some((q, k));
            }
            if avail < need {
                report.pass = false;
                report.messages.push(format!(
                    "player {q} carrier {k}: √(fτ) = {avail:.6} < required {need:.6}"
                ));
            }
        }
    }
}

/// Existence of a common sensing time satisfying every detection requirement.
pub fn feasibility_common(sc: &Scenario, model: &SensingModel) -> FeasibilityReport {
    let mut rep = FeasibilityReport { pass: true, binding: None, min_common_tau: None, messages: vec![] };
    let lo = (0..sc.players).map(|q| sc.tau_min[q]).fold(f64::NEG_INFINITY, f64::max);
    let hi = (0..sc.players).map(|q| sc.tau_max[q]).fold(f64::INFINITY, f64::min);
    if lo > hi {
        rep.pass = false;
        rep.messages.push(format!("sensing-time intervals do not overlap: max τmin {lo} > min τmax {hi}"));
    }
    per_carrier_check(sc, model, |_| hi, &mut rep);
    if rep.pass {
        let mut need = lo;
        for q in 0..sc.players {
            for k in 0..sc.carriers {
                let r = required_root(sc, model, q, k).max(0.0);
                need = need.max(r * r / model.f[q]);
            }
        }
        rep.min_common_tau = Some(need);
    }
    rep
}

/// Per-player detection requirement at each player's own `τmax`.
pub fn feasibility_individual(sc: &Scenario, model: &SensingModel) -> FeasibilityReport {
    let mut rep = FeasibilityReport { pass: true, binding: None, min_common_tau: None, messages: vec![] };
    per_carrier_check(sc, model, |q| sc.tau_max[q], &mut rep);
    rep
}

/// Interference-weight model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum WeightMode {
    /// `w = |G|²`, caps unchanged.
    InstantaneousGains,
    /// Average path loss `w = σ_g/(1 + (d/d0)^ς)`.
    ExpectedPathloss {
        sigma_g: f64,
        exponent: f64,
        distance: f64,
        #[serde(alias = "r0")]
        d0: f64,
    },
    /// Rayleigh worst case: `w = 1`, caps scaled to `(I/σ_g)(1 + |ln P_I|/(π ρ d0²))`.
    RayleighWorstCase {
        sigma_g: f64,
        density: f64,
        #[serde(alias = "r0")]
        d0: f64,
        outage: f64,
    },
}

/// Interference weights and adjusted caps.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel {
    pub w: Vec<Vec<f64>>,
    pub imax_local: Vec<f64>,
    pub imax_global: f64,
    pub warnings: Vec<String>,
}

/// Builds interference weights for `mode`.
pub fn probabilistic_weights(mode: &WeightMode, sc: &Scenario) -> WeightModel {
    let mut out = WeightModel {
        w: sc.g.clone(),
        imax_local: sc.imax_local.clone(),
        imax_global: sc.imax_global,
        warnings: vec![],
    };
    match *mode {
        WeightMode::InstantaneousGains => {}
        WeightMode::ExpectedPathloss { sigma_g, exponent, distance, d0 } => {
            if !(2.0..=6.0).contains(&exponent) {
                out.warnings.push(format!("path-loss exponent {exponent} outside the usual range [2, 6]"));
            }
            let w = sigma_g / (1.0 + (distance / d0).powf(exponent));
            out.w = vec![vec![w; sc.carriers]; sc.players];
        }
        WeightMode::RayleighWorstCase { sigma_g, density, d0, outage } => {
            let factor = (1.0 + outage.ln().abs() / (std::f64::consts::PI * density * d0 * d0)) / sigma_g;
            out.w = vec![vec![1.0; sc.carriers]; sc.players];
            out.imax_local = sc.imax_local.iter().map(|i| i * factor).collect();
            out.imax_global = sc.imax_global * factor;
        }
    }
    out
}

/// Itemised membership of a strategy in `Y_q` and `X_q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub in_y: bool,
    pub in_x: bool,
    /// `(constraint name, violation amount)` for every violated constraint.
    pub violations: Vec<(String, f64)>,
}

/// Checks every constraint of `Y_q` and `I_q ≤ tol`.
pub fn membership(q: usize, s: &Strategy, sc: &Scenario, model: &SensingModel, tol: f64) -> Membership {
    let mut v = Vec::new();
    let (lo, hi) = sc.tau_hat_bounds(q, model);
    if s.tau_hat < lo - tol {
        v.push(("tau_hat >= tau_hat_min".to_string(), lo - s.tau_hat));
    }
    if s.tau_hat > hi + tol {
        v.push(("tau_hat <= tau_hat_max".to_string(), s.tau_hat - hi));
    }
    if s.pfa > sc.beta[q] + tol {
        v.push(("pfa <= beta".to_string(), s.pfa - sc.beta[q]));
    }
    if !(s.pfa > 0.0) {
        v.push(("pfa > 0".to_string(), -s.pfa));
    } else {
        for k in 0..sc.carriers {
            let pm = crate::sensing::pmiss_hat(s.pfa.min(1.0 - PROB_GUARD), s.tau_hat, model, q, k).expect("pfa in (0,1)");
            if pm > sc.alpha[q][k] + tol {
                v.push((format!("pmiss[{k}] <= alpha"), pm - sc.alpha[q][k]));
            }
        }
    }
    for k in 0..sc.carriers {
        if s.p[k] < -tol {
            v.push((format!("p[{k}] >= 0"), -s.p[k]));
        }
        if s.p[k] > sc.pmax[q][k] + tol {
            v.push((format!("p[{k}] <= pmax"), s.p[k] - sc.pmax[q][k]));
        }
    }
    let total = s.sum_power();
    if total > sc.power_budget[q] + tol {
        v.push(("sum p <= P".to_string(), total - sc.power_budget[q]));
    }
    let in_y = v.is_empty();
    let iq = if s.pfa > 0.0 && s.pfa < 1.0 { interference_local(q, s, sc, model) } else { f64::INFINITY };
    if iq > tol {
        v.push(("I_q <= 0".to_string(), iq));
    }
    Membership { in_y, in_x: in_y && iq <= tol, violations: v }
}
