//! Explicit constants and sufficient conditions: multiplier bounds,
//! derivative bounds, Hessian floors, power floors, the diagonal-dominance
//! corollaries and the contraction matrix with its P-matrix test.
//!
//! Notation: `I^tot` in the per-player conditions is read as `I_q^max`
//! unless an override is supplied; the interference weights `w` stand in for
//! the primary-user gains everywhere.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{alpha_hat, feasibility_common, feasibility_individual, FeasibilityReport};
use crate::kkt::PlayerContext;
use crate::network::{Profile, Scenario, Strategy};
use crate::sensing::{q_function, q_inverse, SensingModel};
use crate::solver::{best_response, random_feasible, BrConfig};
use crate::{Error, Result};

fn min_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

/// `min_k log(1 + H_qq pmax_q/(σ² + Σ_{r≠q} H_qr pmax_r))` (unnormalised gains).
fn min_rate_at_mask(sc: &Scenario, q: usize) -> f64 {
    min_of((0..sc.carriers).map(|k| {
        let mui: f64 = (0..sc.players).filter(|&r| r != q).map(|r| sc.h[q][r][k] * sc.pmax[r][k]).sum();
        (sc.h[q][q][k] * sc.pmax[q][k] / (sc.noise[q][k] + mui)).ln_1p()
    }))
}

/// Per-player multiplier bound `1/([min_k log(1 + …)]·min_k σ²)`.
pub fn lambda_max_per_player(sc: &Scenario) -> Vec<f64> {
    (0..sc.players)
        .map(|q| 1.0 / (min_rate_at_mask(sc, q) * min_of(sc.noise[q].iter().copied())))
        .collect()
}

/// Bound on the local multipliers and the price:
/// `Σ_q [1/min{I_q^max, min_k pmax}] / ([min_k log(1 + …)]·min_k σ²)`.
pub fn lambda_max(sc: &Scenario) -> f64 {
    let per = lambda_max_per_player(sc);
    (0..sc.players)
        .map(|q| {
            let cap = sc.imax_local[q].min(min_of(sc.pmax[q].iter().copied()));
            per[q] / cap
        })
        .sum()
}

/// Bounds on the derivatives of the missed-detection probability, `[q][k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeBounds {
    pub tau: Vec<Vec<f64>>,
    pub pfa: Vec<Vec<f64>>,
    pub mixed: Vec<Vec<f64>>,
}

/// `ω^max` bounds on `|∂Pmiss/∂τ̂|`, `|∂Pmiss/∂pfa|` and `|∂²Pmiss/∂τ̂∂pfa|`.
///
/// The mixed bound carries the factor `max(1, Δμσ0/σ1²)`, which the
/// printed bound omits; it equals one for energy detectors.
pub fn derivative_bounds(sc: &Scenario, model: &SensingModel) -> DerivativeBounds {
    let mut out = DerivativeBounds { tau: vec![], pfa: vec![], mixed: vec![] };
    for q in 0..sc.players {
        let th_max = (model.f[q] * sc.tau_max[q]).sqrt();
        let (mut a, mut b, mut c) = (vec![], vec![], vec![]);
        for k in 0..sc.carriers {
            let st = model.stat(q, k);
            let dm = st.delta_mu();
            let grow = (0.5 * (dm * th_max / st.sigma0).powi(2)).exp();
            a.push(dm / (st.sigma1 * (2.0 * std::f64::consts::PI).sqrt()));
            b.push(st.sigma0 / st.sigma1 * grow);
            let qa = q_inverse(sc.alpha[q][k]).expect("alpha validated");
            let factor = (dm * st.sigma0 / (st.sigma1 * st.sigma1)).max(1.0);
            c.push(factor * qa.max(dm / st.sigma1 * th_max) * grow);
        }
        out.tau.push(a);
        out.pfa.push(b);
        out.mixed.push(c);
    }
    out
}

/// The bordered nonnegative matrix `[∇²I_q]^up_off` (factor 2 included).
pub fn offdiag_bound(q: usize, sc: &Scenario, bounds: &DerivativeBounds) -> DMatrix<f64> {
    let n = sc.carriers;
    let d = n + 2;
    let mut m = DMatrix::zeros(d, d);
    let corner: f64 = (0..n).map(|k| bounds.mixed[q][k] * sc.pmax[q][k]).sum();
    for k in 0..n {
        m[(0, 1 + k)] = 2.0 * bounds.tau[q][k];
        m[(1 + k, 0)] = 2.0 * bounds.tau[q][k];
        m[(1 + k, d - 1)] = 2.0 * bounds.pfa[q][k];
        m[(d - 1, 1 + k)] = 2.0 * bounds.pfa[q][k];
    }
    m[(0, d - 1)] = 2.0 * corner;
    m[(d - 1, 0)] = 2.0 * corner;
    m
}

/// Diagonal floors of the Lagrangian Hessian for one player.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalFloors {
    pub tau: f64,
    pub rate: Vec<f64>,
    pub pfa: f64,
    pub pfa_min: f64,
    pub r_max: f64,
}

/// Lower bounds of the diagonal of `∇²(−θ_q)` over the feasible set.
///
/// The rate floor uses `1/(r^max (σ̂² + Σ_r |Ĥ_qr|² pmax_r)²)`, the square
/// being required for the bound to hold.
pub fn diagonal_floors(q: usize, sc: &Scenario, model: &SensingModel) -> DiagonalFloors {
    let frame = model.frame[q];
    let ratio = sc.tau_min[q] / frame;
    let tau = (2.0 / (model.f[q] * frame)) * (1.0 + ratio) / ((1.0 - ratio) * (1.0 - ratio));
    let th_max = (model.f[q] * sc.tau_max[q]).sqrt();
    let pfa_min = min_of((0..sc.carriers).map(|k| {
        let st = model.stat(q, k);
        q_function(st.delta_mu() * th_max / st.sigma0)
    }));
    let r_max: f64 = (0..sc.carriers).map(|k| (sc.pmax[q][k] / sc.noise_hat(q, k)).ln_1p()).sum();
    let rate = (0..sc.carriers)
        .map(|k| {
            let den: f64 = sc.noise_hat(q, k) + (0..sc.players).map(|r| sc.h_hat(q, r, k) * sc.pmax[r][k]).sum::<f64>();
            1.0 / (r_max * den * den)
        })
        .collect();
    DiagonalFloors { tau, rate, pfa: 1.0 / ((1.0 - pfa_min) * (1.0 - pfa_min)), pfa_min, r_max }
}

fn max_weight(sc: &Scenario, q: usize) -> f64 {
    max_of(sc.w[q].iter().copied()).max(0.0)
}

/// `L̄ = Diag(floors) − 2·max(t, λ^max)·max_k w_qk·[∇²I_q]^up_off`.
pub fn hessian_floor(q: usize, t: f64, sc: &Scenario, model: &SensingModel) -> DMatrix<f64> {
    let lm = lambda_max(sc);
    let bounds = derivative_bounds(sc, model);
    hessian_floor_with(q, t, lm, sc, model, &bounds)
}

fn hessian_floor_with(q: usize, t: f64, lm: f64, sc: &Scenario, model: &SensingModel, bounds: &DerivativeBounds) -> DMatrix<f64> {
    let fl = diagonal_floors(q, sc, model);
    let n = sc.carriers;
    let mut diag = vec![fl.tau];
    diag.extend(fl.rate.iter().copied());
    diag.push(fl.pfa);
    let mut m = offdiag_bound(q, sc, bounds) * (-2.0 * t.max(lm) * max_weight(sc, q));
    for (i, v) in diag.iter().enumerate().take(n + 2) {
        m[(i, i)] = *v;
    }
    m
}

fn row_ratio_min(q: usize, sc: &Scenario, model: &SensingModel, bounds: &DerivativeBounds) -> (f64, f64) {
    let fl = diagonal_floors(q, sc, model);
    let up = offdiag_bound(q, sc, bounds);
    let mut diag = vec![fl.tau];
    diag.extend(fl.rate.iter().copied());
    diag.push(fl.pfa);
    let mut ratio = f64::INFINITY;
    let mut min_row = f64::INFINITY;
    for (i, d) in diag.iter().enumerate() {
        let rs: f64 = up.row(i).iter().sum();
        min_row = min_row.min(rs);
        if rs > 0.0 {
            ratio = ratio.min(d / rs);
        }
    }
    (ratio, min_row)
}

/// `γ_q^(1) = 2 max(t, λ^max) / min_i(diag floor_i / row-sum_i of up_off)`.
pub fn gamma1(q: usize, t: f64, sc: &Scenario, model: &SensingModel) -> f64 {
    let bounds = derivative_bounds(sc, model);
    gamma1_with(q, t, lambda_max(sc), sc, model, &bounds)
}

fn gamma1_with(q: usize, t: f64, lm: f64, sc: &Scenario, model: &SensingModel, bounds: &DerivativeBounds) -> f64 {
    let (ratio, _) = row_ratio_min(q, sc, model, bounds);
    if ratio.is_infinite() {
        0.0
    } else {
        2.0 * t.max(lm) / ratio
    }
}

fn itot(sc: &Scenario, q: usize, over: Option<f64>) -> f64 {
    over.unwrap_or(sc.imax_local[q])
}

/// First term of the per-player diagonal-dominance condition:
/// `γ_q^(1)·max_k w_qk/I^tot`.
pub fn corollary1_lhs(sc: &Scenario, model: &SensingModel, t: f64, itot_override: Option<f64>) -> Vec<f64> {
    let bounds = derivative_bounds(sc, model);
    let lm = lambda_max(sc);
    (0..sc.players)
        .map(|q| gamma1_with(q, t, lm, sc, model, &bounds) * max_weight(sc, q) / itot(sc, q, itot_override))
        .collect()
}

/// Per-player verdicts `γ_q^(1)·max_k w/I^tot < 1`.
pub fn check_corollary1(sc: &Scenario, model: &SensingModel, t: f64) -> Vec<bool> {
    corollary1_lhs(sc, model, t, None).into_iter().map(|v| v < 1.0).collect()
}

/// Ingredients of the power floor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerFloor {
    pub p_ref: Vec<f64>,
    pub pfa_ref: f64,
    pub eta_ref: f64,
    pub floor: f64,
}

/// Lower bound `min_k σ̂²·exp(η_ref(t))` on a best response's sum power.
pub fn power_floor(q: usize, t: f64, sc: &Scenario, model: &SensingModel) -> PowerFloor {
    let n = sc.carriers;
    let mut p_ref: Vec<f64> = (0..n).map(|k| (sc.power_budget[q] / n as f64).min(sc.pmax[q][k])).collect();
    let load: f64 = (0..n).map(|k| sc.w[q][k] * p_ref[k]).sum();
    if load > 2.0 * sc.imax_local[q] {
        let s = 2.0 * sc.imax_local[q] / load;
        p_ref.iter_mut().for_each(|p| *p *= s);
    }
    let th_min = (model.f[q] * sc.tau_min[q]).sqrt();
    let pfa_ref = max_of((0..n).map(|k| {
        let st = model.stat(q, k);
        q_function((st.sigma1 * alpha_hat(sc, q, k) + st.delta_mu() * th_min) / st.sigma0)
    }));
    let rates: f64 = (0..n)
        .map(|k| {
            let mui: f64 = sc.noise_hat(q, k)
                + (0..sc.players).filter(|&r| r != q).map(|r| sc.h_hat(q, r, k) * sc.pmax[r][k]).sum::<f64>();
            (p_ref[k] / mui).ln_1p()
        })
        .sum();
    let worst = max_of((0..n).map(|k| sc.w[q][k] * p_ref[k]));
    let eta_ref = (1.0 - sc.tau_min[q] / model.frame[q]).ln() + (1.0 - pfa_ref).ln() + rates.ln() - 0.5 * t * worst;
    let floor = min_of((0..n).map(|k| sc.noise_hat(q, k))) * eta_ref.exp();
    PowerFloor { p_ref, pfa_ref, eta_ref, floor }
}

/// `r_q^min = min_k log(1 + pmax/(σ̂² + Σ_{r≠q}|Ĥ_qr|² pmax_r))`.
pub fn r_min(q: usize, sc: &Scenario) -> f64 {
    min_of((0..sc.carriers).map(|k| {
        let mui: f64 = sc.noise_hat(q, k)
            + (0..sc.players).filter(|&r| r != q).map(|r| sc.h_hat(q, r, k) * sc.pmax[r][k]).sum::<f64>();
        (sc.pmax[q][k] / mui).ln_1p()
    }))
}

/// `r_q^low(t) = min_k σ̂²·exp(η_ref(t))·r_q^min`.
pub fn r_low(q: usize, t: f64, sc: &Scenario, model: &SensingModel) -> f64 {
    power_floor(q, t, sc, model).floor * r_min(q, sc)
}

/// `ξ_q^sup(t) = 1/r^low + (1/r^low)(1/r^min)·max_k 1/σ̂⁴`.
pub fn xi_sup(q: usize, t: f64, sc: &Scenario, model: &SensingModel) -> f64 {
    let rl = r_low(q, t, sc, model);
    let rm = r_min(q, sc);
    let inv4 = max_of((0..sc.carriers).map(|k| sc.noise_hat(q, k).powi(-2)));
    1.0 / rl + inv4 / (rl * rm)
}

/// `ζ(t) = max_q max_k(1/σ̂²)·(1/r^low + (1/r^low)(1/r^min) Σ_k 1/σ̂²)`.
pub fn zeta(t: f64, sc: &Scenario, model: &SensingModel) -> f64 {
    max_of((0..sc.players).map(|q| {
        let rl = r_low(q, t, sc, model);
        let rm = r_min(q, sc);
        let inv: Vec<f64> = (0..sc.carriers).map(|k| 1.0 / sc.noise_hat(q, k)).collect();
        let s: f64 = inv.iter().sum();
        max_of(inv.iter().copied()) * (1.0 / rl + s / (rl * rm))
    }))
}

/// `γ_q^(2) = ζ_q^max(t)·γ_q^(1)` with `ζ_q^max = ζ/(2t) / min row-sum of up_off`.
pub fn gamma2(q: usize, t: f64, sc: &Scenario, model: &SensingModel) -> f64 {
    let bounds = derivative_bounds(sc, model);
    let (_, min_row) = row_ratio_min(q, sc, model, &bounds);
    let zq = zeta(t, sc, model) / (2.0 * t) / min_row;
    zq * gamma1_with(q, t, lambda_max(sc), sc, model, &bounds)
}

/// Left-hand sides of the uniqueness condition
/// `γ^(1) max_k w/I^tot + γ^(2) Σ_{r≠q}(max_k H_qr/σ²_q + max_k H_rq/σ²_r)`.
pub fn corollary2_lhs(sc: &Scenario, model: &SensingModel, t: f64, itot_override: Option<f64>) -> Vec<f64> {
    let first = corollary1_lhs(sc, model, t, itot_override);
    (0..sc.players)
        .map(|q| {
            let cross: f64 = (0..sc.players)
                .filter(|&r| r != q)
                .map(|r| {
                    max_of((0..sc.carriers).map(|k| sc.h[q][r][k] / sc.noise[q][k]))
                        + max_of((0..sc.carriers).map(|k| sc.h[r][q][k] / sc.noise[r][k]))
                })
                .sum();
            let second = if cross > 0.0 { gamma2(q, t, sc, model) * cross } else { 0.0 };
            first[q] + second
        })
        .collect()
}

/// Verdict of the uniqueness condition for all players.
pub fn check_corollary2(sc: &Scenario, model: &SensingModel, t: f64) -> bool {
    corollary2_lhs(sc, model, t, None).iter().all(|&v| v < 1.0)
}

fn least_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    min_of(SymmetricEigen::new(sym).eigenvalues.iter().copied())
}

/// `ς_q^up(t)`: bound on `‖∇²_{τ̂,(p,pfa)} L_q‖`.
pub fn varsigma_up(q: usize, t: f64, lm: f64, sc: &Scenario, bounds: &DerivativeBounds, itot_override: Option<f64>) -> f64 {
    let corner: f64 = (0..sc.carriers).map(|k| bounds.mixed[q][k] * sc.pmax[q][k]).sum();
    let norm = (bounds.tau[q].iter().map(|v| v * v).sum::<f64>() + corner * corner).sqrt();
    2.0 * t.max(lm) * max_weight(sc, q) / itot(sc, q, itot_override) * norm
}

/// `ρ_q^low(t) = max(0, λ_least(B_q^low))`.
pub fn rho_low(q: usize, t: f64, sc: &Scenario, model: &SensingModel) -> f64 {
    let bounds = derivative_bounds(sc, model);
    rho_low_with(q, t, lambda_max(sc), sc, model, &bounds)
}

fn rho_low_with(q: usize, t: f64, lm: f64, sc: &Scenario, model: &SensingModel, bounds: &DerivativeBounds) -> f64 {
    let lbar = hessian_floor_with(q, t, lm, sc, model, bounds);
    let d = lbar.nrows();
    let lower = lbar.view((1, 1), (d - 1, d - 1)).into_owned();
    let s = varsigma_up(q, t, lm, sc, bounds, None);
    let b = DMatrix::from_row_slice(2, 2, &[lbar[(0, 0)], -s, -s, least_eigenvalue(&lower)]);
    least_eigenvalue(&b).max(0.0)
}

/// How the off-diagonal entries of the contraction matrix are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractionMode {
    /// Certified analytic upper bounds `β^up`.
    AnalyticLow,
    /// Sampled estimates (diagnostic only).
    Sampled { samples: usize, seed: u64 },
}

/// Contraction matrix together with the quantities it was built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionMatrix {
    /// Unit diagonal, `−β_qr` off the diagonal.
    pub gamma: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub rho_low: Vec<f64>,
    /// Set when the analytic construction does not apply.
    pub not_applicable: Option<String>,
}

/// `D_q^low` diagonal entries `(√(ρ + c(1−1/Q)²/f), √ρ)`.
pub fn d_low(q: usize, rho: f64, c: f64, sc: &Scenario, model: &SensingModel) -> (f64, f64) {
    let shrink = 1.0 - 1.0 / sc.players as f64;
    ((rho + c * shrink * shrink / model.f[q]).sqrt(), rho.sqrt())
}

fn c_term(q: usize, r: usize, c: f64, rho: &[f64], sc: &Scenario, model: &SensingModel) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let qn = sc.players as f64;
    let shrink = 1.0 - 1.0 / qn;
    let a = (rho[q] * model.f[q] / (shrink * shrink) + c).sqrt();
    let b = (rho[r] * model.f[r] / (shrink * shrink) + c).sqrt();
    c / (qn - 1.0) / (a * b)
}

/// Contraction matrix `Γ^low(t)` (analytic) or a sampled estimate of `Γ(t)`.
pub fn contraction_matrix(sc: &Scenario, model: &SensingModel, t: f64, c: f64, mode: ContractionMode) -> ContractionMatrix {
    let qn = sc.players;
    let lm = lambda_max(sc);
    let bounds = derivative_bounds(sc, model);
    let rho: Vec<f64> = (0..qn).map(|q| rho_low_with(q, t, lm, sc, model, &bounds)).collect();
    let mut beta = vec![vec![0.0; qn]; qn];
    let mut not_applicable = None;
    if qn > 1 && rho.iter().any(|&r| r <= 0.0) {
        not_applicable = Some(format!(
            "ρ^low not positive for players {:?}",
            (0..qn).filter(|&q| rho[q] <= 0.0).collect::<Vec<_>>()
        ));
    } else if qn > 1 {
        match mode {
            ContractionMode::AnalyticLow => {
                let xi: Vec<f64> = (0..qn).map(|q| xi_sup(q, t, sc, model)).collect();
                for q in 0..qn {
                    for r in 0..qn {
                        if q == r {
                            continue;
                        }
                        let h = max_of((0..sc.carriers).map(|k| sc.h_hat(q, r, k) / sc.noise_hat(q, k).powi(2)));
                        let cross = if h > 0.0 { h * xi[q] / (rho[q] * rho[r]).sqrt() } else { 0.0 };
                        beta[q][r] = c_term(q, r, c, &rho, sc, model).max(cross);
                    }
                }
            }
            ContractionMode::Sampled { samples, seed } => {
                beta = sampled_beta(sc, model, c, &rho, samples, seed);
            }
        }
    }
    let gamma = (0..qn)
        .map(|q| (0..qn).map(|r| if q == r { 1.0 } else { -beta[q][r] }).collect())
        .collect();
    ContractionMatrix { gamma, beta, rho_low: rho, not_applicable }
}

/// Spectral norm of the exact cross block `∇²_{p_q p_r}(−log r_q)` at a profile.
pub fn cross_rate_hessian_norm(q: usize, r: usize, profile: &Profile, sc: &Scenario) -> f64 {
    let n = sc.carriers;
    let pq = &profile.x[q].p;
    let den: Vec<f64> = (0..n).map(|k| crate::network::noise_plus_mui(q, k, profile, sc) + pq[k]).collect();
    let inner: Vec<f64> = (0..n).map(|k| crate::network::noise_plus_mui(q, k, profile, sc)).collect();
    let rsum: f64 = (0..n).map(|k| (pq[k] / inner[k]).ln_1p()).sum();
    // ∂r/∂p_qk = 1/den_k ; ∂r/∂p_rj = δ_kj·(−Ĥ p_qk/(den_k inner_k))
    // ∂²r/∂p_qk∂p_rj = δ_kj·(−Ĥ/den_k²)
    let mut m = DMatrix::zeros(n, n);
    for k in 0..n {
        let hh = sc.h_hat(q, r, k);
        for j in 0..n {
            let grad_r_j = -sc.h_hat(q, r, j) * pq[j] / (den[j] * inner[j]);
            let mut v = -(1.0 / den[k]) * grad_r_j / (rsum * rsum);
            if k == j {
                v += hh / (den[k] * den[k]) / rsum;
            }
            m[(k, j)] = v;
        }
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

fn sampled_beta(sc: &Scenario, model: &SensingModel, c: f64, rho: &[f64], samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let qn = sc.players;
    let shrink = 1.0 - 1.0 / qn as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta = vec![vec![0.0f64; qn]; qn];
    let floors: Vec<f64> = (0..qn).map(|q| power_floor(q, 0.0, sc, model).floor.min(sc.power_budget[q])).collect();
    for _ in 0..samples {
        let x: Vec<Strategy> = (0..qn)
            .map(|q| {
                let mut v = random_feasible(q, sc, model, &mut rng).expect("feasible set checked");
                let total: f64 = v[1..=sc.carriers].iter().sum();
                if total < floors[q] && total > 0.0 {
                    let s = (floors[q] / total).min(1.0 / total * sc.power_budget[q]);
                    v[1..=sc.carriers].iter_mut().for_each(|p| *p *= s);
                }
                Strategy::from_slice(&v)
            })
            .collect();
        let prof = Profile::new(x);
        for q in 0..qn {
            for r in 0..qn {
                if q == r {
                    continue;
                }
                let (dq_t, dq_p) = d_low(q, rho[q], c, sc, model);
                let (dr_t, dr_p) = d_low(r, rho[r], c, sc, model);
                let e_tau = c * shrink / model.f[q].sqrt() * (1.0 / qn as f64) / model.f[r].sqrt();
                let e_p = cross_rate_hessian_norm(q, r, &prof, sc);
                let v = (e_tau / (dq_t * dr_t)).max(e_p / (dq_p * dr_p));
                beta[q][r] = beta[q][r].max(v);
            }
        }
    }
    beta
}

/// Outcome of the P-matrix test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PMatrixVerdict {
    pub is_p: bool,
    pub spectral_radius: Option<f64>,
    pub perron_weights: Option<Vec<f64>>,
    /// `‖I − Γ‖^w̄_∞` at the Perron weights.
    pub contraction: Option<f64>,
}

/// P-matrix test for a unit-diagonal Z-matrix via the spectral radius of
/// `E = I − Γ`; non-Z inputs fall back to principal minors when `Q ≤ 8`.
pub fn p_matrix_test(gamma: &[Vec<f64>]) -> Result<PMatrixVerdict> {
    let n = gamma.len();
    let is_z = (0..n).all(|i| (gamma[i][i] - 1.0).abs() <= 1e-12 && (0..n).all(|j| i == j || gamma[i][j] <= 0.0));
    if !is_z {
        if n > 8 {
            return Err(Error::Invalid {
                field: "gamma".into(),
                reason: "not a unit-diagonal Z-matrix and too large for the minor test".into(),
            });
        }
        let m = DMatrix::from_fn(n, n, |i, j| gamma[i][j]);
        let all_pos = (1u32..(1 << n)).all(|mask| {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let sub = DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])]);
            sub.determinant() > 0.0
        });
        return Ok(PMatrixVerdict { is_p: all_pos, spectral_radius: None, perron_weights: None, contraction: None });
    }
    if n == 0 {
        return Ok(PMatrixVerdict { is_p: true, spectral_radius: Some(0.0), perron_weights: Some(vec![]), contraction: Some(0.0) });
    }
    let e = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { -gamma[i][j] });
    // power iteration on I + E + εJ (primitive, same Perron vector as E up to ε)
    let eps = 1e-12;
    let m = DMatrix::from_fn(n, n, |i, j| e[(i, j)] + eps + if i == j { 1.0 } else { 0.0 });
    let mut v = nalgebra::DVector::from_element(n, 1.0 / n as f64);
    let mut radius = 0.0;
    for _ in 0..1_000_000 {
        let mv = &m * &v;
        let ratios: Vec<f64> = (0..n).map(|i| mv[i] / v[i]).collect();
        let hi = max_of(ratios.iter().copied());
        let lo = min_of(ratios.iter().copied());
        let s = mv.sum();
        v = mv / s;
        radius = 0.5 * (hi + lo) - 1.0;
        if hi - lo <= 1e-10 * hi.max(1.0) {
            radius = hi - 1.0;
            break;
        }
    }
    let w: Vec<f64> = v.iter().copied().collect();
    let contraction = max_of((0..n).map(|i| (0..n).map(|j| e[(i, j)] * w[j]).sum::<f64>() / w[i]));
    let radius = radius.max(0.0) - if radius > n as f64 * eps { n as f64 * eps } else { 0.0 };
    Ok(PMatrixVerdict {
        is_p: radius < 1.0,
        spectral_radius: Some(radius.max(0.0)),
        perron_weights: Some(w),
        contraction: Some(contraction),
    })
}

/// Row- and column-sum tests on `β^up`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corollary3 {
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    pub rows_pass: bool,
    pub cols_pass: bool,
    pub pass: bool,
}

/// Low received / transmitted interference test on an off-diagonal matrix.
pub fn corollary3_from_beta(beta: &[Vec<f64>]) -> Corollary3 {
    let n = beta.len();
    let row_sums: Vec<f64> = (0..n).map(|q| (0..n).filter(|&r| r != q).map(|r| beta[q][r]).sum()).collect();
    let col_sums: Vec<f64> = (0..n).map(|r| (0..n).filter(|&q| q != r).map(|q| beta[q][r]).sum()).collect();
    let rows_pass = row_sums.iter().all(|&s| s < 1.0);
    let cols_pass = col_sums.iter().all(|&s| s < 1.0);
    Corollary3 { row_sums, col_sums, rows_pass, cols_pass, pass: rows_pass || cols_pass }
}

/// Low-interference verdict for a scenario (analytic bounds only).
pub fn check_corollary3(sc: &Scenario, model: &SensingModel, t: f64, c: f64) -> Corollary3 {
    let cm = contraction_matrix(sc, model, t, c, ContractionMode::AnalyticLow);
    let mut v = corollary3_from_beta(&cm.beta);
    if cm.not_applicable.is_some() {
        v.rows_pass = false;
        v.cols_pass = false;
        v.pass = false;
    }
    v
}

/// Block norm `max_q ‖D_q e_q‖₂/w_q` of a profile difference.
pub fn block_norm(a: &Profile, b: &Profile, rho: &[f64], weights: &[f64], c: f64, sc: &Scenario, model: &SensingModel) -> f64 {
    max_of((0..sc.players).map(|q| {
        let (dt, dp) = d_low(q, rho[q], c, sc, model);
        let et = (a.x[q].tau_hat - b.x[q].tau_hat).abs();
        let ep = (a.x[q].p.iter().zip(&b.x[q].p).map(|(u, v)| (u - v).powi(2)).sum::<f64>()
            + (a.x[q].pfa - b.x[q].pfa).powi(2))
        .sqrt();
        ((dt * et).powi(2) + (dp * ep).powi(2)).sqrt() / weights[q]
    }))
}

/// Observed contraction of the best-response map on random profile pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalContraction {
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
    pub contraction_bound: Option<f64>,
}

/// Best-response map `x ↦ (B_q(x_{−q}))_q` at fixed price.
pub fn best_response_map(profile: &Profile, price: f64, lambda_cap: f64, sc: &Scenario, model: &SensingModel, cfg: &BrConfig) -> Result<Profile> {
    let xs: Result<Vec<Strategy>> = (0..sc.players)
        .into_par_iter()
        .map(|q| {
            let ctx = PlayerContext::new(q, profile, sc, model);
            Ok(best_response(&ctx, price, lambda_cap, None, cfg)?.x)
        })
        .collect();
    Ok(Profile { x: xs?, lambda: profile.lambda.clone(), price })
}

/// Samples `pairs` random feasible profile pairs and reports the largest
/// ratio `‖B(x) − B(y)‖_block/‖x − y‖_block` in the weighted block norm
/// built from `D^low` and the Perron weights of `Γ^low`.
pub fn empirical_contraction(
    sc: &Scenario,
    model: &SensingModel,
    price: f64,
    t: f64,
    pairs: usize,
    seed: u64,
    cfg: &BrConfig,
) -> Result<EmpiricalContraction> {
    let cm = contraction_matrix(sc, model, t, sc.c, ContractionMode::AnalyticLow);
    let verdict = p_matrix_test(&cm.gamma)?;
    let weights = verdict.perron_weights.clone().unwrap_or_else(|| vec![1.0; sc.players]);
    let rho: Vec<f64> = cm.rho_low.iter().map(|r| r.max(1e-12)).collect();
    let lm = lambda_max(sc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let draw = |rng: &mut ChaCha8Rng| -> Result<Profile> {
            let x: Result<Vec<Strategy>> = (0..sc.players)
                .map(|q| Ok(Strategy::from_slice(&random_feasible(q, sc, model, rng)?)))
                .collect();
            Ok(Profile::new(x?))
        };
        let a = draw(&mut rng)?;
        let b = draw(&mut rng)?;
        let den = block_norm(&a, &b, &rho, &weights, sc.c, sc, model);
        if den == 0.0 {
            continue;
        }
        let ba = best_response_map(&a, price, lm, sc, model, cfg)?;
        let bb = best_response_map(&b, price, lm, sc, model, cfg)?;
        ratios.push(block_norm(&ba, &bb, &rho, &weights, sc.c, sc, model) / den);
    }
    Ok(EmpiricalContraction {
        max_ratio: max_of(ratios.iter().copied()).max(0.0),
        ratios,
        contraction_bound: verdict.contraction.filter(|_| verdict.is_p),
    })
}

/// Every condition check for a scenario, as reported before a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub lambda_max: f64,
    pub lambda_max_per_player: Vec<f64>,
    pub t: f64,
    pub c: f64,
    pub feasibility_common: FeasibilityReport,
    pub feasibility_individual: FeasibilityReport,
    pub gamma1: Vec<f64>,
    pub corollary1_lhs: Vec<f64>,
    pub corollary1_pass: Vec<bool>,
    pub gamma2: Vec<f64>,
    pub corollary2_lhs: Vec<f64>,
    pub corollary2_pass: bool,
    pub power_floor: Vec<f64>,
    pub rho_low: Vec<f64>,
    pub gamma_low: Vec<Vec<f64>>,
    pub p_matrix: bool,
    pub contraction_c: Option<f64>,
    pub perron_weights: Option<Vec<f64>>,
    pub corollary3: Corollary3,
    /// Iterations guaranteeing an error below `tol` (when contracting).
    pub iteration_budget: Option<u64>,
    pub tol: f64,
    /// Human-readable reasons for failed or inapplicable checks.
    pub binding: Vec<String>,
}

impl ConditionReport {
    /// Contraction of the best-response map is certified.
    pub fn contraction_certified(&self) -> bool {
        self.p_matrix && self.contraction_c.is_some_and(|c| c < 1.0)
    }

    /// Existence and uniqueness of the equilibrium are certified.
    pub fn uniqueness_certified(&self) -> bool {
        self.corollary2_pass && self.corollary1_pass.iter().all(|&b| b)
    }
}

/// Default truncation level `t = factor·λ^max` (must exceed `λ^max`).
pub fn default_t(sc: &Scenario) -> f64 {
    1.01 * lambda_max(sc)
}

/// Evaluates every condition for `(sc, model)` at truncation level `t`.
pub fn condition_report(sc: &Scenario, model: &SensingModel, t: f64, tol: f64) -> ConditionReport {
    let lm = lambda_max(sc);
    let bounds = derivative_bounds(sc, model);
    let qn = sc.players;
    let g1: Vec<f64> = (0..qn).map(|q| gamma1_with(q, t, lm, sc, model, &bounds)).collect();
    let c1 = corollary1_lhs(sc, model, t, None);
    let g2: Vec<f64> = (0..qn).map(|q| gamma2(q, t, sc, model)).collect();
    let c2 = corollary2_lhs(sc, model, t, None);
    let cm = contraction_matrix(sc, model, t, sc.c, ContractionMode::AnalyticLow);
    let verdict = p_matrix_test(&cm.gamma).expect("analytic Γ^low is a Z-matrix");
    let mut binding = Vec::new();
    let fc = feasibility_common(sc, model);
    let fi = feasibility_individual(sc, model);
    binding.extend(fi.messages.iter().cloned());
    for q in 0..qn {
        if c1[q] >= 1.0 {
            binding.push(format!("existence condition fails for player {q}: γ1·max w/I = {:.4e}", c1[q]));
        }
        if c2[q] >= 1.0 {
            binding.push(format!("uniqueness condition fails for player {q}: lhs = {:.4e}", c2[q]));
        }
    }
    if let Some(na) = &cm.not_applicable {
        binding.push(format!("contraction bound not applicable: {na}"));
    }
    let c3 = if cm.not_applicable.is_some() {
        Corollary3 { pass: false, rows_pass: false, cols_pass: false, ..corollary3_from_beta(&cm.beta) }
    } else {
        corollary3_from_beta(&cm.beta)
    };
    if !c3.pass && cm.not_applicable.is_none() {
        binding.push(format!("low-interference condition fails: row sums {:?}", c3.row_sums));
    }
    let p_matrix = verdict.is_p && cm.not_applicable.is_none();
    let contraction_c = verdict.contraction.filter(|_| p_matrix);
    let iteration_budget = contraction_c.and_then(|c| crate::equilibrium::iteration_budget(c, tol).ok());
    ConditionReport {
        lambda_max: lm,
        lambda_max_per_player: lambda_max_per_player(sc),
        t,
        c: sc.c,
        feasibility_common: fc,
        feasibility_individual: fi,
        gamma1: g1,
        corollary1_pass: c1.iter().map(|&v| v < 1.0).collect(),
        corollary1_lhs: c1,
        gamma2: g2,
        corollary2_pass: c2.iter().all(|&v| v < 1.0),
        corollary2_lhs: c2,
        power_floor: (0..qn).map(|q| power_floor(q, t, sc, model).floor).collect(),
        rho_low: cm.rho_low.clone(),
        gamma_low: cm.gamma.clone(),
        p_matrix,
        contraction_c,
        perron_weights: verdict.perron_weights,
        corollary3: c3,
        iteration_budget,
        tol,
        binding,
    }
}
