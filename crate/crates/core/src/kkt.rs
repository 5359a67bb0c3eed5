//! Lagrangian calculus for one player.
//!
//! Strategies are packed as `x = [τ̂, p₁, …, p_N, pfa]`. Rivals enter only
//! through the interference floor `s_k = σ̂² + Σ_{r≠q}|Ĥ_qr(k)|² p_rk`, the
//! sum of their scaled sensing times and the interference they generate.

use nalgebra::DMatrix;

use crate::network::{Profile, Scenario};
use crate::sensing::{miss_derivatives_at_quantile, q_inverse_guarded, SensingModel, PROB_GUARD};
use crate::solver::project_y;

/// Everything player `q` needs to know about its rivals.
#[derive(Debug, Clone)]
pub struct PlayerContext<'a> {
    pub q: usize,
    pub sc: &'a Scenario,
    pub model: &'a SensingModel,
    /// `s_k = σ̂² + Σ_{r≠q}|Ĥ_qr(k)|² p_rk`.
    pub mui: Vec<f64>,
    /// `Σ_{r≠q} τ̂_r/√f_r`.
    pub others_y: f64,
    /// `Σ_{r≠q} Σ_k Pmiss·w·p` (interference generated by the rivals).
    pub others_interference: f64,
}

/// Value, gradient and Hessian of a scalar function of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianEval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
}

impl<'a> PlayerContext<'a> {
    /// Context built from the rivals' strategies in `profile` (entry `q` is ignored).
    pub fn new(q: usize, profile: &Profile, sc: &'a Scenario, model: &'a SensingModel) -> Self {
        let mui = (0..sc.carriers)
            .map(|k| crate::network::noise_plus_mui(q, k, profile, sc))
            .collect();
        let others_y = (0..sc.players)
            .filter(|&r| r != q)
            .map(|r| profile.x[r].tau_hat / model.f[r].sqrt())
            .sum();
        let others_interference = (0..sc.players)
            .filter(|&r| r != q)
            .map(|r| crate::constraints::interference_sum(r, &profile.x[r], sc, model))
            .sum();
        Self { q, sc, model, mui, others_y, others_interference }
    }

    pub fn dim(&self) -> usize {
        self.sc.carriers + 2
    }

    fn pfa_of(x: &[f64]) -> f64 {
        x[x.len() - 1]
    }

    /// `−θ_q(x)`, `+∞` outside the domain of the logarithms.
    pub fn neg_theta(&self, x: &[f64]) -> f64 {
        self.neg_theta_eval(x, false).value
    }

    /// `−θ_q` with gradient and (optionally) Hessian.
    pub fn neg_theta_eval(&self, x: &[f64], hessian: bool) -> LagrangianEval {
        let n = self.sc.carriers;
        let d = n + 2;
        let q = self.q;
        let (f, frame) = (self.model.f[q], self.model.frame[q]);
        let qn = self.sc.players as f64;
        let th = x[0];
        let pfa = Self::pfa_of(x);
        let u = th * th / (f * frame);
        let mut r = 0.0;
        let mut inv = vec![0.0; n];
        for k in 0..n {
            let den = self.mui[k] + x[1 + k];
            inv[k] = 1.0 / den;
            r += (x[1 + k] / self.mui[k]).ln_1p();
        }
        let mut grad = vec![0.0; d];
        let mut hess = if hessian { DMatrix::zeros(d, d) } else { DMatrix::zeros(0, 0) };
        if !(u < 1.0 && pfa < 1.0 && r > 0.0) || x[1..=n].iter().any(|&p| p < 0.0) {
            return LagrangianEval { value: f64::INFINITY, grad, hess };
        }
        let shrink = 1.0 - 1.0 / qn;
        let dev = shrink * th / f.sqrt() - self.others_y / qn;
        let value = -(1.0 - u).ln() - (1.0 - pfa).ln() - r.ln() + 0.5 * self.sc.c * dev * dev;
        grad[0] = (2.0 * th / (f * frame)) / (1.0 - u) + self.sc.c * dev * shrink / f.sqrt();
        for k in 0..n {
            grad[1 + k] = -inv[k] / r;
        }
        grad[d - 1] = 1.0 / (1.0 - pfa);
        if hessian {
            hess[(0, 0)] = (2.0 / (f * frame)) * (1.0 + u) / ((1.0 - u) * (1.0 - u))
                + self.sc.c * shrink * shrink / f;
            for k in 0..n {
                for j in 0..n {
                    let mut v = inv[k] * inv[j] / (r * r);
                    if k == j {
                        v += inv[k] * inv[k] / r;
                    }
                    hess[(1 + k, 1 + j)] = v;
                }
            }
            hess[(d - 1, d - 1)] = 1.0 / ((1.0 - pfa) * (1.0 - pfa));
        }
        LagrangianEval { value, grad, hess }
    }

    /// Interference `J(x) = Σ_k Pmiss_k(τ̂, pfa)·w_k·p_k` with derivatives.
    pub fn interference_eval(&self, x: &[f64], hessian: bool) -> LagrangianEval {
        let n = self.sc.carriers;
        let d = n + 2;
        let th = x[0];
        let pfa = Self::pfa_of(x).clamp(PROB_GUARD, 1.0 - PROB_GUARD);
        let mut grad = vec![0.0; d];
        let mut hess = if hessian { DMatrix::zeros(d, d) } else { DMatrix::zeros(0, 0) };
        let mut value = 0.0;
        let u = q_inverse_guarded(pfa);
        for k in 0..n {
            let w = self.sc.w[self.q][k];
            if w == 0.0 {
                continue;
            }
            let m = miss_derivatives_at_quantile(u, th, self.model.stat(self.q, k));
            let p = x[1 + k];
            value += m.value * w * p;
            grad[0] += m.d_tau * w * p;
            grad[1 + k] = m.value * w;
            grad[d - 1] += m.d_pfa * w * p;
            if hessian {
                hess[(0, 0)] += m.d_tau_tau * w * p;
                hess[(0, d - 1)] += m.d_tau_pfa * w * p;
                hess[(d - 1, d - 1)] += m.d_pfa_pfa * w * p;
                hess[(0, 1 + k)] = m.d_tau * w;
                hess[(1 + k, d - 1)] = m.d_pfa * w;
            }
        }
        if hessian {
            for i in 0..d {
                for j in 0..i {
                    hess[(i, j)] = hess[(j, i)];
                }
            }
        }
        LagrangianEval { value, grad, hess }
    }

    /// Local violation `I_q(x)`.
    pub fn local_violation(&self, x: &[f64]) -> f64 {
        self.interference_eval(x, false).value - self.sc.imax_local[self.q]
    }

    /// Global violation `I(x)` with the rivals held fixed.
    pub fn global_violation(&self, x: &[f64]) -> f64 {
        self.interference_eval(x, false).value + self.others_interference - self.sc.imax_global
    }

    /// `L_q = −θ_q + λ I_q + π I` with gradient and Hessian.
    pub fn lagrangian(&self, x: &[f64], lambda: f64, price: f64) -> LagrangianEval {
        let base = self.neg_theta_eval(x, true);
        let intf = self.interference_eval(x, true);
        let mu = lambda + price;
        let value = base.value
            + lambda * (intf.value - self.sc.imax_local[self.q])
            + price * (intf.value + self.others_interference - self.sc.imax_global);
        let grad = base.grad.iter().zip(&intf.grad).map(|(a, b)| a + mu * b).collect();
        let hess = base.hess + intf.hess * mu;
        LagrangianEval { value, grad, hess }
    }

    /// Gradient of `L_q` only.
    pub fn lagrangian_grad(&self, x: &[f64], lambda: f64, price: f64) -> Vec<f64> {
        let base = self.neg_theta_eval(x, false);
        let intf = self.interference_eval(x, false);
        let mu = lambda + price;
        base.grad.iter().zip(&intf.grad).map(|(a, b)| a + mu * b).collect()
    }
}

/// Lagrangian of player `q` at `profile`.
pub fn lagrangian(
    q: usize,
    profile: &Profile,
    lambda_q: f64,
    price: f64,
    sc: &Scenario,
    model: &SensingModel,
) -> LagrangianEval {
    let ctx = PlayerContext::new(q, profile, sc, model);
    ctx.lagrangian(&profile.x[q].to_vec(), lambda_q, price)
}

/// VI map `F_q = (∇_{x_q} L_q ; −I_q)`.
pub fn vi_map(q: usize, profile: &Profile, lambda_q: f64, price: f64, sc: &Scenario, model: &SensingModel) -> Vec<f64> {
    let ctx = PlayerContext::new(q, profile, sc, model);
    let x = profile.x[q].to_vec();
    let mut out = ctx.lagrangian_grad(&x, lambda_q, price);
    out.push(-ctx.local_violation(&x));
    out
}

/// Proximal multiplier target `clamp(center + v/α, 0, cap)`.
pub fn prox_target(center: f64, violation: f64, prox_gain: f64, cap: f64) -> f64 {
    (center + violation / prox_gain).clamp(0.0, cap)
}

/// Natural-map residual split by player and price.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub per_player: Vec<f64>,
    pub price_part: f64,
    pub total: f64,
}

/// Squared natural-map residual of the proximally regularised optimality system.
///
/// Per player: `‖x_q − Π_Y(x_q − ∇L_q)‖² + (λ_q − clamp(λ⁰_q + I_q/α, 0, cap))²`;
/// price part: `(π − clamp(π⁰ + I/α, 0, cap))²`.
pub fn natural_map_residual(
    profile: &Profile,
    lambda_centers: &[f64],
    price_center: f64,
    prox_gain: f64,
    cap: f64,
    sc: &Scenario,
    model: &SensingModel,
) -> Residual {
    let mut per_player = Vec::with_capacity(sc.players);
    for q in 0..sc.players {
        let ctx = PlayerContext::new(q, profile, sc, model);
        let x = profile.x[q].to_vec();
        let g = ctx.lagrangian_grad(&x, profile.lambda[q], profile.price);
        let step: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        let proj = project_y(&step, q, sc, model).unwrap_or_else(|_| x.clone());
        let xs: f64 = x.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum();
        let target = prox_target(lambda_centers[q], ctx.local_violation(&x), prox_gain, cap);
        per_player.push(xs + (profile.lambda[q] - target).powi(2));
    }
    let ig = crate::constraints::interference_global(profile, sc, model);
    let price_part = (profile.price - prox_target(price_center, ig, prox_gain, cap)).powi(2);
    let total = per_player.iter().sum::<f64>() + price_part;
    Residual { per_player, price_part, total }
}
