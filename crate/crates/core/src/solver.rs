//! Projection onto a player's convex set and best-response computation.
//!
//! The best response minimises `L_q(·, λ) = −θ_q + λ I_q + π I` over `Y_q`
//! with a spectral (Barzilai–Borwein) projected gradient method and monotone
//! Armijo backtracking; the multiplier `λ` of the nonconvex constraint
//! `I_q ≤ 0` is found by a safeguarded regula-falsi search driven by the sign
//! of `I_q` at the inner solution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::{pfa_floor, tau_hat_interval, FloorCurve};
use crate::kkt::PlayerContext;
use crate::network::{Scenario, Strategy};
use crate::sensing::SensingModel;
use crate::Result;

/// Best-response tuning knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BrConfig {
    /// Multiplier search steps.
    pub max_outer: usize,
    /// Projected-gradient steps per inner solve.
    pub max_inner: usize,
    /// Target for `‖x − Π(x − ∇L)‖`.
    pub grad_tol: f64,
    /// Target for `I_q` and `|λ I_q|`.
    pub comp_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_sigma: f64,
    /// Backtracking factor.
    pub backtrack: f64,
    /// Number of starting points (1 = warm/cold start only).
    pub multistart: usize,
}

impl Default for BrConfig {
    fn default() -> Self {
        Self {
            max_outer: 100,
            max_inner: 20_000,
            grad_tol: 1e-7,
            comp_tol: 1e-7,
            armijo_sigma: 1e-4,
            backtrack: 0.5,
            multistart: 1,
        }
    }
}

/// Euclidean projection onto `{Σ p ≤ budget, 0 ≤ p ≤ pmax}`.
pub fn project_power(v: &[f64], budget: f64, pmax: &[f64]) -> Vec<f64> {
    let clip = |nu: f64| -> Vec<f64> { v.iter().zip(pmax).map(|(&x, &m)| (x - nu).clamp(0.0, m)).collect() };
    let base = clip(0.0);
    if base.iter().sum::<f64>() <= budget {
        return base;
    }
    let mut lo = 0.0;
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if clip(mid).iter().sum::<f64>() > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clip(hi)
}

/// Projection of `(a, b)` onto `{τ̂ ∈ [lo, hi], h(τ̂) ≤ pfa ≤ β}`.
///
/// The set is convex but not polyhedral (its lower boundary `h` is a maximum
/// of Gaussian tails); the projection minimises the convex one-dimensional
/// function `(τ̂ − a)² + dist(b, [h(τ̂), β])²` by bisection on its derivative.
fn project_sensing(a: f64, b: f64, q: usize, sc: &Scenario, model: &SensingModel) -> Result<(f64, f64)> {
    let (lo, hi) = tau_hat_interval(sc, model, q)?;
    let beta = sc.beta[q];
    let curve = FloorCurve::new(sc, model, q);
    if a >= lo && a <= hi && b <= beta && b >= curve.eval(a).0 {
        return Ok((a, b));
    }
    let deriv = |t: f64| {
        let (h, dh) = curve.eval(t);
        (t - a) + (h - b).max(0.0) * dh
    };
    let t = if deriv(lo) >= 0.0 {
        lo
    } else if deriv(hi) <= 0.0 {
        hi
    } else {
        let (mut l, mut r) = (lo, hi);
        for _ in 0..200 {
            let m = 0.5 * (l + r);
            if m <= l || m >= r {
                break;
            }
            if deriv(m) < 0.0 {
                l = m;
            } else {
                r = m;
            }
        }
        0.5 * (l + r)
    };
    let floor = curve.eval(t).0;
    Ok((t, b.clamp(floor.min(beta), beta)))
}

/// Euclidean projection onto `Y_q` of a packed point `[τ̂, p, pfa]`.
pub fn project_y(point: &[f64], q: usize, sc: &Scenario, model: &SensingModel) -> Result<Vec<f64>> {
    let n = sc.carriers;
    let (t, b) = project_sensing(point[0], point[n + 1], q, sc, model)?;
    let p = project_power(&point[1..=n], sc.power_budget[q], &sc.pmax[q]);
    let mut out = Vec::with_capacity(n + 2);
    out.push(t);
    out.extend(p);
    out.push(b);
    Ok(out)
}

/// Cold start: lowest feasible `τ̂`, uniform power `min(P/N, pmax)`, `pfa = β`.
pub fn cold_start(q: usize, sc: &Scenario, model: &SensingModel) -> Result<Vec<f64>> {
    let (lo, _) = tau_hat_interval(sc, model, q)?;
    let n = sc.carriers;
    let mut x = vec![lo];
    x.extend((0..n).map(|k| (sc.power_budget[q] / n as f64).min(sc.pmax[q][k])));
    x.push(sc.beta[q]);
    project_y(&x, q, sc, model)
}

/// Random point of `Y_q`.
pub fn random_feasible<R: Rng + ?Sized>(q: usize, sc: &Scenario, model: &SensingModel, rng: &mut R) -> Result<Vec<f64>> {
    let (lo, hi) = tau_hat_interval(sc, model, q)?;
    let t = rng.random_range(lo..=hi);
    let floor = pfa_floor(sc, model, q, t).min(sc.beta[q]);
    let b = rng.random_range(floor..=sc.beta[q]);
    let n = sc.carriers;
    let raw: Vec<f64> = (0..n).map(|k| rng.random_range(0.0..=sc.pmax[q][k])).collect();
    let total: f64 = raw.iter().sum();
    let scale = if total > sc.power_budget[q] { sc.power_budget[q] / total * rng.random_range(0.2..=1.0) } else { 1.0 };
    let mut x = vec![t];
    x.extend(raw.iter().map(|p| p * scale));
    x.push(b);
    Ok(x)
}

/// How the interference `J(x) = Σ Pmiss·w·p` enters the inner objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterferenceTerm {
    /// `(λ + π)·J` — the Lagrangian with fixed multipliers.
    Linear { lambda: f64, price: f64 },
    /// Proximal dual terms `φ(I_q; λ̄) + φ(I; π̄)` with
    /// `φ(v; c) = max_{μ∈[0,cap]} μ v − (α/2)(μ − c)²`.
    Proximal {
        lambda_center: f64,
        price_center: f64,
        prox_gain: f64,
        cap: f64,
    },
}

fn prox_dual(v: f64, center: f64, gain: f64, cap: f64) -> (f64, f64) {
    let mu = crate::kkt::prox_target(center, v, gain, cap);
    (mu * v - 0.5 * gain * (mu - center).powi(2), mu)
}

impl InterferenceTerm {
    /// Value and slope with respect to `J` for a context.
    fn eval(&self, ctx: &PlayerContext<'_>, j: f64) -> (f64, f64) {
        let q = ctx.q;
        let local = j - ctx.sc.imax_local[q];
        let global = j + ctx.others_interference - ctx.sc.imax_global;
        match *self {
            Self::Linear { lambda, price } => (lambda * local + price * global, lambda + price),
            Self::Proximal { lambda_center, price_center, prox_gain, cap } => {
                let (a, ma) = prox_dual(local, lambda_center, prox_gain, cap);
                let (b, mb) = prox_dual(global, price_center, prox_gain, cap);
                (a + b, ma + mb)
            }
        }
    }
}

/// Result of an inner projected-gradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub residual: f64,
    pub iters: usize,
    pub converged: bool,
    /// Objective values at accepted iterates.
    pub history: Vec<f64>,
}

fn objective(ctx: &PlayerContext<'_>, term: &InterferenceTerm, x: &[f64]) -> (f64, Vec<f64>) {
    let base = ctx.neg_theta_eval(x, false);
    if !base.value.is_finite() {
        return (f64::INFINITY, base.grad);
    }
    let intf = ctx.interference_eval(x, false);
    let (v, slope) = term.eval(ctx, intf.value);
    let g = base.grad.iter().zip(&intf.grad).map(|(a, b)| a + slope * b).collect();
    (base.value + v, g)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Minimises `−θ_q + term(J)` over `Y_q` starting from `x0`.
pub fn minimize_inner(
    ctx: &PlayerContext<'_>,
    term: &InterferenceTerm,
    x0: &[f64],
    tol: f64,
    cfg: &BrConfig,
) -> Result<InnerOutcome> {
    let (q, sc, model) = (ctx.q, ctx.sc, ctx.model);
    let proj = |v: &[f64]| project_y(v, q, sc, model);
    let mut x = proj(x0)?;
    let (mut f, mut g) = objective(ctx, term, &x);
    if !f.is_finite() {
        x = cold_start(q, sc, model)?;
        (f, g) = objective(ctx, term, &x);
    }
    let mut history = vec![f];
    let ginf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut step = 1.0 / ginf.max(1e-8);
    let mut residual = f64::INFINITY;
    for it in 0..cfg.max_inner {
        let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
        residual = dist(&x, &proj(&trial)?);
        if residual <= tol {
            return Ok(InnerOutcome { x, value: f, residual, iters: it, converged: true, history });
        }
        let mut s = step;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - s * b).collect();
            let y = proj(&trial)?;
            let decrease: f64 = g.iter().zip(y.iter().zip(&x)).map(|(gi, (yi, xi))| gi * (yi - xi)).sum();
            let (fy, gy) = objective(ctx, term, &y);
            if fy.is_finite() && fy <= f + cfg.armijo_sigma * decrease {
                break Some((y, fy, gy, s));
            }
            s *= cfg.backtrack;
            if s < 1e-20 {
                break None;
            }
        };
        let Some((y, fy, gy, s_used)) = accepted else {
            // no representable decrease left: report where we are
            return Ok(InnerOutcome { x, value: f, residual, iters: it, converged: residual <= tol, history });
        };
        let sk: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yk: Vec<f64> = gy.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = sk.iter().zip(&yk).map(|(a, b)| a * b).sum();
        let ss: f64 = sk.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { ss / sy } else { s_used * 4.0 };
        step = step.clamp(1e-12, 1e12);
        if ss == 0.0 {
            return Ok(InnerOutcome { x, value: f, residual, iters: it, converged: residual <= tol, history });
        }
        x = y;
        f = fy;
        g = gy;
        history.push(f);
    }
    Ok(InnerOutcome { x, value: f, residual, iters: cfg.max_inner, converged: residual <= tol, history })
}

/// Diagnostics of a best-response computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BrDiagnostics {
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// `‖x − Π(x − ∇L_q)‖` at the returned point.
    pub residual: f64,
    /// `I_q` at the returned point.
    pub violation: f64,
    pub converged: bool,
}

/// Best response of a player together with its local multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct BrOutcome {
    pub x: Strategy,
    pub lambda: f64,
    /// Value of `−θ_q + π I` at the returned point (the player's cost).
    pub cost: f64,
    pub diagnostics: BrDiagnostics,
}

fn cost(ctx: &PlayerContext<'_>, x: &[f64], price: f64) -> f64 {
    ctx.neg_theta(x) + price * ctx.global_violation(x)
}

fn finish(ctx: &PlayerContext<'_>, inner: InnerOutcome, lambda: f64, price: f64, outer: usize, inner_iters: usize, cfg: &BrConfig) -> BrOutcome {
    let violation = ctx.local_violation(&inner.x);
    let converged = inner.residual <= cfg.grad_tol
        && violation <= cfg.comp_tol
        && (lambda * violation).abs() <= cfg.comp_tol;
    BrOutcome {
        cost: cost(ctx, &inner.x, price),
        x: Strategy::from_slice(&inner.x),
        lambda,
        diagnostics: BrDiagnostics { outer_iters: outer, inner_iters, residual: inner.residual, violation, converged },
    }
}

/// Best response at fixed price with a multiplier search on `I_q ≤ 0`.
///
/// Never fails on non-convergence: the returned diagnostics carry the flag
/// together with the residuals of the best iterate.
pub fn best_response(
    ctx: &PlayerContext<'_>,
    price: f64,
    lambda_cap: f64,
    warm: Option<&[f64]>,
    cfg: &BrConfig,
) -> Result<BrOutcome> {
    let start = match warm {
        Some(w) => w.to_vec(),
        None => cold_start(ctx.q, ctx.sc, ctx.model)?,
    };
    let search_tol = 0.1 * cfg.grad_tol;
    let solve = |lambda: f64, from: &[f64]| minimize_inner(ctx, &InterferenceTerm::Linear { lambda, price }, from, search_tol, cfg);
    let mut inner_iters = 0;
    let x0 = solve(0.0, &start)?;
    inner_iters += x0.iters;
    let g0 = ctx.local_violation(&x0.x);
    if g0 <= cfg.comp_tol {
        return Ok(finish(ctx, x0, 0.0, price, 0, inner_iters, cfg));
    }
    let xh = solve(lambda_cap, &x0.x)?;
    inner_iters += xh.iters;
    let gh = ctx.local_violation(&xh.x);
    if gh > 0.0 {
        let mut out = finish(ctx, xh, lambda_cap, price, 1, inner_iters, cfg);
        out.diagnostics.converged = false;
        return Ok(out);
    }
    // regula falsi with the Illinois modification on g(λ) = I_q(x(λ))
    let (mut lo, mut glo, mut xlo) = (0.0, g0, x0);
    let (mut hi, mut ghi, mut xhi) = (lambda_cap, gh, xh);
    let mut side = 0i8;
    let mut best: Option<(f64, InnerOutcome)> = None;
    for outer in 1..=cfg.max_outer {
        let mut lam = (lo * ghi - hi * glo) / (ghi - glo);
        if !(lam > lo && lam < hi) {
            lam = 0.5 * (lo + hi);
        }
        let from = if lam - lo < hi - lam { xlo.x.clone() } else { xhi.x.clone() };
        let xm = solve(lam, &from)?;
        inner_iters += xm.iters;
        let gm = ctx.local_violation(&xm.x);
        if gm <= cfg.comp_tol && (lam * gm).abs() <= cfg.comp_tol {
            let polished = minimize_inner(ctx, &InterferenceTerm::Linear { lambda: lam, price }, &xm.x, search_tol, cfg)?;
            inner_iters += polished.iters;
            return Ok(finish(ctx, polished, lam, price, outer, inner_iters, cfg));
        }
        if gm <= cfg.comp_tol {
            best = Some((lam, xm.clone()));
        }
        if gm > 0.0 {
            lo = lam;
            glo = gm;
            xlo = xm;
            if side == 1 {
                ghi *= 0.5;
            }
            side = 1;
        } else {
            hi = lam;
            ghi = gm;
            xhi = xm;
            if side == -1 {
                glo *= 0.5;
            }
            side = -1;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    // Fallback: maximise the concave dual d(λ) = min_x L(x, λ) by golden section.
    let dual = |lam: f64, from: &[f64]| -> Result<(f64, InnerOutcome)> {
        let r = solve(lam, from)?;
        let v = ctx.neg_theta(&r.x) + lam * ctx.local_violation(&r.x);
        Ok((v, r))
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, lambda_cap);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut rc) = dual(c, &xhi.x)?;
    let (mut fd, mut rd) = dual(d, &xhi.x)?;
    for _ in 0..cfg.max_outer {
        if b - a <= 1e-12 * b.max(1.0) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            rd = rc.clone();
            c = b - phi * (b - a);
            (fc, rc) = dual(c, &rd.x)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            rc = rd.clone();
            d = a + phi * (b - a);
            (fd, rd) = dual(d, &rc.x)?;
        }
    }
    let (lam, r) = if fc > fd { (c, rc) } else { (d, rd) };
    let g = ctx.local_violation(&r.x);
    let (lam, r) = match best {
        Some((bl, br)) if g > cfg.comp_tol => (bl, br),
        _ => (lam, r),
    };
    Ok(finish(ctx, r, lam, price, cfg.max_outer, inner_iters, cfg))
}

/// Best response from several starting points, keeping the lowest-cost
/// converged candidate. The first start is `warm` (or the cold start).
pub fn best_response_multistart<R: Rng + ?Sized>(
    ctx: &PlayerContext<'_>,
    price: f64,
    lambda_cap: f64,
    warm: Option<&[f64]>,
    cfg: &BrConfig,
    starts: usize,
    rng: &mut R,
) -> Result<(BrOutcome, Vec<BrOutcome>)> {
    let mut all = vec![best_response(ctx, price, lambda_cap, warm, cfg)?];
    for _ in 1..starts.max(1) {
        let x0 = random_feasible(ctx.q, ctx.sc, ctx.model, rng)?;
        all.push(best_response(ctx, price, lambda_cap, Some(&x0), cfg)?);
    }
    let pick = all
        .iter()
        .filter(|o| o.diagnostics.violation <= cfg.comp_tol)
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .or_else(|| all.iter().min_by(|a, b| a.diagnostics.violation.total_cmp(&b.diagnostics.violation)))
        .cloned()
        .expect("at least one start");
    Ok((pick, all))
}

/// Proximal price update `clamp(center + I/α, 0, cap)`: the maximiser of
/// `μ I − (α/2)(μ − center)²` over `[0, cap]`.
pub fn price_update_regularized(price_center: f64, i_value: f64, prox_gain: f64, cap: f64) -> f64 {
    crate::kkt::prox_target(price_center, i_value, prox_gain, cap)
}
