//! Equilibrium algorithms: best-response iterations for the priced game
//! (Jacobi, Gauss–Seidel, asynchronous), the proximal outer loop, the
//! single-loop primal–dual scheme, and the equilibrium certificate.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::lambda_max;
use crate::consensus::{compute_finite_time_params, finite_time_average, vector_average, ConsensusParams};
use crate::constraints::{interference_global, interference_local, interference_sum};
use crate::kkt::{natural_map_residual, prox_target, PlayerContext};
use crate::network::{throughput, Profile, Scenario, Strategy};
use crate::sensing::SensingModel;
use crate::solver::{best_response, best_response_multistart, cold_start, minimize_inner, BrConfig, InterferenceTerm};
use crate::{Error, Result};

/// Order in which players update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    #[default]
    Jacobi,
    GaussSeidel,
    Asynchronous,
}

/// Update schedule. The asynchronous fields are ignored by the other modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub mode: ScheduleMode,
    /// Every window of `window` rounds contains an update of every player.
    pub window: usize,
    /// Maximal age (in rounds) of a rival's snapshot.
    pub staleness: usize,
    /// Probability that a player wakes up in a round.
    pub activation: f64,
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { mode: ScheduleMode::Jacobi, window: 4, staleness: 0, activation: 0.5, seed: 0 }
    }
}

impl Schedule {
    pub fn jacobi() -> Self {
        Self::default()
    }

    pub fn gauss_seidel() -> Self {
        Self { mode: ScheduleMode::GaussSeidel, ..Self::default() }
    }

    pub fn asynchronous(seed: u64, staleness: usize) -> Self {
        Self { mode: ScheduleMode::Asynchronous, staleness, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(crate::error::invalid("schedule.window", "must be ≥ 1"));
        }
        if !(self.activation > 0.0 && self.activation <= 1.0) {
            return Err(crate::error::invalid("schedule.activation", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Iteration controls shared by all algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Stopping tolerance (profile change, or residual norm).
    pub tol: f64,
    /// Rounds for Algorithm 1 / 4, outer iterations for Algorithm 3.
    pub max_iters: usize,
    /// Inner sweeps per outer iteration of Algorithm 3.
    pub max_inner_sweeps: usize,
    /// Exact averages instead of finite-time consensus.
    pub centralized: bool,
    /// Consensus weight offset `F` (`a_qq = F − deg_q`); defaults to the number of players.
    pub consensus_offset: Option<i64>,
    /// Proximal gain `α`.
    pub prox_gain: f64,
    /// Relaxation `ε ∈ (0, 1]` of the centre update.
    pub relaxation: f64,
    /// `ε₀` of the inexact inner criterion `ε₀/n²`.
    pub inner_tol0: f64,
    /// Upper cap for multipliers and price (defaults to `λ^max`).
    pub price_cap: Option<f64>,
    pub br: BrConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 10_000,
            max_inner_sweeps: 2_000,
            centralized: false,
            consensus_offset: None,
            prox_gain: 0.2,
            relaxation: 1.0,
            inner_tol0: 0.1,
            price_cap: None,
            br: BrConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(crate::error::invalid("algorithm.tol", "must be > 0"));
        }
        if !(self.prox_gain > 0.0) {
            return Err(crate::error::invalid("algorithm.prox_gain", "must be > 0"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(crate::error::invalid("algorithm.relaxation", "must lie in (0, 1]"));
        }
        if !(self.inner_tol0 > 0.0) {
            return Err(crate::error::invalid("algorithm.inner_tol0", "must be > 0"));
        }
        Ok(())
    }

    /// Best-response accuracy well below the outer tolerance.
    fn br_cfg(&self) -> BrConfig {
        let mut br = self.br.clone();
        br.grad_tol = br.grad_tol.min(1e-2 * self.tol);
        br
    }
}

/// One row of the trace: one player at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub player: usize,
    pub tau: f64,
    pub tau_hat: f64,
    pub pfa: f64,
    pub throughput: f64,
    pub i_local: f64,
    pub i_global: f64,
    pub price: f64,
    pub lambda: f64,
    pub residual: f64,
    pub consensus_msgs: usize,
}

/// Append-only record of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub profiles: Vec<Profile>,
    /// Set when finite-time consensus was infeasible on the graph and exact
    /// averages were used instead.
    pub consensus_fallback: Option<String>,
}

impl RunTrace {
    fn record(&mut self, iter: usize, profile: &Profile, residual: f64, msgs: usize, sc: &Scenario, model: &SensingModel) {
        let ig = interference_global(profile, sc, model);
        for q in 0..sc.players {
            let s = &profile.x[q];
            self.rows.push(TraceRow {
                iter,
                player: q,
                tau: s.tau(model.f[q]),
                tau_hat: s.tau_hat,
                pfa: s.pfa,
                throughput: throughput(q, profile, sc, model),
                i_local: interference_local(q, s, sc, model),
                i_global: ig,
                price: profile.price,
                lambda: profile.lambda[q],
                residual,
                consensus_msgs: msgs,
            });
        }
        self.profiles.push(profile.clone());
    }

    /// Number of recorded iterations.
    pub fn iterations(&self) -> usize {
        self.profiles.len()
    }

    /// Largest global violation `I` recorded at any iteration.
    pub fn max_global_violation(&self) -> f64 {
        self.rows.iter().map(|r| r.i_global).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Result of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub profile: Profile,
    pub trace: RunTrace,
    pub converged: bool,
    /// Update sweeps before the fixed point was reached (epochs for
    /// asynchronous schedules, outer iterations for Algorithm 3).
    pub iterations: usize,
    /// Raw rounds executed.
    pub rounds: usize,
    /// Final stopping quantity (profile change or residual norm).
    pub residual: f64,
    pub messages: usize,
    /// Inner sweeps (Algorithm 3) or strategy updates performed.
    pub inner_sweeps: usize,
}

/// Iterations `⌈ln(1/ε)/ln(1/c)⌉` guaranteeing an error below `eps`.
pub fn iteration_budget(c: f64, eps: f64) -> Result<u64> {
    if !(0.0..1.0).contains(&c) || !(eps > 0.0) {
        return Err(Error::Domain(format!("contraction {c} / tolerance {eps} out of range")));
    }
    if eps >= 1.0 {
        return Ok(0);
    }
    if c == 0.0 {
        return Ok(1);
    }
    Ok(((1.0 / eps).ln() / (1.0 / c).ln()).ceil().max(1.0) as u64)
}

/// Source of the averages each player needs about its rivals.
struct Averager {
    params: Option<ConsensusParams>,
    messages: usize,
}

/// Finite-time consensus parameters, or `None` for exact averages. A graph
/// on which extraction is infeasible falls back to exact averages and the
/// reason is flagged on the trace.
fn consensus_setup(sc: &Scenario, cfg: &RunConfig, trace: &mut RunTrace) -> Result<Option<ConsensusParams>> {
    if cfg.centralized || sc.players == 1 {
        return Ok(None);
    }
    match compute_finite_time_params(&sc.graph, cfg.consensus_offset.unwrap_or(sc.players as i64)) {
        Ok(p) => Ok(Some(p)),
        Err(e @ Error::Extraction { .. }) => {
            trace.consensus_fallback = Some(format!("{e}; using exact averages"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

impl Averager {
    fn new(sc: &Scenario, cfg: &RunConfig, trace: &mut RunTrace) -> Result<Self> {
        Ok(Self { params: consensus_setup(sc, cfg, trace)?, messages: 0 })
    }

    /// Per-node estimates of the mean of `values`.
    fn mean(&mut self, values: &[f64]) -> Result<Vec<f64>> {
        match &self.params {
            None => {
                let m = values.iter().sum::<f64>() / values.len() as f64;
                Ok(vec![m; values.len()])
            }
            Some(p) => {
                let out = finite_time_average(values, p)?;
                self.messages += out.messages_total;
                Ok(out.node_values)
            }
        }
    }
}

fn sensing_levels(profile: &Profile, model: &SensingModel) -> Vec<f64> {
    profile.x.iter().zip(&model.f).map(|(s, f)| s.tau_hat / f.sqrt()).collect()
}

/// Context for `q` with the rivals' sensing sum taken from a network average.
fn context_with_mean<'a>(q: usize, profile: &Profile, mean: f64, sc: &'a Scenario, model: &'a SensingModel) -> PlayerContext<'a> {
    let mut ctx = PlayerContext::new(q, profile, sc, model);
    ctx.others_y = sc.players as f64 * mean - profile.x[q].tau_hat / model.f[q].sqrt();
    ctx
}

fn cold_profile(sc: &Scenario, model: &SensingModel) -> Result<Profile> {
    let x: Result<Vec<Strategy>> = (0..sc.players)
        .map(|q| Ok(Strategy::from_slice(&cold_start(q, sc, model)?)))
        .collect();
    Ok(Profile::new(x?))
}

fn check_feasible(sc: &Scenario, model: &SensingModel) -> Result<()> {
    sc.validate(model)?;
    for q in 0..sc.players {
        crate::constraints::tau_hat_interval(sc, model, q)?;
    }
    Ok(())
}

/// Scenario with every player's sensing time frozen at `tau` (the
/// fixed equi-sensing baseline).
pub fn freeze_sensing(sc: &Scenario, tau: f64) -> Scenario {
    let mut out = sc.clone();
    out.tau_min = vec![tau; sc.players];
    out.tau_max = vec![tau; sc.players];
    out
}

fn player_residuals(profile: &Profile, sc: &Scenario, model: &SensingModel, cap: f64) -> f64 {
    natural_map_residual(profile, &profile.lambda, profile.price, 1.0, cap, sc, model)
        .per_player
        .iter()
        .sum::<f64>()
        .sqrt()
}

/// Algorithm 1: best-response iterations for the game at fixed price `π`.
///
/// Budget exhaustion is not an error: the outcome carries `converged = false`.
pub fn run_algorithm1(
    sc: &Scenario,
    model: &SensingModel,
    price: f64,
    schedule: &Schedule,
    cfg: &RunConfig,
    start: Option<&Profile>,
) -> Result<RunOutcome> {
    check_feasible(sc, model)?;
    schedule.validate()?;
    cfg.validate()?;
    if !(price >= 0.0) {
        return Err(crate::error::invalid("algorithm.price", "must be ≥ 0"));
    }
    let cap = cfg.price_cap.unwrap_or_else(|| lambda_max(sc));
    let br = cfg.br_cfg();
    let mut profile = match start {
        Some(p) => p.clone(),
        None => cold_profile(sc, model)?,
    };
    profile.price = price;
    let mut trace = RunTrace::default();
    let mut avg = Averager::new(sc, cfg, &mut trace)?;
    trace.record(0, &profile, f64::NAN, 0, sc, model);
    match schedule.mode {
        ScheduleMode::Asynchronous => return run_async(sc, model, price, cap, schedule, cfg, &br, profile, trace),
        ScheduleMode::Jacobi | ScheduleMode::GaussSeidel => {}
    }
    let mut change = f64::INFINITY;
    let mut inner_sweeps = 0;
    for round in 1..=cfg.max_iters {
        let prev = profile.clone();
        inner_sweeps += 1;
        match schedule.mode {
            ScheduleMode::Jacobi => {
                let means = avg.mean(&sensing_levels(&profile, model))?;
                let snapshot = &profile;
                let outs: Result<Vec<_>> = (0..sc.players)
                    .into_par_iter()
                    .map(|q| {
                        let ctx = context_with_mean(q, snapshot, means[q], sc, model);
                        best_response(&ctx, price, cap, Some(&snapshot.x[q].to_vec()), &br)
                    })
                    .collect();
                for (q, o) in outs?.into_iter().enumerate() {
                    profile.x[q] = o.x;
                    profile.lambda[q] = o.lambda;
                }
            }
            ScheduleMode::GaussSeidel => {
                for q in 0..sc.players {
                    let means = avg.mean(&sensing_levels(&profile, model))?;
                    let ctx = context_with_mean(q, &profile, means[q], sc, model);
                    let o = best_response(&ctx, price, cap, Some(&profile.x[q].to_vec()), &br)?;
                    profile.x[q] = o.x;
                    profile.lambda[q] = o.lambda;
                }
            }
            ScheduleMode::Asynchronous => unreachable!(),
        }
        change = profile.max_change(&prev);
        let res = player_residuals(&profile, sc, model, cap);
        trace.record(round, &profile, res, avg.messages, sc, model);
        if change <= cfg.tol {
            return Ok(RunOutcome {
                profile,
                trace,
                converged: true,
                iterations: round - 1,
                rounds: round,
                residual: change,
                messages: avg.messages,
                inner_sweeps,
            });
        }
    }
    Ok(RunOutcome {
        profile,
        trace,
        converged: false,
        iterations: cfg.max_iters,
        rounds: cfg.max_iters,
        residual: change,
        messages: avg.messages,
        inner_sweeps,
    })
}

/// Simulated asynchronous event loop with bounded staleness. Rivals'
/// strategies (and their sensing average) are read from snapshots up to
/// `staleness` rounds old; no consensus rounds are run.
#[allow(clippy::too_many_arguments)]
fn run_async(
    sc: &Scenario,
    model: &SensingModel,
    price: f64,
    cap: f64,
    schedule: &Schedule,
    cfg: &RunConfig,
    br: &BrConfig,
    mut profile: Profile,
    mut trace: RunTrace,
) -> Result<RunOutcome> {
    let qn = sc.players;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut history: VecDeque<Profile> = VecDeque::with_capacity(schedule.staleness + 1);
    history.push_front(profile.clone());
    let mut last_update = vec![0usize; qn];
    let mut pending = vec![true; qn];
    let mut epochs = 0usize;
    let mut quiet = 0usize;
    let needed_quiet = schedule.window + schedule.staleness + 1;
    let mut change = f64::INFINITY;
    let mut epoch_at_quiet_start = 0usize;
    let mut inner_sweeps = 0;
    for round in 1..=cfg.max_iters {
        inner_sweeps += 1;
        let prev = profile.clone();
        let mut next = profile.clone();
        for q in 0..qn {
            let forced = round - last_update[q] >= schedule.window;
            if !(forced || rng.random::<f64>() < schedule.activation) {
                continue;
            }
            last_update[q] = round;
            pending[q] = false;
            let mut view = profile.clone();
            for r in (0..qn).filter(|&r| r != q) {
                let age = rng.random_range(0..=schedule.staleness.min(history.len() - 1));
                view.x[r] = history[age].x[r].clone();
            }
            let ctx = PlayerContext::new(q, &view, sc, model);
            let o = best_response(&ctx, price, cap, Some(&profile.x[q].to_vec()), br)?;
            next.x[q] = o.x;
            next.lambda[q] = o.lambda;
        }
        profile = next;
        if pending.iter().all(|p| !p) {
            epochs += 1;
            pending.iter_mut().for_each(|p| *p = true);
        }
        history.push_front(profile.clone());
        history.truncate(schedule.staleness + 1);
        change = profile.max_change(&prev);
        let res = player_residuals(&profile, sc, model, cap);
        trace.record(round, &profile, res, 0, sc, model);
        if change <= cfg.tol {
            if quiet == 0 {
                epoch_at_quiet_start = epochs;
            }
            quiet += 1;
            if quiet >= needed_quiet {
                return Ok(RunOutcome {
                    profile,
                    trace,
                    converged: true,
                    iterations: epoch_at_quiet_start,
                    rounds: round,
                    residual: change,
                    messages: 0,
                    inner_sweeps,
                });
            }
        } else {
            quiet = 0;
        }
    }
    Ok(RunOutcome { profile, trace, converged: false, iterations: epochs, rounds: cfg.max_iters, residual: change, messages: 0, inner_sweeps })
}

fn validate_t(sc: &Scenario, t: f64) -> Result<f64> {
    let lm = lambda_max(sc);
    if !(t > lm) {
        return Err(crate::error::invalid("algorithm.t", &format!("must exceed λ^max = {lm:.6e}, got {t}")));
    }
    Ok(lm)
}

fn full_residual(profile: &Profile, cap: f64, gain: f64, sc: &Scenario, model: &SensingModel) -> f64 {
    natural_map_residual(profile, &profile.lambda, profile.price, gain, cap, sc, model).total.sqrt()
}

/// Algorithm 3: proximal outer loop on the multiplier centres with an
/// inner Jacobi solve of the regularised game.
///
/// In the inner game the multiplier players' closed-form responses are
/// substituted into the strategy players' objectives, so every inner
/// update is a single smooth minimisation over `Y_q`.
pub fn run_algorithm3(sc: &Scenario, model: &SensingModel, t: f64, cfg: &RunConfig) -> Result<RunOutcome> {
    check_feasible(sc, model)?;
    cfg.validate()?;
    let lm = validate_t(sc, t)?;
    let cap = cfg.price_cap.unwrap_or(lm);
    let (alpha, eps) = (cfg.prox_gain, cfg.relaxation);
    let br = cfg.br_cfg();
    let qn = sc.players;
    let mut profile = cold_profile(sc, model)?;
    let mut trace = RunTrace::default();
    let mut avg = Averager::new(sc, cfg, &mut trace)?;
    let mut centers = vec![0.0; qn];
    let mut price_center = 0.0;
    trace.record(0, &profile, f64::NAN, 0, sc, model);
    let mut residual = f64::INFINITY;
    let mut inner_sweeps = 0;
    for outer in 1..=cfg.max_iters {
        let inner_tol = (cfg.inner_tol0 / (outer * outer) as f64).max(0.1 * cfg.tol);
        for _ in 0..cfg.max_inner_sweeps {
            inner_sweeps += 1;
            let means = avg.mean(&sensing_levels(&profile, model))?;
            let snapshot = &profile;
            let xs: Result<Vec<Vec<f64>>> = (0..qn)
                .into_par_iter()
                .map(|q| {
                    let ctx = context_with_mean(q, snapshot, means[q], sc, model);
                    let term = InterferenceTerm::Proximal {
                        lambda_center: centers[q],
                        price_center,
                        prox_gain: alpha,
                        cap,
                    };
                    Ok(minimize_inner(&ctx, &term, &snapshot.x[q].to_vec(), 0.1 * br.grad_tol, &br)?.x)
                })
                .collect();
            let next: Vec<Strategy> = xs?.iter().map(|v| Strategy::from_slice(v)).collect();
            let prev = std::mem::replace(&mut profile.x, next);
            let moved = Profile::new(prev).max_change(&profile);
            if moved <= inner_tol {
                break;
            }
        }
        let ig = interference_global(&profile, sc, model);
        let lam_star: Vec<f64> = (0..qn)
            .map(|q| prox_target(centers[q], interference_local(q, &profile.x[q], sc, model), alpha, cap))
            .collect();
        let price_star = prox_target(price_center, ig, alpha, cap);
        profile.lambda = lam_star.clone();
        profile.price = price_star;
        residual = full_residual(&profile, cap, alpha, sc, model);
        trace.record(outer, &profile, residual, avg.messages, sc, model);
        for q in 0..qn {
            centers[q] = (1.0 - eps) * centers[q] + eps * lam_star[q];
        }
        price_center = (1.0 - eps) * price_center + eps * price_star;
        if residual <= cfg.tol {
            return Ok(RunOutcome { profile, trace, converged: true, iterations: outer, rounds: outer, residual, messages: avg.messages, inner_sweeps });
        }
    }
    Ok(RunOutcome { profile, trace, converged: false, iterations: cfg.max_iters, rounds: cfg.max_iters, residual, messages: avg.messages, inner_sweeps })
}

/// Algorithm 4: single loop with simultaneous strategy, multiplier and
/// price updates; centres move once the inner change falls below
/// `ε₀/n²` (n counts centre updates).
pub fn run_algorithm4(sc: &Scenario, model: &SensingModel, t: f64, cfg: &RunConfig) -> Result<RunOutcome> {
    check_feasible(sc, model)?;
    cfg.validate()?;
    let lm = validate_t(sc, t)?;
    let cap = cfg.price_cap.unwrap_or(lm);
    let (alpha, eps) = (cfg.prox_gain, cfg.relaxation);
    let br = cfg.br_cfg();
    let qn = sc.players;
    let mut profile = cold_profile(sc, model)?;
    let mut messages = 0usize;
    let mut trace = RunTrace::default();
    let params = consensus_setup(sc, cfg, &mut trace)?;
    let mut centers = vec![0.0; qn];
    let mut price_center = 0.0;
    let mut recenters = 1usize;
    trace.record(0, &profile, f64::NAN, 0, sc, model);
    let mut residual = f64::INFINITY;
    let mut inner_sweeps = 0;
    for round in 1..=cfg.max_iters {
        inner_sweeps += 1;
        // Step 2a: sensing average and total interference from one vector consensus
        let y = sensing_levels(&profile, model);
        let j: Vec<f64> = (0..qn).map(|q| interference_sum(q, &profile.x[q], sc, model)).collect();
        let (mean_y, mean_j) = match &params {
            None => (vec![y.iter().sum::<f64>() / qn as f64; qn], vec![j.iter().sum::<f64>() / qn as f64; qn]),
            Some(p) => {
                let a = finite_time_average(&y, p)?;
                let b = finite_time_average(&j, p)?;
                messages += a.messages_total + b.messages_total;
                (a.node_values, b.node_values)
            }
        };
        let global = mean_j[0] * qn as f64 - sc.imax_global;
        // Step 2b: simultaneous updates
        let snapshot = &profile;
        let xs: Result<Vec<Vec<f64>>> = (0..qn)
            .into_par_iter()
            .map(|q| {
                let mut ctx = context_with_mean(q, snapshot, mean_y[q], sc, model);
                ctx.others_interference = qn as f64 * mean_j[q] - j[q];
                let term = InterferenceTerm::Linear { lambda: snapshot.lambda[q], price: snapshot.price };
                Ok(minimize_inner(&ctx, &term, &snapshot.x[q].to_vec(), 0.1 * br.grad_tol, &br)?.x)
            })
            .collect();
        let lam: Vec<f64> = (0..qn).map(|q| prox_target(centers[q], j[q] - sc.imax_local[q], alpha, cap)).collect();
        let price = prox_target(price_center, global, alpha, cap);
        let mut next = Profile::new(xs?.iter().map(|v| Strategy::from_slice(v)).collect());
        next.lambda = lam;
        next.price = price;
        let change = next
            .max_change(&profile)
            .max(next.lambda.iter().zip(&profile.lambda).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .max((next.price - profile.price).abs());
        profile = next;
        // Step 3: re-centre once the regularised game is solved to ε₀/n²
        if change <= cfg.inner_tol0 / (recenters * recenters) as f64 {
            for q in 0..qn {
                centers[q] = (1.0 - eps) * centers[q] + eps * profile.lambda[q];
            }
            price_center = (1.0 - eps) * price_center + eps * profile.price;
            recenters += 1;
        }
        residual = full_residual(&profile, cap, alpha, sc, model);
        trace.record(round, &profile, residual, messages, sc, model);
        if residual <= cfg.tol {
            return Ok(RunOutcome { profile, trace, converged: true, iterations: round, rounds: round, residual, messages, inner_sweeps });
        }
    }
    Ok(RunOutcome { profile, trace, converged: false, iterations: cfg.max_iters, rounds: cfg.max_iters, residual, messages, inner_sweeps })
}

/// Network-wide averages computed by consensus for Algorithm 4's step 2a,
/// returned as `(mean sensing level, total interference I)` (diagnostic).
pub fn consensus_global_interference(profile: &Profile, sc: &Scenario, model: &SensingModel, offset: i64) -> Result<(f64, f64)> {
    let params = compute_finite_time_params(&sc.graph, offset)?;
    let y = sensing_levels(profile, model);
    let j: Vec<f64> = (0..sc.players).map(|q| interference_sum(q, &profile.x[q], sc, model)).collect();
    let (vals, _) = vector_average(&[y, j], &params)?;
    Ok((vals[0], vals[1] * sc.players as f64 - sc.imax_global))
}

/// Outcome of the equilibrium check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub pass: bool,
    /// Best unilateral cost decrease found for each player.
    pub improvement: Vec<f64>,
    pub local_violation: Vec<f64>,
    pub global_violation: f64,
    pub complementarity: f64,
    pub failures: Vec<String>,
}

/// Certifies `(profile, price)` as an equilibrium: no player can lower
/// `−θ_q + π·I` by more than `tol` under `I_q ≤ 0` (multistart best
/// responses), and `π ≥ 0`, `I ≤ tol`, `|π I| ≤ tol`.
pub fn certify_ne(profile: &Profile, price: f64, sc: &Scenario, model: &SensingModel, tol: f64, starts: usize, seed: u64) -> Result<Certificate> {
    let cap = lambda_max(sc);
    let cfg = BrConfig { grad_tol: 1e-9, comp_tol: 1e-9, ..BrConfig::default() };
    let mut failures = Vec::new();
    let mut improvement = Vec::with_capacity(sc.players);
    let mut local = Vec::with_capacity(sc.players);
    for q in 0..sc.players {
        let ctx = PlayerContext::new(q, profile, sc, model);
        let x = profile.x[q].to_vec();
        let iq = ctx.local_violation(&x);
        local.push(iq);
        if iq > tol {
            failures.push(format!("player {q}: local interference violated by {iq:.3e}"));
        }
        let current = ctx.neg_theta(&x) + price * ctx.global_violation(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(q as u64));
        let (best, _) = best_response_multistart(&ctx, price, cap, Some(&x), &cfg, starts, &mut rng)?;
        let gain = current - best.cost;
        improvement.push(gain);
        if best.diagnostics.violation <= tol && gain > tol {
            failures.push(format!("player {q}: unilateral deviation improves payoff by {gain:.3e}"));
        }
    }
    let ig = interference_global(profile, sc, model);
    let comp = (price * ig).abs();
    if price < 0.0 {
        failures.push(format!("price {price} is negative"));
    }
    if ig > tol {
        failures.push(format!("global interference violated by {ig:.3e}"));
    }
    if comp > tol {
        failures.push(format!("complementarity |π·I| = {comp:.3e} exceeds {tol:.1e}"));
    }
    Ok(Certificate { pass: failures.is_empty(), improvement, local_violation: local, global_violation: ig, complementarity: comp, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_budget_examples() {
        assert_eq!(iteration_budget(0.5, 1e-3).unwrap(), 10);
        assert_eq!(iteration_budget(0.5, 1.0).unwrap(), 0);
        assert_eq!(iteration_budget(1e-300, 0.5).unwrap(), 1);
        assert_eq!(iteration_budget(0.0, 0.5).unwrap(), 1);
        assert!(iteration_budget(1.0, 0.5).is_err());
        assert!(iteration_budget(1.5, 0.5).is_err());
    }

    #[test]
    fn relaxation_arithmetic() {
        // JOR centre update and the multiplier clamp
        let (eps, center, star) = (0.5, 1.0, 3.0);
        assert_eq!((1.0 - eps) * center + eps * star, 2.0);
        assert_eq!(prox_target(0.5, -1.0, 1.0, 10.0), 0.0);
    }
}
