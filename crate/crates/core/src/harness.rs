//! Experiment configuration, presets and artifact emission.
//!
//! A run writes into its output directory:
//!
//! * `config.resolved.json` — the configuration with every default filled in,
//! * `conditions.json` — the [`ConditionReport`], written before iterating,
//! * `run.csv` — one trace row per (iteration, player),
//! * preset extras (`sweep.csv`, `run_gauss_seidel.csv`),
//! * `summary.json` — convergence, certificate and status,
//! * `FAILED` — only when the run aborted with an error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{condition_report, lambda_max, ConditionReport};
use crate::constraints::{probabilistic_weights, tau_hat_interval, WeightMode};
use crate::equilibrium::{
    certify_ne, freeze_sensing, run_algorithm1, run_algorithm3, run_algorithm4, Certificate, RunConfig, RunOutcome,
    RunTrace, Schedule,
};
use crate::network::{generate_scenario, throughput, GeneratorParams, Profile, Scenario};
use crate::sensing::{DetectorStats, SensingModel};
use crate::{Error, Result};

/// Which algorithm a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmKind {
    /// Best-response iterations at fixed price.
    #[default]
    Algo1,
    /// As `algo1` with every sensing time frozen at `fixed_tau`.
    Algo1FixedTau,
    /// Proximal outer loop with global constraint.
    Algo3,
    /// Single-loop primal–dual scheme with global constraint.
    Algo4,
}

/// Canned experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Network throughput against a common fixed sensing time, plus the game's choice.
    SensingSweep,
    /// Jacobi against Gauss–Seidel on the same instance.
    Convergence,
    /// Algorithm 4 with the global interference constraint.
    GlobalConstraints,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sensing-sweep" => Ok(Self::SensingSweep),
            "convergence" => Ok(Self::Convergence),
            "global-constraints" => Ok(Self::GlobalConstraints),
            other => Err(crate::error::invalid(
                "preset",
                format!("unknown preset `{other}` (expected sensing-sweep, convergence or global-constraints)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioBlock {
    /// Random instance parameters (used unless `explicit` is given).
    pub generator: GeneratorParams,
    /// Fully specified scenario.
    pub explicit: Option<Scenario>,
    /// How the interference weights are derived from the gains.
    pub weights: WeightMode,
}

impl Default for ScenarioBlock {
    fn default() -> Self {
        Self { generator: GeneratorParams::default(), explicit: None, weights: WeightMode::InstantaneousGains }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    /// Detection SNR (dB) for energy-detector synthesis.
    pub snr_db: f64,
    /// Per-player detection SNR (dB); overrides `snr_db`.
    pub player_snr_db: Option<Vec<f64>>,
    /// Sampling frequency.
    pub f: f64,
    /// Frame duration.
    pub frame: f64,
    /// Explicit statistics `stats[q][k]`; overrides the synthesis.
    pub stats: Option<Vec<Vec<DetectorStats>>>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self { snr_db: 0.0, player_snr_db: None, f: 10.0, frame: 1.0, stats: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmBlock {
    pub kind: AlgorithmKind,
    pub schedule: Schedule,
    pub run: RunConfig,
    /// Truncation level; defaults to `1.01·λ^max`.
    pub t: Option<f64>,
    /// Fixed price for `algo1`.
    pub price: f64,
    /// Common sensing time for `algo1-fixed-tau` (defaults to the middle of the feasible range).
    pub fixed_tau: Option<f64>,
    /// Overrides the scenario's equi-sensing gain.
    pub c: Option<f64>,
    /// Tolerance of the equilibrium certificate.
    pub certify_tol: f64,
    /// Best-response starts per player in the certificate.
    pub multistart: usize,
    /// Grid size of the sensing sweep.
    pub sweep_points: usize,
}

impl Default for AlgorithmBlock {
    fn default() -> Self {
        Self {
            kind: AlgorithmKind::Algo1,
            schedule: Schedule::default(),
            run: RunConfig::default(),
            t: None,
            price: 0.0,
            fixed_tau: None,
            c: None,
            certify_tol: 1e-4,
            multistart: 4,
            sweep_points: 41,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![OutputFormat::Csv, OutputFormat::Json] }
    }
}

/// A complete experiment description.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub scenario: ScenarioBlock,
    pub model: ModelBlock,
    pub algorithm: AlgorithmBlock,
    pub output: OutputBlock,
}

impl ExperimentConfig {
    /// Builds the scenario (generated or explicit, with weights and `c`
    /// overrides applied) and the sensing model.
    pub fn build(&self) -> Result<(Scenario, SensingModel)> {
        let mut sc = match &self.scenario.explicit {
            Some(s) => s.clone(),
            None => {
                validate_generator(&self.scenario.generator)?;
                generate_scenario(&self.scenario.generator)?
            }
        };
        let wm = probabilistic_weights(&self.scenario.weights, &sc);
        sc.w = wm.w;
        sc.imax_local = wm.imax_local;
        sc.imax_global = wm.imax_global;
        if let Some(c) = self.algorithm.c {
            sc.c = c;
        }
        let m = &self.model;
        let model = match (&m.stats, &m.player_snr_db) {
            (Some(stats), _) => SensingModel { stats: stats.clone(), f: vec![m.f; sc.players], frame: vec![m.frame; sc.players] },
            (None, Some(snr)) => {
                if snr.len() != sc.players {
                    return Err(Error::Dimension(format!("model.player_snr_db must have {} entries", sc.players)));
                }
                SensingModel::from_player_snr_db(snr, sc.carriers, m.f, m.frame)
            }
            (None, None) => SensingModel::from_snr_db(sc.players, sc.carriers, m.snr_db, m.f, m.frame),
        };
        sc.validate(&model)?;
        Ok((sc, model))
    }

    /// Full validation, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let (sc, _) = self.build()?;
        self.algorithm.schedule.validate()?;
        self.algorithm.run.validate()?;
        let a = &self.algorithm;
        if let Some(t) = a.t {
            let lm = lambda_max(&sc);
            if !(t > lm) {
                return Err(crate::error::invalid("algorithm.t", format!("must exceed λ^max = {lm:.6e}")));
            }
        }
        if !(a.price >= 0.0) {
            return Err(crate::error::invalid("algorithm.price", "must be ≥ 0"));
        }
        if let Some(tau) = a.fixed_tau {
            if !(tau > 0.0) {
                return Err(crate::error::invalid("algorithm.fixed_tau", "must be > 0"));
            }
        }
        if !(a.certify_tol > 0.0) {
            return Err(crate::error::invalid("algorithm.certify_tol", "must be > 0"));
        }
        if a.multistart == 0 {
            return Err(crate::error::invalid("algorithm.multistart", "must be ≥ 1"));
        }
        if a.sweep_points < 3 {
            return Err(crate::error::invalid("algorithm.sweep_points", "must be ≥ 3"));
        }
        Ok(())
    }
}

fn validate_generator(p: &GeneratorParams) -> Result<()> {
    let checks: [(&str, bool, &str); 10] = [
        ("scenario.generator.players", p.players >= 1, "must be ≥ 1"),
        ("scenario.generator.carriers", p.carriers >= 1, "must be ≥ 1"),
        ("scenario.generator.fir_taps", p.fir_taps >= 1, "must be ≥ 1"),
        ("scenario.generator.distance_ratio", p.distance_ratio > 0.0, "must be > 0"),
        ("scenario.generator.pu_gain_scale", p.pu_gain_scale >= 0.0, "must be ≥ 0"),
        ("scenario.generator.power_budget", p.power_budget > 0.0, "must be > 0"),
        ("scenario.generator.mask_factor", p.mask_factor > 0.0, "must be > 0"),
        ("scenario.generator.imax_local", p.imax_local > 0.0, "must be > 0"),
        ("scenario.generator.imax_global", p.imax_global > 0.0, "must be > 0"),
        ("scenario.generator.c", p.c >= 0.0, "must be ≥ 0"),
    ];
    for (field, ok, reason) in checks {
        if !ok {
            return Err(crate::error::invalid(field, reason));
        }
    }
    Ok(())
}

/// Parses a configuration from JSON text and validates it.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Writes a configuration (every field materialised).
pub fn save_config(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(cfg)? + "\n")?;
    Ok(())
}

/// Final state of a run, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    /// Converged, certificate passed and the sufficient conditions hold.
    Certified,
    /// Converged, but the certificate or the conditions failed.
    Uncertified,
    /// Iteration budget exhausted.
    BudgetExhausted,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Certified => 0,
            Self::Uncertified => 2,
            Self::BudgetExhausted => 3,
        }
    }
}

/// One grid point of the sensing sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub tau: f64,
    /// `Σ_q R_q` with `R_q = (1 − τ/T)(1 − pfa) Σ_k r_k`.
    pub total_throughput: f64,
    pub converged: bool,
}

/// Sensing-sweep results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub argmax_tau: f64,
    pub cell: f64,
    /// Mean sensing time of the game's equilibrium.
    pub game_tau: f64,
    pub game_total_throughput: f64,
}

/// Summary written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub status: RunStatus,
    pub converged: bool,
    pub certified: bool,
    pub conditions_certified: bool,
    pub algorithm: AlgorithmKind,
    pub preset: Option<Preset>,
    pub iterations: usize,
    pub rounds: usize,
    pub residual: f64,
    pub consensus_messages: usize,
    pub total_throughput: f64,
    pub max_global_violation_during_run: f64,
    pub final_global_violation: f64,
    pub certificate: Option<Certificate>,
    pub profile: Profile,
    /// Preset-specific results.
    pub extras: serde_json::Value,
    /// Binding or failed conditions.
    pub notes: Vec<String>,
}

/// `Σ_q R_q` in linear units.
pub fn total_throughput(profile: &Profile, sc: &Scenario, model: &SensingModel) -> f64 {
    (0..sc.players).map(|q| throughput(q, profile, sc, model).exp()).sum()
}

fn fmt(v: f64) -> String {
    format!("{v:.11e}")
}

/// Writes the trace as CSV, one row per (iteration, player).
pub fn emit_trace(trace: &RunTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iter", "player", "tau", "tau_hat", "pfa", "throughput", "I_local", "I_global", "price", "lambda", "residual",
        "consensus_msgs",
    ])?;
    for r in &trace.rows {
        w.write_record([
            r.iter.to_string(),
            r.player.to_string(),
            fmt(r.tau),
            fmt(r.tau_hat),
            fmt(r.pfa),
            fmt(r.throughput),
            fmt(r.i_local),
            fmt(r.i_global),
            fmt(r.price),
            fmt(r.lambda),
            fmt(r.residual),
            r.consensus_msgs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Common feasible range of a shared sensing time.
pub fn common_tau_range(sc: &Scenario, model: &SensingModel) -> Result<(f64, f64)> {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for q in 0..sc.players {
        let (a, b) = tau_hat_interval(sc, model, q)?;
        lo = lo.max(a * a / model.f[q]);
        hi = hi.min(b * b / model.f[q]);
    }
    if lo > hi {
        return Err(Error::Infeasible(format!("no common sensing time: need τ ≥ {lo:.6} but τ ≤ {hi:.6}")));
    }
    Ok((lo, hi))
}

/// Runs the game with all sensing times frozen at `tau`.
pub fn run_fixed_tau(sc: &Scenario, model: &SensingModel, tau: f64, price: f64, schedule: &Schedule, cfg: &RunConfig) -> Result<RunOutcome> {
    let frozen = freeze_sensing(sc, tau);
    run_algorithm1(&frozen, model, price, schedule, cfg, None)
}

/// Network throughput on a grid of common fixed sensing times, together
/// with the sensing time chosen by the game itself.
pub fn sensing_sweep(sc: &Scenario, model: &SensingModel, price: f64, points: usize, cfg: &RunConfig) -> Result<SweepResult> {
    let (lo, hi) = common_tau_range(sc, model)?;
    let cell = (hi - lo) / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|i| lo + cell * i as f64).collect();
    let pts: Result<Vec<SweepPoint>> = grid
        .par_iter()
        .map(|&tau| {
            let out = run_fixed_tau(sc, model, tau, price, &Schedule::jacobi(), cfg)?;
            Ok(SweepPoint { tau, total_throughput: total_throughput(&out.profile, sc, model), converged: out.converged })
        })
        .collect();
    let pts = pts?;
    let best = pts
        .iter()
        .max_by(|a, b| a.total_throughput.total_cmp(&b.total_throughput))
        .expect("non-empty grid");
    let game = run_algorithm1(sc, model, price, &Schedule::jacobi(), cfg, None)?;
    let game_tau = (0..sc.players).map(|q| game.profile.x[q].tau(model.f[q])).sum::<f64>() / sc.players as f64;
    Ok(SweepResult {
        argmax_tau: best.tau,
        cell,
        game_tau,
        game_total_throughput: total_throughput(&game.profile, sc, model),
        points: pts,
    })
}

/// Whether the conditions relevant to `kind` hold.
pub fn conditions_certified(kind: AlgorithmKind, report: &ConditionReport) -> bool {
    let feasible = report.feasibility_individual.pass;
    feasible
        && match kind {
            AlgorithmKind::Algo1 | AlgorithmKind::Algo1FixedTau => report.contraction_certified(),
            AlgorithmKind::Algo3 | AlgorithmKind::Algo4 => report.uniqueness_certified(),
        }
}

fn run_kind(kind: AlgorithmKind, sc: &Scenario, model: &SensingModel, t: f64, cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let a = &cfg.algorithm;
    match kind {
        AlgorithmKind::Algo1 => run_algorithm1(sc, model, a.price, &a.schedule, &a.run, None),
        AlgorithmKind::Algo1FixedTau => {
            let tau = match a.fixed_tau {
                Some(t) => t,
                None => {
                    let (lo, hi) = common_tau_range(sc, model)?;
                    0.5 * (lo + hi)
                }
            };
            let frozen = freeze_sensing(sc, tau);
            run_algorithm1(&frozen, model, a.price, &a.schedule, &a.run, None)
        }
        AlgorithmKind::Algo3 => run_algorithm3(sc, model, t, &a.run),
        AlgorithmKind::Algo4 => run_algorithm4(sc, model, t, &a.run),
    }
}

/// Runs an experiment and writes its artifacts. On error the partial
/// artifacts are kept and a `FAILED` marker holds the message.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir)?;
    let _ = fs::remove_file(dir.join("FAILED"));
    match run_inner(cfg, &dir) {
        Ok(s) => Ok(s),
        Err(e) => {
            let mut f = fs::File::create(dir.join("FAILED"))?;
            writeln!(f, "{e}")?;
            Err(e)
        }
    }
}

fn run_inner(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentSummary> {
    let json = cfg.output.formats.contains(&OutputFormat::Json);
    let csv = cfg.output.formats.contains(&OutputFormat::Csv);
    save_config(cfg, &dir.join("config.resolved.json"))?;
    let (sc, model) = cfg.build()?;
    let t = cfg.algorithm.t.unwrap_or_else(|| crate::analysis::default_t(&sc));
    let report = condition_report(&sc, &model, t, cfg.algorithm.run.tol);
    if json {
        write_json(&dir.join("conditions.json"), &report)?;
    }
    let kind = match cfg.preset {
        Some(Preset::GlobalConstraints) => AlgorithmKind::Algo4,
        Some(Preset::Convergence) | Some(Preset::SensingSweep) => AlgorithmKind::Algo1,
        None => cfg.algorithm.kind,
    };
    let mut extras = serde_json::Value::Null;
    let out = match cfg.preset {
        Some(Preset::Convergence) => {
            let a = &cfg.algorithm;
            let jac = run_algorithm1(&sc, &model, a.price, &Schedule::jacobi(), &a.run, None)?;
            let gs = run_algorithm1(&sc, &model, a.price, &Schedule::gauss_seidel(), &a.run, None)?;
            if csv {
                emit_trace(&gs.trace, &dir.join("run_gauss_seidel.csv"))?;
            }
            extras = serde_json::json!({
                "jacobi_iterations": jac.iterations,
                "gauss_seidel_iterations": gs.iterations,
                "gauss_seidel_converged": gs.converged,
                "schedule_disagreement": jac.profile.max_change(&gs.profile),
            });
            if !gs.converged {
                RunOutcome { converged: false, ..jac }
            } else {
                jac
            }
        }
        Some(Preset::SensingSweep) => {
            let sweep = sensing_sweep(&sc, &model, cfg.algorithm.price, cfg.algorithm.sweep_points, &cfg.algorithm.run)?;
            if csv {
                let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
                w.write_record(["tau", "total_throughput", "converged"])?;
                for p in &sweep.points {
                    w.write_record([fmt(p.tau), fmt(p.total_throughput), p.converged.to_string()])?;
                }
                w.flush()?;
            }
            extras = serde_json::to_value(&sweep)?;
            run_kind(AlgorithmKind::Algo1, &sc, &model, t, cfg)?
        }
        _ => run_kind(kind, &sc, &model, t, cfg)?,
    };
    if csv {
        emit_trace(&out.trace, &dir.join("run.csv"))?;
    }
    let price = out.profile.price;
    let certificate = if out.converged {
        let sc_for_cert = match kind {
            AlgorithmKind::Algo1FixedTau => freeze_sensing(&sc, out.profile.x[0].tau(model.f[0])),
            _ => sc.clone(),
        };
        Some(certify_ne(&out.profile, price, &sc_for_cert, &model, cfg.algorithm.certify_tol, cfg.algorithm.multistart, 0x5eed)?)
    } else {
        None
    };
    let cond_ok = conditions_certified(kind, &report);
    let cert_ok = certificate.as_ref().is_some_and(|c| c.pass);
    let status = if !out.converged {
        RunStatus::BudgetExhausted
    } else if cert_ok && cond_ok {
        RunStatus::Certified
    } else {
        RunStatus::Uncertified
    };
    let mut notes = report.binding.clone();
    notes.extend(out.trace.consensus_fallback.clone());
    if let Some(c) = &certificate {
        notes.extend(c.failures.iter().cloned());
    }
    let summary = ExperimentSummary {
        status,
        converged: out.converged,
        certified: cert_ok,
        conditions_certified: cond_ok,
        algorithm: kind,
        preset: cfg.preset,
        iterations: out.iterations,
        rounds: out.rounds,
        residual: out.residual,
        consensus_messages: out.messages,
        total_throughput: total_throughput(&out.profile, &sc, &model),
        max_global_violation_during_run: out.trace.max_global_violation(),
        final_global_violation: crate::constraints::interference_global(&out.profile, &sc, &model),
        certificate,
        profile: out.profile,
        extras,
        notes,
    };
    if json {
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_materialised() {
        let cfg = parse_config(r#"{"scenario": {"generator": {"players": 3, "carriers": 16, "seed": 7}}}"#).unwrap();
        assert_eq!(cfg.scenario.generator.alpha, 0.5);
        assert_eq!(cfg.scenario.generator.beta, 0.5);
        assert_eq!(cfg.scenario.generator.c, 100.0);
        assert_eq!(cfg.scenario.generator.fir_taps, 5);
        assert_eq!(cfg.algorithm.run.tol, 1e-6);
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_config("{\n  \"scenario\": {\"generator\": {\"players\": }}\n}") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match parse_config(r#"{"scenaro": {}}"#) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("scenaro")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn preset_names() {
        assert_eq!("sensing-sweep".parse::<Preset>().unwrap(), Preset::SensingSweep);
        assert!("sweep".parse::<Preset>().is_err());
    }
}
