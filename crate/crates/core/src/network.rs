//! Scenarios, strategies and payoff evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::consensus::{Digraph, GraphKind};
use crate::error::invalid;
use crate::sensing::SensingModel;
use crate::{Error, Result};

/// Physical description of the multicarrier interference network.
///
/// Channel quantities are stored as squared magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Number of secondary users `Q`.
    pub players: usize,
    /// Number of subcarriers `N`.
    pub carriers: usize,
    /// `h[q][r][k] = |H_qr(k)|²`: gain from transmitter `r` to receiver `q`.
    pub h: Vec<Vec<Vec<f64>>>,
    /// `g[q][k] = |G_Pq(k)|²`: gain from transmitter `q` to the primary receiver.
    pub g: Vec<Vec<f64>>,
    /// Interference weights `w[q][k]` used in the interference constraints.
    pub w: Vec<Vec<f64>>,
    /// Noise power `σ²[q][k]`.
    pub noise: Vec<Vec<f64>>,
    /// Total power budget per player.
    pub power_budget: Vec<f64>,
    /// Spectral mask `pmax[q][k]`.
    pub pmax: Vec<Vec<f64>>,
    /// Per-player interference caps.
    pub imax_local: Vec<f64>,
    /// Cap on the aggregate interference.
    pub imax_global: f64,
    /// Missed-detection bounds `alpha[q][k] ∈ (0, 1/2]`.
    pub alpha: Vec<Vec<f64>>,
    /// False-alarm bounds `beta[q] ∈ (0, 1/2]`.
    pub beta: Vec<f64>,
    /// Sensing-time bounds (s).
    pub tau_min: Vec<f64>,
    pub tau_max: Vec<f64>,
    /// Equi-sensing penalty gain.
    pub c: f64,
    /// Communication graph used for consensus.
    pub graph: Digraph,
}

impl Scenario {
    /// Normalised cross gain `|Ĥ_qr(k)|² = |H_qr(k)|²/|H_qq(k)|²`.
    pub fn h_hat(&self, q: usize, r: usize, k: usize) -> f64 {
        self.h[q][r][k] / self.h[q][q][k]
    }

    /// Normalised noise `σ̂²_qk = σ²_qk/|H_qq(k)|²`.
    pub fn noise_hat(&self, q: usize, k: usize) -> f64 {
        self.noise[q][k] / self.h[q][q][k]
    }

    /// Scaled sensing-time box `[√(τmin f), √(τmax f)]`.
    pub fn tau_hat_bounds(&self, q: usize, model: &SensingModel) -> (f64, f64) {
        let f = model.f[q];
        ((self.tau_min[q] * f).sqrt(), (self.tau_max[q] * f).sqrt())
    }

    /// Checks sizes and the documented value ranges, naming the offending field.
    pub fn validate(&self, model: &SensingModel) -> Result<()> {
        let (qn, n) = (self.players, self.carriers);
        if qn == 0 || n == 0 {
            return Err(Error::Dimension("players and carriers must be positive".into()));
        }
        let mat = |name: &str, m: &Vec<Vec<f64>>| -> Result<()> {
            if m.len() != qn || m.iter().any(|row| row.len() != n) {
                return Err(Error::Dimension(format!("scenario.{name} must be {qn}×{n}")));
            }
            Ok(())
        };
        mat("g", &self.g)?;
        mat("w", &self.w)?;
        mat("noise", &self.noise)?;
        mat("pmax", &self.pmax)?;
        mat("alpha", &self.alpha)?;
        if self.h.len() != qn || self.h.iter().any(|m| m.len() != qn || m.iter().any(|r| r.len() != n)) {
            return Err(Error::Dimension(format!("scenario.h must be {qn}×{qn}×{n}")));
        }
        for (name, v) in [
            ("power_budget", &self.power_budget),
            ("imax_local", &self.imax_local),
            ("beta", &self.beta),
            ("tau_min", &self.tau_min),
            ("tau_max", &self.tau_max),
        ] {
            if v.len() != qn {
                return Err(Error::Dimension(format!("scenario.{name} must have {qn} entries")));
            }
        }
        if self.graph.nodes() != qn {
            return Err(Error::Dimension(format!("scenario.graph must have {qn} nodes")));
        }
        self.graph.validate()?;
        if model.players() != qn || model.carriers() != n {
            return Err(Error::Dimension("sensing model does not match the scenario".into()));
        }
        model.validate()?;
        for q in 0..qn {
            for r in 0..qn {
                for k in 0..n {
                    let v = self.h[q][r][k];
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(invalid(format!("scenario.h[{q}][{r}][{k}]"), "must be a finite gain ≥ 0"));
                    }
                }
            }
            for k in 0..n {
                if !(self.h[q][q][k] > 0.0) {
                    return Err(invalid(format!("scenario.h[{q}][{q}][{k}]"), "direct gain must be > 0"));
                }
                if !(self.g[q][k] >= 0.0) {
                    return Err(invalid(format!("scenario.g[{q}][{k}]"), "must be ≥ 0"));
                }
                if !(self.w[q][k] >= 0.0) {
                    return Err(invalid(format!("scenario.w[{q}][{k}]"), "must be ≥ 0"));
                }
                if !(self.noise[q][k] > 0.0) {
                    return Err(invalid(format!("scenario.noise[{q}][{k}]"), "must be > 0"));
                }
                if !(self.pmax[q][k] > 0.0) {
                    return Err(invalid(format!("scenario.pmax[{q}][{k}]"), "must be > 0"));
                }
                let a = self.alpha[q][k];
                if !(a > 0.0 && a <= 0.5) {
                    return Err(invalid(format!("scenario.alpha[{q}][{k}]"), "must lie in (0, 0.5]"));
                }
            }
            if !(self.power_budget[q] > 0.0) {
                return Err(invalid(format!("scenario.power_budget[{q}]"), "must be > 0"));
            }
            if !(self.imax_local[q] > 0.0) {
                return Err(invalid(format!("scenario.imax_local[{q}]"), "must be > 0"));
            }
            let b = self.beta[q];
            if !(b > 0.0 && b <= 0.5) {
                return Err(invalid(format!("scenario.beta[{q}]"), "must lie in (0, 0.5]"));
            }
            let (lo, hi) = (self.tau_min[q], self.tau_max[q]);
            if !(lo > 0.0 && lo <= hi && hi < model.frame[q]) {
                return Err(invalid(
                    format!("scenario.tau_min[{q}]/tau_max[{q}]"),
                    "need 0 < tau_min ≤ tau_max < frame",
                ));
            }
        }
        if !(self.imax_global > 0.0) {
            return Err(invalid("scenario.imax_global", "must be > 0"));
        }
        if !(self.c >= 0.0) {
            return Err(invalid("scenario.c", "must be ≥ 0"));
        }
        Ok(())
    }
}

/// Parameters of the random scenario generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorParams {
    pub players: usize,
    pub carriers: usize,
    pub fir_taps: usize,
    pub seed: u64,
    /// Ratio `d_qr/d_qq` between cross and direct link distances.
    pub distance_ratio: f64,
    /// Path-loss exponent applied to the distance ratio.
    pub path_loss_exponent: f64,
    /// Average scaling of the gains towards the primary receiver.
    pub pu_gain_scale: f64,
    /// Link SNR in dB: `P/(N σ²)` relative to the mean direct gain.
    pub link_snr_db: f64,
    pub power_budget: f64,
    /// Spectral mask as a multiple of `P/N`.
    pub mask_factor: f64,
    pub imax_local: f64,
    pub imax_global: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub c: f64,
    pub graph: GraphKind,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            players: 3,
            carriers: 16,
            fir_taps: 5,
            seed: 1,
            distance_ratio: 3.0,
            path_loss_exponent: 3.0,
            pu_gain_scale: 1.0,
            link_snr_db: 5.0,
            power_budget: 1.0,
            mask_factor: 2.0,
            imax_local: 1.0,
            imax_global: 2.0,
            alpha: 0.5,
            beta: 0.5,
            tau_min: 0.01,
            tau_max: 0.9,
            c: 100.0,
            graph: GraphKind::Complete,
        }
    }
}

/// Squared magnitudes of the `n`-point frequency response of a random
/// length-`taps` FIR filter with i.i.d. complex Gaussian taps of variance `1/taps²`.
fn fir_response(taps: usize, n: usize, rng: &mut ChaCha8Rng, fft: &std::sync::Arc<dyn rustfft::Fft<f64>>) -> Vec<f64> {
    let std = (0.5f64).sqrt() / taps as f64;
    let normal = Normal::new(0.0, std).expect("valid std");
    let mut buf = vec![Complex64::new(0.0, 0.0); n.max(taps)];
    for tap in buf.iter_mut().take(taps) {
        *tap = Complex64::new(normal.sample(rng), normal.sample(rng));
    }
    if buf.len() > n {
        // fold taps beyond the FFT length (aliasing keeps the response exact at the N bins)
        let (head, tail) = buf.split_at_mut(n);
        for (i, v) in tail.iter().enumerate() {
            head[i % n] += *v;
        }
        buf.truncate(n);
    }
    fft.process(&mut buf);
    buf.iter().map(|z| z.norm_sqr()).collect()
}

/// Draws a random scenario; identical seeds give bitwise identical scenarios.
pub fn generate_scenario(p: &GeneratorParams) -> Result<Scenario> {
    if p.players == 0 || p.carriers == 0 || p.fir_taps == 0 {
        return Err(Error::Dimension("players, carriers and fir_taps must be ≥ 1".into()));
    }
    let (qn, n, l) = (p.players, p.carriers, p.fir_taps);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let cross_scale = p.distance_ratio.powf(-p.path_loss_exponent);
    let mut h = vec![vec![vec![0.0; n]; qn]; qn];
    for (q, hq) in h.iter_mut().enumerate() {
        for (r, hqr) in hq.iter_mut().enumerate() {
            let resp = fir_response(l, n, &mut rng, &fft);
            let scale = if q == r { 1.0 } else { cross_scale };
            *hqr = resp.into_iter().map(|v| v * scale).collect();
        }
    }
    let g: Vec<Vec<f64>> = (0..qn)
        .map(|_| fir_response(l, n, &mut rng, &fft).into_iter().map(|v| v * p.pu_gain_scale).collect())
        .collect();
    let mean_gain = 1.0 / l as f64;
    let noise_level = p.power_budget / n as f64 * mean_gain / 10f64.powf(p.link_snr_db / 10.0);
    let pmax = (p.mask_factor * p.power_budget / n as f64).min(p.power_budget);
    Ok(Scenario {
        players: qn,
        carriers: n,
        h,
        w: g.clone(),
        g,
        noise: vec![vec![noise_level; n]; qn],
        power_budget: vec![p.power_budget; qn],
        pmax: vec![vec![pmax; n]; qn],
        imax_local: vec![p.imax_local; qn],
        imax_global: p.imax_global,
        alpha: vec![vec![p.alpha; n]; qn],
        beta: vec![p.beta; qn],
        tau_min: vec![p.tau_min; qn],
        tau_max: vec![p.tau_max; qn],
        c: p.c,
        graph: Digraph::build(p.graph, qn, p.seed ^ 0x9e37_79b9),
    })
}

/// One player's strategy `(τ̂, p, pfa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub tau_hat: f64,
    pub p: Vec<f64>,
    pub pfa: f64,
}

impl Strategy {
    /// Packs into `[τ̂, p₁..p_N, pfa]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.p.len() + 2);
        v.push(self.tau_hat);
        v.extend_from_slice(&self.p);
        v.push(self.pfa);
        v
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let n = x.len() - 2;
        Self {
            tau_hat: x[0],
            p: x[1..=n].to_vec(),
            pfa: x[n + 1],
        }
    }

    /// Sensing time `τ = τ̂²/f`.
    pub fn tau(&self, f: f64) -> f64 {
        self.tau_hat * self.tau_hat / f
    }

    pub fn sum_power(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Strategies of all players together with their multipliers and the price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub x: Vec<Strategy>,
    pub lambda: Vec<f64>,
    pub price: f64,
}

impl Profile {
    pub fn new(x: Vec<Strategy>) -> Self {
        let q = x.len();
        Self {
            x,
            lambda: vec![0.0; q],
            price: 0.0,
        }
    }

    /// Largest absolute change in any strategy coordinate.
    pub fn max_change(&self, other: &Profile) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .flat_map(|(a, b)| a.to_vec().into_iter().zip(b.to_vec()).map(|(u, v)| (u - v).abs()))
            .fold(0.0, f64::max)
    }
}

/// Noise-plus-interference `σ̂² + Σ_{r≠q} |Ĥ_qr(k)|² p_rk` seen by player `q` on carrier `k`.
pub fn noise_plus_mui(q: usize, k: usize, profile: &Profile, sc: &Scenario) -> f64 {
    sc.noise_hat(q, k)
        + (0..sc.players)
            .filter(|&r| r != q)
            .map(|r| sc.h_hat(q, r, k) * profile.x[r].p[k])
            .sum::<f64>()
}

/// Rate `log(1 + p_qk/(σ̂² + Σ_{r≠q}|Ĥ_qr|² p_rk))` in nats.
pub fn rate(q: usize, k: usize, profile: &Profile, sc: &Scenario) -> f64 {
    (profile.x[q].p[k] / noise_plus_mui(q, k, profile, sc)).ln_1p()
}

/// `log[(1 − τ̂²/(fT))(1 − pfa) Σ_k r_k]` given the rate sum, or `−∞`
/// when the argument of the logarithm is not positive.
pub fn throughput_from_sum(tau_hat: f64, pfa: f64, rate_sum: f64, f: f64, frame: f64) -> f64 {
    let a = 1.0 - tau_hat * tau_hat / (f * frame);
    let b = 1.0 - pfa;
    if a <= 0.0 || b <= 0.0 || rate_sum <= 0.0 {
        return f64::NEG_INFINITY;
    }
    a.ln() + b.ln() + rate_sum.ln()
}

/// Opportunistic throughput `R̂_q` (log form).
pub fn throughput(q: usize, profile: &Profile, sc: &Scenario, model: &SensingModel) -> f64 {
    let s = &profile.x[q];
    let sum: f64 = (0..sc.carriers).map(|k| rate(q, k, profile, sc)).sum();
    throughput_from_sum(s.tau_hat, s.pfa, sum, model.f[q], model.frame[q])
}

/// Equi-sensing deviation `τ̂_q/√f_q − (1/Q)Σ_r τ̂_r/√f_r`.
pub fn sensing_deviation(q: usize, profile: &Profile, model: &SensingModel) -> f64 {
    let qn = profile.x.len() as f64;
    let mean = profile
        .x
        .iter()
        .zip(&model.f)
        .map(|(s, f)| s.tau_hat / f.sqrt())
        .sum::<f64>()
        / qn;
    profile.x[q].tau_hat / model.f[q].sqrt() - mean
}

/// Payoff `θ_q = R̂_q − (c/2)·deviation²`.
pub fn payoff_theta(q: usize, profile: &Profile, sc: &Scenario, model: &SensingModel) -> f64 {
    let d = sensing_deviation(q, profile, model);
    throughput(q, profile, sc, model) - 0.5 * sc.c * d * d
}
