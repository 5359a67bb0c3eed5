mod common;

use approx::assert_relative_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cogneq_core::analysis::{default_t, derivative_bounds, lambda_max, lambda_max_per_player, power_floor};
use cogneq_core::kkt::PlayerContext;
use cogneq_core::network::{generate_scenario, GeneratorParams, Profile, Scenario, Strategy};
use cogneq_core::sensing::{miss_derivatives, DetectorStats, SensingModel};
use cogneq_core::solver::{best_response, cold_start, random_feasible, BrConfig};

/// Flat unit instance: unit direct gains, no cross talk, unit noise and masks.
fn flat(players: usize, carriers: usize) -> Scenario {
    let mut sc = generate_scenario(&GeneratorParams { players, carriers, seed: 3, ..Default::default() }).unwrap();
    for q in 0..players {
        for r in 0..players {
            sc.h[q][r] = vec![if q == r { 1.0 } else { 0.0 }; carriers];
        }
        sc.noise[q] = vec![1.0; carriers];
        sc.pmax[q] = vec![1.0; carriers];
        sc.imax_local[q] = 2.0;
    }
    sc
}

#[test]
fn lambda_max_single_link() {
    let sc = flat(1, 1);
    assert_relative_eq!(lambda_max(&sc), 1.0 / 2f64.ln(), max_relative = 1e-14);
}

#[test]
fn lambda_max_adds_symmetric_players() {
    let sc = flat(2, 3);
    let per = lambda_max_per_player(&sc);
    assert_relative_eq!(per[0], per[1], max_relative = 1e-14);
    assert_relative_eq!(lambda_max(&sc), 2.0 / 2f64.ln(), max_relative = 1e-14);
}

#[test]
fn lambda_max_scales_with_tight_caps() {
    let mut sc = flat(1, 1);
    sc.imax_local[0] = 0.25;
    assert_relative_eq!(lambda_max(&sc), 4.0 / 2f64.ln(), max_relative = 1e-14);
}

#[test]
fn tau_derivative_bound_example() {
    // Δμ = √(2π), σ1 = 1 makes the bound on |∂Pmiss/∂τ̂| exactly one.
    let sc = flat(1, 2);
    let dm = (2.0 * std::f64::consts::PI).sqrt();
    let st = DetectorStats { mu0: 1.0, mu1: 1.0 + dm, sigma0: 1.0, sigma1: 1.0 };
    let model = SensingModel { stats: vec![vec![st; 2]], f: vec![10.0], frame: vec![1.0] };
    let b = derivative_bounds(&sc, &model);
    assert_relative_eq!(b.tau[0][0], 1.0, max_relative = 1e-15);
    assert_relative_eq!(b.tau[0][1], 1.0, max_relative = 1e-15);
}

#[test]
fn derivative_bounds_hold_on_the_feasible_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for (seed, snr_db) in [(1u64, -3.0), (2, 0.0), (3, 3.0), (4, 6.0)] {
        let sc = common::conditioned(seed, 2, 4, 1e-2, 0.1);
        let model = SensingModel::from_snr_db(2, 4, snr_db, 10.0, 1.0);
        let b = derivative_bounds(&sc, &model);
        for _ in 0..125 {
            for q in 0..2 {
                let x = random_feasible(q, &sc, &model, &mut rng).unwrap();
                let (t, pfa) = (x[0], x[x.len() - 1]);
                for k in 0..4 {
                    let d = miss_derivatives(pfa, t, model.stat(q, k));
                    let slack = 1.0 + 1e-12;
                    assert!(d.d_tau.abs() <= b.tau[q][k] * slack, "τ̂ bound at {x:?}");
                    assert!(d.d_pfa.abs() <= b.pfa[q][k] * slack, "pfa bound at {x:?}");
                    assert!(d.d_tau_pfa.abs() <= b.mixed[q][k] * slack, "mixed bound at {x:?}");
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 4000);
}

#[test]
fn best_responses_respect_the_power_floor() {
    let cfg = BrConfig::default();
    for seed in 1..=6u64 {
        let sc = common::conditioned(seed, 2, 4, 1e-2, 0.1);
        let model = SensingModel::from_snr_db(2, 4, 0.0, 10.0, 1.0);
        let t = default_t(&sc);
        let profile = Profile::new((0..2).map(|q| Strategy::from_slice(&cold_start(q, &sc, &model).unwrap())).collect());
        for q in 0..2 {
            let floor = power_floor(q, t, &sc, &model);
            let ctx = PlayerContext::new(q, &profile, &sc, &model);
            let br = best_response(&ctx, 0.0, t, None, &cfg).unwrap();
            assert!(br.x.sum_power() >= floor.floor, "seed {seed} player {q}: {} < {}", br.x.sum_power(), floor.floor);
            assert!(floor.floor > 0.0);
        }
    }
}
