#![allow(dead_code)]

use cogneq_core::network::{generate_scenario, GeneratorParams, Scenario};

/// Desk instance with strong direct links, unit noise and unit masks.
///
/// Cross gains are scaled by `cross` and the gains towards the primary
/// receiver by `pu`; `cross = 1e-8, pu = 1e-6` gives weakly coupled players
/// on which every sufficient condition holds.
pub fn conditioned(seed: u64, players: usize, carriers: usize, cross: f64, pu: f64) -> Scenario {
    let p = GeneratorParams {
        players,
        carriers,
        seed,
        distance_ratio: 1.0,
        path_loss_exponent: 1.0,
        ..Default::default()
    };
    let mut sc = generate_scenario(&p).unwrap();
    let l = p.fir_taps as f64;
    for q in 0..players {
        for r in 0..players {
            for k in 0..carriers {
                let v = sc.h[q][r][k] * l;
                sc.h[q][r][k] = if q == r { 0.5 + v } else { cross * v };
            }
        }
        for k in 0..carriers {
            sc.w[q][k] *= l * pu;
            sc.g[q][k] = sc.w[q][k];
            sc.noise[q][k] = 1.0;
            sc.pmax[q][k] = 1.0;
        }
        sc.power_budget[q] = carriers as f64 * 0.5;
    }
    sc
}

/// Weakly coupled instance passing every sufficient condition.
pub fn weakly_coupled(seed: u64, players: usize, carriers: usize) -> Scenario {
    conditioned(seed, players, carriers, 1e-8, 1e-6)
}

/// Instance whose shared interference cap binds at equilibrium.
pub fn binding_global(seed: u64, players: usize, carriers: usize) -> Scenario {
    let mut sc = conditioned(seed, players, carriers, 1e-2, 0.1);
    sc.imax_local = vec![0.3; players];
    sc.imax_global = 0.3;
    sc
}
