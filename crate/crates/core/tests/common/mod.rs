#![allow(dead_code)]

use manhattan_layout::pipeline::{run_pipeline, ScenarioConfig, Stage};
use manhattan_layout::solver::compute_delta;
use manhattan_layout::Csr;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small room scenario: random room size, an open three-leg path, noisy range sightings.
pub fn small_room(seed: u64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: f64 = rng.random_range(4.0..7.0);
    let h: f64 = rng.random_range(3.0..5.0);
    let m = 0.8;
    let mut corners = [[m, m], [w - m, m], [w - m, h - m], [m, h - m]];
    let start = rng.random_range(0..4);
    corners.rotate_left(start);
    let legs = rng.random_range(2..4);
    let waypoints: Vec<[f64; 2]> = corners[..=legs].to_vec();
    let text = serde_json::json!({
        "version": 1,
        "name": format!("small_room_{seed}"),
        "world": { "primitives": [ { "type": "room", "min": [0.0, 0.0], "max": [w, h], "height": 2.5 } ] },
        "trajectory": { "waypoints": waypoints, "height": 1.2, "step": 0.4, "closed": false },
        "noise": {
            "odom_sigma": 0.01,
            "odom_bias": [0.004, -0.003, 0.0],
            "range_sigma": 0.02,
            "yaw_sigma": 0.0,
            "seed": seed
        },
        "sensor": { "max_range": 4.0 },
        "solver": { "max_gap": 0.5 }
    });
    ScenarioConfig::from_json(&text.to_string()).expect("generated scenario is valid")
}

/// The optimization problem of a scenario after least squares: `E`, `A`, `b`, `D` and δ.
pub struct Problem {
    pub e: Csr,
    pub a: Csr,
    pub b: Vec<f64>,
    pub d: Csr,
    pub residual_lin: f64,
    pub delta: f64,
}

pub fn problem(cfg: &ScenarioConfig) -> Problem {
    let out = run_pipeline(cfg, Stage::Ls).expect("least-squares stage runs");
    let residual_lin = out.lsq.as_ref().unwrap().residual;
    Problem {
        e: out.system.e.to_csr(),
        a: out.system.a.to_csr(),
        b: out.system.b.clone(),
        d: out.system.d.to_csr(),
        residual_lin,
        delta: compute_delta(residual_lin, cfg.solver.epsilon).unwrap(),
    }
}

/// Random overdetermined system with roughly half its entries zero and full column rank,
/// in sparse form and as the dense reference copy.
pub fn random_system(rng: &mut ChaCha8Rng) -> (Csr, Vec<f64>, DMatrix<f64>, DVector<f64>) {
    loop {
        let n = rng.random_range(1..9);
        let m = n + rng.random_range(0..10);
        let dense = DMatrix::from_fn(m, n, |r, c| {
            if r % n == c || rng.random_bool(0.5) {
                rng.random_range(-2.0..2.0)
            } else {
                0.0
            }
        });
        let sv = dense.clone().svd(false, false).singular_values;
        if sv.min() < 1e-2 * sv.max() {
            continue;
        }
        let b = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        let mut entries = Vec::new();
        for r in 0..m {
            for c in 0..n {
                if dense[(r, c)] != 0.0 {
                    entries.push((r, c, dense[(r, c)]));
                }
            }
        }
        return (Csr::from_triplets(m, n, entries), b.as_slice().to_vec(), dense, b);
    }
}
