//! Optimizer behavior: brute-force grid oracle on the two-element toy,
//! monotonicity, feasibility, first-order conditions, and determinism.

use nalgebra::DVector;

use fim_core::estimation::PilotConfig;
use fim_core::geometry::{ArrayConfig, MorphingVector};
use fim_core::gradient::{grad_sum_se, GradientWorkspace};
use fim_core::model::FimModel;
use fim_core::pgm::{
    kkt_max_violation, multi_start, optimize, random_feasible, PgmConfig, Termination,
};
use fim_core::se::SystemParams;
use fim_core::seeding::stream_rng;

const LAMBDA: f64 = 0.0857;

fn model(n_x: usize, n_z: usize, users: usize, zeta_wl: f64) -> FimModel {
    let spacing = 0.25 * LAMBDA;
    let array = ArrayConfig::new(n_x, n_z, spacing, spacing, LAMBDA, zeta_wl * LAMBDA).unwrap();
    let mus: Vec<f64> = (0..users)
        .map(|k| 4.6e-9 * (1.0 + 0.17 * k as f64))
        .collect();
    let pilot = PilotConfig::new(users, 0.01, 7.96e-14, 200, users).unwrap();
    let system = SystemParams::new(1.0, &pilot, users).unwrap();
    FimModel::new(array, spacing * spacing, mus, pilot, system).unwrap()
}

#[test]
fn two_element_toy_matches_grid_search() {
    let m = model(2, 1, 1, 0.5);
    let zeta = m.array.zeta;

    // 1000-point brute-force grid over the second element's displacement
    let points = 1000;
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0;
    let mut values = Vec::with_capacity(points);
    for i in 0..points {
        let y2 = zeta * i as f64 / (points - 1) as f64;
        let y = MorphingVector::feasible(DVector::from_vec(vec![0.0, y2]), zeta).unwrap();
        let se = m.se_nats(&y).unwrap();
        values.push(se);
        if se > best {
            best = se;
            best_idx = i;
        }
    }
    // local resolution bound from the neighboring grid values
    let neighbor_gap = {
        let lo = best_idx.saturating_sub(1);
        let hi = (best_idx + 1).min(points - 1);
        (best - values[lo]).abs().max((best - values[hi]).abs())
    };

    let mut cfg = PgmConfig::for_array(&m.array);
    cfg.restarts = 4;
    cfg.seed = 11;
    cfg.obj_tol = 1e-300;
    cfg.max_iters = 2000;
    let ms = multi_start(&m, &cfg).unwrap();
    let se_pgm = ms.best.best.se_nats;

    assert!(
        se_pgm >= best - 1e-9 * best.abs(),
        "PGM ({se_pgm}) below grid optimum ({best})"
    );
    assert!(
        se_pgm <= best + neighbor_gap + 1e-9,
        "PGM ({se_pgm}) exceeds grid optimum ({best}) by more than the grid resolution"
    );
}

#[test]
fn accepted_objectives_never_decrease_and_iterates_stay_feasible() {
    let m = model(4, 4, 2, 0.5);
    let mut cfg = PgmConfig::for_array(&m.array);
    cfg.max_iters = 100;
    for seed in 0..3u64 {
        let mut rng = stream_rng(seed, 0);
        let start = random_feasible(m.elements(), m.array.zeta, &mut rng);
        let t = optimize(&m, &cfg, &start).unwrap();
        let mut last = t.initial_se;
        for r in &t.records {
            assert!(
                r.se_nats >= last,
                "objective decreased at iteration {}",
                r.iteration
            );
            last = r.se_nats;
        }
        assert!(t
            .y_opt
            .as_vector()
            .iter()
            .all(|v| (0.0..=m.array.zeta).contains(v)));
    }
}

#[test]
fn first_order_conditions_hold_at_gradient_map_termination() {
    let m = model(4, 4, 2, 0.5);
    let mut cfg = PgmConfig::for_array(&m.array);
    cfg.obj_tol = 1e-300; // force termination by the gradient map
    cfg.max_iters = 5000;
    let mut rng = stream_rng(5, 0);
    let start = random_feasible(m.elements(), m.array.zeta, &mut rng);
    let t = optimize(&m, &cfg, &start).unwrap();
    assert_eq!(t.termination, Termination::GradientMap);

    let y = t.y_opt.as_vector();
    let ws = GradientWorkspace::build(&m, y).unwrap();
    let grad = grad_sum_se(&m, y, &ws).unwrap();
    let violation = kkt_max_violation(y, &grad, m.array.zeta, 1e-6 * m.array.zeta);
    assert!(
        violation <= cfg.map_tol,
        "KKT violation {violation} above {}",
        cfg.map_tol
    );
}

#[test]
fn median_backtracks_stay_small() {
    let m = model(4, 4, 2, 0.5);
    let mut cfg = PgmConfig::for_array(&m.array);
    cfg.max_iters = 60;
    let mut rng = stream_rng(8, 0);
    let start = random_feasible(m.elements(), m.array.zeta, &mut rng);
    let t = optimize(&m, &cfg, &start).unwrap();
    assert!(
        t.median_backtracks() <= 5,
        "median backtracks {}",
        t.median_backtracks()
    );
}

#[test]
fn trajectory_csv_has_expected_columns() {
    let m = model(2, 2, 1, 0.25);
    let cfg = PgmConfig::for_array(&m.array);
    let t = optimize(&m, &cfg, &MorphingVector::flat(4)).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,se_nats,se_bits,step,grad_map_norm"
    );
    assert_eq!(lines.count(), t.iterations());
}

#[test]
fn restart_count_one_equals_plain_optimize() {
    let m = model(3, 3, 2, 0.5);
    let mut cfg = PgmConfig::for_array(&m.array);
    cfg.restarts = 1;
    cfg.include_flat_start = true;
    cfg.max_iters = 40;
    let ms = multi_start(&m, &cfg).unwrap();
    let direct = optimize(&m, &cfg, &MorphingVector::flat(m.elements())).unwrap();
    assert_eq!(
        ms.best.best.se_nats.to_bits(),
        direct.best.se_nats.to_bits()
    );
    assert_eq!(ms.runs.len(), 1);
}
