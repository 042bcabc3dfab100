//! Sweep-level invariants: element-count monotonicity at fixed spacing and
//! the default element-area convention.

use fim_core::scenario::{run_sweep, OptimizerSettings, ScenarioConfig, SweepAxis};

#[test]
fn mean_se_nondecreasing_in_element_count() {
    let sc = ScenarioConfig {
        users: 2,
        drops: 6,
        zeta_wl: 0.25,
        ..ScenarioConfig::default()
    };
    let opt = OptimizerSettings {
        restarts: 2,
        ..OptimizerSettings::default()
    };
    let result = run_sweep(&sc, &SweepAxis::Elements(vec![4, 6, 8]), &opt).unwrap();
    let margin = result
        .points
        .iter()
        .flat_map(|p| p.drops.iter().map(|d| d.multi_start_spread))
        .fold(0.0f64, f64::max);
    for w in result.points.windows(2) {
        assert!(
            w[1].mean_raa_nats >= w[0].mean_raa_nats - 1e-12,
            "baseline SE decreased with N: {} -> {}",
            w[0].mean_raa_nats,
            w[1].mean_raa_nats
        );
        assert!(
            w[1].mean_fim_nats >= w[0].mean_fim_nats - margin - 1e-12,
            "optimized SE decreased with N beyond noise: {} -> {}",
            w[0].mean_fim_nats,
            w[1].mean_fim_nats
        );
    }
}

#[test]
fn element_area_defaults_to_spacing_product() {
    let sc = ScenarioConfig::default();
    let array = sc.array_config().unwrap();
    let model = sc.build_model(vec![1e-9; sc.users]).unwrap();
    assert_eq!(model.element_area, array.d_h * array.d_v);

    let with_override = ScenarioConfig {
        element_area_m2: Some(1.23e-4),
        ..sc
    };
    let model = with_override.build_model(vec![1e-9; 4]).unwrap();
    assert_eq!(model.element_area, 1.23e-4);
}
