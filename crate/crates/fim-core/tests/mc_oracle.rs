//! Monte Carlo oracle cross-checks at module scale: degenerate analytic
//! cases and agreement between empirical and closed-form statistics.

use fim_core::estimation::PilotConfig;
use fim_core::geometry::{ArrayConfig, MorphingVector};
use fim_core::model::FimModel;
use fim_core::montecarlo::{estimate_uatf_terms, McConfig};
use fim_core::se::SystemParams;

const LAMBDA: f64 = 0.0857;

/// Single user, near-noise-free pilots, wide spacing so the correlation is
/// essentially the identity: the empirical terms approach the analytic
/// degenerate values S = N^2 and I = N + (sigma^2/P) N.
#[test]
fn single_user_identity_limits() {
    let n_side = 3;
    let n = n_side * n_side;
    // 4-wavelength spacing: off-diagonal correlation is negligible
    let spacing = 4.0 * LAMBDA;
    let array = ArrayConfig::new(n_side, n_side, spacing, spacing, LAMBDA, 0.0).unwrap();
    let pilot = PilotConfig::new(1, 1e9, 1e-6, 200, 1).unwrap(); // essentially perfect training
    let sigma2 = pilot.sigma2;
    let p = 2.0;
    let system = SystemParams::new(p, &pilot, 1).unwrap();
    // element area and attenuation normalized so R = R_fim
    let model = FimModel::new(array, 1.0, vec![1.0], pilot, system).unwrap();

    let est =
        estimate_uatf_terms(&model, &MorphingVector::flat(n), &McConfig::new(40_000, 21)).unwrap();

    let s_expected = (n * n) as f64;
    let i_expected = n as f64 + sigma2 / p * n as f64;
    assert!(
        (est.signal[0] - s_expected).abs() / s_expected < 0.03,
        "S = {} vs {s_expected}",
        est.signal[0]
    );
    assert!(
        (est.interference[0] - i_expected).abs() / i_expected < 0.03,
        "I = {} vs {i_expected}",
        est.interference[0]
    );
    // eta = K / tr(Psi_sum) with Psi ~ I_N
    assert!((est.eta - 1.0 / n as f64).abs() * (n as f64) < 0.03);
}

/// Closed-form sum SE agrees with the simulator across array/user sizes.
#[test]
fn closed_form_se_matches_monte_carlo_across_sizes() {
    for (side, users, seed) in [(3usize, 2usize, 101u64), (4, 4, 102)] {
        let n = side * side;
        let spacing = 0.25 * LAMBDA;
        let array = ArrayConfig::new(side, side, spacing, spacing, LAMBDA, 0.5 * LAMBDA).unwrap();
        let mus: Vec<f64> = (0..users)
            .map(|k| 4.6e-9 * (1.0 + 0.21 * k as f64))
            .collect();
        let pilot = PilotConfig::new(users, 0.01, 7.96e-14, 200, users).unwrap();
        let system = SystemParams::new(1.0, &pilot, users).unwrap();
        let model = FimModel::new(array, spacing * spacing, mus, pilot, system).unwrap();

        let y = MorphingVector::flat(n);
        let est = estimate_uatf_terms(&model, &y, &McConfig::new(20_000, seed)).unwrap();
        let cf = model.evaluate(&y).unwrap();
        let rel = (est.se_nats - cf.se_nats).abs() / cf.se_nats;
        assert!(
            rel < 0.03,
            "N = {n}, K = {users}: SE {} vs {} (rel {rel})",
            est.se_nats,
            cf.se_nats
        );
    }
}

/// The self-interference variance identity Var{h^H hhat} = tr(R Psi) on a
/// correlated, noisy-training case with two users.
#[test]
fn variance_term_matches_trace_identity() {
    let array = ArrayConfig::new(4, 4, 0.25 * LAMBDA, 0.25 * LAMBDA, LAMBDA, 0.5 * LAMBDA).unwrap();
    let mus = vec![3.1e-9, 5.7e-9];
    let pilot = PilotConfig::new(2, 0.01, 7.96e-14, 200, 2).unwrap();
    let system = SystemParams::new(1.0, &pilot, 2).unwrap();
    let area = 0.25 * LAMBDA * 0.25 * LAMBDA;
    let model = FimModel::new(array, area, mus, pilot, system).unwrap();

    let y = MorphingVector::flat(16);
    let est = estimate_uatf_terms(&model, &y, &McConfig::new(20_000, 33)).unwrap();
    let (corr, stats) = model.stats(&y).unwrap();
    for k in 0..2 {
        let expected = (&corr.r_users[k] * &stats.psi[k]).trace();
        let got = est.variance_term[k];
        assert!(
            (got - expected).abs() / expected < 0.05,
            "user {k}: variance {got} vs tr(R Psi) {expected}"
        );
        let cross_expected: f64 = (0..2)
            .filter(|&i| i != k)
            .map(|i| (&corr.r_users[k] * &stats.psi[i]).trace())
            .sum();
        assert!(
            (est.cross_term[k] - cross_expected).abs() / cross_expected < 0.05,
            "user {k}: cross term mismatch"
        );
    }
}
