//! Oracle suites: quadrature vs. the correlation closed form,
//! finite differences vs. the analytic gradient, and Monte Carlo vs. the
//! estimation and spectral-efficiency closed forms.
//!
//! Each suite emits check rows with a measured error, a tolerance, and a
//! pass/fail status; informational rows (no tolerance) report quantities
//! that are tracked but not asserted, such as the integral's deviation from
//! the closed form for y-displaced element pairs.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;

use crate::correlation::sinc;
use crate::error::Result;
use crate::estimation::estimation_stats;
use crate::geometry::{MorphingVector, PositionSet};
use crate::gradient::{finite_difference_gradient, grad_signal, grad_sum_se, GradientWorkspace};
use crate::model::FimModel;
use crate::montecarlo::{estimate_uatf_terms, plane_wave_channel, McConfig};
use crate::quadrature::correlation_quadrature;
use crate::scenario::{drop_users, ScenarioConfig};
use crate::se::signal_power;
use crate::seeding::stream_rng;

type C64 = Complex<f64>;

/// Validation-suite sizes and knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSettings {
    /// Monte Carlo realizations.
    pub realizations: usize,
    /// Quadrature order per axis.
    pub quadrature_order: usize,
    /// Number of random element pairs per quadrature check.
    pub quadrature_pairs: usize,
    /// Number of random configurations in the gradient suite.
    pub fd_configs: usize,
    /// Finite-difference step in meters.
    pub fd_step_m: f64,
    /// Self-test knob: relative bias applied to the analytic gradient.
    pub gradient_fault_injection: f64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            realizations: 20_000,
            quadrature_order: 200,
            quadrature_pairs: 120,
            fd_configs: 50,
            fd_step_m: 1e-7,
            gradient_fault_injection: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Info,
}

impl std::fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Info => "info",
        })
    }
}

/// One validation check or informational measurement.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub suite: String,
    pub name: String,
    pub observed: f64,
    pub tolerance: Option<f64>,
    pub status: CheckStatus,
    pub note: String,
}

impl CheckRow {
    pub fn check(
        suite: &str,
        name: impl Into<String>,
        observed: f64,
        tolerance: f64,
        note: impl Into<String>,
    ) -> Self {
        let status = if observed.is_finite() && observed <= tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            suite: suite.into(),
            name: name.into(),
            observed,
            tolerance: Some(tolerance),
            status,
            note: note.into(),
        }
    }

    pub fn info(
        suite: &str,
        name: impl Into<String>,
        observed: f64,
        note: impl Into<String>,
    ) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            observed,
            tolerance: None,
            status: CheckStatus::Info,
            note: note.into(),
        }
    }
}

/// All rows from one validation run.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub rows: Vec<CheckRow>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != CheckStatus::Fail)
    }

    pub fn failed_suites(&self) -> Vec<String> {
        let mut suites: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.status == CheckStatus::Fail)
            .map(|r| r.suite.clone())
            .collect();
        suites.dedup();
        suites
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.rows {
            let tol = match r.tolerance {
                Some(t) => format!("{t:.3e}"),
                None => "-".into(),
            };
            writeln!(
                w,
                "[{}] {:<16} {:<52} observed {:>12.6e}  tol {:>9}  {}",
                r.status, r.suite, r.name, r.observed, tol, r.note
            )?;
        }
        writeln!(
            w,
            "validation: {}",
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "suite,name,observed,tolerance,status,note")?;
        for r in &self.rows {
            let tol = match r.tolerance {
                Some(t) => format!("{t:.6e}"),
                None => String::new(),
            };
            writeln!(
                w,
                "{},{},{:.12e},{},{},\"{}\"",
                r.suite, r.name, r.observed, tol, r.status, r.note
            )?;
        }
        Ok(())
    }
}

/// Quadrature oracle vs. the sinc closed form on random element pairs of
/// the configured grid.
///
/// Coplanar pairs (equal y) are asserted; y-displaced pairs are reported.
pub fn quadrature_suite(sc: &ScenarioConfig, vs: &ValidationSettings) -> Result<Vec<CheckRow>> {
    let suite = "quadrature";
    let array = sc.array_config()?;
    if array.element_count() < 2 {
        return Ok(vec![CheckRow::info(
            suite,
            "skipped",
            0.0,
            "grid has fewer than two elements",
        )]);
    }
    let lambda = array.wavelength;
    let zeta = array.zeta.max(0.25 * lambda);
    let mut rng = stream_rng(sc.seed, 0x71);
    let k0 = 2.0 * std::f64::consts::PI / lambda;

    let hi_x = array.n_x as i64 - 1;
    let hi_z = array.n_z as i64 - 1;
    let lattice_offset = |rng: &mut rand_chacha::ChaCha8Rng| -> (f64, f64) {
        loop {
            let a = if hi_x == 0 {
                0
            } else {
                rng.random_range(-hi_x..=hi_x)
            };
            let b = if hi_z == 0 {
                0
            } else {
                rng.random_range(-hi_z..=hi_z)
            };
            if a != 0 || b != 0 {
                return (a as f64 * array.d_h, b as f64 * array.d_v);
            }
        }
    };

    let mut coplanar_max = 0.0f64;
    for _ in 0..vs.quadrature_pairs {
        let (dx, dz) = lattice_offset(&mut rng);
        let d = (dx * dx + dz * dz).sqrt();
        let q = correlation_quadrature([dx, 0.0, dz], lambda, vs.quadrature_order);
        let err = (q - C64::new(sinc(k0 * d), 0.0)).norm();
        coplanar_max = coplanar_max.max(err);
    }

    let mut displaced_max = 0.0f64;
    let mut displaced_im_max = 0.0f64;
    for _ in 0..vs.quadrature_pairs / 2 {
        let (dx, dz) = lattice_offset(&mut rng);
        let mut dy = 0.0;
        while dy == 0.0 {
            dy = rng.random_range(-zeta..=zeta);
        }
        let d = (dx * dx + dy * dy + dz * dz).sqrt();
        let q = correlation_quadrature([dx, dy, dz], lambda, vs.quadrature_order);
        displaced_max = displaced_max.max((q - C64::new(sinc(k0 * d), 0.0)).norm());
        displaced_im_max = displaced_im_max.max(q.im.abs());
    }

    Ok(vec![
        CheckRow::check(
            suite,
            "coplanar pairs: max |integral - sinc|",
            coplanar_max,
            1e-6,
            format!(
                "{} pairs, order {} per axis",
                vs.quadrature_pairs, vs.quadrature_order
            ),
        ),
        CheckRow::info(
            suite,
            "y-displaced pairs: max |integral - sinc|",
            displaced_max,
            "model uses the sinc form; deviation tracked, not asserted",
        ),
        CheckRow::info(
            suite,
            "y-displaced pairs: max |Im integral|",
            displaced_im_max,
            "front-half-space integral is complex off the surface plane",
        ),
    ])
}

/// Random desk-scale configuration for the gradient suite: grid of at most
/// 25 elements, up to four users, randomized spacing, range, link budget,
/// and a random interior-ish morphing state.
pub fn random_desk_model<R: Rng>(
    sc: &ScenarioConfig,
    rng: &mut R,
) -> Result<(FimModel, DVector<f64>)> {
    const GRIDS: &[(usize, usize)] = &[
        (2, 2),
        (3, 2),
        (2, 4),
        (3, 3),
        (4, 3),
        (4, 4),
        (5, 4),
        (5, 5),
    ];
    let (n_x, n_z) = GRIDS[rng.random_range(0..GRIDS.len())];
    let users = rng.random_range(1..=4usize.min(n_x * n_z));
    let point = ScenarioConfig {
        grid_x: n_x,
        grid_z: n_z,
        users,
        spacing_wl: rng.random_range(0.125..0.5),
        zeta_wl: rng.random_range(0.125..0.5),
        power_dbm: rng.random_range(20.0..40.0),
        train_power_dbm: rng.random_range(0.0..15.0),
        pilot_len: None,
        ..sc.clone()
    };
    let drops = drop_users(&point, rng)?;
    let model = point.build_model(drops.iter().map(|d| d.attenuation).collect())?;
    let zeta = model.array.zeta;
    let y = DVector::from_fn(model.elements(), |_, _| rng.random_range(0.0..=zeta));
    Ok((model, y))
}

fn fd_relative_error(model: &FimModel, y: &DVector<f64>, h: f64, bias: f64) -> Result<f64> {
    let ws = GradientWorkspace::build(model, y)?;
    let analytic = grad_sum_se(model, y, &ws)? * (1.0 + bias);
    let fd = finite_difference_gradient(|p| model.se_raw(p), y, h)?;
    let scale = fd.amax().max(1e-30);
    Ok((analytic - fd).amax() / scale)
}

/// Analytic gradient vs. central finite differences over random desk-scale
/// configurations, with an h-sweep and per-term isolation reported.
pub fn gradient_suite(sc: &ScenarioConfig, vs: &ValidationSettings) -> Result<Vec<CheckRow>> {
    let suite = "gradient";
    let mut rng = stream_rng(sc.seed, 0x9d);
    let bias = vs.gradient_fault_injection;

    let mut rows = Vec::new();
    let mut max_err = 0.0f64;
    let mut first: Option<(FimModel, DVector<f64>)> = None;
    for _ in 0..vs.fd_configs {
        let (model, y) = random_desk_model(sc, &mut rng)?;
        let err = fd_relative_error(&model, &y, vs.fd_step_m, bias)?;
        max_err = max_err.max(err);
        if first.is_none() {
            first = Some((model, y));
        }
    }
    rows.push(CheckRow::check(
        suite,
        "max-norm relative error vs finite differences",
        max_err,
        1e-4,
        format!(
            "{} random configs, h = {:.1e} m",
            vs.fd_configs, vs.fd_step_m
        ),
    ));

    if let Some((model, y)) = first {
        // step-size sweep documents the agreement plateau
        let lambda = model.array.wavelength;
        for scale in [1e-5, 1e-6, 1e-7] {
            let h = scale * lambda;
            let err = fd_relative_error(&model, &y, h, bias)?;
            rows.push(CheckRow::info(
                suite,
                format!("h-sweep error at h = {scale:.0e} lambda"),
                err,
                "agreement plateau across step sizes",
            ));
        }

        // per-term isolation: signal term against its own finite difference
        let ws = GradientWorkspace::build(&model, &y)?;
        let mut signal_err = 0.0f64;
        for k in 0..model.users() {
            let fd = finite_difference_gradient(
                |p| {
                    let (_, corr) = model.correlation_raw(p)?;
                    let stats = estimation_stats(&corr, &model.pilot)?;
                    Ok(signal_power(&stats.psi[k]))
                },
                &y,
                vs.fd_step_m,
            )?;
            let analytic =
                DVector::from_fn(model.elements(), |n, _| grad_signal(&model, &ws, k, n))
                    * (1.0 + bias);
            signal_err = signal_err.max((analytic - &fd).amax() / fd.amax().max(1e-30));
        }
        rows.push(CheckRow::info(
            suite,
            "signal-term relative error vs finite differences",
            signal_err,
            "isolates the signal gradient term",
        ));
    }
    Ok(rows)
}

/// Desk-scale model used by the Monte Carlo suite: 4x4 grid, two users,
/// seeded drop and morphing state, link budget from the scenario.
pub fn desk_mc_model(sc: &ScenarioConfig) -> Result<(FimModel, MorphingVector)> {
    let point = ScenarioConfig {
        grid_x: 4,
        grid_z: 4,
        users: 2,
        pilot_len: None,
        ..sc.clone()
    };
    let mut rng = stream_rng(sc.seed, 0x4d43);
    let drops = drop_users(&point, &mut rng)?;
    let model = point.build_model(drops.iter().map(|d| d.attenuation).collect())?;
    let zeta = model.array.zeta;
    let y = DVector::from_fn(model.elements(), |_, _| rng.random_range(0.0..=zeta));
    Ok((model, MorphingVector::feasible(y, zeta)?))
}

fn rel_frob_error(emp: &DMatrix<C64>, reference: &DMatrix<f64>) -> f64 {
    let reference_c = reference.map(|v| C64::new(v, 0.0));
    (emp - &reference_c).norm() / reference_c.norm().max(1e-300)
}

/// Monte Carlo estimates vs. the closed-form statistics at the desk scale.
///
/// `tolerance` is relative (0.03 for seeded runs; reruns with fresh seeds
/// are expected to hold at 0.05).
pub fn monte_carlo_suite(
    sc: &ScenarioConfig,
    vs: &ValidationSettings,
    tolerance: f64,
    seed_offset: u64,
) -> Result<Vec<CheckRow>> {
    let suite = "monte-carlo";
    let (model, y) = desk_mc_model(sc)?;
    let mc = McConfig {
        batches: 50,
        accumulate_covariances: true,
        realizations: vs.realizations,
        seed: crate::seeding::derive_seed(sc.seed, 0x4d43 + seed_offset),
    };
    let est = estimate_uatf_terms(&model, &y, &mc)?;
    let (corr, stats) = model.stats(&y)?;
    let breakdown = crate::se::se_from_stats(&corr, &stats, &model.system)?;

    let mut rows = Vec::new();
    let note = format!(
        "N = {}, K = {}, M = {}",
        model.elements(),
        model.users(),
        est.realizations
    );
    for k in 0..model.users() {
        rows.push(CheckRow::check(
            suite,
            format!("user {k}: estimate covariance rel Frobenius error"),
            rel_frob_error(&est.psi_emp[k], &stats.psi[k]),
            tolerance,
            note.clone(),
        ));
        rows.push(CheckRow::check(
            suite,
            format!("user {k}: error covariance rel Frobenius error"),
            rel_frob_error(&est.mse_emp[k], &stats.mse[k]),
            tolerance,
            note.clone(),
        ));
        let psi_norm = stats.psi[k].norm();
        rows.push(CheckRow::check(
            suite,
            format!("user {k}: orthogonality |E{{err est^H}}| / |Psi|"),
            est.error_estimate_cross[k].norm() / psi_norm.max(1e-300),
            tolerance,
            "orthogonality principle".to_string(),
        ));
        // three-way decomposition: MSE_emp + Psi_emp should match the
        // empirical channel covariance
        let recomposed = &est.mse_emp[k] + &est.psi_emp[k];
        let cross = &est.error_estimate_cross[k];
        let decomp = (&recomposed + cross + cross.adjoint() - &est.channel_cov_emp[k]).norm()
            / est.channel_cov_emp[k].norm().max(1e-300);
        rows.push(CheckRow::check(
            suite,
            format!("user {k}: covariance decomposition residual"),
            decomp,
            1e-10,
            "h = est + err exactly per realization".to_string(),
        ));
        let rel = |emp: f64, cf: f64| (emp - cf).abs() / cf.abs().max(1e-300);
        rows.push(CheckRow::check(
            suite,
            format!("user {k}: signal power rel error"),
            rel(est.signal[k], breakdown.signal[k]),
            tolerance,
            format!(
                "emp {:.6e}, closed form {:.6e}, stderr {:.1e}",
                est.signal[k], breakdown.signal[k], est.signal_stderr[k]
            ),
        ));
        rows.push(CheckRow::check(
            suite,
            format!("user {k}: interference power rel error"),
            rel(est.interference[k], breakdown.interference[k]),
            tolerance,
            format!(
                "emp {:.6e}, closed form {:.6e}, stderr {:.1e}",
                est.interference[k], breakdown.interference[k], est.interference_stderr[k]
            ),
        ));
        // variance term identity Var{h^H hhat} = tr(R Psi)
        let var_cf = (&corr.r_users[k] * &stats.psi[k]).trace();
        rows.push(CheckRow::check(
            suite,
            format!("user {k}: variance term vs tr(R Psi)"),
            rel(est.variance_term[k], var_cf),
            tolerance,
            "self-interference variance identity".to_string(),
        ));
        // hardening-approximated variant kept as information: it subtracts
        // tr(Psi^2) and does not match the simulated variance
        let var_hardened = var_cf - (&stats.psi[k] * &stats.psi[k]).trace();
        rows.push(CheckRow::info(
            suite,
            format!("user {k}: hardening-approximated variance rel deviation"),
            rel(est.variance_term[k], var_hardened),
            "tr(R Psi) - tr(Psi^2) variant; reported, not asserted",
        ));
        // cross term pattern sum_{i != k} tr(R_k Psi_i)
        let cross_cf: f64 = (0..model.users())
            .filter(|&i| i != k)
            .map(|i| (&corr.r_users[k] * &stats.psi[i]).trace())
            .sum();
        if cross_cf > 0.0 {
            rows.push(CheckRow::check(
                suite,
                format!("user {k}: cross term vs sum tr(R_k Psi_i)"),
                rel(est.cross_term[k], cross_cf),
                tolerance,
                "term-by-term decomposition".to_string(),
            ));
        }
    }

    let rel = |emp: f64, cf: f64| (emp - cf).abs() / cf.abs().max(1e-300);
    rows.push(CheckRow::check(
        suite,
        "normalization eta rel error",
        rel(est.eta, breakdown.eta),
        tolerance,
        format!(
            "emp {:.6e}, closed form {:.6e}, stderr {:.1e}",
            est.eta, breakdown.eta, est.eta_stderr
        ),
    ));
    rows.push(CheckRow::check(
        suite,
        "sum spectral efficiency rel error",
        rel(est.se_nats, breakdown.se_nats),
        tolerance,
        format!(
            "emp {:.6e} nats, closed form {:.6e} nats, stderr {:.1e}",
            est.se_nats, breakdown.se_nats, est.se_stderr
        ),
    ));
    rows.push(CheckRow::info(
        suite,
        "undersampled (stderr above half tolerance)",
        f64::from(u8::from(est.undersampled(tolerance))),
        "1 means the realization count is too small for the tolerance",
    ));

    // Finite plane-wave sum sanity check of the Gaussian limit.
    let pw = plane_wave_check(sc)?;
    rows.push(CheckRow::info(
        suite,
        "finite plane-wave sum covariance rel error",
        pw,
        "L = 10000 paths, N = 9, M = 1000 draws; Gaussian-limit sanity check",
    ));
    Ok(rows)
}

fn plane_wave_check(sc: &ScenarioConfig) -> Result<f64> {
    let array = ScenarioConfig {
        grid_x: 3,
        grid_z: 3,
        ..sc.clone()
    }
    .array_config()?;
    let lambda = array.wavelength;
    let pos = PositionSet::unconstrained(&array, &DVector::zeros(9))?;
    let r = crate::correlation::correlation_matrix(&pos, lambda);
    let mut rng = stream_rng(sc.seed, 0x5057);
    let m = 1_000;
    let mut cov = DMatrix::<C64>::zeros(9, 9);
    for _ in 0..m {
        let h = plane_wave_channel(&pos, lambda, 1.0, 10_000, &mut rng);
        cov += &h * h.adjoint();
    }
    cov /= C64::new(m as f64, 0.0);
    Ok(rel_frob_error(&cov, &r))
}

/// Runs all three suites at the standard seeded tolerance.
pub fn run_validation(sc: &ScenarioConfig, vs: &ValidationSettings) -> Result<ValidationReport> {
    let mut rows = quadrature_suite(sc, vs)?;
    rows.extend(gradient_suite(sc, vs)?);
    rows.extend(monte_carlo_suite(sc, vs, 0.03, 0)?);
    Ok(ValidationReport { rows })
}
