//! Experiment scenarios: link budgets, user drops, and parameter sweeps
//! comparing the morphable surface against the rigid-array baseline.
//!
//! A scenario fixes the carrier, bandwidth, noise density, user geometry
//! (uniform over a disk at a configurable distance), powers, and the array
//! grid. A sweep varies one axis (transmit power, element count, or morphing
//! range), runs the optimizer for every seeded user drop, evaluates the
//! rigid baseline (flat surface, no optimization), and aggregates means and
//! relative gains. All dBm/watt conversions live in this module.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{FimError, Result};
use crate::estimation::PilotConfig;
use crate::geometry::{ArrayConfig, MorphingVector};
use crate::model::FimModel;
use crate::pgm::{multi_start, PgmConfig, Termination};
use crate::se::SystemParams;
use crate::seeding::{derive_seed, stream_rng};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Noise power in watts from a PSD in dBm/Hz and a bandwidth in Hz.
pub fn noise_power(psd_dbm_hz: f64, bandwidth_hz: f64) -> f64 {
    dbm_to_watts(psd_dbm_hz + 10.0 * bandwidth_hz.log10())
}

/// Average intensity attenuation model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathLossModel {
    /// `mu = (lambda / (4 pi d))^2`.
    FreeSpace,
    /// Free-space at a 1 m reference, then `d^-exponent`.
    LogDistance { exponent: f64 },
}

/// Attenuation at a given 3-D distance.
pub fn path_loss(model: PathLossModel, distance_m: f64, wavelength: f64) -> Result<f64> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(FimError::InvalidParameter(format!(
            "path-loss distance must be positive, got {distance_m}"
        )));
    }
    let fs_at = |d: f64| (wavelength / (4.0 * std::f64::consts::PI * d)).powi(2);
    Ok(match model {
        PathLossModel::FreeSpace => fs_at(distance_m),
        PathLossModel::LogDistance { exponent } => fs_at(1.0) * distance_m.powf(-exponent),
    })
}

/// Full experiment description.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    /// Radius of the user disk in meters.
    pub user_radius_m: f64,
    /// Distance from the transmitter to the disk center in meters.
    pub user_distance_m: f64,
    pub users: usize,
    pub drops: usize,
    pub power_dbm: f64,
    pub train_power_dbm: f64,
    /// Coherence-block length `tau_c` in channel uses.
    pub coherence_block: usize,
    /// Pilot length; defaults to the number of users.
    pub pilot_len: Option<usize>,
    pub grid_x: usize,
    pub grid_z: usize,
    /// Element spacing in wavelengths (`d_h = d_v`).
    pub spacing_wl: f64,
    /// Morphing range in wavelengths.
    pub zeta_wl: f64,
    /// Element area override in square meters; defaults to `d_h * d_v`.
    pub element_area_m2: Option<f64>,
    pub path_loss: PathLossModel,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 3.5e9,
            bandwidth_hz: 20e6,
            noise_psd_dbm_hz: -174.0,
            user_radius_m: 5.0,
            user_distance_m: 100.0,
            users: 4,
            drops: 100,
            power_dbm: 30.0,
            train_power_dbm: 10.0,
            coherence_block: 200,
            pilot_len: None,
            grid_x: 8,
            grid_z: 8,
            spacing_wl: 0.25,
            zeta_wl: 0.5,
            element_area_m2: None,
            path_loss: PathLossModel::FreeSpace,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn noise_power_w(&self) -> f64 {
        noise_power(self.noise_psd_dbm_hz, self.bandwidth_hz)
    }

    pub fn pilot_length(&self) -> usize {
        self.pilot_len.unwrap_or(self.users)
    }

    pub fn array_config(&self) -> Result<ArrayConfig> {
        let lambda = self.wavelength();
        ArrayConfig::new(
            self.grid_x,
            self.grid_z,
            self.spacing_wl * lambda,
            self.spacing_wl * lambda,
            lambda,
            self.zeta_wl * lambda,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("user_distance_m", self.user_distance_m),
            ("spacing_wl", self.spacing_wl),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FimError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        // a zero radius is legal: all users collapse onto the disk center
        if !(self.user_radius_m.is_finite() && self.user_radius_m >= 0.0) {
            return Err(FimError::InvalidParameter(format!(
                "user_radius_m must be nonnegative, got {}",
                self.user_radius_m
            )));
        }
        if self.users == 0 || self.drops == 0 {
            return Err(FimError::InvalidParameter(
                "users and drops must be at least 1".into(),
            ));
        }
        if self.zeta_wl < 0.0 || !self.zeta_wl.is_finite() {
            return Err(FimError::InvalidParameter(format!(
                "zeta_wl must be nonnegative, got {}",
                self.zeta_wl
            )));
        }
        if self.user_distance_m <= self.user_radius_m {
            return Err(FimError::InvalidParameter(
                "user disk must not contain the transmitter".into(),
            ));
        }
        self.array_config()?;
        // Pilot/system construction double-checks tau, powers, prelog.
        self.build_model(vec![1e-9; self.users])?;
        Ok(())
    }

    /// Assembles the evaluation model for one set of user attenuations.
    pub fn build_model(&self, attenuations: Vec<f64>) -> Result<FimModel> {
        let array = self.array_config()?;
        let element_area = self.element_area_m2.unwrap_or(array.d_h * array.d_v);
        let pilot = PilotConfig::new(
            self.pilot_length(),
            dbm_to_watts(self.train_power_dbm),
            self.noise_power_w(),
            self.coherence_block,
            self.users,
        )?;
        let system = SystemParams::new(dbm_to_watts(self.power_dbm), &pilot, self.users)?;
        FimModel::new(array, element_area, attenuations, pilot, system)
    }
}

/// One user placement.
#[derive(Debug, Clone, Copy)]
pub struct UserDrop {
    /// Position in the ground plane, transmitter at the origin.
    pub position: [f64; 2],
    /// 3-D distance to the transmitter in meters.
    pub distance_m: f64,
    /// Average intensity attenuation (linear).
    pub attenuation: f64,
}

/// Places `users` points uniformly over the disk and evaluates the path
/// loss at each.
pub fn drop_users<R: Rng>(sc: &ScenarioConfig, rng: &mut R) -> Result<Vec<UserDrop>> {
    let lambda = sc.wavelength();
    (0..sc.users)
        .map(|_| {
            let radius = sc.user_radius_m * rng.random_range(0.0f64..=1.0).sqrt();
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let x = radius * angle.cos();
            let y = sc.user_distance_m + radius * angle.sin();
            let distance = (x * x + y * y).sqrt();
            Ok(UserDrop {
                position: [x, y],
                distance_m: distance,
                attenuation: path_loss(sc.path_loss, distance, lambda)?,
            })
        })
        .collect()
}

/// Optimizer knobs exposed to configuration files.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub step0_wavelengths: f64,
    pub shrink: f64,
    pub c1: f64,
    pub max_iters: usize,
    pub obj_tol: f64,
    pub map_tol: f64,
    pub restarts: usize,
    pub include_flat_start: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            step0_wavelengths: 0.1,
            shrink: 0.5,
            c1: 1e-4,
            max_iters: 500,
            obj_tol: 1e-8,
            map_tol: 1e-6,
            restarts: 4,
            include_flat_start: true,
        }
    }
}

impl OptimizerSettings {
    pub fn pgm_config(&self, array: &ArrayConfig, seed: u64) -> PgmConfig {
        let mut cfg = PgmConfig::for_array(array);
        cfg.step0 = self.step0_wavelengths * array.wavelength;
        cfg.shrink = self.shrink;
        cfg.c1 = self.c1;
        cfg.max_iters = self.max_iters;
        cfg.obj_tol = self.obj_tol;
        cfg.map_tol = self.map_tol;
        cfg.restarts = self.restarts;
        cfg.include_flat_start = self.include_flat_start;
        cfg.seed = seed;
        cfg
    }
}

/// Swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Transmit power values in dBm.
    Power(Vec<f64>),
    /// Square-grid side lengths (side s gives `N = s^2` elements).
    Elements(Vec<usize>),
    /// Morphing ranges in wavelengths.
    MorphingRange(Vec<f64>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Power(_) => "power_dbm",
            SweepAxis::Elements(_) => "grid_side",
            SweepAxis::MorphingRange(_) => "zeta_wavelengths",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Power(v) => v.len(),
            SweepAxis::Elements(v) => v.len(),
            SweepAxis::MorphingRange(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, idx: usize) -> f64 {
        match self {
            SweepAxis::Power(v) => v[idx],
            SweepAxis::Elements(v) => v[idx] as f64,
            SweepAxis::MorphingRange(v) => v[idx],
        }
    }

    fn apply(&self, idx: usize, sc: &ScenarioConfig) -> ScenarioConfig {
        let mut point = sc.clone();
        match self {
            SweepAxis::Power(v) => point.power_dbm = v[idx],
            SweepAxis::Elements(v) => {
                point.grid_x = v[idx];
                point.grid_z = v[idx];
            }
            SweepAxis::MorphingRange(v) => point.zeta_wl = v[idx],
        }
        point
    }
}

/// Per-drop outcome at one sweep point.
#[derive(Debug, Clone)]
pub struct DropRecord {
    pub drop: usize,
    pub fim_se_nats: f64,
    pub fim_se_bits: f64,
    pub raa_se_nats: f64,
    pub raa_se_bits: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub best_run: usize,
    /// Max-minus-min final objective across the multi-start runs.
    pub multi_start_spread: f64,
}

/// Aggregates for one sweep point.
#[derive(Debug, Clone)]
pub struct PointResult {
    pub value: f64,
    pub drops: Vec<DropRecord>,
    /// Failed drops: `(drop index, error message)`.
    pub failures: Vec<(usize, String)>,
    pub mean_fim_nats: f64,
    pub mean_raa_nats: f64,
    pub mean_fim_bits: f64,
    pub mean_raa_bits: f64,
    /// Relative gain of the morphable surface over the rigid baseline, in
    /// percent of the baseline mean.
    pub gain_percent: f64,
    /// 95% confidence half-widths of the means (normal approximation).
    pub fim_ci95_nats: f64,
    pub raa_ci95_nats: f64,
}

/// Results over the whole sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis_name: String,
    pub points: Vec<PointResult>,
}

impl SweepResult {
    pub fn total_failures(&self) -> usize {
        self.points.iter().map(|p| p.failures.len()).sum()
    }
}

fn run_drop(sc: &ScenarioConfig, opt: &OptimizerSettings, drop: usize) -> Result<DropRecord> {
    // Both the user positions and the optimizer starting points depend only
    // on (seed, drop), not on the sweep point: sweep points share common
    // random numbers, which pairs the comparisons across the axis.
    let mut rng = stream_rng(sc.seed, drop as u64);
    let drops = drop_users(sc, &mut rng)?;
    let model = sc.build_model(drops.iter().map(|d| d.attenuation).collect())?;

    let flat = MorphingVector::flat(model.elements());
    let raa = model.evaluate(&flat)?;

    let pgm_seed = derive_seed(sc.seed, 0x6f70_7400 + drop as u64);
    let array = model.array.clone();
    let pgm = opt.pgm_config(&array, pgm_seed);
    let ms = multi_start(&model, &pgm)?;

    Ok(DropRecord {
        drop,
        fim_se_nats: ms.best.best.se_nats,
        fim_se_bits: ms.best.best.se_bits,
        raa_se_nats: raa.se_nats,
        raa_se_bits: raa.se_bits,
        iterations: ms.best.iterations(),
        termination: ms.best.termination,
        best_run: ms.best_run,
        multi_start_spread: ms.se_spread(),
    })
}

fn aggregate_point(
    value: f64,
    drops: Vec<DropRecord>,
    failures: Vec<(usize, String)>,
) -> PointResult {
    let n = drops.len().max(1) as f64;
    let mean = |f: &dyn Fn(&DropRecord) -> f64| drops.iter().map(f).sum::<f64>() / n;
    let mean_fim_nats = mean(&|d| d.fim_se_nats);
    let mean_raa_nats = mean(&|d| d.raa_se_nats);
    let ci = |f: &dyn Fn(&DropRecord) -> f64, m: f64| {
        if drops.len() < 2 {
            return 0.0;
        }
        let var = drops.iter().map(|d| (f(d) - m).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * (var / n).sqrt()
    };
    PointResult {
        value,
        mean_fim_nats,
        mean_raa_nats,
        mean_fim_bits: mean(&|d| d.fim_se_bits),
        mean_raa_bits: mean(&|d| d.raa_se_bits),
        gain_percent: if mean_raa_nats > 0.0 {
            (mean_fim_nats - mean_raa_nats) / mean_raa_nats * 100.0
        } else {
            0.0
        },
        fim_ci95_nats: ci(&|d| d.fim_se_nats, mean_fim_nats),
        raa_ci95_nats: ci(&|d| d.raa_se_nats, mean_raa_nats),
        drops,
        failures,
    }
}

/// Runs the sweep: per point and per seeded drop, optimize the morphable
/// surface (multi-start, flat start included by default) and evaluate the
/// rigid baseline. Drops run in parallel; failed drops are recorded and
/// excluded from the aggregates.
pub fn run_sweep(
    sc: &ScenarioConfig,
    axis: &SweepAxis,
    opt: &OptimizerSettings,
) -> Result<SweepResult> {
    run_sweep_with(sc, axis, opt, |_, _| {})
}

/// [`run_sweep`] with a per-point callback for progress reporting.
pub fn run_sweep_with<F: FnMut(usize, &PointResult)>(
    sc: &ScenarioConfig,
    axis: &SweepAxis,
    opt: &OptimizerSettings,
    mut on_point: F,
) -> Result<SweepResult> {
    if axis.is_empty() {
        return Err(FimError::InvalidParameter("sweep axis is empty".into()));
    }
    sc.validate()?;
    let mut points = Vec::with_capacity(axis.len());
    for idx in 0..axis.len() {
        let point_sc = axis.apply(idx, sc);
        point_sc.validate()?;
        let outcomes: Vec<(usize, Result<DropRecord>)> = (0..point_sc.drops)
            .into_par_iter()
            .map(|drop| (drop, run_drop(&point_sc, opt, drop)))
            .collect();
        let mut drops = Vec::with_capacity(point_sc.drops);
        let mut failures = Vec::new();
        for (drop, outcome) in outcomes {
            match outcome {
                Ok(rec) => drops.push(rec),
                Err(e) => failures.push((drop, e.to_string())),
            }
        }
        let point = aggregate_point(axis.value(idx), drops, failures);
        on_point(idx, &point);
        points.push(point);
    }
    Ok(SweepResult {
        axis_name: axis.name().to_string(),
        points,
    })
}
