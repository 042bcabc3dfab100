//! TOML configuration schema for the command-line tools.
//!
//! One file fully defines a run: scenario, array, optimizer, optional sweep
//! axis, and validation-suite sizes. Wavelength-relative lengths (spacing,
//! morphing range) are resolved to meters when the scenario is built.
//! Unknown keys are rejected so typos surface as parse errors with line
//! diagnostics.

use serde::Deserialize;

use crate::error::{FimError, Result};
use crate::scenario::{OptimizerSettings, PathLossModel, ScenarioConfig, SweepAxis};
use crate::validation::ValidationSettings;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: ScenarioSection,
    pub array: ArraySection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub validation: ValidationSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default = "d_carrier")]
    pub carrier_hz: f64,
    #[serde(default = "d_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "d_noise_psd")]
    pub noise_psd_dbm_hz: f64,
    #[serde(default = "d_radius")]
    pub user_circle_radius_m: f64,
    #[serde(default = "d_distance")]
    pub user_circle_distance_m: f64,
    pub users: usize,
    #[serde(default = "d_drops")]
    pub drops: usize,
    pub power_dbm: f64,
    #[serde(default = "d_train_power")]
    pub train_power_dbm: f64,
    #[serde(default = "d_coherence")]
    pub coherence_block: usize,
    #[serde(default)]
    pub pilot_len: Option<usize>,
    #[serde(default = "d_path_loss")]
    pub path_loss: String,
    #[serde(default)]
    pub path_loss_exponent: Option<f64>,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub elements_x: usize,
    pub elements_z: usize,
    pub spacing_wavelengths: f64,
    pub morphing_range_wavelengths: f64,
    #[serde(default)]
    pub element_area_m2: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub step0_wavelengths: f64,
    pub shrink: f64,
    pub sufficient_increase: f64,
    pub max_iters: usize,
    pub objective_tol: f64,
    pub gradient_map_tol: f64,
    pub restarts: usize,
    pub include_flat_start: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let d = OptimizerSettings::default();
        Self {
            step0_wavelengths: d.step0_wavelengths,
            shrink: d.shrink,
            sufficient_increase: d.c1,
            max_iters: d.max_iters,
            objective_tol: d.obj_tol,
            gradient_map_tol: d.map_tol,
            restarts: d.restarts,
            include_flat_start: d.include_flat_start,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// "power" | "elements" | "morphing-range"
    pub axis: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationSection {
    pub realizations: usize,
    pub quadrature_order: usize,
    pub quadrature_pairs: usize,
    pub fd_configs: usize,
    pub fd_step_m: f64,
    /// Self-test knob: relative bias applied to the analytic gradient so the
    /// gradient suite can be made to fail on purpose.
    pub gradient_fault_injection: f64,
}

impl Default for ValidationSection {
    fn default() -> Self {
        let d = ValidationSettings::default();
        Self {
            realizations: d.realizations,
            quadrature_order: d.quadrature_order,
            quadrature_pairs: d.quadrature_pairs,
            fd_configs: d.fd_configs,
            fd_step_m: d.fd_step_m,
            gradient_fault_injection: 0.0,
        }
    }
}

fn d_carrier() -> f64 {
    3.5e9
}
fn d_bandwidth() -> f64 {
    20e6
}
fn d_noise_psd() -> f64 {
    -174.0
}
fn d_radius() -> f64 {
    5.0
}
fn d_distance() -> f64 {
    100.0
}
fn d_drops() -> usize {
    100
}
fn d_train_power() -> f64 {
    10.0
}
fn d_coherence() -> usize {
    200
}
fn d_path_loss() -> String {
    "free-space".into()
}
fn d_seed() -> u64 {
    1
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| FimError::Config(format!("cannot parse configuration: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(FimError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        // Building the scenario exercises all range checks.
        cfg.scenario_config()?.validate()?;
        if let Some(sweep) = &cfg.sweep {
            cfg.resolve_axis(sweep)?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        let path_loss = match self.scenario.path_loss.as_str() {
            "free-space" => PathLossModel::FreeSpace,
            "log-distance" => PathLossModel::LogDistance {
                exponent: self.scenario.path_loss_exponent.ok_or_else(|| {
                    FimError::Config(
                        "scenario.path_loss_exponent is required for log-distance".into(),
                    )
                })?,
            },
            other => {
                return Err(FimError::Config(format!(
                    "scenario.path_loss must be \"free-space\" or \"log-distance\", got {other:?}"
                )))
            }
        };
        Ok(ScenarioConfig {
            carrier_hz: self.scenario.carrier_hz,
            bandwidth_hz: self.scenario.bandwidth_hz,
            noise_psd_dbm_hz: self.scenario.noise_psd_dbm_hz,
            user_radius_m: self.scenario.user_circle_radius_m,
            user_distance_m: self.scenario.user_circle_distance_m,
            users: self.scenario.users,
            drops: self.scenario.drops,
            power_dbm: self.scenario.power_dbm,
            train_power_dbm: self.scenario.train_power_dbm,
            coherence_block: self.scenario.coherence_block,
            pilot_len: self.scenario.pilot_len,
            grid_x: self.array.elements_x,
            grid_z: self.array.elements_z,
            spacing_wl: self.array.spacing_wavelengths,
            zeta_wl: self.array.morphing_range_wavelengths,
            element_area_m2: self.array.element_area_m2,
            path_loss,
            seed: self.scenario.seed,
        })
    }

    pub fn optimizer_settings(&self) -> OptimizerSettings {
        OptimizerSettings {
            step0_wavelengths: self.optimizer.step0_wavelengths,
            shrink: self.optimizer.shrink,
            c1: self.optimizer.sufficient_increase,
            max_iters: self.optimizer.max_iters,
            obj_tol: self.optimizer.objective_tol,
            map_tol: self.optimizer.gradient_map_tol,
            restarts: self.optimizer.restarts,
            include_flat_start: self.optimizer.include_flat_start,
        }
    }

    fn resolve_axis(&self, sweep: &SweepSection) -> Result<SweepAxis> {
        if sweep.values.is_empty() {
            return Err(FimError::Config("sweep.values must not be empty".into()));
        }
        match sweep.axis.as_str() {
            "power" => Ok(SweepAxis::Power(sweep.values.clone())),
            "elements" => {
                let sides = sweep
                    .values
                    .iter()
                    .map(|&v| {
                        if v.fract() == 0.0 && v >= 1.0 {
                            Ok(v as usize)
                        } else {
                            Err(FimError::Config(format!(
                                "sweep.values for the elements axis must be positive integers \
                                 (grid side lengths), got {v}"
                            )))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(SweepAxis::Elements(sides))
            }
            "morphing-range" => {
                if sweep.values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
                    return Err(FimError::Config(
                        "sweep.values for morphing-range must be nonnegative".into(),
                    ));
                }
                Ok(SweepAxis::MorphingRange(sweep.values.clone()))
            }
            other => Err(FimError::Config(format!(
                "sweep.axis must be \"power\", \"elements\", or \"morphing-range\", got {other:?}"
            ))),
        }
    }

    /// The sweep axis, if a `[sweep]` section is present.
    pub fn sweep_axis(&self) -> Result<Option<SweepAxis>> {
        self.sweep
            .as_ref()
            .map(|s| self.resolve_axis(s))
            .transpose()
    }

    pub fn validation_settings(&self) -> ValidationSettings {
        ValidationSettings {
            realizations: self.validation.realizations,
            quadrature_order: self.validation.quadrature_order,
            quadrature_pairs: self.validation.quadrature_pairs,
            fd_configs: self.validation.fd_configs,
            fd_step_m: self.validation.fd_step_m,
            gradient_fault_injection: self.validation.gradient_fault_injection,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1

[scenario]
users = 2
power_dbm = 30.0

[array]
elements_x = 2
elements_z = 2
spacing_wavelengths = 0.25
morphing_range_wavelengths = 0.5
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let sc = cfg.scenario_config().unwrap();
        assert_eq!(sc.users, 2);
        assert_eq!(sc.drops, 100);
        assert_eq!(sc.coherence_block, 200);
        assert_eq!(sc.grid_x, 2);
        assert!((sc.wavelength() - 0.0856549880).abs() < 1e-12);
        assert!(cfg.sweep_axis().unwrap().is_none());
        assert_eq!(cfg.optimizer_settings(), OptimizerSettings::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let bad = MINIMAL.replace("users = 2", "users = 2\nusrs = 3");
        let err = RunConfig::parse(&bad).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("usrs"), "{msg}");
    }

    #[test]
    fn wrong_schema_version_is_rejected() {
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn sweep_axes_resolve() {
        let with_sweep = format!("{MINIMAL}\n[sweep]\naxis = \"power\"\nvalues = [10, 20, 30]\n");
        let cfg = RunConfig::parse(&with_sweep).unwrap();
        match cfg.sweep_axis().unwrap().unwrap() {
            SweepAxis::Power(v) => assert_eq!(v, vec![10.0, 20.0, 30.0]),
            other => panic!("wrong axis {other:?}"),
        }

        let bad_elements = format!("{MINIMAL}\n[sweep]\naxis = \"elements\"\nvalues = [4.5]\n");
        assert!(RunConfig::parse(&bad_elements).is_err());

        let bad_axis = format!("{MINIMAL}\n[sweep]\naxis = \"speed\"\nvalues = [1]\n");
        assert!(RunConfig::parse(&bad_axis).is_err());
    }

    #[test]
    fn log_distance_requires_exponent() {
        let bad = MINIMAL.replace(
            "power_dbm = 30.0",
            "power_dbm = 30.0\npath_loss = \"log-distance\"",
        );
        assert!(RunConfig::parse(&bad).is_err());
        let good = MINIMAL.replace(
            "power_dbm = 30.0",
            "power_dbm = 30.0\npath_loss = \"log-distance\"\npath_loss_exponent = 2.7",
        );
        let sc = RunConfig::parse(&good).unwrap().scenario_config().unwrap();
        assert_eq!(sc.path_loss, PathLossModel::LogDistance { exponent: 2.7 });
    }

    #[test]
    fn infeasible_scenario_is_rejected_at_parse_time() {
        let bad = MINIMAL.replace("users = 2", "users = 5"); // 5 users, 4 elements
        assert!(RunConfig::parse(&bad).is_err());
    }
}
