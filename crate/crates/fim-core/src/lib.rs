//! Modeling and optimization of a morphable-metasurface (FIM) downlink
//! multiuser MISO system under statistical CSI.
//!
//! The surface's per-element displacements change the spatial correlation of
//! the channel, and with it the MMSE estimation quality and the achievable
//! average sum spectral efficiency. This crate provides:
//!
//! - the element geometry and feasible-set projection ([`geometry`]);
//! - the sinc spatial-correlation model, its morphing derivative, and an
//!   independent quadrature oracle for the defining integral
//!   ([`correlation`], [`quadrature`]);
//! - MMSE estimation statistics ([`estimation`]) and the closed-form sum
//!   spectral efficiency ([`se`]);
//! - the analytic gradient with a finite-difference oracle ([`gradient`]);
//! - projected gradient ascent with Armijo backtracking and multi-start
//!   ([`pgm`]);
//! - a Monte Carlo simulator that validates every closed form empirically
//!   ([`montecarlo`], [`validation`]);
//! - benchmark scenarios and parameter sweeps against the rigid-array
//!   baseline, with CSV/manifest outputs ([`scenario`], [`output`]) and a
//!   TOML configuration schema ([`config`]).
//!
//! # Example
//!
//! ```
//! use fim_core::estimation::PilotConfig;
//! use fim_core::geometry::{ArrayConfig, MorphingVector};
//! use fim_core::model::FimModel;
//! use fim_core::pgm::{multi_start, PgmConfig};
//! use fim_core::se::SystemParams;
//!
//! let lambda = 0.0857;
//! let array = ArrayConfig::new(3, 3, 0.25 * lambda, 0.25 * lambda, lambda, 0.5 * lambda)?;
//! let pilot = PilotConfig::new(2, 0.01, 7.96e-14, 200, 2)?;
//! let system = SystemParams::new(1.0, &pilot, 2)?;
//! let model = FimModel::new(array, 4.6e-4, vec![4.6e-9, 5.2e-9], pilot, system)?;
//!
//! // rigid baseline, then morphing optimized by projected gradient ascent
//! let rigid = model.se_nats(&MorphingVector::flat(9))?;
//! let mut cfg = PgmConfig::for_array(&model.array);
//! cfg.restarts = 2;
//! let best = multi_start(&model, &cfg)?.best;
//! assert!(best.best.se_nats >= rigid);
//! # Ok::<(), fim_core::FimError>(())
//! ```

pub mod config;
pub mod correlation;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod gradient;
pub mod model;
pub mod montecarlo;
pub mod output;
pub mod pgm;
pub mod quadrature;
pub mod scenario;
pub mod se;
pub mod seeding;
pub mod validation;

pub use error::{FimError, Result};
pub use geometry::{build_positions, project_feasible, ArrayConfig, MorphingVector, PositionSet};
pub use model::FimModel;
