//! One downlink scenario instance: array, users, pilots, and power budget,
//! with the morphing vector as the free variable.
//!
//! `FimModel` composes the geometry, correlation, estimation, and
//! spectral-efficiency modules into the objective `y -> SE(y)` that the
//! optimizer and the oracles evaluate.

use nalgebra::DVector;

use crate::correlation::{correlation_matrix, scale_user_covariances, CorrelationSet};
use crate::error::{FimError, Result};
use crate::estimation::{estimation_stats, EstimationStats, PilotConfig};
use crate::geometry::{ArrayConfig, MorphingVector, PositionSet};
use crate::se::{se_from_stats, SeBreakdown, SystemParams};

/// Immutable scenario description; evaluation is a pure function of the
/// morphing vector, so a model is safe to share across threads.
#[derive(Debug, Clone)]
pub struct FimModel {
    pub array: ArrayConfig,
    /// Element area `A` in square meters.
    pub element_area: f64,
    /// Per-user average intensity attenuations (linear).
    pub attenuations: Vec<f64>,
    pub pilot: PilotConfig,
    pub system: SystemParams,
}

impl FimModel {
    pub fn new(
        array: ArrayConfig,
        element_area: f64,
        attenuations: Vec<f64>,
        pilot: PilotConfig,
        system: SystemParams,
    ) -> Result<Self> {
        if attenuations.len() != system.users {
            return Err(FimError::DimensionMismatch(format!(
                "{} attenuations for {} users",
                attenuations.len(),
                system.users
            )));
        }
        if array.element_count() < system.users {
            return Err(FimError::InvalidParameter(format!(
                "need at least as many elements ({}) as users ({})",
                array.element_count(),
                system.users
            )));
        }
        Ok(Self {
            array,
            element_area,
            attenuations,
            pilot,
            system,
        })
    }

    pub fn users(&self) -> usize {
        self.system.users
    }

    pub fn elements(&self) -> usize {
        self.array.element_count()
    }

    /// Covariances at an arbitrary displacement vector (no box check).
    pub(crate) fn correlation_raw(
        &self,
        y: &DVector<f64>,
    ) -> Result<(PositionSet, CorrelationSet)> {
        let pos = PositionSet::unconstrained(&self.array, y)?;
        let r_fim = correlation_matrix(&pos, self.array.wavelength);
        let corr = scale_user_covariances(&r_fim, self.element_area, &self.attenuations)?;
        Ok((pos, corr))
    }

    /// Correlation set for a feasible morphing vector.
    pub fn correlation(&self, y: &MorphingVector) -> Result<CorrelationSet> {
        MorphingVector::feasible(y.as_vector().clone(), self.array.zeta)?;
        Ok(self.correlation_raw(y.as_vector())?.1)
    }

    /// Correlation and estimation statistics for a feasible morphing vector.
    pub fn stats(&self, y: &MorphingVector) -> Result<(CorrelationSet, EstimationStats)> {
        let corr = self.correlation(y)?;
        let stats = estimation_stats(&corr, &self.pilot)?;
        Ok((corr, stats))
    }

    /// Full spectral-efficiency breakdown for a feasible morphing vector.
    pub fn evaluate(&self, y: &MorphingVector) -> Result<SeBreakdown> {
        let (corr, stats) = self.stats(y)?;
        se_from_stats(&corr, &stats, &self.system)
    }

    /// Smooth extension of the objective to arbitrary displacement vectors.
    ///
    /// The box constraint is not enforced; the finite-difference oracle
    /// probes points just outside the feasible set through this path.
    pub fn se_raw(&self, y: &DVector<f64>) -> Result<f64> {
        let (_, corr) = self.correlation_raw(y)?;
        let stats = estimation_stats(&corr, &self.pilot)?;
        Ok(se_from_stats(&corr, &stats, &self.system)?.se_nats)
    }

    /// Sum spectral efficiency in nats/s/Hz for a feasible morphing vector.
    pub fn se_nats(&self, y: &MorphingVector) -> Result<f64> {
        Ok(self.evaluate(y)?.se_nats)
    }
}
