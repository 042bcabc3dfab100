//! Element layout of the morphable surface and the feasible-set projection.
//!
//! The surface is a uniform planar array on the x–z plane. Element `n`
//! (0-based in storage; the conventional 1-based element index is `n + 1`)
//! sits at
//!
//! ```text
//! x_n = (n mod n_x) * d_h,    z_n = floor(n / n_x) * d_v,
//! ```
//!
//! and its y-coordinate is the n-th entry of the morphing vector, each entry
//! constrained to `[0, zeta]`. Morphing displaces elements perpendicular to
//! the surface, so it can only increase pairwise distances relative to the
//! flat layout.

use nalgebra::{DMatrix, DVector};

use crate::error::{FimError, Result};

/// Static description of the element grid and the morphing range.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayConfig {
    /// Elements along the x-axis.
    pub n_x: usize,
    /// Elements along the z-axis.
    pub n_z: usize,
    /// Horizontal element spacing in meters.
    pub d_h: f64,
    /// Vertical element spacing in meters.
    pub d_v: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Morphing range in meters; `zeta = 0` is the rigid-array baseline.
    pub zeta: f64,
}

impl ArrayConfig {
    pub fn new(
        n_x: usize,
        n_z: usize,
        d_h: f64,
        d_v: f64,
        wavelength: f64,
        zeta: f64,
    ) -> Result<Self> {
        if n_x < 1 || n_z < 1 {
            return Err(FimError::InvalidParameter(format!(
                "grid must have at least one element per axis, got {n_x}x{n_z}"
            )));
        }
        for (name, v) in [("d_h", d_h), ("d_v", d_v), ("wavelength", wavelength)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(FimError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(zeta.is_finite() && zeta >= 0.0) {
            return Err(FimError::InvalidParameter(format!(
                "zeta must be nonnegative and finite, got {zeta}"
            )));
        }
        Ok(Self {
            n_x,
            n_z,
            d_h,
            d_v,
            wavelength,
            zeta,
        })
    }

    /// Square grid with equal spacing `d_e` on both axes.
    pub fn square(side: usize, d_e: f64, wavelength: f64, zeta: f64) -> Result<Self> {
        Self::new(side, side, d_e, d_e, wavelength, zeta)
    }

    /// Total element count `N = n_x * n_z`.
    pub fn element_count(&self) -> usize {
        self.n_x * self.n_z
    }
}

/// Per-element y-displacements, the optimization variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphingVector {
    y: DVector<f64>,
}

impl MorphingVector {
    /// Wraps a displacement vector after checking it lies in `[0, zeta]^N`.
    pub fn feasible(y: DVector<f64>, zeta: f64) -> Result<Self> {
        for (n, &v) in y.iter().enumerate() {
            if !v.is_finite() || v < 0.0 || v > zeta {
                return Err(FimError::Infeasible(format!(
                    "y[{n}] = {v} outside [0, {zeta}]"
                )));
            }
        }
        Ok(Self { y })
    }

    /// The flat surface (all displacements zero): the rigid-array baseline.
    pub fn flat(n: usize) -> Self {
        Self {
            y: DVector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.y
    }
}

/// Elementwise projection onto the feasible box `[0, zeta]^N`.
///
/// Total and idempotent; NaN entries are mapped to the lower bound.
pub fn project_feasible(y_raw: &DVector<f64>, zeta: f64) -> MorphingVector {
    let y = y_raw.map(|v| {
        if v.is_nan() {
            0.0
        } else {
            v.min(zeta).max(0.0)
        }
    });
    MorphingVector { y }
}

/// Element positions and the pairwise distance matrix for one morphing state.
#[derive(Debug, Clone)]
pub struct PositionSet {
    positions: Vec<[f64; 3]>,
    distances: DMatrix<f64>,
}

impl PositionSet {
    /// Builds positions for an arbitrary (possibly infeasible) displacement
    /// vector. Only the dimension is checked; the finite-difference oracle
    /// relies on this to probe outside the feasible box.
    pub fn unconstrained(cfg: &ArrayConfig, y: &DVector<f64>) -> Result<Self> {
        let n = cfg.element_count();
        if y.len() != n {
            return Err(FimError::DimensionMismatch(format!(
                "morphing vector has {} entries, grid has {n} elements",
                y.len()
            )));
        }
        let positions: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let x = (i % cfg.n_x) as f64 * cfg.d_h;
                let z = (i / cfg.n_x) as f64 * cfg.d_v;
                [x, y[i], z]
            })
            .collect();
        let distances = DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = (&positions[i], &positions[j]);
            let dx = a[0] - b[0];
            let dy = a[1] - b[1];
            let dz = a[2] - b[2];
            (dx * dx + dy * dy + dz * dz).sqrt()
        });
        Ok(Self {
            positions,
            distances,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, n: usize) -> [f64; 3] {
        self.positions[n]
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    /// Pairwise distance `d_nm = ||u_n - u_m||`.
    pub fn distance(&self, n: usize, m: usize) -> f64 {
        self.distances[(n, m)]
    }

    pub fn distances(&self) -> &DMatrix<f64> {
        &self.distances
    }
}

/// Builds the position set for a feasible morphing vector.
pub fn build_positions(cfg: &ArrayConfig, y: &MorphingVector) -> Result<PositionSet> {
    // Re-validate against this config's zeta: the vector may have been
    // constructed for a different feasible set.
    MorphingVector::feasible(y.as_vector().clone(), cfg.zeta)?;
    PositionSet::unconstrained(cfg, y.as_vector())
}
