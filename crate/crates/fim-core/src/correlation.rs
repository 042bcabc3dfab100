//! Spatial correlation of the surface under isotropic scattering.
//!
//! Under isotropic scattering in the half-space in front of the surface, the
//! normalized correlation between elements n and m is
//! `sinc(2 pi d_nm / lambda)` with the unnormalized sinc `sin(x)/x`. The
//! per-user covariance is the scaled copy `R_k = A * mu_k * R_fim`, where `A`
//! is the element area and `mu_k` the average intensity attenuation of user k.
//!
//! Morphing moves elements along y, so the correlation matrix depends on the
//! morphing vector through the pairwise distances. The derivative of `R_fim`
//! with respect to one displacement `y_n` is nonzero only in row n and column
//! n with zero diagonal; it is represented sparsely as a single column.
//!
//! Derivative entry, from the chain rule through `d_nm`:
//!
//! ```text
//! d/dy_n sinc(2 pi d_nm / lambda)
//!     = sinc'(2 pi d_nm / lambda) * (2 pi / lambda) * (y_n - y_m) / d_nm.
//! ```
//!
//! This is the exact derivative of the correlation model; the
//! finite-difference oracle in the gradient module is the authority that the
//! constants are right.

use nalgebra::{DMatrix, DVector};

use crate::error::{FimError, Result};
use crate::geometry::PositionSet;

/// Unnormalized sinc, `sin(x)/x`, with `sinc(0) = 1`.
///
/// A Taylor series is used for small arguments to avoid cancellation.
pub fn sinc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Derivative of the unnormalized sinc, `cos(x)/x - sin(x)/x^2`.
pub fn sinc_prime(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-4 {
        let x2 = x * x;
        -x / 3.0 + x * x2 / 30.0
    } else {
        (x.cos() - x.sin() / x) / x
    }
}

/// Normalized spatial correlation matrix: entries `sinc(2 pi d_nm / lambda)`.
///
/// Symmetric with unit diagonal; entries lie in [-1, 1].
pub fn correlation_matrix(pos: &PositionSet, wavelength: f64) -> DMatrix<f64> {
    let n = pos.len();
    let k0 = 2.0 * std::f64::consts::PI / wavelength;
    let mut r = DMatrix::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = sinc(k0 * pos.distance(i, j));
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// The shared normalized correlation plus per-user scaled covariances.
#[derive(Debug, Clone)]
pub struct CorrelationSet {
    /// Normalized correlation of the surface (unit diagonal).
    pub r_fim: DMatrix<f64>,
    /// Per-user covariance `R_k = A * mu_k * R_fim`, in linear power units.
    pub r_users: Vec<DMatrix<f64>>,
    /// Element area `A` in square meters.
    pub element_area: f64,
    /// Per-user average intensity attenuations (linear).
    pub attenuations: Vec<f64>,
}

impl CorrelationSet {
    pub fn users(&self) -> usize {
        self.r_users.len()
    }

    pub fn elements(&self) -> usize {
        self.r_fim.nrows()
    }
}

/// Scales the normalized correlation into per-user covariances.
pub fn scale_user_covariances(
    r_fim: &DMatrix<f64>,
    element_area: f64,
    attenuations: &[f64],
) -> Result<CorrelationSet> {
    if !(element_area.is_finite() && element_area > 0.0) {
        return Err(FimError::InvalidParameter(format!(
            "element area must be positive, got {element_area}"
        )));
    }
    if attenuations.is_empty() {
        return Err(FimError::InvalidParameter(
            "at least one user attenuation required".into(),
        ));
    }
    for (k, &mu) in attenuations.iter().enumerate() {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(FimError::InvalidParameter(format!(
                "attenuation mu[{k}] must be positive, got {mu}"
            )));
        }
    }
    let r_users = attenuations
        .iter()
        .map(|&mu| r_fim * (element_area * mu))
        .collect();
    Ok(CorrelationSet {
        r_fim: r_fim.clone(),
        r_users,
        element_area,
        attenuations: attenuations.to_vec(),
    })
}

/// Sparse derivative of `R_fim` with respect to one displacement `y_n`.
///
/// The dense matrix is `e_n g^T + g e_n^T` where `g` is [`Self::column`] with
/// `g[n] = 0`; only row n and column n are nonzero and the diagonal is zero.
#[derive(Debug, Clone)]
pub struct CorrelationDerivative {
    element: usize,
    column: DVector<f64>,
}

impl CorrelationDerivative {
    /// The element index n this derivative belongs to.
    pub fn element(&self) -> usize {
        self.element
    }

    /// Column n of the dense derivative (entry m is `d R[n,m] / d y_n`).
    pub fn column(&self) -> &DVector<f64> {
        &self.column
    }

    /// `tr(M * dR/dy_n)` via the rank-structured contraction
    /// `sum_m g[m] * (M[n,m] + M[m,n])`; O(N) given `M`.
    pub fn trace_product(&self, m: &DMatrix<f64>) -> f64 {
        let n = self.element;
        let mut acc = 0.0;
        for (idx, &g) in self.column.iter().enumerate() {
            if g != 0.0 {
                acc += g * (m[(n, idx)] + m[(idx, n)]);
            }
        }
        acc
    }

    /// Dense form, for oracle tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.column.len();
        let mut out = DMatrix::zeros(n, n);
        for m in 0..n {
            out[(self.element, m)] = self.column[m];
            out[(m, self.element)] = self.column[m];
        }
        out
    }
}

/// Derivative of the normalized correlation with respect to `y_n`.
///
/// Requires all pairwise distances to element n to be positive, which any
/// grid with positive spacings guarantees.
pub fn correlation_derivative(
    pos: &PositionSet,
    n: usize,
    wavelength: f64,
) -> Result<CorrelationDerivative> {
    let count = pos.len();
    if n >= count {
        return Err(FimError::DimensionMismatch(format!(
            "element index {n} out of range for {count} elements"
        )));
    }
    let k0 = 2.0 * std::f64::consts::PI / wavelength;
    let y_n = pos.position(n)[1];
    let mut column = DVector::zeros(count);
    for m in 0..count {
        if m == n {
            continue;
        }
        let d = pos.distance(n, m);
        if d <= 0.0 {
            return Err(FimError::Numerical(format!(
                "coincident elements {n} and {m}: zero distance"
            )));
        }
        let dy = y_n - pos.position(m)[1];
        column[m] = sinc_prime(k0 * d) * k0 * dy / d;
    }
    Ok(CorrelationDerivative { element: n, column })
}
