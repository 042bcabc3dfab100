//! Closed-form gradient of the sum spectral efficiency with respect to the
//! morphing vector, plus the finite-difference oracle that is its
//! correctness authority.
//!
//! Writing `Rdot_n` for the (symmetric, row/column-n sparse) derivative of
//! the normalized correlation with respect to `y_n`, the chain rule through
//! `Psi_k = R_k Q_k R_k` gives
//!
//! ```text
//! dS_k/dy_n = 2 A mu_k tr(Psi_k) tr(C_k Rdot_n)
//! dI_k/dy_n = A mu_k tr(Psi_sum Rdot_n)
//!             + A^2 mu_k sum_i mu_i tr(Dx_i Rdot_n)
//!             + (sigma^2/P) A sum_i mu_i tr(C_i Rdot_n)
//! ```
//!
//! with `C_k = Q_k R_k + R_k Q_k - Q_k R_k^2 Q_k` and the cross matrix
//! `Dx_i = Q_i R_i R_fim - Q_i R_i R_fim R_i Q_i + R_fim R_i Q_i`. Because
//! every user covariance is a scalar multiple of the shared correlation,
//! the pairwise matrices factor as `D_{k,i} = A mu_k Dx_i`, so only K cross
//! matrices are materialized. Each trace against `Rdot_n` is a rank-
//! structured contraction costing O(N).
//!
//! The sum-SE gradient combines the per-user terms by the quotient rule:
//!
//! ```text
//! dSE/dy_n = prelog * sum_k (I_k dS_k - S_k dI_k) / ((1 + gamma_k) I_k^2).
//! ```

use nalgebra::{DMatrix, DVector};

use crate::correlation::{correlation_derivative, CorrelationDerivative, CorrelationSet};
use crate::error::{FimError, Result};
use crate::estimation::{estimation_stats, EstimationStats};
use crate::model::FimModel;
use crate::se::{se_from_stats, SeBreakdown};

/// Cached matrices for gradient evaluation at one morphing state.
///
/// Tagged with a fingerprint of the displacement vector it was built from;
/// gradient evaluation refuses to run against a different vector.
#[derive(Debug, Clone)]
pub struct GradientWorkspace {
    fingerprint: u64,
    pub corr: CorrelationSet,
    pub stats: EstimationStats,
    pub breakdown: SeBreakdown,
    /// Per-user `C_k`.
    c_mats: Vec<DMatrix<f64>>,
    /// Per-user cross matrices `Dx_i` (see module docs).
    d_cross: Vec<DMatrix<f64>>,
    /// Sparse correlation derivatives, one per element.
    derivs: Vec<CorrelationDerivative>,
    psi_traces: Vec<f64>,
}

fn fingerprint_of(y: &DVector<f64>) -> u64 {
    // FNV-1a over the raw bit patterns.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in y.iter() {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

impl GradientWorkspace {
    /// Builds all cached matrices for the displacement vector `y`.
    pub fn build(model: &FimModel, y: &DVector<f64>) -> Result<Self> {
        let (pos, corr) = model.correlation_raw(y)?;
        let stats = estimation_stats(&corr, &model.pilot)?;
        let breakdown = se_from_stats(&corr, &stats, &model.system)?;
        let users = model.users();
        let n = model.elements();

        let mut c_mats = Vec::with_capacity(users);
        let mut d_cross = Vec::with_capacity(users);
        for k in 0..users {
            // P = Q_k R_k; C_k = P + P^T - P P^T.
            let p = &stats.q[k] * &corr.r_users[k];
            let c_k = &p + p.transpose() - &p * p.transpose();
            // T1 = P R_fim; Dx = T1 + T1^T - T1 P^T.
            let t1 = &p * &corr.r_fim;
            let dx = &t1 + t1.transpose() - &t1 * p.transpose();
            c_mats.push(c_k);
            d_cross.push(dx);
        }

        let derivs = (0..n)
            .map(|idx| correlation_derivative(&pos, idx, model.array.wavelength))
            .collect::<Result<Vec<_>>>()?;
        let psi_traces = stats.psi.iter().map(|p| p.trace()).collect();

        Ok(Self {
            fingerprint: fingerprint_of(y),
            corr,
            stats,
            breakdown,
            c_mats,
            d_cross,
            derivs,
            psi_traces,
        })
    }

    /// Fails with [`FimError::StaleWorkspace`] if `y` is not the vector this
    /// workspace was built from.
    pub fn check_fresh(&self, y: &DVector<f64>) -> Result<()> {
        if fingerprint_of(y) == self.fingerprint {
            Ok(())
        } else {
            Err(FimError::StaleWorkspace)
        }
    }
}

/// `dS_k/dy_n` at the workspace's build point.
pub fn grad_signal(model: &FimModel, ws: &GradientWorkspace, k: usize, n: usize) -> f64 {
    let a_mu = model.element_area * model.attenuations[k];
    2.0 * a_mu * ws.psi_traces[k] * ws.derivs[n].trace_product(&ws.c_mats[k])
}

/// `dI_k/dy_n` at the workspace's build point.
pub fn grad_interference(model: &FimModel, ws: &GradientWorkspace, k: usize, n: usize) -> f64 {
    let area = model.element_area;
    let a_mu_k = area * model.attenuations[k];
    let deriv = &ws.derivs[n];

    let direct = a_mu_k * deriv.trace_product(&ws.stats.psi_sum);
    let mut cross = 0.0;
    let mut noise = 0.0;
    for i in 0..model.users() {
        let mu_i = model.attenuations[i];
        cross += mu_i * deriv.trace_product(&ws.d_cross[i]);
        noise += mu_i * deriv.trace_product(&ws.c_mats[i]);
    }
    direct
        + area * a_mu_k * cross
        + model.system.noise_power / model.system.total_power * area * noise
}

/// Full gradient of the sum spectral efficiency at `y`.
///
/// `ws` must have been built for exactly this `y`.
pub fn grad_sum_se(
    model: &FimModel,
    y: &DVector<f64>,
    ws: &GradientWorkspace,
) -> Result<DVector<f64>> {
    ws.check_fresh(y)?;
    let users = model.users();
    let n = model.elements();
    let bd = &ws.breakdown;
    let prelog = model.system.prelog;
    let mut grad = DVector::zeros(n);
    for idx in 0..n {
        let mut acc = 0.0;
        for k in 0..users {
            let s_k = bd.signal[k];
            let i_k = bd.interference[k];
            let ds = grad_signal(model, ws, k, idx);
            let di = grad_interference(model, ws, k, idx);
            acc += (i_k * ds - s_k * di) / ((1.0 + bd.sinr[k]) * i_k * i_k);
        }
        grad[idx] = prelog * acc;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(FimError::Numerical("non-finite gradient entry".into()));
    }
    Ok(grad)
}

/// Central finite differences of a scalar objective; the oracle against
/// which the analytic gradient is checked.
///
/// Probes `y +/- h e_n` through the smooth (unprojected) objective, so
/// entries near the feasible-set boundary are handled without bias.
pub fn finite_difference_gradient<F>(objective: F, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(FimError::InvalidParameter(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let n = y.len();
    let mut grad = DVector::zeros(n);
    let mut probe = y.clone();
    for i in 0..n {
        probe[i] = y[i] + h;
        let plus = objective(&probe)?;
        probe[i] = y[i] - h;
        let minus = objective(&probe)?;
        probe[i] = y[i];
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::PilotConfig;
    use crate::geometry::{ArrayConfig, MorphingVector};
    use crate::model::FimModel;
    use crate::se::SystemParams;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    const LAMBDA: f64 = 0.0857;

    fn model(users: usize, zeta: f64) -> FimModel {
        let array = ArrayConfig::new(3, 3, 0.25 * LAMBDA, 0.25 * LAMBDA, LAMBDA, zeta).unwrap();
        let mus: Vec<f64> = (0..users).map(|k| 4e-9 * (1.0 + 0.3 * k as f64)).collect();
        let pilot = PilotConfig::new(users, 0.01, 7.96e-14, 200, users).unwrap();
        let system = SystemParams::new(1.0, &pilot, users).unwrap();
        FimModel::new(array, 0.25 * LAMBDA * 0.25 * LAMBDA, mus, pilot, system).unwrap()
    }

    #[test]
    fn flat_surface_has_zero_gradient() {
        let m = model(2, 0.5 * LAMBDA);
        let y = MorphingVector::flat(9).into_vector();
        let ws = GradientWorkspace::build(&m, &y).unwrap();
        let g = grad_sum_se(&m, &y, &ws).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-18), "grad = {g:?}");
        // uniform nonzero displacement is also stationary
        let y2 = DVector::from_element(9, 0.3 * m.array.zeta);
        let ws2 = GradientWorkspace::build(&m, &y2).unwrap();
        let g2 = grad_sum_se(&m, &y2, &ws2).unwrap();
        assert!(g2.iter().all(|v| v.abs() < 1e-18));
    }

    #[test]
    fn stale_workspace_is_rejected() {
        let m = model(2, 0.5 * LAMBDA);
        let y = MorphingVector::flat(9).into_vector();
        let ws = GradientWorkspace::build(&m, &y).unwrap();
        let other = DVector::from_element(9, 0.1 * m.array.zeta);
        assert!(matches!(
            grad_sum_se(&m, &other, &ws),
            Err(FimError::StaleWorkspace)
        ));
    }

    #[test]
    fn finite_difference_on_quadratic_is_exact() {
        // f(y) = sum (y_i - i)^2 has gradient 2(y_i - i)
        let f = |y: &DVector<f64>| -> Result<f64> {
            Ok(y.iter()
                .enumerate()
                .map(|(i, v)| (v - i as f64).powi(2))
                .sum())
        };
        let y = DVector::from_vec(vec![0.5, 2.0, 1.0]);
        let g = finite_difference_gradient(f, &y, 1e-6).unwrap();
        assert_relative_eq!(g[0], 2.0 * 0.5, epsilon = 1e-8);
        assert_relative_eq!(g[1], 2.0 * 1.0, epsilon = 1e-8);
        assert_relative_eq!(g[2], -2.0, epsilon = 1e-8);
        assert!(finite_difference_gradient(f, &y, 0.0).is_err());
    }

    #[test]
    fn analytic_matches_finite_difference_small_case() {
        let m = model(2, 0.5 * LAMBDA);
        let zeta = m.array.zeta;
        let y = DVector::from_vec(vec![0.1, 0.8, 0.35, 0.6, 0.0, 0.95, 0.22, 0.47, 0.7])
            .map(|v: f64| v * zeta);
        let ws = GradientWorkspace::build(&m, &y).unwrap();
        let analytic = grad_sum_se(&m, &y, &ws).unwrap();
        let fd = finite_difference_gradient(|p| m.se_raw(p), &y, 1e-7).unwrap();
        let scale = fd.amax().max(1e-12);
        for i in 0..9 {
            assert!(
                (analytic[i] - fd[i]).abs() / scale < 1e-5,
                "entry {i}: {} vs {}",
                analytic[i],
                fd[i]
            );
        }
    }

    #[test]
    fn gradient_direction_invariant_under_joint_rescale() {
        // mu -> c mu, P -> P/c, p_train -> p_train/c leaves the objective,
        // and hence the normalized gradient, unchanged.
        let base = model(3, 0.5 * LAMBDA);
        let c = 11.0;
        let scaled = FimModel::new(
            base.array.clone(),
            base.element_area,
            base.attenuations.iter().map(|m| m * c).collect(),
            PilotConfig::new(
                base.pilot.tau,
                base.pilot.p_train / c,
                base.pilot.sigma2,
                base.pilot.tau_c,
                base.users(),
            )
            .unwrap(),
            SystemParams {
                total_power: base.system.total_power / c,
                ..base.system.clone()
            },
        )
        .unwrap();
        let zeta = base.array.zeta;
        let y = DVector::from_vec(vec![0.3, 0.0, 0.9, 0.5, 0.12, 0.77, 0.41, 0.66, 0.05])
            .map(|v: f64| v * zeta);
        let g1 = {
            let ws = GradientWorkspace::build(&base, &y).unwrap();
            grad_sum_se(&base, &y, &ws).unwrap()
        };
        let g2 = {
            let ws = GradientWorkspace::build(&scaled, &y).unwrap();
            grad_sum_se(&scaled, &y, &ws).unwrap()
        };
        let n1 = g1.norm();
        let n2 = g2.norm();
        assert!((&g1 / n1 - &g2 / n2).amax() < 1e-9);
    }
}
