//! MMSE channel-estimation statistics.
//!
//! Uplink training with mutually orthogonal pilots reduces, after
//! de-spreading, to the sufficient statistic `r_k = h_k + z_k` with noise
//! covariance `(sigma^2 / (tau * p_train)) I`. Pilot sequences are therefore
//! never materialized. The estimation statistics per user are
//!
//! ```text
//! Q_k   = (R_k + sigma^2/(tau p_train) I)^{-1}
//! hhat  = R_k Q_k r_k
//! Psi_k = R_k Q_k R_k        (covariance of the estimate)
//! MSE_k = R_k - Psi_k        (covariance of the estimation error)
//! ```
//!
//! The correlation model makes every `R_k` real symmetric, so the statistics
//! are kept in real arithmetic; the per-realization estimate applies the real
//! filter to complex observations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::correlation::CorrelationSet;
use crate::error::{FimError, Result};

type C64 = Complex<f64>;

/// Pilot-training parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    /// Pilot length in channel uses, at least the number of users.
    pub tau: usize,
    /// Per-symbol pilot power in watts.
    pub p_train: f64,
    /// Noise power in watts.
    pub sigma2: f64,
    /// Coherence-block length in channel uses.
    pub tau_c: usize,
}

impl PilotConfig {
    pub fn new(tau: usize, p_train: f64, sigma2: f64, tau_c: usize, users: usize) -> Result<Self> {
        if tau < users {
            return Err(FimError::InvalidParameter(format!(
                "pilot length tau = {tau} must be at least the user count {users}"
            )));
        }
        if tau >= tau_c {
            return Err(FimError::InvalidParameter(format!(
                "pilot length tau = {tau} must be shorter than the coherence block {tau_c}"
            )));
        }
        if !(p_train.is_finite() && p_train > 0.0) {
            return Err(FimError::InvalidParameter(format!(
                "p_train must be positive, got {p_train}"
            )));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(FimError::InvalidParameter(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        Ok(Self {
            tau,
            p_train,
            sigma2,
            tau_c,
        })
    }

    /// Effective noise variance of the de-spread observation,
    /// `sigma^2 / (tau * p_train)`.
    pub fn despread_noise_var(&self) -> f64 {
        self.sigma2 / (self.tau as f64 * self.p_train)
    }

    /// Training-overhead prelog `(tau_c - tau) / tau_c`.
    pub fn prelog(&self) -> f64 {
        (self.tau_c - self.tau) as f64 / self.tau_c as f64
    }
}

/// Inverse of the de-spread observation covariance,
/// `Q_k = (R_k + sigma^2/(tau p_train) I)^{-1}`, via a symmetric
/// positive-definite factorization.
pub fn precision_matrix(r_k: &DMatrix<f64>, pilot: &PilotConfig) -> Result<DMatrix<f64>> {
    let n = r_k.nrows();
    if r_k.ncols() != n {
        return Err(FimError::DimensionMismatch(format!(
            "covariance must be square, got {}x{}",
            n,
            r_k.ncols()
        )));
    }
    let c = pilot.despread_noise_var();
    let mut shifted = r_k.clone();
    for i in 0..n {
        shifted[(i, i)] += c;
    }
    let chol = shifted.cholesky().ok_or_else(|| {
        FimError::Numerical("Cholesky factorization of the regularized covariance failed".into())
    })?;
    Ok(chol.inverse())
}

/// Covariance of the MMSE estimate, `Psi_k = R_k Q_k R_k`.
pub fn estimate_covariance(r_k: &DMatrix<f64>, q_k: &DMatrix<f64>) -> DMatrix<f64> {
    r_k * q_k * r_k
}

/// Covariance of the estimation error, `MSE_k = R_k - Psi_k`.
pub fn mse_matrix(r_k: &DMatrix<f64>, psi_k: &DMatrix<f64>) -> DMatrix<f64> {
    r_k - psi_k
}

/// Applies a real matrix to a complex vector.
pub(crate) fn real_mat_complex_vec(m: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let re = m * v.map(|z| z.re);
    let im = m * v.map(|z| z.im);
    DVector::from_fn(v.len(), |i, _| C64::new(re[i], im[i]))
}

/// Per-realization MMSE estimate `hhat_k = R_k Q_k r_k` from the de-spread
/// observation.
pub fn mmse_estimate(
    observation: &DVector<C64>,
    r_k: &DMatrix<f64>,
    q_k: &DMatrix<f64>,
) -> Result<DVector<C64>> {
    if observation.len() != r_k.nrows() {
        return Err(FimError::DimensionMismatch(format!(
            "observation has {} entries, covariance is {}x{}",
            observation.len(),
            r_k.nrows(),
            r_k.ncols()
        )));
    }
    let filter = r_k * q_k;
    Ok(real_mat_complex_vec(&filter, observation))
}

/// Estimation statistics for every user at one morphing state.
#[derive(Debug, Clone)]
pub struct EstimationStats {
    /// Per-user precision matrices `Q_k`.
    pub q: Vec<DMatrix<f64>>,
    /// Per-user estimate covariances `Psi_k`.
    pub psi: Vec<DMatrix<f64>>,
    /// Per-user error covariances `MSE_k`.
    pub mse: Vec<DMatrix<f64>>,
    /// `Psi_sum = sum_k Psi_k`.
    pub psi_sum: DMatrix<f64>,
}

impl EstimationStats {
    pub fn users(&self) -> usize {
        self.psi.len()
    }
}

/// Computes `Q_k`, `Psi_k`, `MSE_k` for every user and their sum.
pub fn estimation_stats(corr: &CorrelationSet, pilot: &PilotConfig) -> Result<EstimationStats> {
    let n = corr.elements();
    let mut q = Vec::with_capacity(corr.users());
    let mut psi = Vec::with_capacity(corr.users());
    let mut mse = Vec::with_capacity(corr.users());
    let mut psi_sum = DMatrix::zeros(n, n);
    for r_k in &corr.r_users {
        let q_k = precision_matrix(r_k, pilot)?;
        let psi_k = estimate_covariance(r_k, &q_k);
        psi_sum += &psi_k;
        mse.push(mse_matrix(r_k, &psi_k));
        q.push(q_k);
        psi.push(psi_k);
    }
    Ok(EstimationStats {
        q,
        psi,
        mse,
        psi_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pilot_with_noise_var(c: f64) -> PilotConfig {
        // tau = 1, p_train = 1 makes the de-spread variance equal sigma2.
        PilotConfig::new(1, 1.0, c, 200, 1).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PilotConfig::new(2, 1.0, 1.0, 200, 4).is_err()); // tau < K
        assert!(PilotConfig::new(200, 1.0, 1.0, 200, 4).is_err()); // tau >= tau_c
        assert!(PilotConfig::new(4, 0.0, 1.0, 200, 4).is_err());
        assert!(PilotConfig::new(4, 1.0, -1.0, 200, 4).is_err());
        let p = PilotConfig::new(4, 0.01, 8e-14, 200, 4).unwrap();
        assert_relative_eq!(p.despread_noise_var(), 2e-12, epsilon = 1e-24);
        assert_relative_eq!(p.prelog(), 0.98);
    }

    #[test]
    fn identity_covariance_scalar_case() {
        let r = DMatrix::<f64>::identity(5, 5);
        let pilot = pilot_with_noise_var(1.0);
        let q = precision_matrix(&r, &pilot).unwrap();
        for i in 0..5 {
            assert_relative_eq!(q[(i, i)], 0.5, epsilon = 1e-12);
        }
        let psi = estimate_covariance(&r, &q);
        assert_relative_eq!(psi[(0, 0)], 0.5, epsilon = 1e-12);
        let mse = mse_matrix(&r, &psi);
        assert_relative_eq!(mse[(0, 0)], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn zero_covariance_pure_noise_limit() {
        let r = DMatrix::<f64>::zeros(4, 4);
        let pilot = pilot_with_noise_var(0.25);
        let q = precision_matrix(&r, &pilot).unwrap();
        for i in 0..4 {
            assert_relative_eq!(q[(i, i)], 4.0, epsilon = 1e-12);
        }
        // estimate of anything is zero
        let obs = DVector::from_element(4, C64::new(1.0, -2.0));
        let est = mmse_estimate(&obs, &r, &q).unwrap();
        assert!(est.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn random_psd_matches_dense_inverse() {
        // deterministic pseudo-random PSD matrix
        let n = 8;
        let g = DMatrix::from_fn(n, n, |i, j| {
            ((i * 31 + j * 17 + 3) % 13) as f64 / 13.0 - 0.4
        });
        let r = &g * g.transpose();
        let pilot = pilot_with_noise_var(0.37);
        let q = precision_matrix(&r, &pilot).unwrap();
        let mut shifted = r.clone();
        for i in 0..n {
            shifted[(i, i)] += 0.37;
        }
        let direct = shifted.clone().try_inverse().unwrap();
        assert!((&q - &direct).norm() / direct.norm() < 1e-10);
        // residual contract: Q (R + cI) = I
        let residual = &q * &shifted - DMatrix::<f64>::identity(n, n);
        assert!(residual.norm() < 1e-10);
    }

    #[test]
    fn perfect_training_limit() {
        let n = 6;
        let g = DMatrix::from_fn(n, n, |i, j| (((i + 2) * (j + 5)) % 7) as f64 / 7.0);
        let r = &g * g.transpose() + DMatrix::identity(n, n);
        let pilot = pilot_with_noise_var(1e-12);
        let q = precision_matrix(&r, &pilot).unwrap();
        let psi = estimate_covariance(&r, &q);
        assert!((&psi - &r).norm() / r.norm() < 1e-8);
        let mse = mse_matrix(&r, &psi);
        assert!(mse.norm() / r.norm() < 1e-8);
    }

    #[test]
    fn noise_free_estimate_recovers_the_channel() {
        // c -> 0 with full-rank R turns the filter R(R + cI)^-1 into the
        // identity, so a noise-free observation estimates to itself.
        let n = 5;
        let g = DMatrix::from_fn(n, n, |i, j| ((i * 5 + j * 2) % 7) as f64 / 7.0);
        let r = &g * g.transpose() + DMatrix::identity(n, n) * 0.5;
        let pilot = pilot_with_noise_var(1e-13);
        let q = precision_matrix(&r, &pilot).unwrap();
        let h = DVector::from_fn(n, |i, _| {
            C64::new(0.3 * i as f64 - 1.0, 0.9 - 0.2 * i as f64)
        });
        let est = mmse_estimate(&h, &r, &q).unwrap();
        assert!((est - &h).norm() / h.norm() < 1e-10);
    }

    #[test]
    fn psi_trace_bounded_by_r_trace_and_monotone_in_training_power() {
        let n = 6;
        let g = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.3);
        let r = &g * g.transpose();
        let mut last = 0.0;
        for step in 1..=10 {
            let p_train = 10f64.powf(step as f64 / 2.0 - 3.0);
            let pilot = PilotConfig::new(2, p_train, 1e-2, 200, 2).unwrap();
            let q = precision_matrix(&r, &pilot).unwrap();
            let tr = estimate_covariance(&r, &q).trace();
            assert!(tr <= r.trace() + 1e-12);
            assert!(tr >= last - 1e-15, "trace not nondecreasing in p_train");
            last = tr;
        }
    }

    #[test]
    fn estimate_is_linear_in_observation() {
        let n = 4;
        let g = DMatrix::from_fn(n, n, |i, j| ((i + j * 5) % 9) as f64 / 9.0);
        let r = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
        let pilot = pilot_with_noise_var(0.2);
        let q = precision_matrix(&r, &pilot).unwrap();
        let a = DVector::from_fn(n, |i, _| C64::new(i as f64, 1.0 - i as f64));
        let b = DVector::from_fn(n, |i, _| C64::new(-(i as f64) * 0.5, 0.3));
        let lhs = mmse_estimate(&(&a + &b), &r, &q).unwrap();
        let rhs = mmse_estimate(&a, &r, &q).unwrap() + mmse_estimate(&b, &r, &q).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);

        let short = DVector::from_element(n - 1, C64::new(0.0, 0.0));
        assert!(mmse_estimate(&short, &r, &q).is_err());
    }
}
