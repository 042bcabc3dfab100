//! Closed-form average sum spectral efficiency under the use-and-then-forget
//! bound with maximum-ratio transmission on the MMSE estimates.
//!
//! With precoders `f_i = hhat_i`, a common power normalization
//! `eta = K / E{tr(F F^H)} = K / tr(Psi_sum)`, and equal power allocation,
//! the per-user terms are
//!
//! ```text
//! S_k = |E{h_k^H f_k}|^2                  = tr^2(Psi_k)
//! I_k = Var{h_k^H hhat_k}
//!       + sum_{i != k} E{|h_k^H hhat_i|^2}
//!       + K sigma^2 / (P eta)             = tr(R_k Psi_sum) + (sigma^2/P) tr(Psi_sum)
//! ```
//!
//! using `Var{h_k^H hhat_k} = tr(R_k Psi_k)` and
//! `E{|h_k^H hhat_i|^2} = tr(R_k Psi_i)` for independently estimated users.
//! The Monte Carlo oracle validates these identities term by term. The sum
//! spectral efficiency is `prelog * sum_k ln(1 + S_k / I_k)` in nats/s/Hz.

use nalgebra::DMatrix;

use crate::correlation::CorrelationSet;
use crate::error::{FimError, Result};
use crate::estimation::{EstimationStats, PilotConfig};

/// Downlink system parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Total downlink power `P` in watts.
    pub total_power: f64,
    /// Noise power `sigma^2` in watts.
    pub noise_power: f64,
    /// Number of users `K`.
    pub users: usize,
    /// Training-overhead prelog `(tau_c - tau) / tau_c`.
    pub prelog: f64,
}

impl SystemParams {
    pub fn new(total_power: f64, pilot: &PilotConfig, users: usize) -> Result<Self> {
        if !(total_power.is_finite() && total_power > 0.0) {
            return Err(FimError::InvalidParameter(format!(
                "total power must be positive, got {total_power}"
            )));
        }
        if users == 0 {
            return Err(FimError::InvalidParameter("need at least one user".into()));
        }
        let prelog = pilot.prelog();
        if !(prelog > 0.0 && prelog < 1.0) {
            return Err(FimError::InvalidParameter(format!(
                "prelog must lie in (0, 1), got {prelog}"
            )));
        }
        Ok(Self {
            total_power,
            noise_power: pilot.sigma2,
            users,
            prelog,
        })
    }
}

/// Coherent signal power `S_k = tr^2(Psi_k)`.
pub fn signal_power(psi_k: &DMatrix<f64>) -> f64 {
    let t = psi_k.trace();
    t * t
}

/// Interference-plus-noise power
/// `I_k = tr(R_k Psi_sum) + (sigma^2 / P) tr(Psi_sum)`.
///
/// Strictly positive; a nonpositive value indicates numerically inconsistent
/// inputs and is reported as an error rather than patched.
pub fn interference_power(
    r_k: &DMatrix<f64>,
    psi_sum: &DMatrix<f64>,
    sys: &SystemParams,
) -> Result<f64> {
    let cross = (r_k * psi_sum).trace();
    let noise = sys.noise_power / sys.total_power * psi_sum.trace();
    let total = cross + noise;
    if !(total.is_finite() && total > 0.0) {
        return Err(FimError::Numerical(format!(
            "interference power must be positive, got {total} (cross {cross}, noise {noise})"
        )));
    }
    Ok(total)
}

/// Power normalization `eta = K / tr(Psi_sum)`.
pub fn normalization_eta(psi_sum: &DMatrix<f64>, users: usize) -> Result<f64> {
    let t = psi_sum.trace();
    if !(t.is_finite() && t > 0.0) {
        return Err(FimError::Numerical(format!(
            "tr(Psi_sum) must be positive, got {t}"
        )));
    }
    Ok(users as f64 / t)
}

/// Per-user terms and the aggregate spectral efficiency.
#[derive(Debug, Clone)]
pub struct SeBreakdown {
    /// Per-user coherent signal powers `S_k`.
    pub signal: Vec<f64>,
    /// Per-user interference-plus-noise powers `I_k`.
    pub interference: Vec<f64>,
    /// Per-user SINRs `gamma_k = S_k / I_k`.
    pub sinr: Vec<f64>,
    /// Power normalization `eta`.
    pub eta: f64,
    /// Sum spectral efficiency in nats/s/Hz.
    pub se_nats: f64,
    /// Sum spectral efficiency in bits/s/Hz.
    pub se_bits: f64,
}

/// Assembles SINRs and the aggregate spectral efficiency from per-user terms.
pub fn sum_se(signal: &[f64], interference: &[f64], eta: f64, prelog: f64) -> Result<SeBreakdown> {
    if signal.len() != interference.len() {
        return Err(FimError::DimensionMismatch(format!(
            "{} signal terms vs {} interference terms",
            signal.len(),
            interference.len()
        )));
    }
    let mut sinr = Vec::with_capacity(signal.len());
    let mut nats = 0.0;
    for (k, (&s, &i)) in signal.iter().zip(interference).enumerate() {
        if !i.is_finite() || i <= 0.0 {
            return Err(FimError::Numerical(format!(
                "interference for user {k} must be positive, got {i}"
            )));
        }
        if s < 0.0 {
            return Err(FimError::Numerical(format!(
                "signal power for user {k} must be nonnegative, got {s}"
            )));
        }
        let g = s / i;
        nats += g.ln_1p();
        sinr.push(g);
    }
    let se_nats = prelog * nats;
    Ok(SeBreakdown {
        signal: signal.to_vec(),
        interference: interference.to_vec(),
        sinr,
        eta,
        se_nats,
        se_bits: se_nats / std::f64::consts::LN_2,
    })
}

/// Evaluates the full breakdown from estimation statistics.
pub fn se_from_stats(
    corr: &CorrelationSet,
    stats: &EstimationStats,
    sys: &SystemParams,
) -> Result<SeBreakdown> {
    if corr.users() != sys.users || stats.users() != sys.users {
        return Err(FimError::DimensionMismatch(format!(
            "correlation has {} users, stats {}, system expects {}",
            corr.users(),
            stats.users(),
            sys.users
        )));
    }
    let eta = normalization_eta(&stats.psi_sum, sys.users)?;
    let mut signal = Vec::with_capacity(sys.users);
    let mut interference = Vec::with_capacity(sys.users);
    for k in 0..sys.users {
        signal.push(signal_power(&stats.psi[k]));
        interference.push(interference_power(&corr.r_users[k], &stats.psi_sum, sys)?);
    }
    sum_se(&signal, &interference, eta, sys.prelog)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn sys(p: f64, sigma2: f64, users: usize) -> SystemParams {
        SystemParams {
            total_power: p,
            noise_power: sigma2,
            users,
            prelog: 0.98,
        }
    }

    #[test]
    fn signal_power_cases() {
        let n = 5;
        assert_relative_eq!(signal_power(&DMatrix::identity(n, n)), (n * n) as f64);
        assert_eq!(signal_power(&DMatrix::zeros(n, n)), 0.0);
    }

    #[test]
    fn single_user_identity_interference() {
        // Perfect estimation, K = 1, R = Psi = I:
        // I = tr(R Psi) + (sigma^2/P) tr(Psi) = N + (sigma^2/P) N.
        let n = 7;
        let eye = DMatrix::<f64>::identity(n, n);
        let s = sys(2.0, 0.5, 1);
        let i = interference_power(&eye, &eye, &s).unwrap();
        assert_relative_eq!(i, n as f64 + 0.25 * n as f64, epsilon = 1e-12);
    }

    #[test]
    fn infinite_power_leaves_interference_floor() {
        let n = 4;
        let eye = DMatrix::<f64>::identity(n, n);
        let lo = interference_power(&eye, &eye, &sys(1e12, 1e-3, 1)).unwrap();
        // floor = tr(R Psi_sum) = N
        assert_relative_eq!(lo, n as f64, epsilon = 1e-9);
    }

    #[test]
    fn eta_cases() {
        let n = 6;
        let eye = DMatrix::<f64>::identity(n, n);
        assert_relative_eq!(normalization_eta(&eye, 1).unwrap(), 1.0 / n as f64);
        let scaled = &eye * (3.0 / n as f64);
        assert_relative_eq!(normalization_eta(&scaled, 3).unwrap(), 1.0, epsilon = 1e-12);
        assert!(normalization_eta(&DMatrix::zeros(n, n), 2).is_err());
    }

    #[test]
    fn eta_noise_identity() {
        // (K sigma^2) / (P eta) == (sigma^2 / P) tr(Psi_sum)
        let n = 5;
        let g = DMatrix::from_fn(n, n, |i, j| ((i * 3 + j) % 7) as f64 / 7.0);
        let psi_sum = &g * g.transpose();
        let s = sys(3.0, 0.7, 4);
        let eta = normalization_eta(&psi_sum, s.users).unwrap();
        let lhs = s.users as f64 * s.noise_power / (s.total_power * eta);
        let rhs = s.noise_power / s.total_power * psi_sum.trace();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn sum_se_assembly() {
        // all gamma = 0
        let z = sum_se(&[0.0, 0.0], &[1.0, 2.0], 1.0, 0.98).unwrap();
        assert_eq!(z.se_nats, 0.0);

        // K = 1, gamma = e - 1 -> SE = prelog nats
        let g = std::f64::consts::E - 1.0;
        let one = sum_se(&[g], &[1.0], 1.0, 0.98).unwrap();
        assert_relative_eq!(one.se_nats, 0.98, epsilon = 1e-12);
        assert_relative_eq!(one.se_bits, 0.98 / std::f64::consts::LN_2, epsilon = 1e-12);

        assert!(sum_se(&[1.0], &[0.0], 1.0, 0.98).is_err());
        assert!(sum_se(&[1.0, 2.0], &[1.0], 1.0, 0.98).is_err());
    }

    #[test]
    fn prelog_from_default_block_length() {
        // tau_c = 200, tau = K = 4
        let pilot = PilotConfig::new(4, 0.01, 1e-13, 200, 4).unwrap();
        assert_relative_eq!(pilot.prelog(), 0.98);
    }

    #[test]
    fn se_monotone_in_power() {
        let n = 4;
        let g = DMatrix::from_fn(n, n, |i, j| ((i + 2 * j) % 5) as f64 / 5.0);
        let r = &g * g.transpose() + DMatrix::identity(n, n) * 0.2;
        let psi = &r * 0.6;
        let mut last = 0.0;
        for &p in &[0.1, 1.0, 10.0, 100.0] {
            let s = sys(p, 0.3, 1);
            let i = interference_power(&r, &psi, &s).unwrap();
            let se = sum_se(&[signal_power(&psi)], &[i], 1.0, 0.98)
                .unwrap()
                .se_nats;
            assert!(se >= last);
            last = se;
        }
    }
}
