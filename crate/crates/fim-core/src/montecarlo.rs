//! Ground-truth simulator for the closed-form statistics.
//!
//! Draws correlated Rayleigh channel realizations, simulates de-spread pilot
//! training and per-realization MMSE estimation, applies maximum-ratio
//! precoding with the common power normalization, and estimates every
//! closed-form quantity empirically: estimate covariance, error covariance,
//! per-user signal and interference powers, the normalization, and the sum
//! spectral efficiency.
//!
//! Realizations are split into a fixed number of batches; each batch has its
//! own RNG stream and batches are reduced in index order, so results are
//! bitwise reproducible regardless of thread count. Standard errors come
//! from batch means.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{FimError, Result};
use crate::estimation::PilotConfig;
use crate::geometry::{MorphingVector, PositionSet};
use crate::model::FimModel;
use crate::seeding::stream_rng;

type C64 = Complex<f64>;

/// Relative eigenvalue tolerance for treating a covariance as PSD.
pub const EPS_PSD: f64 = 1e-8;

/// Monte Carlo run parameters.
#[derive(Debug, Clone)]
pub struct McConfig {
    /// Number of channel realizations.
    pub realizations: usize,
    /// Master seed.
    pub seed: u64,
    /// Whether to accumulate the (larger) empirical covariance matrices.
    pub accumulate_covariances: bool,
    /// Batch count for parallelism and batch-mean standard errors.
    pub batches: usize,
}

impl McConfig {
    pub fn new(realizations: usize, seed: u64) -> Self {
        Self {
            realizations,
            seed,
            accumulate_covariances: true,
            batches: 50,
        }
    }
}

/// Colored-Gaussian channel sampler for one covariance matrix.
///
/// Factors `R = F F^T` once via a symmetric eigendecomposition with
/// rank-deficiency handling: eigenvalues within `EPS_PSD * lambda_max` of
/// zero are clamped, anything more negative is reported as a model
/// violation.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    factor: DMatrix<f64>,
    dim: usize,
}

impl ChannelSampler {
    pub fn new(r: &DMatrix<f64>) -> Result<Self> {
        let n = r.nrows();
        if r.ncols() != n {
            return Err(FimError::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                n,
                r.ncols()
            )));
        }
        let eig = r.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let floor = -EPS_PSD * max_ev.max(f64::MIN_POSITIVE);
        let mut factor = eig.eigenvectors.clone();
        for j in 0..n {
            let ev = eig.eigenvalues[j];
            if ev < floor {
                return Err(FimError::Numerical(format!(
                    "covariance is indefinite: eigenvalue {ev} below {floor}"
                )));
            }
            let s = ev.max(0.0).sqrt();
            for i in 0..n {
                factor[(i, j)] *= s;
            }
        }
        Ok(Self { factor, dim: n })
    }

    /// One draw from the circularly symmetric complex Gaussian with the
    /// factored covariance.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<C64> {
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let re_w = DVector::from_fn(self.dim, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * inv_sqrt2
        });
        let im_w = DVector::from_fn(self.dim, |_, _| {
            rng.sample::<f64, _>(StandardNormal) * inv_sqrt2
        });
        let re = &self.factor * re_w;
        let im = &self.factor * im_w;
        DVector::from_fn(self.dim, |i, _| C64::new(re[i], im[i]))
    }
}

/// Draws one channel realization (see [`ChannelSampler::sample`]).
pub fn sample_channel<R: Rng>(sampler: &ChannelSampler, rng: &mut R) -> DVector<C64> {
    sampler.sample(rng)
}

/// De-spread training observation `r_k = h_k + z_k` with noise covariance
/// `sigma^2/(tau p_train) I`. Pilots are orthogonal by construction and never
/// materialized.
pub fn simulate_training<R: Rng>(
    h_k: &DVector<C64>,
    pilot: &PilotConfig,
    rng: &mut R,
) -> DVector<C64> {
    let scale = (pilot.despread_noise_var() / 2.0).sqrt();
    DVector::from_fn(h_k.len(), |i, _| {
        h_k[i]
            + C64::new(
                rng.sample::<f64, _>(StandardNormal) * scale,
                rng.sample::<f64, _>(StandardNormal) * scale,
            )
    })
}

/// Sum of `L` random plane waves with the front-half-space angular density;
/// converges in distribution to the Gaussian channel as `L` grows. Used as a
/// secondary sanity check of the correlation model at small sizes.
pub fn plane_wave_channel<R: Rng>(
    pos: &PositionSet,
    wavelength: f64,
    a_mu: f64,
    paths: usize,
    rng: &mut R,
) -> DVector<C64> {
    let n = pos.len();
    let k0 = 2.0 * std::f64::consts::PI / wavelength;
    let amp = (a_mu / 2.0).sqrt();
    let mut h = DVector::from_element(n, C64::new(0.0, 0.0));
    for _ in 0..paths {
        // theta has density cos(theta)/2 on [-pi/2, pi/2]; phi is uniform.
        let theta = rng.random_range(-1.0f64..1.0).asin();
        let phi = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
        let gain = C64::new(
            rng.sample::<f64, _>(StandardNormal) * amp,
            rng.sample::<f64, _>(StandardNormal) * amp,
        );
        let (sin_t, cos_t) = theta.sin_cos();
        let (sin_p, cos_p) = phi.sin_cos();
        let dir = [cos_t * sin_p, cos_t * cos_p, sin_t];
        for i in 0..n {
            let u = pos.position(i);
            let phase = k0 * (dir[0] * u[0] + dir[1] * u[1] + dir[2] * u[2]);
            h[i] += gain * C64::new(0.0, phase).exp();
        }
    }
    h / C64::new((paths as f64).sqrt(), 0.0)
}

/// Empirical estimates with batch-mean standard errors.
#[derive(Debug, Clone)]
pub struct McEstimates {
    /// Empirical estimate covariances (one per user), when accumulated.
    pub psi_emp: Vec<DMatrix<C64>>,
    /// Empirical error covariances.
    pub mse_emp: Vec<DMatrix<C64>>,
    /// Empirical channel covariances.
    pub channel_cov_emp: Vec<DMatrix<C64>>,
    /// Empirical cross-covariance of error and estimate, `E{(h-hhat) hhat^H}`.
    pub error_estimate_cross: Vec<DMatrix<C64>>,
    /// Per-user empirical signal power `|mean(h^H hhat)|^2`.
    pub signal: Vec<f64>,
    pub signal_stderr: Vec<f64>,
    /// Per-user empirical interference-plus-noise power.
    pub interference: Vec<f64>,
    pub interference_stderr: Vec<f64>,
    /// Per-user empirical variance term `Var{h_k^H hhat_k}`.
    pub variance_term: Vec<f64>,
    /// Per-user empirical cross term `sum_{i != k} E{|h_k^H hhat_i|^2}`.
    pub cross_term: Vec<f64>,
    /// Empirical normalization `K / mean tr(F F^H)`.
    pub eta: f64,
    pub eta_stderr: f64,
    /// Empirical sum spectral efficiency in nats/s/Hz.
    pub se_nats: f64,
    pub se_stderr: f64,
    pub realizations: usize,
}

impl McEstimates {
    /// Whether any scalar standard error exceeds half of `rel_tol` relative
    /// to its estimate, i.e. the run is too short for that comparison
    /// tolerance.
    pub fn undersampled(&self, rel_tol: f64) -> bool {
        let half = 0.5 * rel_tol;
        let rel = |se: f64, v: f64| se / v.abs().max(f64::MIN_POSITIVE);
        let mut worst = rel(self.se_stderr, self.se_nats).max(rel(self.eta_stderr, self.eta));
        for k in 0..self.signal.len() {
            worst = worst
                .max(rel(self.signal_stderr[k], self.signal[k]))
                .max(rel(self.interference_stderr[k], self.interference[k]));
        }
        worst > half
    }
}

struct BatchAccum {
    count: usize,
    sum_a: Vec<C64>,         // sum of h_k^H hhat_k
    sum_absq: Vec<Vec<f64>>, // sums of |h_k^H hhat_i|^2
    sum_tr_f: f64,           // sum of tr(F F^H)
    psi: Vec<DMatrix<C64>>,
    mse: Vec<DMatrix<C64>>,
    chan: Vec<DMatrix<C64>>,
    cross: Vec<DMatrix<C64>>,
}

impl BatchAccum {
    fn zeros(users: usize, n: usize, with_cov: bool) -> Self {
        let zmat = || -> Vec<DMatrix<C64>> {
            if with_cov {
                (0..users).map(|_| DMatrix::zeros(n, n)).collect()
            } else {
                Vec::new()
            }
        };
        Self {
            count: 0,
            sum_a: vec![C64::new(0.0, 0.0); users],
            sum_absq: vec![vec![0.0; users]; users],
            sum_tr_f: 0.0,
            psi: zmat(),
            mse: zmat(),
            chan: zmat(),
            cross: zmat(),
        }
    }
}

struct BatchStats {
    signal: Vec<f64>,
    interference: Vec<f64>,
    eta: f64,
    se_nats: f64,
}

fn batch_stats(acc: &BatchAccum, model: &FimModel) -> BatchStats {
    let users = model.users();
    let m = acc.count.max(1) as f64;
    let eta = users as f64 / (acc.sum_tr_f / m);
    let noise = users as f64 * model.system.noise_power / (model.system.total_power * eta);
    let mut signal = Vec::with_capacity(users);
    let mut interference = Vec::with_capacity(users);
    let mut se_nats = 0.0;
    for k in 0..users {
        let mean_a = acc.sum_a[k] / m;
        let s = mean_a.norm_sqr();
        let variance = acc.sum_absq[k][k] / m - s;
        let cross: f64 = (0..users)
            .filter(|&i| i != k)
            .map(|i| acc.sum_absq[k][i] / m)
            .sum();
        let i_k = variance + cross + noise;
        se_nats += (s / i_k).ln_1p();
        signal.push(s);
        interference.push(i_k);
    }
    BatchStats {
        signal,
        interference,
        eta,
        se_nats: model.system.prelog * se_nats,
    }
}

fn stderr_from_batches(values: &[f64]) -> f64 {
    let b = values.len();
    if b < 2 {
        return f64::INFINITY;
    }
    let mean = values.iter().sum::<f64>() / b as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b as f64 - 1.0);
    (var / b as f64).sqrt()
}

/// Runs the simulator and estimates every closed-form quantity.
pub fn estimate_uatf_terms(
    model: &FimModel,
    y: &MorphingVector,
    mc: &McConfig,
) -> Result<McEstimates> {
    if mc.realizations == 0 {
        return Err(FimError::InvalidParameter(
            "need at least one realization".into(),
        ));
    }
    let users = model.users();
    let n = model.elements();
    let (corr, stats) = model.stats(y)?;
    let samplers: Vec<ChannelSampler> = corr
        .r_users
        .iter()
        .map(ChannelSampler::new)
        .collect::<Result<Vec<_>>>()?;
    // per-user MMSE filters W_k = R_k Q_k
    let filters: Vec<DMatrix<f64>> = (0..users).map(|k| &corr.r_users[k] * &stats.q[k]).collect();

    let batches = mc.batches.clamp(1, mc.realizations);
    let base = mc.realizations / batches;
    let extra = mc.realizations % batches;

    let accums: Vec<BatchAccum> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(mc.seed, b as u64);
            let count = base + usize::from(b < extra);
            let mut acc = BatchAccum::zeros(users, n, mc.accumulate_covariances);
            let mut h = vec![DVector::<C64>::zeros(n); users];
            let mut hhat = vec![DVector::<C64>::zeros(n); users];
            for _ in 0..count {
                for k in 0..users {
                    h[k] = samplers[k].sample(&mut rng);
                    let obs = simulate_training(&h[k], &model.pilot, &mut rng);
                    hhat[k] = crate::estimation::real_mat_complex_vec(&filters[k], &obs);
                }
                for k in 0..users {
                    acc.sum_tr_f += hhat[k].norm_squared();
                    for (i, hhat_i) in hhat.iter().enumerate() {
                        let a: C64 = h[k].dotc(hhat_i);
                        if i == k {
                            acc.sum_a[k] += a;
                        }
                        acc.sum_absq[k][i] += a.norm_sqr();
                    }
                    if mc.accumulate_covariances {
                        let err = &h[k] - &hhat[k];
                        acc.psi[k] += &hhat[k] * hhat[k].adjoint();
                        acc.mse[k] += &err * err.adjoint();
                        acc.chan[k] += &h[k] * h[k].adjoint();
                        acc.cross[k] += &err * hhat[k].adjoint();
                    }
                }
                acc.count += 1;
            }
            acc
        })
        .collect();

    // deterministic reduction in batch order
    let mut total = BatchAccum::zeros(users, n, mc.accumulate_covariances);
    let mut per_batch: Vec<BatchStats> = Vec::with_capacity(batches);
    for acc in &accums {
        total.count += acc.count;
        total.sum_tr_f += acc.sum_tr_f;
        for k in 0..users {
            total.sum_a[k] += acc.sum_a[k];
            for i in 0..users {
                total.sum_absq[k][i] += acc.sum_absq[k][i];
            }
            if mc.accumulate_covariances {
                total.psi[k] += &acc.psi[k];
                total.mse[k] += &acc.mse[k];
                total.chan[k] += &acc.chan[k];
                total.cross[k] += &acc.cross[k];
            }
        }
        per_batch.push(batch_stats(acc, model));
    }

    let overall = batch_stats(&total, model);
    let m = total.count as f64;
    let scale = 1.0 / m;

    let mut variance_term = Vec::with_capacity(users);
    let mut cross_term = Vec::with_capacity(users);
    for k in 0..users {
        let mean_a = total.sum_a[k] / m;
        variance_term.push(total.sum_absq[k][k] / m - mean_a.norm_sqr());
        cross_term.push(
            (0..users)
                .filter(|&i| i != k)
                .map(|i| total.sum_absq[k][i] / m)
                .sum(),
        );
    }

    let collect_norm = |mats: &[DMatrix<C64>]| -> Vec<DMatrix<C64>> {
        mats.iter().map(|mtx| mtx * C64::new(scale, 0.0)).collect()
    };

    Ok(McEstimates {
        psi_emp: collect_norm(&total.psi),
        mse_emp: collect_norm(&total.mse),
        channel_cov_emp: collect_norm(&total.chan),
        error_estimate_cross: collect_norm(&total.cross),
        signal: overall.signal,
        signal_stderr: (0..users)
            .map(|k| {
                stderr_from_batches(&per_batch.iter().map(|b| b.signal[k]).collect::<Vec<_>>())
            })
            .collect(),
        interference: overall.interference,
        interference_stderr: (0..users)
            .map(|k| {
                stderr_from_batches(
                    &per_batch
                        .iter()
                        .map(|b| b.interference[k])
                        .collect::<Vec<_>>(),
                )
            })
            .collect(),
        variance_term,
        cross_term,
        eta: overall.eta,
        eta_stderr: stderr_from_batches(&per_batch.iter().map(|b| b.eta).collect::<Vec<_>>()),
        se_nats: overall.se_nats,
        se_stderr: stderr_from_batches(&per_batch.iter().map(|b| b.se_nats).collect::<Vec<_>>()),
        realizations: total.count,
    })
}
