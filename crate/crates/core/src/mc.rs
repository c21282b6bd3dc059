//! Noise injection, Monte Carlo evaluation of the matched-filter estimator
//! and normalized error metrics.
//!
//! Noise is drawn from `ChaCha8Rng` seeded per trial with
//! [`trial_seed`]; Gaussian samples use the ziggurat sampler of
//! `rand_distr::StandardNormal`. Trial results are independent of execution
//! order and thread count.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bloch::{simulate, AcqSchedule, IsochromatEnsemble, SignalTrajectory, TissueParams};
use crate::crb::{crb, crb_for_schedule, fisher, sensitivity_trajectory};
use crate::dictionary::{match_signal, Dictionary};
use crate::error::{Error, Result};
use crate::math::{map_indexed, pow10, sqrt};

/// Additive white Gaussian noise on each real channel.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        let n = Self { sigma, seed };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Same sigma, seed of trial `trial`.
    pub fn for_trial(&self, trial: u64) -> Self {
        Self {
            sigma: self.sigma,
            seed: trial_seed(self.seed, trial),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(seed) ^ trial)`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ trial)
}

/// `sigma = s_ref * 10^(-snr_db / 20)`.
pub fn snr_to_sigma(snr_db: f64, s_ref: f64) -> Result<f64> {
    if !(s_ref > 0.0 && s_ref.is_finite()) {
        return Err(Error::invalid(format!("reference signal must be positive, got {s_ref}")));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    Ok(s_ref * pow10(-snr_db / 20.0))
}

/// Adds noise to a flattened `2N` signal, drawing channels in order.
pub fn add_noise_flat(signal: &[f64], noise: &NoiseModel) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    signal
        .iter()
        .map(|&v| {
            let z: f64 = rng.sample(StandardNormal);
            v + noise.sigma * z
        })
        .collect()
}

pub fn add_noise(signal: &SignalTrajectory, noise: &NoiseModel) -> SignalTrajectory {
    SignalTrajectory::from_flat(&add_noise_flat(&signal.to_flat(), noise))
        .expect("flattened trajectory has even length")
}

/// Normalized error statistics over Monte Carlo trials, one entry per
/// parameter `(T1, T2, M0)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct McResult {
    /// `|mean(est) - true| / true`.
    pub nbias: [f64; 3],
    /// `mean(|est - true|) / true`.
    pub nmae: [f64; 3],
    /// Population standard deviation (1/T) over true value.
    pub nstd: [f64; 3],
    /// `sqrt(mean((est - true)^2)) / true`.
    pub nrmse: [f64; 3],
    /// Empirical standard deviation over the square root of the bound.
    pub empirical_std_over_crb: [f64; 3],
    pub mean_estimate: [f64; 3],
    /// `sqrt(CRB_ii)` at the noise level of the run.
    pub crb_std: [f64; 3],
    pub trials: usize,
    /// Per-trial estimates in trial order.
    pub estimates: Vec<[f64; 3]>,
}

/// Normalized metrics of `estimates` against `truth`.
pub fn summarize(estimates: &[[f64; 3]], truth: [f64; 3]) -> ([f64; 3], [f64; 3], [f64; 3], [f64; 3], [f64; 3]) {
    let t = estimates.len() as f64;
    let mut mean = [0.0; 3];
    let mut nbias = [0.0; 3];
    let mut nmae = [0.0; 3];
    let mut nstd = [0.0; 3];
    let mut nrmse = [0.0; 3];
    for k in 0..3 {
        mean[k] = estimates.iter().map(|e| e[k]).sum::<f64>() / t;
        let var = estimates.iter().map(|e| (e[k] - mean[k]) * (e[k] - mean[k])).sum::<f64>() / t;
        let mae = estimates.iter().map(|e| (e[k] - truth[k]).abs()).sum::<f64>() / t;
        let mse = estimates.iter().map(|e| (e[k] - truth[k]) * (e[k] - truth[k])).sum::<f64>() / t;
        nbias[k] = (mean[k] - truth[k]).abs() / truth[k];
        nmae[k] = mae / truth[k];
        nstd[k] = sqrt(var) / truth[k];
        nrmse[k] = sqrt(mse) / truth[k];
    }
    (mean, nbias, nmae, nstd, nrmse)
}

/// Simulates the clean signal with the dictionary's isochromat ensemble,
/// matches `trials` noisy realizations and compares against the bound at
/// the same noise level.
pub fn run_mc(
    schedule: &AcqSchedule,
    theta_true: &TissueParams,
    noise: &NoiseModel,
    dict: &Dictionary,
    trials: usize,
) -> Result<McResult> {
    if trials < 2 {
        return Err(Error::invalid(format!("need at least 2 trials, got {trials}")));
    }
    noise.validate()?;
    if schedule.len() != dict.schedule().len() {
        return Err(Error::LengthMismatch {
            expected: dict.schedule().len(),
            found: schedule.len(),
        });
    }
    let ensemble = dict.ensemble();
    let clean = simulate(schedule, theta_true, ensemble)?.to_flat();
    let estimates = map_indexed(trials, |t| {
        let noisy = add_noise_flat(&clean, &noise.for_trial(t as u64));
        match_signal(&noisy, dict).map(|e| e.to_array())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    // The bound scales as sigma^2; evaluate at unit sigma so tiny noise
    // levels do not overflow the information matrix.
    let unit = crb_for_schedule(schedule, theta_true, ensemble, 1.0)?;
    let crb_std = unit.std_devs().map(|s| s * noise.sigma);

    let truth = theta_true.to_array();
    let (mean_estimate, nbias, nmae, nstd, nrmse) = summarize(&estimates, truth);
    let mut ratio = [0.0; 3];
    for k in 0..3 {
        ratio[k] = nstd[k] * truth[k] / crb_std[k];
    }
    Ok(McResult {
        nbias,
        nmae,
        nstd,
        nrmse,
        empirical_std_over_crb: ratio,
        mean_estimate,
        crb_std,
        trials,
        estimates,
    })
}

/// One row of an nCRB-versus-length table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub label: String,
    pub n: usize,
    pub ncrb: [f64; 3],
}

/// nCRB of each labeled schedule at `theta`.
pub fn sweep_ncrb(
    schedules: &[(String, AcqSchedule)],
    theta: &TissueParams,
    ensemble: &IsochromatEnsemble,
    sigma: f64,
) -> Result<Vec<SweepRow>> {
    if schedules.is_empty() {
        return Err(Error::EmptySchedule);
    }
    schedules
        .iter()
        .map(|(label, s)| {
            let (_, sens) = sensitivity_trajectory(s, theta, ensemble)?;
            let report = crb(&fisher(&sens, sigma)?, theta)?;
            Ok(SweepRow {
                label: label.clone(),
                n: s.len(),
                ncrb: report.ncrb,
            })
        })
        .collect()
}

/// `||true - est||_2 / ||true||_2`.
pub fn overall_error(true_vals: &[f64], est_vals: &[f64]) -> Result<f64> {
    if true_vals.len() != est_vals.len() {
        return Err(Error::LengthMismatch {
            expected: true_vals.len(),
            found: est_vals.len(),
        });
    }
    let norm = sqrt(true_vals.iter().map(|v| v * v).sum::<f64>());
    if !(norm > 0.0) {
        return Err(Error::invalid("reference vector has zero norm"));
    }
    let diff = sqrt(true_vals.iter().zip(est_vals).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
    Ok(diff / norm)
}
