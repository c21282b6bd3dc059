//! Exact sensitivities, Fisher information and Cramér-Rao bounds.
//!
//! The Jacobian `J_n = dm[n]/d(T1, T2, M0)` is obtained by differentiating
//! the state and observation equations and iterating the resulting
//! difference equations alongside the state. For IR-FISP the recursions
//! reduce to a handful of scalar factors per TR:
//!
//! * `dm/dT1` only sees the propagated sensitivity, because the projected
//!   relaxation derivative `P dR(TE)/dT1` vanishes;
//! * `dm/dT2` keeps both the observation-matrix term and the propagated term;
//! * `dm/dM0` keeps only the propagated term.
//!
//! [`state_space`] holds a generic (and much slower) implementation over
//! arbitrary system matrices, used to cross-check this one.

pub mod state_space;

use alloc::vec::Vec;

use nalgebra::{Matrix2x3, Matrix3, SymmetricEigen, Vector3};

use crate::bloch::{
    check_relaxation_args, step_coeffs, AcqSchedule, IsochromatEnsemble, SignalTrajectory,
    StepCoeffs, TissueParams,
};
use crate::error::{Error, Result};
use crate::math::{exp, pairwise_sum, sin_cos, sqrt};

/// Largest accepted condition number of the equilibrated Fisher matrix.
pub const MAX_CONDITION: f64 = 1e14;

/// Closed-form parameter derivatives of the relaxation matrix and the
/// recovery input over an interval `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationDerivatives {
    /// `dR/dT1 = (t/T1^2) e^{-t/T1} E33`
    pub d_r_dt1: Matrix3<f64>,
    /// `dR/dT2 = (t/T2^2) e^{-t/T2} diag(1, 1, 0)`
    pub d_r_dt2: Matrix3<f64>,
    /// `db/dT1 = -(t/T1^2) e^{-t/T1} e3`
    pub d_b_dt1: Vector3<f64>,
}

pub fn matrix_derivatives(theta: &TissueParams, t: f64) -> Result<RelaxationDerivatives> {
    check_relaxation_args(theta.t1, theta.t2, t)?;
    let f1 = t / (theta.t1 * theta.t1) * exp(-t / theta.t1);
    let f2 = t / (theta.t2 * theta.t2) * exp(-t / theta.t2);
    Ok(RelaxationDerivatives {
        d_r_dt1: Matrix3::from_diagonal(&Vector3::new(0.0, 0.0, f1)),
        d_r_dt2: Matrix3::from_diagonal(&Vector3::new(f2, f2, 0.0)),
        d_b_dt1: Vector3::new(0.0, 0.0, -f1),
    })
}

/// Per-TR Jacobians `J_n`, each 2 x 3 with columns `(T1, T2, M0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrajectory {
    jacobians: Vec<Matrix2x3<f64>>,
}

impl SensitivityTrajectory {
    pub fn new(jacobians: Vec<Matrix2x3<f64>>) -> Self {
        Self { jacobians }
    }

    pub fn jacobians(&self) -> &[Matrix2x3<f64>] {
        &self.jacobians
    }

    pub fn len(&self) -> usize {
        self.jacobians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jacobians.is_empty()
    }

    /// Jacobians of the first `n` samples.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            jacobians: self.jacobians[..n.min(self.len())].to_vec(),
        }
    }
}

/// Channels per TR in the fused kernel: `m`, then `dm/dT1`, `dm/dT2`, `dm/dM0`.
pub(crate) const FUSED_WIDTH: usize = 8;

/// Per-TR derivative factors of the relaxation terms.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DerivCoeffs {
    /// `(TE/T2^2) e^{-TE/T2}`
    pub de2_te_dt2: f64,
    /// `(TR/T2^2) e^{-TR/T2}`
    pub de2_tr_dt2: f64,
    /// `(TR/T1^2) e^{-TR/T1}`
    pub de1_tr_dt1: f64,
}

pub(crate) fn deriv_coeffs(coeffs: &[StepCoeffs], theta: &TissueParams) -> Vec<DerivCoeffs> {
    let (t1, t2) = (theta.t1, theta.t2);
    coeffs
        .iter()
        .map(|k| DerivCoeffs {
            de2_te_dt2: k.te / (t2 * t2) * k.e2_te,
            de2_tr_dt2: k.tr / (t2 * t2) * k.e2_tr,
            de1_tr_dt1: k.tr / (t1 * t1) * k.e1_tr,
        })
        .collect()
}

/// State and the three sensitivity states of one isochromat.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FusedState {
    pub m: Vector3<f64>,
    pub s: [Vector3<f64>; 3],
}

impl FusedState {
    pub fn initial(m0: f64, nv: usize) -> Self {
        let inv = 1.0 / nv as f64;
        Self {
            m: Vector3::new(0.0, 0.0, m0 * inv),
            s: [Vector3::zeros(), Vector3::zeros(), Vector3::new(0.0, 0.0, inv)],
        }
    }

    /// Writes the observation and its derivatives for this TR into `out`
    /// (adding) and advances the state. `cs = (cos beta, sin beta)`.
    #[inline]
    pub fn advance(
        &mut self,
        k: &StepCoeffs,
        d: &DerivCoeffs,
        cs: (f64, f64),
        m0_r: f64,
        inv_nv: f64,
        out: &mut [f64],
    ) {
        let y = k.q * self.m;
        let y1 = k.q * self.s[0];
        let y2 = k.q * self.s[1];
        let y3 = k.q * self.s[2];

        out[0] += k.e2_te * y.x;
        out[1] += k.e2_te * y.y;
        out[2] += k.e2_te * y1.x;
        out[3] += k.e2_te * y1.y;
        out[4] += d.de2_te_dt2 * y.x + k.e2_te * y2.x;
        out[5] += d.de2_te_dt2 * y.y + k.e2_te * y2.y;
        out[6] += k.e2_te * y3.x;
        out[7] += k.e2_te * y3.y;

        let (c, s) = cs;
        let rot = |x: f64, y: f64, z: f64| Vector3::new(c * x + s * y, -s * x + c * y, z);
        let recovery = 1.0 - k.e1_tr;
        self.m = rot(
            k.e2_tr * y.x,
            k.e2_tr * y.y,
            k.e1_tr * y.z + m0_r * recovery,
        );
        self.s[0] = rot(
            k.e2_tr * y1.x,
            k.e2_tr * y1.y,
            d.de1_tr_dt1 * y.z + k.e1_tr * y1.z - m0_r * d.de1_tr_dt1,
        );
        self.s[1] = rot(
            d.de2_tr_dt2 * y.x + k.e2_tr * y2.x,
            d.de2_tr_dt2 * y.y + k.e2_tr * y2.y,
            k.e1_tr * y2.z,
        );
        self.s[2] = rot(
            k.e2_tr * y3.x,
            k.e2_tr * y3.y,
            k.e1_tr * y3.z + inv_nv * recovery,
        );
    }
}

/// Fused pass returning the flat `[N x FUSED_WIDTH]` channel block.
pub(crate) fn fused_channels(
    schedule: &AcqSchedule,
    theta: &TissueParams,
    ensemble: &IsochromatEnsemble,
) -> Result<Vec<f64>> {
    let coeffs = step_coeffs(schedule, theta)?;
    let derivs = deriv_coeffs(&coeffs, theta);
    let betas = ensemble.betas();
    let nv = betas.len();
    let m0_r = theta.m0 / nv as f64;
    let inv_nv = 1.0 / nv as f64;
    Ok(pairwise_sum(0, nv, FUSED_WIDTH * coeffs.len(), &|r, buf: &mut [f64]| {
        let (s, c) = sin_cos(betas[r]);
        let mut st = FusedState::initial(theta.m0, nv);
        for ((k, d), out) in coeffs.iter().zip(&derivs).zip(buf.chunks_exact_mut(FUSED_WIDTH)) {
            st.advance(k, d, (c, s), m0_r, inv_nv, out);
        }
    }))
}

pub(crate) fn split_channels(flat: &[f64]) -> (SignalTrajectory, SensitivityTrajectory) {
    let mut samples = Vec::with_capacity(flat.len() / FUSED_WIDTH);
    let mut jacobians = Vec::with_capacity(flat.len() / FUSED_WIDTH);
    for c in flat.chunks_exact(FUSED_WIDTH) {
        samples.push([c[0], c[1]]);
        #[rustfmt::skip]
        let j = Matrix2x3::new(
            c[2], c[4], c[6],
            c[3], c[5], c[7],
        );
        jacobians.push(j);
    }
    (SignalTrajectory::new(samples), SensitivityTrajectory::new(jacobians))
}

/// Simulates the signal together with its exact Jacobians in one pass.
pub fn sensitivity_trajectory(
    schedule: &AcqSchedule,
    theta: &TissueParams,
    ensemble: &IsochromatEnsemble,
) -> Result<(SignalTrajectory, SensitivityTrajectory)> {
    let flat = fused_channels(schedule, theta, ensemble)?;
    Ok(split_channels(&flat))
}

/// Fisher information of `(T1, T2, M0)` under i.i.d. Gaussian noise with
/// standard deviation `sigma` on each real channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    pub matrix: Matrix3<f64>,
    pub sigma: f64,
}

impl FisherMatrix {
    pub fn eigenvalues(&self) -> Vector3<f64> {
        SymmetricEigen::new(self.matrix).eigenvalues
    }
}

/// `I = (1/sigma^2) sum_n J_n^T J_n`.
pub fn fisher(sens: &SensitivityTrajectory, sigma: f64) -> Result<FisherMatrix> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(alloc::format!(
            "noise standard deviation must be positive, got {sigma}"
        )));
    }
    let mut acc = Matrix3::zeros();
    for j in sens.jacobians() {
        acc += j.transpose() * j;
    }
    let matrix = acc / (sigma * sigma);
    // Keep the stored matrix exactly symmetric.
    let matrix = (matrix + matrix.transpose()) * 0.5;
    Ok(FisherMatrix { matrix, sigma })
}

/// Inverse Fisher information and normalized per-parameter bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbReport {
    /// `V = I^{-1}`, in squared parameter units.
    pub crb_matrix: Matrix3<f64>,
    /// `sqrt(V_ii) / theta_i`.
    pub ncrb: [f64; 3],
    /// Condition number of the unit-diagonal (equilibrated) Fisher matrix.
    pub condition_number: f64,
}

impl CrbReport {
    pub fn variances(&self) -> [f64; 3] {
        [self.crb_matrix[(0, 0)], self.crb_matrix[(1, 1)], self.crb_matrix[(2, 2)]]
    }

    pub fn std_devs(&self) -> [f64; 3] {
        self.variances().map(sqrt)
    }
}

/// Inverts the Fisher matrix.
///
/// The matrix is first equilibrated to unit diagonal so that the condition
/// check measures identifiability rather than the (large) spread of
/// parameter units, then inverted through its symmetric eigendecomposition.
pub fn crb(fim: &FisherMatrix, theta: &TissueParams) -> Result<CrbReport> {
    theta.validate()?;
    let i = &fim.matrix;
    let mut scale = Vector3::zeros();
    for k in 0..3 {
        let d = i[(k, k)];
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::SingularInformation {
                condition: f64::INFINITY,
            });
        }
        scale[k] = 1.0 / sqrt(d);
    }
    let d = Matrix3::from_diagonal(&scale);
    let eq = d * i * d;
    let eq = (eq + eq.transpose()) * 0.5;
    let eig = SymmetricEigen::new(eq);
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularInformation { condition });
    }
    let inv_eig = eig.eigenvalues.map(|l| 1.0 / l);
    let inv = eig.eigenvectors * Matrix3::from_diagonal(&inv_eig) * eig.eigenvectors.transpose();
    let v = d * inv * d;
    let v = (v + v.transpose()) * 0.5;
    let th = theta.to_array();
    let ncrb = [0, 1, 2].map(|k| sqrt(v[(k, k)].max(0.0)) / th[k]);
    Ok(CrbReport {
        crb_matrix: v,
        ncrb,
        condition_number: condition,
    })
}

/// Simulates, assembles the Fisher matrix and inverts it.
pub fn crb_for_schedule(
    schedule: &AcqSchedule,
    theta: &TissueParams,
    ensemble: &IsochromatEnsemble,
    sigma: f64,
) -> Result<CrbReport> {
    let (_, sens) = sensitivity_trajectory(schedule, theta, ensemble)?;
    crb(&fisher(&sens, sigma)?, theta)
}
