//! Sensitivity propagation for a generic per-isochromat linear state-space
//! model `M[n] = A_n M[n-1] + B_n`, `m[n] = sum_r C_n M_r[n-1]`.
//!
//! Every system matrix comes with its derivative with respect to each
//! parameter, and the propagation applies the full product rule. This path
//! rebuilds all matrices at every step and is only meant as a reference and
//! for basis-change experiments.

use nalgebra::{Matrix2x3, Matrix3, Vector3};

use super::{split_channels, SensitivityTrajectory, FUSED_WIDTH};
use crate::bloch::{
    dephasing, recovery, relaxation, rf_rotation, AcqSchedule, IsochromatEnsemble,
    SignalTrajectory, TissueParams,
};
use crate::crb::matrix_derivatives;
use crate::error::Result;
use crate::math::pairwise_sum;

/// System, input and output matrices of one isochromat for one TR, with
/// their derivatives with respect to `(T1, T2, M0)`.
#[derive(Debug, Clone, Copy)]
pub struct StepSystem {
    pub a: Matrix3<f64>,
    pub da: [Matrix3<f64>; 3],
    pub b: Vector3<f64>,
    pub db: [Vector3<f64>; 3],
    pub c: Matrix2x3<f64>,
    pub dc: [Matrix2x3<f64>; 3],
}

pub trait StateSpaceModel: Sync {
    /// Number of TRs.
    fn steps(&self) -> usize;
    fn isochromats(&self) -> usize;
    /// Initial state of isochromat `r` and its parameter derivatives.
    fn initial(&self, r: usize) -> (Vector3<f64>, [Vector3<f64>; 3]);
    /// Matrices for TR `n` (0-based) and isochromat `r`.
    fn system(&self, n: usize, r: usize) -> StepSystem;
}

/// Iterates the observation and state derivative recursions.
pub fn propagate<M: StateSpaceModel>(model: &M) -> (SignalTrajectory, SensitivityTrajectory) {
    let steps = model.steps();
    let flat = pairwise_sum(0, model.isochromats(), FUSED_WIDTH * steps, &|r, buf: &mut [f64]| {
        let (mut x, mut dx) = model.initial(r);
        for (n, out) in buf.chunks_exact_mut(FUSED_WIDTH).enumerate() {
            let sys = model.system(n, r);
            let obs = sys.c * x;
            out[0] += obs.x;
            out[1] += obs.y;
            for i in 0..3 {
                let d_obs = sys.dc[i] * x + sys.c * dx[i];
                out[2 + 2 * i] += d_obs.x;
                out[3 + 2 * i] += d_obs.y;
            }
            let next_dx = [0, 1, 2].map(|i| sys.da[i] * x + sys.a * dx[i] + sys.db[i]);
            x = sys.a * x + sys.b;
            dx = next_dx;
        }
    });
    split_channels(&flat)
}

/// IR-FISP written out as explicit state-space matrices.
pub struct IrFispModel<'a> {
    schedule: &'a AcqSchedule,
    theta: TissueParams,
    ensemble: &'a IsochromatEnsemble,
}

impl<'a> IrFispModel<'a> {
    pub fn new(
        schedule: &'a AcqSchedule,
        theta: TissueParams,
        ensemble: &'a IsochromatEnsemble,
    ) -> Result<Self> {
        theta.validate()?;
        Ok(Self {
            schedule,
            theta,
            ensemble,
        })
    }
}

const PROJECTION: Matrix2x3<f64> = Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);

impl StateSpaceModel for IrFispModel<'_> {
    fn steps(&self) -> usize {
        self.schedule.len()
    }

    fn isochromats(&self) -> usize {
        self.ensemble.nv()
    }

    fn initial(&self, _r: usize) -> (Vector3<f64>, [Vector3<f64>; 3]) {
        let inv = 1.0 / self.ensemble.nv() as f64;
        (
            Vector3::new(0.0, 0.0, self.theta.m0 * inv),
            [Vector3::zeros(), Vector3::zeros(), Vector3::new(0.0, 0.0, inv)],
        )
    }

    fn system(&self, n: usize, r: usize) -> StepSystem {
        let u = &self.schedule.entries()[n];
        let th = &self.theta;
        let inv = 1.0 / self.ensemble.nv() as f64;
        // Inputs were validated at construction, so these cannot fail.
        let r_tr = relaxation(th.t1, th.t2, u.tr).expect("validated");
        let r_te = relaxation(th.t1, th.t2, u.te).expect("validated");
        let d_tr = matrix_derivatives(th, u.tr).expect("validated");
        let d_te = matrix_derivatives(th, u.te).expect("validated");
        let q = rf_rotation(u.alpha, u.phi);
        let g = dephasing(self.ensemble.betas()[r]);
        let b_unit = recovery(th.t1, u.tr);
        StepSystem {
            a: g * r_tr * q,
            da: [g * d_tr.d_r_dt1 * q, g * d_tr.d_r_dt2 * q, Matrix3::zeros()],
            b: b_unit * (th.m0 * inv),
            db: [d_tr.d_b_dt1 * (th.m0 * inv), Vector3::zeros(), b_unit * inv],
            c: PROJECTION * r_te * q,
            dc: [
                PROJECTION * d_te.d_r_dt1 * q,
                PROJECTION * d_te.d_r_dt2 * q,
                Matrix2x3::zeros(),
            ],
        }
    }
}

/// A model expressed in a rotated state basis `M' = U M`.
///
/// With `A' = U A U^T`, `B' = U B`, `C' = C U^T` and `M'[0] = U M[0]` the
/// observations are unchanged, so any quantity derived from them (including
/// the Cramér-Rao bound) must be too.
pub struct RotatedModel<M> {
    inner: M,
    basis: Matrix3<f64>,
}

impl<M> RotatedModel<M> {
    /// `basis` should be orthogonal.
    pub fn new(inner: M, basis: Matrix3<f64>) -> Self {
        Self { inner, basis }
    }
}

impl<M: StateSpaceModel> StateSpaceModel for RotatedModel<M> {
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    fn isochromats(&self) -> usize {
        self.inner.isochromats()
    }

    fn initial(&self, r: usize) -> (Vector3<f64>, [Vector3<f64>; 3]) {
        let (x, dx) = self.inner.initial(r);
        (self.basis * x, dx.map(|d| self.basis * d))
    }

    fn system(&self, n: usize, r: usize) -> StepSystem {
        let s = self.inner.system(n, r);
        let u = &self.basis;
        let ut = u.transpose();
        StepSystem {
            a: u * s.a * ut,
            da: s.da.map(|d| u * d * ut),
            b: u * s.b,
            db: s.db.map(|d| u * d),
            c: s.c * ut,
            dc: s.dc.map(|d| d * ut),
        }
    }
}

/// Convenience wrapper collecting the reference Jacobians.
pub fn reference_sensitivities(
    schedule: &AcqSchedule,
    theta: &TissueParams,
    ensemble: &IsochromatEnsemble,
) -> Result<(SignalTrajectory, SensitivityTrajectory)> {
    Ok(propagate(&IrFispModel::new(schedule, *theta, ensemble)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::conventional_schedule;
    use crate::crb::sensitivity_trajectory;

    #[test]
    fn generic_path_matches_fused_kernel() {
        let theta = TissueParams::new(850.0, 50.0, 0.6).unwrap();
        let s = conventional_schedule(120, 8).unwrap();
        let e = IsochromatEnsemble::uniform(12).unwrap();
        let (m_ref, j_ref) = reference_sensitivities(&s, &theta, &e).unwrap();
        let (m, j) = sensitivity_trajectory(&s, &theta, &e).unwrap();
        for (a, b) in m.samples().iter().zip(m_ref.samples()) {
            assert!((a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13);
        }
        for (a, b) in j.jacobians().iter().zip(j_ref.jacobians()) {
            let scale = b.abs().max().max(1e-300);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() <= 1e-10 * scale.max(y.abs()), "{a} vs {b}");
            }
        }
    }
}
