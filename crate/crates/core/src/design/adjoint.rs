//! Reverse-mode gradient of the weighted A-optimality cost with respect to
//! flip angles and repetition times.
//!
//! For one tissue, `Psi = tr(W V)` with `V = I^{-1}` and
//! `I = sigma^{-2} sum_n J_n^T J_n`, so
//! `dPsi = sum_n < -2 sigma^{-2} J_n V W V, dJ_n >`. The Jacobians are
//! outputs of the fused state/sensitivity recursion, whose 12-dimensional
//! per-isochromat state is swept backwards to push these output adjoints
//! onto `alpha_n` and `TR_n`.

use alloc::vec::Vec;

use nalgebra::{Matrix2x3, Matrix3, Vector3};

use crate::bloch::{step_coeffs, AcqSchedule, IsochromatEnsemble, TissueParams};
use crate::crb::{crb, deriv_coeffs, fisher, fused_channels, split_channels, FusedState};
use crate::error::{Error, Result};
use crate::math::{pairwise_sum, sin_cos};

/// `dQ/dalpha` for `Q = Z(phi) X(alpha) Z(phi)^T`.
fn rf_rotation_dalpha(alpha: f64, phi: f64) -> Matrix3<f64> {
    let (sp, cp) = sin_cos(phi);
    let (sa, ca) = sin_cos(alpha);
    #[rustfmt::skip]
    let left = Matrix3::new(
        cp, sp, 0.0,
        -sp, cp, 0.0,
        0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let dflip = Matrix3::new(
        0.0, 0.0, 0.0,
        0.0, -sa, ca,
        0.0, -ca, -sa,
    );
    left * dflip * left.transpose()
}

/// Cost `tr(W V)` of one tissue and its gradient laid out as
/// `[d/dalpha_1..N, d/dTR_1..N]`. `None` when the information is singular.
pub(crate) fn tissue_cost_gradient(
    schedule: &AcqSchedule,
    theta: &TissueParams,
    ensemble: &IsochromatEnsemble,
    weights: &[f64; 3],
    sigma: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    let flat = fused_channels(schedule, theta, ensemble)?;
    let (_, sens) = split_channels(&flat);
    let fim = fisher(&sens, sigma)?;
    let report = match crb(&fim, theta) {
        Ok(r) => r,
        Err(Error::SingularInformation { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let v = report.crb_matrix;
    let w = Matrix3::from_diagonal(&Vector3::from(*weights));
    let cost = (w * v).trace();
    let k = v * w * v;
    let scale = -2.0 / (sigma * sigma);
    let gammas: Vec<Matrix2x3<f64>> = sens.jacobians().iter().map(|j| j * k * scale).collect();

    let coeffs = step_coeffs(schedule, theta)?;
    let derivs = deriv_coeffs(&coeffs, theta);
    let dqs: Vec<Matrix3<f64>> = schedule
        .entries()
        .iter()
        .map(|u| rf_rotation_dalpha(u.alpha, u.phi))
        .collect();
    let n = coeffs.len();
    let betas = ensemble.betas();
    let nv = betas.len();
    let m0_r = theta.m0 / nv as f64;
    let inv_nv = 1.0 / nv as f64;
    let (t1, t2) = (theta.t1, theta.t2);

    let grad = pairwise_sum(0, nv, 2 * n, &|r, buf: &mut [f64]| {
        let (s, c) = sin_cos(betas[r]);
        let mut history = Vec::with_capacity(n);
        let mut st = FusedState::initial(theta.m0, nv);
        let mut scratch = [0.0; crate::crb::FUSED_WIDTH];
        for (kc, dc) in coeffs.iter().zip(&derivs) {
            history.push(st);
            st.advance(kc, dc, (c, s), m0_r, inv_nv, &mut scratch);
        }

        // G^T for G = [[c, s, 0], [-s, c, 0], [0, 0, 1]].
        let gt = |v: Vector3<f64>| Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z);
        let mut lam = [Vector3::zeros(); 4];
        let (grad_alpha, grad_tr) = buf.split_at_mut(n);
        for step in (0..n).rev() {
            let kc = &coeffs[step];
            let dc = &derivs[step];
            let x = &history[step];
            let q = &kc.q;
            let y = q * x.m;
            let ys = [q * x.s[0], q * x.s[1], q * x.s[2]];
            let g = &gammas[step];
            let gcol = |i: usize| Vector3::new(g[(0, i)], g[(1, i)], 0.0);

            let w0 = gt(lam[0]);
            let w1 = gt(lam[1]);
            let w2 = gt(lam[2]);
            let w3 = gt(lam[3]);
            let e = Vector3::new(kc.e2_tr, kc.e2_tr, kc.e1_tr);
            let f1 = dc.de1_tr_dt1;
            let f2 = dc.de2_tr_dt2;

            let ybar = e.component_mul(&w0)
                + Vector3::new(0.0, 0.0, f1 * w1.z)
                + Vector3::new(f2 * w2.x, f2 * w2.y, 0.0)
                + gcol(1) * dc.de2_te_dt2;
            let ybar1 = e.component_mul(&w1) + gcol(0) * kc.e2_te;
            let ybar2 = e.component_mul(&w2) + gcol(1) * kc.e2_te;
            let ybar3 = e.component_mul(&w3) + gcol(2) * kc.e2_te;

            let dq = &dqs[step];
            grad_alpha[step] += ybar.dot(&(dq * x.m))
                + ybar1.dot(&(dq * x.s[0]))
                + ybar2.dot(&(dq * x.s[1]))
                + ybar3.dot(&(dq * x.s[2]));

            let e1 = kc.e1_tr;
            let e2 = kc.e2_tr;
            let tr = kc.tr;
            let de = Vector3::new(-e2 / t2, -e2 / t2, -e1 / t1);
            let df1 = e1 * (t1 - tr) / (t1 * t1 * t1);
            let df2 = e2 * (t2 - tr) / (t2 * t2 * t2);
            let drec = e1 / t1;
            grad_tr[step] += w0.dot(&(de.component_mul(&y) + Vector3::new(0.0, 0.0, m0_r * drec)))
                + w1.dot(
                    &(de.component_mul(&ys[0])
                        + Vector3::new(0.0, 0.0, df1 * y.z - m0_r * df1)),
                )
                + w2.dot(&(de.component_mul(&ys[1]) + Vector3::new(df2 * y.x, df2 * y.y, 0.0)))
                + w3.dot(&(de.component_mul(&ys[2]) + Vector3::new(0.0, 0.0, inv_nv * drec)));

            let qt = q.transpose();
            lam = [qt * ybar, qt * ybar1, qt * ybar2, qt * ybar3];
        }
    });
    Ok(Some((cost, grad)))
}
