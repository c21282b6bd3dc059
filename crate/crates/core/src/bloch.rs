//! Discrete-time IR-FISP spin dynamics with isochromat summation.
//!
//! Each isochromat `r` carries a magnetization `M_r[n]` (the state at the end
//! of the n-th TR) that evolves as
//!
//! ```text
//! M_r[n] = G(beta_r) R(T1, T2, TR_n) Q(alpha_n, phi_n) M_r[n-1] + (M0/Nv) b(T1, TR_n)
//! m[n]   = sum_r P R(T1, T2, TE_n) Q(alpha_n, phi_n) M_r[n-1]
//! ```
//!
//! with `M_r[0] = [0, 0, M0/Nv]`. The spoiler dephasing `G` acts after the
//! echo, so it appears in the state update but not in the observation.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{exp, pairwise_sum, sin_cos};

/// Isochromat count used for reporting and dictionaries.
pub const DEFAULT_NV: usize = 400;
/// Reduced isochromat count for optimizer inner loops.
pub const FAST_NV: usize = 40;
/// Echo time used by generated schedules, ms.
pub const DEFAULT_TE_MS: f64 = 2.0;

/// Magnetization 3-vector `(Mx, My, Mz)`.
pub type MagState = Vector3<f64>;

/// Unknown tissue parameters `theta = (T1, T2, M0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TissueParams {
    /// Longitudinal relaxation time, ms.
    pub t1: f64,
    /// Transverse relaxation time, ms.
    pub t2: f64,
    /// Equilibrium magnetization.
    pub m0: f64,
}

impl TissueParams {
    pub fn new(t1: f64, t2: f64, m0: f64) -> Result<Self> {
        let theta = Self { t1, t2, m0 };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.t1) || !ok(self.t2) || !ok(self.m0) {
            return Err(Error::invalid(alloc::format!(
                "tissue parameters must be finite and positive, got T1={}, T2={}, M0={}",
                self.t1,
                self.t2,
                self.m0
            )));
        }
        Ok(())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.t1, self.t2, self.m0]
    }

    pub fn with_m0(self, m0: f64) -> Self {
        Self { m0, ..self }
    }
}

/// Acquisition parameters of a single TR.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AcqParams {
    /// Flip angle, rad.
    pub alpha: f64,
    /// RF phase, rad.
    pub phi: f64,
    /// Echo time, ms.
    pub te: f64,
    /// Repetition time, ms.
    pub tr: f64,
}

impl AcqParams {
    pub fn new(alpha: f64, phi: f64, te: f64, tr: f64) -> Result<Self> {
        let u = Self { alpha, phi, te, tr };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !self.phi.is_finite() {
            return Err(Error::invalid("flip angle and RF phase must be finite"));
        }
        if !(self.te > 0.0 && self.te < self.tr && self.tr.is_finite()) {
            return Err(Error::invalid(alloc::format!(
                "need 0 < TE < TR, got TE={} ms, TR={} ms",
                self.te,
                self.tr
            )));
        }
        Ok(())
    }
}

/// An ordered, non-empty train of per-TR acquisition parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AcqSchedule {
    entries: Vec<AcqParams>,
}

impl AcqSchedule {
    pub fn new(entries: Vec<AcqParams>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptySchedule);
        }
        for u in &entries {
            u.validate()?;
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[AcqParams] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.entries.iter().map(|u| u.alpha).collect()
    }

    pub fn trs(&self) -> Vec<f64> {
        self.entries.iter().map(|u| u.tr).collect()
    }

    /// The first `n` entries.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::invalid(alloc::format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        Ok(Self {
            entries: self.entries[..n].to_vec(),
        })
    }

    /// Replaces flip angles and repetition times, keeping phases and echo
    /// times.
    pub fn with_alphas_trs(&self, alphas: &[f64], trs: &[f64]) -> Result<Self> {
        if alphas.len() != self.len() || trs.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: alphas.len().min(trs.len()),
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(alphas.iter().zip(trs))
            .map(|(u, (&alpha, &tr))| AcqParams { alpha, tr, ..*u })
            .collect();
        Self::new(entries)
    }
}

/// Dephasing angles of the isochromats partitioning one voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct IsochromatEnsemble {
    betas: Vec<f64>,
}

impl IsochromatEnsemble {
    pub fn new(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("dephasing angles must be finite"));
        }
        Ok(Self { betas })
    }

    /// One full spoiler cycle: `beta_r = -pi + 2 pi (r - 1/2) / nv`, r = 1..=nv.
    pub fn uniform(nv: usize) -> Result<Self> {
        if nv == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let betas = (1..=nv)
            .map(|r| -PI + 2.0 * PI * (r as f64 - 0.5) / nv as f64)
            .collect();
        Ok(Self { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn nv(&self) -> usize {
        self.betas.len()
    }
}

/// Noiseless transverse magnetization `m[n] = (mx, my)`, n = 1..=N.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrajectory {
    samples: Vec<[f64; 2]>,
}

impl SignalTrajectory {
    pub fn new(samples: Vec<[f64; 2]>) -> Self {
        Self { samples }
    }

    /// Builds a trajectory from `[mx1, my1, mx2, my2, ...]`.
    pub fn from_flat(flat: &[f64]) -> Result<Self> {
        if flat.len() % 2 != 0 {
            return Err(Error::invalid("flattened trajectory must have even length"));
        }
        Ok(Self {
            samples: flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        })
    }

    pub fn samples(&self) -> &[[f64; 2]] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `[mx1, my1, mx2, my2, ...]`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.samples.iter().flat_map(|s| *s).collect()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| crate::math::sqrt(s[0] * s[0] + s[1] * s[1]))
            .collect()
    }
}

/// RF excitation matrix `Q(alpha, phi)`: a rotation by `alpha` about the
/// axis at angle `phi` in the transverse plane, composed as
/// `Z(phi) X(alpha) Z(phi)^T` with
/// `Z(phi) = [[cos, sin, 0], [-sin, cos, 0], [0, 0, 1]]`.
pub fn rf_rotation(alpha: f64, phi: f64) -> Matrix3<f64> {
    let (sp, cp) = sin_cos(phi);
    let (sa, ca) = sin_cos(alpha);
    #[rustfmt::skip]
    let left = Matrix3::new(
        cp, sp, 0.0,
        -sp, cp, 0.0,
        0.0, 0.0, 1.0,
    );
    #[rustfmt::skip]
    let flip = Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, ca, sa,
        0.0, -sa, ca,
    );
    left * flip * left.transpose()
}

/// Relaxation over `t` ms: `diag(e^{-t/T2}, e^{-t/T2}, e^{-t/T1})`.
pub fn relaxation(t1: f64, t2: f64, t: f64) -> Result<Matrix3<f64>> {
    check_relaxation_args(t1, t2, t)?;
    let e2 = exp(-t / t2);
    Ok(Matrix3::from_diagonal(&Vector3::new(e2, e2, exp(-t / t1))))
}

pub(crate) fn check_relaxation_args(t1: f64, t2: f64, t: f64) -> Result<()> {
    if !(t1 > 0.0 && t1.is_finite() && t2 > 0.0 && t2.is_finite()) {
        return Err(Error::invalid(alloc::format!(
            "relaxation times must be positive, got T1={t1}, T2={t2}"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(alloc::format!("elapsed time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Spoiler dephasing `G(beta)`: transverse rotation by `-beta`.
pub fn dephasing(beta: f64) -> Matrix3<f64> {
    let (s, c) = sin_cos(beta);
    #[rustfmt::skip]
    let g = Matrix3::new(
        c, s, 0.0,
        -s, c, 0.0,
        0.0, 0.0, 1.0,
    );
    g
}

/// Longitudinal recovery input `b(T1, t) = [0, 0, 1 - e^{-t/T1}]`.
pub fn recovery(t1: f64, t: f64) -> Vector3<f64> {
    Vector3::new(0.0, 0.0, 1.0 - exp(-t / t1))
}

/// Advances one isochromat through one TR.
pub fn step(
    state: &MagState,
    u: &AcqParams,
    theta: &TissueParams,
    beta: f64,
    nv: usize,
) -> Result<MagState> {
    let r = relaxation(theta.t1, theta.t2, u.tr)?;
    let a = dephasing(beta) * r * rf_rotation(u.alpha, u.phi);
    Ok(a * state + recovery(theta.t1, u.tr) * (theta.m0 / nv as f64))
}

/// Per-TR quantities shared by all isochromats.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepCoeffs {
    pub q: Matrix3<f64>,
    pub te: f64,
    pub tr: f64,
    /// `e^{-TE/T2}`
    pub e2_te: f64,
    /// `e^{-TR/T2}`
    pub e2_tr: f64,
    /// `e^{-TR/T1}`
    pub e1_tr: f64,
}

pub(crate) fn step_coeffs(schedule: &AcqSchedule, theta: &TissueParams) -> Result<Vec<StepCoeffs>> {
    theta.validate()?;
    Ok(schedule
        .entries()
        .iter()
        .map(|u| StepCoeffs {
            q: rf_rotation(u.alpha, u.phi),
            te: u.te,
            tr: u.tr,
            e2_te: exp(-u.te / theta.t2),
            e2_tr: exp(-u.tr / theta.t2),
            e1_tr: exp(-u.tr / theta.t1),
        })
        .collect())
}

/// Adds one isochromat's transverse signal into `out` (`2N` channels).
fn accumulate_isochromat(coeffs: &[StepCoeffs], beta: f64, m0_r: f64, out: &mut [f64]) {
    let (s, c) = sin_cos(beta);
    let mut m = Vector3::new(0.0, 0.0, m0_r);
    for (k, o) in coeffs.iter().zip(out.chunks_exact_mut(2)) {
        let y = k.q * m;
        o[0] += k.e2_te * y.x;
        o[1] += k.e2_te * y.y;
        let zx = k.e2_tr * y.x;
        let zy = k.e2_tr * y.y;
        m = Vector3::new(
            c * zx + s * zy,
            -s * zx + c * zy,
            k.e1_tr * y.z + m0_r * (1.0 - k.e1_tr),
        );
    }
}

/// Simulates the voxel's transverse magnetization for every TR.
///
/// Isochromat contributions are combined with a fixed pairwise tree, so the
/// result is insensitive to the ordering of `ensemble` up to rounding.
pub fn simulate(
    schedule: &AcqSchedule,
    theta: &TissueParams,
    ensemble: &IsochromatEnsemble,
) -> Result<SignalTrajectory> {
    let coeffs = step_coeffs(schedule, theta)?;
    let betas = ensemble.betas();
    let m0_r = theta.m0 / betas.len() as f64;
    let flat = pairwise_sum(0, betas.len(), 2 * coeffs.len(), &|r, buf: &mut [f64]| {
        accumulate_isochromat(&coeffs, betas[r], m0_r, buf)
    });
    SignalTrajectory::from_flat(&flat)
}

/// Per-isochromat state history `M_r[0..=N]`, mainly for inspection.
pub fn isochromat_states(
    schedule: &AcqSchedule,
    theta: &TissueParams,
    beta: f64,
    nv: usize,
) -> Result<Vec<MagState>> {
    theta.validate()?;
    let mut states = Vec::with_capacity(schedule.len() + 1);
    let mut m = Vector3::new(0.0, 0.0, theta.m0 / nv as f64);
    states.push(m);
    for u in schedule.entries() {
        m = step(&m, u, theta, beta, nv)?;
        states.push(m);
    }
    Ok(states)
}

const CONVENTIONAL_LOBE: usize = 200;

/// Pseudo-random IR-FISP train in the style of conventional fingerprinting:
/// a 180° inversion followed by half-sine flip-angle lobes within
/// [10°, 60°] (peak drawn per lobe) and TRs drawn uniformly in [11, 15] ms.
pub fn conventional_schedule(n: usize, seed: u64) -> Result<AcqSchedule> {
    if n < 2 {
        return Err(Error::invalid(alloc::format!(
            "conventional schedule needs at least 2 TRs, got {n}"
        )));
    }
    let deg = PI / 180.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n);
    entries.push(AcqParams {
        alpha: PI,
        phi: 0.0,
        te: DEFAULT_TE_MS,
        tr: rng.random_range(11.0..=15.0),
    });
    let mut peak = 0.0;
    for i in 0..n - 1 {
        let j = i % CONVENTIONAL_LOBE;
        if j == 0 {
            peak = rng.random_range(20.0..=50.0);
        }
        let phase = PI * (j as f64 + 0.5) / CONVENTIONAL_LOBE as f64;
        let alpha_deg = 10.0 + peak * libm::sin(phase);
        entries.push(AcqParams {
            alpha: alpha_deg.clamp(10.0, 60.0) * deg,
            phi: 0.0,
            te: DEFAULT_TE_MS,
            tr: rng.random_range(11.0..=15.0),
        });
    }
    AcqSchedule::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_relative_eq;

    fn wm() -> TissueParams {
        TissueParams::new(700.0, 60.0, 0.6).unwrap()
    }

    fn max_abs_diff(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        (a - b).abs().max()
    }

    #[test]
    fn rf_rotation_zero_flip_is_identity() {
        for phi in [0.0, 0.4, -2.0, 3.0] {
            assert!(max_abs_diff(&rf_rotation(0.0, phi), &Matrix3::identity()) < 1e-15);
        }
    }

    #[test]
    fn rf_rotation_inversion_about_x() {
        let q = rf_rotation(PI, 0.0);
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
        assert!(max_abs_diff(&q, &expected) < 1e-15);
    }

    #[test]
    fn rf_rotation_golden_value() {
        // Symbolic expansion of Z(pi/3) X(pi/2) Z(pi/3)^T.
        let r3 = 3f64.sqrt();
        #[rustfmt::skip]
        let expected = Matrix3::new(
            0.25, -r3 / 4.0, r3 / 2.0,
            -r3 / 4.0, 0.75, 0.5,
            -r3 / 2.0, -0.5, 0.0,
        );
        let q = rf_rotation(PI / 2.0, PI / 3.0);
        assert!(max_abs_diff(&q, &expected) < 1e-15, "{q}");
    }

    #[test]
    fn rotations_are_orthogonal() {
        for (a, p) in [(0.3, 1.1), (2.9, -0.7), (PI, 2.0)] {
            let q = rf_rotation(a, p);
            assert!(max_abs_diff(&(q.transpose() * q), &Matrix3::identity()) < 1e-13);
            assert_relative_eq!(q.determinant(), 1.0, epsilon = 1e-13);
        }
        for b in [0.0, 0.5, -3.0] {
            let g = dephasing(b);
            assert!(max_abs_diff(&(g.transpose() * g), &Matrix3::identity()) < 1e-13);
        }
    }

    #[test]
    fn relaxation_examples() {
        assert_eq!(relaxation(700.0, 60.0, 0.0).unwrap(), Matrix3::identity());
        let e = (-1.0f64).exp();
        let r = relaxation(100.0, 100.0, 100.0).unwrap();
        assert_relative_eq!(r, Matrix3::from_diagonal(&Vector3::new(e, e, e)), epsilon = 1e-15);
        let r = relaxation(700.0, 60.0, 12.0).unwrap();
        assert_relative_eq!(r[(0, 0)], (-0.2f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(r[(1, 1)], (-0.2f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(r[(2, 2)], (-12.0f64 / 700.0).exp(), max_relative = 1e-15);
    }

    #[test]
    fn relaxation_rejects_nonpositive_times() {
        assert!(relaxation(0.0, 60.0, 1.0).is_err());
        assert!(relaxation(700.0, -1.0, 1.0).is_err());
        assert!(relaxation(700.0, 60.0, -1.0).is_err());
    }

    #[test]
    fn dephasing_examples() {
        assert!(max_abs_diff(&dephasing(0.0), &Matrix3::identity()) < 1e-15);
        let half = Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0));
        assert!(max_abs_diff(&dephasing(PI), &half) < 1e-15);
        #[rustfmt::skip]
        let quarter = Matrix3::new(
            0.0, 1.0, 0.0,
            -1.0, 0.0, 0.0,
            0.0, 0.0, 1.0,
        );
        assert!(max_abs_diff(&dephasing(PI / 2.0), &quarter) < 1e-15);
    }

    #[test]
    fn step_equilibrium_is_fixed_point() {
        let theta = wm();
        let eq = Vector3::new(0.0, 0.0, theta.m0 / 4.0);
        let u = AcqParams::new(0.0, 0.0, 2.0, 12.0).unwrap();
        let next = step(&eq, &u, &theta, 0.7, 4).unwrap();
        assert!((next - eq).abs().max() < 1e-15);
    }

    #[test]
    fn step_full_recovery_after_inversion() {
        let theta = wm();
        let eq = Vector3::new(0.0, 0.0, theta.m0);
        let u = AcqParams::new(PI, 0.0, 2.0, 1e6 * theta.t1).unwrap();
        let next = step(&eq, &u, &theta, 0.0, 1).unwrap();
        assert!((next - eq).abs().max() < 1e-12);
    }

    #[test]
    fn step_matches_direct_composition() {
        // Independent evaluation: Q(pi/2, 0) maps [0,0,1] to [0, 1, 0];
        // relaxation scales y by e^{-12/60}, z by e^{-12/700} (z = 0);
        // G(0.3) maps (0, e) to (e sin 0.3, e cos 0.3); recovery adds
        // 1 - e^{-12/700} to z.
        let theta = TissueParams::new(700.0, 60.0, 1.0).unwrap();
        let u = AcqParams::new(PI / 2.0, 0.0, 2.0, 12.0).unwrap();
        let got = step(&Vector3::new(0.0, 0.0, 1.0), &u, &theta, 0.3, 1).unwrap();
        let e2 = (-0.2f64).exp();
        let expected = Vector3::new(
            e2 * 0.3f64.sin(),
            e2 * 0.3f64.cos(),
            1.0 - (-12.0f64 / 700.0).exp(),
        );
        assert!((got - expected).abs().max() < 1e-15, "{got} vs {expected}");
    }

    #[test]
    fn simulate_zero_flips_gives_zero_signal() {
        let entries = vec![AcqParams::new(0.0, 0.0, 2.0, 12.0).unwrap(); 20];
        let s = AcqSchedule::new(entries).unwrap();
        let m = simulate(&s, &wm(), &IsochromatEnsemble::uniform(16).unwrap()).unwrap();
        assert!(m.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn simulate_single_excitation() {
        let theta = TissueParams::new(700.0, 60.0, 1.0).unwrap();
        let s = AcqSchedule::new(vec![AcqParams::new(PI / 2.0, 0.0, 2.0, 12.0).unwrap()]).unwrap();
        let e = IsochromatEnsemble::new(vec![0.0]).unwrap();
        let m = simulate(&s, &theta, &e).unwrap();
        assert!(m.samples()[0][0].abs() < 1e-16);
        assert_relative_eq!(m.samples()[0][1], (-2.0f64 / 60.0).exp(), max_relative = 1e-15);
    }

    #[test]
    fn simulate_is_linear_in_m0() {
        let s = conventional_schedule(120, 3).unwrap();
        let e = IsochromatEnsemble::uniform(24).unwrap();
        let a = simulate(&s, &wm(), &e).unwrap().to_flat();
        let b = simulate(&s, &wm().with_m0(0.6 * 2.5), &e).unwrap().to_flat();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((2.5 * x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn simulate_matches_stepwise_reference() {
        let theta = wm();
        let s = conventional_schedule(60, 11).unwrap();
        let e = IsochromatEnsemble::uniform(5).unwrap();
        let fast = simulate(&s, &theta, &e).unwrap();
        let mut reference = vec![[0.0; 2]; s.len()];
        for &beta in e.betas() {
            let states = isochromat_states(&s, &theta, beta, e.nv()).unwrap();
            for (n, u) in s.entries().iter().enumerate() {
                let c = relaxation(theta.t1, theta.t2, u.te).unwrap() * rf_rotation(u.alpha, u.phi);
                let obs = c * states[n];
                reference[n][0] += obs.x;
                reference[n][1] += obs.y;
            }
        }
        for (a, b) in fast.samples().iter().zip(&reference) {
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert_eq!(AcqSchedule::new(vec![]), Err(Error::EmptySchedule));
        assert_eq!(IsochromatEnsemble::new(vec![]), Err(Error::EmptyEnsemble));
        assert_eq!(IsochromatEnsemble::uniform(0), Err(Error::EmptyEnsemble));
    }

    #[test]
    fn acq_params_require_te_below_tr() {
        assert!(AcqParams::new(0.1, 0.0, 12.0, 12.0).is_err());
        assert!(AcqParams::new(0.1, 0.0, 0.0, 12.0).is_err());
        assert!(AcqParams::new(f64::NAN, 0.0, 2.0, 12.0).is_err());
    }

    #[test]
    fn uniform_ensemble_is_symmetric() {
        let e = IsochromatEnsemble::uniform(400).unwrap();
        let b = e.betas();
        assert_relative_eq!(b[0], -PI + PI / 400.0, max_relative = 1e-15);
        for r in 0..200 {
            assert_relative_eq!(b[r], -b[399 - r], epsilon = 1e-14);
        }
    }

    #[test]
    fn conventional_schedule_shape() {
        let s = conventional_schedule(2, 99).unwrap();
        assert_eq!(s.entries()[0].alpha, PI);
        assert_eq!(conventional_schedule(300, 5), conventional_schedule(300, 5));
        assert_ne!(conventional_schedule(300, 5), conventional_schedule(300, 6));
        let s = conventional_schedule(1000, 7).unwrap();
        let deg = PI / 180.0;
        for u in &s.entries()[1..] {
            assert!(u.alpha >= 10.0 * deg && u.alpha <= 60.0 * deg);
        }
        for u in s.entries() {
            assert!((11.0..=15.0).contains(&u.tr));
            assert_eq!(u.te, DEFAULT_TE_MS);
        }
        assert!(conventional_schedule(1, 0).is_err());
    }
}
