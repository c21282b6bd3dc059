//! Weighted A-optimal design of flip-angle and TR trains.
//!
//! The cost of a schedule is `sum_l tr(W V(theta_l))` over a set of
//! representative tissues. Flip angles `alpha_2..alpha_N` and all TRs are
//! free; `alpha_1` (the inversion) stays at its initial value. Constraints
//! are box bounds on both and, optionally, a bound on consecutive flip-angle
//! changes from the second pulse on.

mod adjoint;
mod optimizer;
pub(crate) mod projection;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::bloch::{AcqSchedule, IsochromatEnsemble, TissueParams, DEFAULT_NV, FAST_NV};
use crate::crb::crb_for_schedule;
use crate::error::{Error, Result};
use crate::math::map_indexed;

pub use optimizer::{optimize, optimize_with};

const DEG: f64 = PI / 180.0;

/// Representative tissues `(T1 ms, T2 ms, M0)`.
pub const REFERENCE_TISSUES: [TissueParams; 3] = [
    TissueParams { t1: 700.0, t2: 60.0, m0: 0.6 },
    TissueParams { t1: 850.0, t2: 50.0, m0: 0.6 },
    TissueParams { t1: 1100.0, t2: 102.0, m0: 0.6 },
];

/// Diagonal of the weighting matrix for `(T1, T2, M0)`.
pub const REFERENCE_WEIGHTS: [f64; 3] = [2.0e-5, 5.0e-4, 3.0e1];

/// Absolute slack (rad or ms) when checking constraints.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Which constraint set to optimize under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMode {
    /// Box bounds only ("Optimized-I").
    Unconstrained,
    /// Box bounds plus a 1° bound on consecutive flip-angle changes
    /// ("Optimized-II").
    Smooth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub tissues: Vec<TissueParams>,
    /// Diagonal of `W` for `(T1, T2, M0)`.
    pub weights: [f64; 3],
    /// Noise standard deviation per real channel.
    pub sigma: f64,
    /// Schedule length.
    pub n: usize,
    pub tr_min: f64,
    pub tr_max: f64,
    pub alpha_min: f64,
    /// Upper flip-angle bound of the first pulse.
    pub alpha_max_first: f64,
    /// Upper flip-angle bound of pulses 2..N.
    pub alpha_max_rest: f64,
    /// Bound on `|alpha_{n+1} - alpha_n|` for n >= 2; `f64::INFINITY` disables it.
    pub delta_alpha_max: f64,
    /// Isochromats used while optimizing.
    pub nv_design: usize,
    /// Isochromats used for the final per-tissue report.
    pub nv_report: usize,
    /// Stop once an accepted step moves no scaled variable by more than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl DesignConfig {
    /// Reference constants: TR in [11, 15] ms, flips in [10°, 60°] with a
    /// 180° ceiling on the first pulse, 1° variation bound in smooth mode,
    /// tolerance 1e-4 and at most 5e4 iterations.
    pub fn reference(n: usize, sigma: f64, mode: DesignMode) -> Self {
        Self {
            tissues: REFERENCE_TISSUES.to_vec(),
            weights: REFERENCE_WEIGHTS,
            sigma,
            n,
            tr_min: 11.0,
            tr_max: 15.0,
            alpha_min: 10.0 * DEG,
            alpha_max_first: 180.0 * DEG,
            alpha_max_rest: 60.0 * DEG,
            delta_alpha_max: match mode {
                DesignMode::Unconstrained => f64::INFINITY,
                DesignMode::Smooth => 1.0 * DEG,
            },
            nv_design: FAST_NV,
            nv_report: DEFAULT_NV,
            tol: 1e-4,
            max_iter: 50_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.tissues.is_empty() {
            return bad("at least one tissue is required".into());
        }
        for t in &self.tissues {
            t.validate()?;
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || !self.weights.iter().any(|&w| w > 0.0)
        {
            return bad(format!("weights must be >= 0 with one positive, got {:?}", self.weights));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.n < 2 {
            return bad(format!("schedule length must be >= 2, got {}", self.n));
        }
        if !(self.tr_min > 0.0 && self.tr_min <= self.tr_max && self.tr_max.is_finite()) {
            return bad(format!("need 0 < tr_min <= tr_max, got [{}, {}]", self.tr_min, self.tr_max));
        }
        if !(self.alpha_min.is_finite()
            && self.alpha_min <= self.alpha_max_rest
            && self.alpha_max_rest <= self.alpha_max_first
            && self.alpha_max_first.is_finite())
        {
            return bad("need alpha_min <= alpha_max_rest <= alpha_max_first".into());
        }
        if !(self.delta_alpha_max > 0.0) {
            return bad(format!("delta_alpha_max must be positive, got {}", self.delta_alpha_max));
        }
        if self.nv_design == 0 || self.nv_report == 0 {
            return bad("isochromat counts must be positive".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        Ok(())
    }

    fn check_length(&self, schedule: &AcqSchedule) -> Result<()> {
        if schedule.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: schedule.len(),
            });
        }
        Ok(())
    }
}

/// Design cost of a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cost {
    Finite(f64),
    /// At least one tissue has singular Fisher information.
    Infeasible,
}

impl Cost {
    /// The cost as a number, `+inf` when infeasible.
    pub fn value(self) -> f64 {
        match self {
            Cost::Finite(v) => v,
            Cost::Infeasible => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Cost::Finite(_))
    }
}

/// `sum_l tr(W V(theta_l))`, evaluated with `config.nv_design` isochromats.
pub fn design_cost(schedule: &AcqSchedule, config: &DesignConfig) -> Result<Cost> {
    config.check_length(schedule)?;
    let ensemble = IsochromatEnsemble::uniform(config.nv_design)?;
    let per_tissue = map_indexed(config.tissues.len(), |l| {
        crb_for_schedule(schedule, &config.tissues[l], &ensemble, config.sigma)
    });
    let mut total = 0.0;
    for r in per_tissue {
        match r {
            Ok(report) => {
                let v = report.variances();
                total += (0..3).map(|i| config.weights[i] * v[i]).sum::<f64>();
            }
            Err(Error::SingularInformation { .. }) => return Ok(Cost::Infeasible),
            Err(e) => return Err(e),
        }
    }
    Ok(Cost::Finite(total))
}

/// Cost and its exact gradient `[d/dalpha_1..N, d/dTR_1..N]`, with the
/// pinned `alpha_1` entry set to zero. `None` when infeasible.
pub fn cost_and_gradient(
    schedule: &AcqSchedule,
    config: &DesignConfig,
) -> Result<Option<(f64, Vec<f64>)>> {
    config.check_length(schedule)?;
    let ensemble = IsochromatEnsemble::uniform(config.nv_design)?;
    let parts = map_indexed(config.tissues.len(), |l| {
        adjoint::tissue_cost_gradient(
            schedule,
            &config.tissues[l],
            &ensemble,
            &config.weights,
            config.sigma,
        )
    });
    let mut cost = 0.0;
    let mut grad = vec![0.0; 2 * config.n];
    for part in parts {
        match part? {
            Some((c, g)) => {
                cost += c;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            None => return Ok(None),
        }
    }
    grad[0] = 0.0;
    Ok(Some((cost, grad)))
}

/// A single constraint violation; `index` is the 1-based TR number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Violation {
    RepetitionTime { index: usize, value: f64 },
    FlipAngle { index: usize, value: f64 },
    /// `|alpha_{index+1} - alpha_index|` exceeds the bound.
    FlipVariation { index: usize, change: f64 },
    /// Schedule length differs from the configuration.
    Length { expected: usize, found: usize },
}

/// All violated constraints (empty iff feasible).
pub fn check_constraints(schedule: &AcqSchedule, config: &DesignConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if schedule.len() != config.n {
        out.push(Violation::Length {
            expected: config.n,
            found: schedule.len(),
        });
    }
    let tol = FEASIBILITY_TOL;
    let entries = schedule.entries();
    for (i, u) in entries.iter().enumerate() {
        if u.tr < config.tr_min - tol || u.tr > config.tr_max + tol {
            out.push(Violation::RepetitionTime { index: i + 1, value: u.tr });
        }
        let hi = if i == 0 { config.alpha_max_first } else { config.alpha_max_rest };
        if u.alpha < config.alpha_min - tol || u.alpha > hi + tol {
            out.push(Violation::FlipAngle { index: i + 1, value: u.alpha });
        }
    }
    // The step from the inversion pulse to the second pulse is unbounded.
    if config.delta_alpha_max.is_finite() {
        for i in 1..entries.len().saturating_sub(1) {
            let change = (entries[i + 1].alpha - entries[i].alpha).abs();
            if change > config.delta_alpha_max + tol {
                out.push(Violation::FlipVariation { index: i + 1, change });
            }
        }
    }
    out
}

/// Finite-difference step for flip angles, rad.
pub const FD_STEP_ALPHA: f64 = 1e-4;
/// Finite-difference step for repetition times, ms.
pub const FD_STEP_TR: f64 = 1e-3;

/// Central finite-difference gradient of [`design_cost`], laid out as
/// `[d/dalpha_1..N, d/dTR_1..N]` with the pinned `alpha_1` entry zero.
///
/// At an active bound, or when one side is infeasible, the difference is
/// taken one-sided towards the interior.
pub fn cost_gradient(schedule: &AcqSchedule, config: &DesignConfig) -> Result<Vec<f64>> {
    config.check_length(schedule)?;
    let base = design_cost(schedule, config)?;
    let Cost::Finite(f0) = base else {
        return Err(Error::SingularInformation {
            condition: f64::INFINITY,
        });
    };
    let n = config.n;
    let alphas = schedule.alphas();
    let trs = schedule.trs();
    let eval = |k: usize, delta: f64| -> Result<Cost> {
        let mut a = alphas.clone();
        let mut t = trs.clone();
        if k < n {
            a[k] += delta;
        } else {
            t[k - n] += delta;
        }
        design_cost(&schedule.with_alphas_trs(&a, &t)?, config)
    };
    let entries = map_indexed(2 * n, |k| -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        let (x, h, lo, hi) = if k < n {
            (alphas[k], FD_STEP_ALPHA, config.alpha_min, config.alpha_max_rest)
        } else {
            (trs[k - n], FD_STEP_TR, config.tr_min, config.tr_max)
        };
        let up_ok = x + h <= hi;
        let down_ok = x - h >= lo;
        let plus = if up_ok { eval(k, h)? } else { Cost::Infeasible };
        let minus = if down_ok { eval(k, -h)? } else { Cost::Infeasible };
        Ok(match (plus, minus) {
            (Cost::Finite(p), Cost::Finite(m)) => (p - m) / (2.0 * h),
            (Cost::Finite(p), Cost::Infeasible) => (p - f0) / h,
            (Cost::Infeasible, Cost::Finite(m)) => (f0 - m) / h,
            (Cost::Infeasible, Cost::Infeasible) => 0.0,
        })
    });
    entries.into_iter().collect()
}

/// Outcome of [`optimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub schedule: AcqSchedule,
    /// Cost of every accepted iterate, starting with the (projected) initial
    /// schedule; nonincreasing.
    pub cost_history: Vec<f64>,
    /// nCRB of `(T1, T2, M0)` per tissue with `nv_report` isochromats.
    pub per_tissue_ncrb: Vec<[f64; 3]>,
    pub iterations: usize,
    /// `false` when the iteration cap was reached.
    pub converged: bool,
}

/// Fraction of TRs within 1% of either bound.
pub fn bang_bang_fraction(schedule: &AcqSchedule, config: &DesignConfig) -> f64 {
    let trs = schedule.trs();
    let near = trs
        .iter()
        .filter(|&&tr| {
            (tr - config.tr_min).abs() <= 0.01 * config.tr_min
                || (tr - config.tr_max).abs() <= 0.01 * config.tr_max
        })
        .count();
    near as f64 / trs.len() as f64
}

/// Largest `|alpha_{n+1} - alpha_n|` over n >= 2 (rad).
pub fn max_flip_variation(schedule: &AcqSchedule) -> f64 {
    schedule.alphas()[1..]
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max)
}

/// nCRB per tissue with `nv_report` isochromats.
pub fn per_tissue_ncrb(schedule: &AcqSchedule, config: &DesignConfig) -> Result<Vec<[f64; 3]>> {
    let ensemble = IsochromatEnsemble::uniform(config.nv_report)?;
    map_indexed(config.tissues.len(), |l| {
        crb_for_schedule(schedule, &config.tissues[l], &ensemble, config.sigma).map(|r| r.ncrb)
    })
    .into_iter()
    .collect()
}
