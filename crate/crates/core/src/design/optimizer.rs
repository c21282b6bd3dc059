//! Monotone spectral projected-gradient descent over the feasible set.
//!
//! Variables are rescaled so that every box becomes `[0, 1]` (flip angles
//! and TRs otherwise differ in scale by two orders of magnitude). Each
//! iteration projects a Barzilai-Borwein step onto the feasible set and
//! backtracks along the resulting feasible direction until an Armijo
//! decrease holds; rejected or tied trial points leave the incumbent in
//! place, so the accepted costs never increase.

use alloc::vec::Vec;

use super::projection::{project_chain, repair_chain};
use super::{cost_and_gradient, design_cost, per_tissue_ncrb, Cost, DesignConfig, DesignResult};
use crate::bloch::AcqSchedule;
use crate::error::{Error, Result};

const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;
const LAMBDA_MIN: f64 = 1e-12;
const LAMBDA_MAX: f64 = 1e12;

/// Maps schedules to scaled free variables
/// `z = [alpha_2..alpha_N, TR_1..TR_N]`.
struct Layout<'a> {
    template: &'a AcqSchedule,
    n: usize,
    alpha1: f64,
    alpha_lo: f64,
    alpha_span: f64,
    alpha_hi_z: f64,
    tr_lo: f64,
    tr_span: f64,
    tr_hi_z: f64,
    delta_z: f64,
}

fn span(lo: f64, hi: f64) -> f64 {
    if hi > lo {
        hi - lo
    } else {
        1.0
    }
}

impl<'a> Layout<'a> {
    fn new(config: &DesignConfig, template: &'a AcqSchedule) -> Self {
        let alpha_span = span(config.alpha_min, config.alpha_max_rest);
        let tr_span = span(config.tr_min, config.tr_max);
        Self {
            template,
            n: config.n,
            alpha1: template.entries()[0]
                .alpha
                .clamp(config.alpha_min, config.alpha_max_first),
            alpha_lo: config.alpha_min,
            alpha_span,
            alpha_hi_z: (config.alpha_max_rest - config.alpha_min) / alpha_span,
            tr_lo: config.tr_min,
            tr_span,
            tr_hi_z: (config.tr_max - config.tr_min) / tr_span,
            delta_z: config.delta_alpha_max / alpha_span,
        }
    }

    fn encode(&self, schedule: &AcqSchedule) -> Vec<f64> {
        let mut z = Vec::with_capacity(2 * self.n - 1);
        z.extend(schedule.entries()[1..].iter().map(|u| (u.alpha - self.alpha_lo) / self.alpha_span));
        z.extend(schedule.entries().iter().map(|u| (u.tr - self.tr_lo) / self.tr_span));
        z
    }

    fn decode(&self, z: &[f64]) -> Result<AcqSchedule> {
        let mut alphas = Vec::with_capacity(self.n);
        alphas.push(self.alpha1);
        alphas.extend(z[..self.n - 1].iter().map(|v| self.alpha_lo + v * self.alpha_span));
        let trs: Vec<f64> = z[self.n - 1..].iter().map(|v| self.tr_lo + v * self.tr_span).collect();
        self.template.with_alphas_trs(&alphas, &trs)
    }

    fn project(&self, v: &[f64]) -> Vec<f64> {
        let (a, t) = v.split_at(self.n - 1);
        let mut z = project_chain(a, 0.0, self.alpha_hi_z, self.delta_z);
        z.extend(t.iter().map(|x| x.clamp(0.0, self.tr_hi_z)));
        z
    }

    fn repair(&self, z: &mut [f64]) {
        let (a, t) = z.split_at_mut(self.n - 1);
        repair_chain(a, 0.0, self.alpha_hi_z, self.delta_z);
        for x in t {
            *x = x.clamp(0.0, self.tr_hi_z);
        }
    }

    /// Chain rule from `[d/dalpha_1..N, d/dTR_1..N]` to `d/dz`.
    fn scale_gradient(&self, g: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.n - 1);
        out.extend(g[1..self.n].iter().map(|v| v * self.alpha_span));
        out.extend(g[self.n..].iter().map(|v| v * self.tr_span));
        out
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Locally minimizes the design cost from `init`.
pub fn optimize(config: &DesignConfig, init: &AcqSchedule) -> Result<DesignResult> {
    optimize_with(config, init, |_, _| {})
}

/// As [`optimize`], calling `observer(iteration, cost)` after each accepted
/// step.
pub fn optimize_with<F>(config: &DesignConfig, init: &AcqSchedule, mut observer: F) -> Result<DesignResult>
where
    F: FnMut(usize, f64),
{
    config.validate()?;
    config.check_length(init)?;
    let layout = Layout::new(config, init);
    let mut x = layout.project(&layout.encode(init));
    layout.repair(&mut x);

    let evaluate = |z: &[f64]| -> Result<Option<(f64, Vec<f64>)>> {
        let schedule = layout.decode(z)?;
        Ok(cost_and_gradient(&schedule, config)?.map(|(f, g)| (f, layout.scale_gradient(&g))))
    };
    let (mut f, mut g) = evaluate(&x)?.ok_or_else(|| {
        Error::InvalidConfig("initial schedule has singular Fisher information".into())
    })?;
    let mut history = alloc::vec![f];
    let gnorm = inf_norm(&g);
    let mut lambda = if gnorm > 0.0 {
        (1.0 / gnorm).clamp(LAMBDA_MIN, LAMBDA_MAX)
    } else {
        1.0
    };

    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iter {
        let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - lambda * gi).collect();
        let target = layout.project(&trial);
        let d: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope = dot(&g, &d);
        if inf_norm(&d) == 0.0 || slope >= 0.0 {
            converged = true;
            break;
        }

        let mut t = 1.0;
        let accepted = loop {
            let mut cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            layout.repair(&mut cand);
            let cost = design_cost(&layout.decode(&cand)?, config)?;
            if let Cost::Finite(fc) = cost {
                if fc < f && fc <= f + ARMIJO * t * slope {
                    break Some((cand, fc));
                }
            }
            // Safeguarded quadratic interpolation of the step length.
            let next = match cost {
                Cost::Finite(fc) => {
                    let denom = 2.0 * (fc - f - t * slope);
                    if denom > 0.0 {
                        (-slope * t * t / denom).clamp(0.1 * t, 0.5 * t)
                    } else {
                        0.5 * t
                    }
                }
                Cost::Infeasible => 0.5 * t,
            };
            t = next;
            if t < MIN_STEP {
                break None;
            }
        };
        let Some((x_new, _)) = accepted else {
            // No decrease along the projected direction: stationary to
            // working precision.
            converged = true;
            break;
        };
        let Some((f_new, g_new)) = evaluate(&x_new)? else {
            converged = true;
            break;
        };
        iterations += 1;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sty = dot(&s, &y);
        lambda = if sty > 0.0 {
            (dot(&s, &s) / sty).clamp(LAMBDA_MIN, LAMBDA_MAX)
        } else {
            LAMBDA_MAX.min(lambda * 10.0)
        };
        let change = inf_norm(&s);
        x = x_new;
        f = f_new;
        g = g_new;
        history.push(f);
        observer(iterations, f);
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let schedule = layout.decode(&x)?;
    let per_tissue = per_tissue_ncrb(&schedule, config)?;
    Ok(DesignResult {
        schedule,
        cost_history: history,
        per_tissue_ncrb: per_tissue,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::conventional_schedule;
    use crate::design::{check_constraints, DesignMode};

    fn config(n: usize, mode: DesignMode) -> DesignConfig {
        let mut c = DesignConfig::reference(n, 0.6 * libm::pow(10.0, -1.65), mode);
        c.nv_design = 12;
        c.nv_report = 12;
        c.max_iter = 40;
        c
    }

    #[test]
    fn history_is_monotone_and_result_feasible() {
        for mode in [DesignMode::Unconstrained, DesignMode::Smooth] {
            let c = config(60, mode);
            let init = conventional_schedule(60, 1).unwrap();
            let r = optimize(&c, &init).unwrap();
            assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
            assert!(check_constraints(&r.schedule, &c).is_empty());
            assert_eq!(r.schedule.entries()[0].alpha, init.entries()[0].alpha);
            assert!(r.cost_history.last().unwrap() < &r.cost_history[0]);
        }
    }

    #[test]
    fn infeasible_start_is_projected() {
        let c = config(30, DesignMode::Smooth);
        let init = conventional_schedule(30, 4).unwrap();
        let mut alphas = init.alphas();
        alphas[5] = 1.5;
        let trs: Vec<f64> = init.trs().iter().map(|t| t + 5.0).collect();
        let init = init.with_alphas_trs(&alphas, &trs).unwrap();
        let r = optimize(&c, &init).unwrap();
        assert!(check_constraints(&r.schedule, &c).is_empty());
    }

    #[test]
    fn power_of_two_weight_scaling_gives_identical_iterates() {
        let c = config(40, DesignMode::Unconstrained);
        let mut c4 = c.clone();
        c4.weights = c.weights.map(|w| 4.0 * w);
        let init = conventional_schedule(40, 2).unwrap();
        let a = optimize(&c, &init).unwrap();
        let b = optimize(&c4, &init).unwrap();
        assert_eq!(a.schedule, b.schedule);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn deterministic() {
        let c = config(40, DesignMode::Smooth);
        let init = conventional_schedule(40, 9).unwrap();
        assert_eq!(optimize(&c, &init).unwrap(), optimize(&c, &init).unwrap());
    }
}
