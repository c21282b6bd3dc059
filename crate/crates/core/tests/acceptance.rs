//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! hard criterion fails. Criterion 6 is reported as a warning only.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrf_core::bloch::{conventional_schedule, simulate, AcqParams, AcqSchedule, IsochromatEnsemble, TissueParams, FAST_NV};
use mrf_core::crb::state_space::{propagate, IrFispModel, RotatedModel};
use mrf_core::crb::{crb, fisher, sensitivity_trajectory};
use mrf_core::design::{bang_bang_fraction, optimize, per_tissue_ncrb, DesignConfig, DesignMode, DesignResult};
use mrf_core::dictionary::{build_grid, match_signal, Dictionary, GridSpec};
use mrf_core::mc::{run_mc, snr_to_sigma, NoiseModel};

const DEG: f64 = std::f64::consts::PI / 180.0;

enum Status {
    Pass,
    Fail,
    Warn,
}

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        Self {
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }
}

fn sigma_33db() -> f64 {
    snr_to_sigma(33.0, 0.6).unwrap()
}

fn wm() -> TissueParams {
    TissueParams::new(700.0, 60.0, 0.6).unwrap()
}

fn random_case(rng: &mut ChaCha8Rng, n: usize) -> (AcqSchedule, TissueParams) {
    let entries = (0..n)
        .map(|k| {
            let alpha = if k == 0 {
                rng.random_range(0.0..180.0)
            } else {
                rng.random_range(10.0..60.0)
            };
            AcqParams::new(alpha * DEG, 0.0, 2.0, rng.random_range(11.0..15.0)).unwrap()
        })
        .collect();
    let t1 = rng.random_range(300.0..2000.0);
    let t2 = rng.random_range(20.0f64..300.0).min(0.8 * t1);
    let theta = TissueParams::new(t1, t2, rng.random_range(0.5..1.5)).unwrap();
    (AcqSchedule::new(entries).unwrap(), theta)
}

/// Analytic Jacobians against central differences of `simulate`. Errors are
/// measured per parameter relative to the largest derivative magnitude over
/// the train, so sign changes of individual entries do not blow up the
/// ratio.
fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let ensemble = IsochromatEnsemble::uniform(FAST_NV).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..3 {
        let (schedule, theta) = random_case(&mut rng, 100);
        let (_, sens) = sensitivity_trajectory(&schedule, &theta, &ensemble).unwrap();
        let base = theta.to_array();
        for p in 0..3 {
            let h = 1e-5 * base[p];
            let shifted = |d: f64| {
                let mut v = base;
                v[p] += d;
                simulate(&schedule, &TissueParams::new(v[0], v[1], v[2]).unwrap(), &ensemble)
                    .unwrap()
                    .to_flat()
            };
            let (up, down) = (shifted(h), shifted(-h));
            let fd: Vec<f64> = up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let analytic: Vec<f64> = sens.jacobians().iter().flat_map(|j| [j[(0, p)], j[(1, p)]]).collect();
            let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let err = fd.iter().zip(&analytic).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            worst = worst.max(err / scale);
        }
    }
    Outcome::check(worst < 1e-5, format!("max relative error {worst:.2e} (< 1e-5)"))
}

fn criterion_2() -> Outcome {
    let schedule = conventional_schedule(400, 0).unwrap();
    let ensemble = IsochromatEnsemble::uniform(FAST_NV).unwrap();
    let theta = wm();
    let (_, sens) = sensitivity_trajectory(&schedule, &theta, &ensemble).unwrap();
    let s1 = sigma_33db();
    let s2 = 3.7 * s1;
    let f1 = fisher(&sens, s1).unwrap();
    let f2 = fisher(&sens, s2).unwrap();
    let v1 = crb(&f1, &theta).unwrap().crb_matrix;
    let v2 = crb(&f2, &theta).unwrap().crb_matrix;
    let ratio = (s2 / s1) * (s2 / s1);
    let mut scaling: f64 = 0.0;
    let mut asym: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let expected = ratio * v1[(i, j)];
            let tol = (v1[(i, i)] * v1[(j, j)]).sqrt() * ratio;
            scaling = scaling.max((v2[(i, j)] - expected).abs() / tol);
            asym = asym.max((f1.matrix[(i, j)] - f1.matrix[(j, i)]).abs());
        }
    }
    let eig = f1.eigenvalues();
    let lmax = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lmin = eig.min();
    let ok = scaling < 1e-10 && asym == 0.0 && lmin >= -1e-10 * lmax;
    Outcome::check(
        ok,
        format!("sigma^2 scaling error {scaling:.1e}, asymmetry {asym:.1e}, min eigenvalue / max {:.2e}", lmin / lmax),
    )
}

fn criterion_3() -> Outcome {
    let schedule = conventional_schedule(400, 0).unwrap();
    let ensemble = IsochromatEnsemble::uniform(FAST_NV).unwrap();
    let sigma = sigma_33db();
    let mut ok = true;
    let mut steps = 0;
    for theta in mrf_core::design::REFERENCE_TISSUES {
        let (_, sens) = sensitivity_trajectory(&schedule, &theta, &ensemble).unwrap();
        let mut prev = [f64::INFINITY; 3];
        for n in (50..=400).step_by(50) {
            let v = crb(&fisher(&sens.prefix(n), sigma).unwrap(), &theta).unwrap().variances();
            for k in 0..3 {
                ok &= v[k] <= prev[k];
            }
            prev = v;
            steps += 1;
        }
    }
    Outcome::check(ok, format!("{steps} prefixes over 3 tissues, every CRB diagonal nonincreasing: {ok}"))
}

fn random_orthogonal(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
    m.qr().q()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);
    let schedule = conventional_schedule(200, 3).unwrap();
    let ensemble = IsochromatEnsemble::uniform(FAST_NV).unwrap();
    let theta = wm();
    let sigma = sigma_33db();
    let model = IrFispModel::new(&schedule, theta, &ensemble).unwrap();
    let base = crb(&fisher(&propagate(&model).1, sigma).unwrap(), &theta).unwrap().crb_matrix;
    let u = random_orthogonal(&mut rng);
    let orth = (u.transpose() * u - Matrix3::identity()).abs().max();
    let rotated = RotatedModel::new(IrFispModel::new(&schedule, theta, &ensemble).unwrap(), u);
    let v = crb(&fisher(&propagate(&rotated).1, sigma).unwrap(), &theta).unwrap().crb_matrix;
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let scale = (base[(i, i)] * base[(j, j)]).sqrt();
            worst = worst.max((v[(i, j)] - base[(i, j)]).abs() / scale);
        }
    }
    Outcome::check(worst < 1e-10, format!("relative CRB change {worst:.1e} (< 1e-10), |U^T U - I| {orth:.1e}"))
}

fn design(n: usize) -> (DesignConfig, [f64; 3], DesignResult) {
    let config = DesignConfig::reference(n, sigma_33db(), DesignMode::Smooth);
    let init = conventional_schedule(n, 0).unwrap();
    let before = per_tissue_ncrb(&init, &config).unwrap()[0];
    let result = optimize(&config, &init).unwrap();
    (config, before, result)
}

fn improvement(before: [f64; 3], result: &DesignResult, factor: f64) -> (bool, String) {
    let after = result.per_tissue_ncrb[0];
    let t2 = before[1] / after[1];
    let t1 = after[0] / before[0];
    (
        t2 >= factor && t1 <= 1.10,
        format!(
            "nCRB(T2) {:.4} -> {:.4} (x{t2:.2}, need >= {factor}), nCRB(T1) {:.4} -> {:.4} (ratio {t1:.3}, need <= 1.10), {} iterations",
            before[1], after[1], before[0], after[0], result.iterations
        ),
    )
}

fn criterion_7(schedule: &AcqSchedule) -> Outcome {
    let theta = wm();
    let sigma = sigma_33db();
    let ensemble = IsochromatEnsemble::uniform(FAST_NV).unwrap();
    let bound = mrf_core::crb::crb_for_schedule(schedule, &theta, &ensemble, sigma).unwrap().std_devs();
    // Local grid through the truth spanning at least 6 bound standard deviations.
    let steps = (2.0, 0.25);
    let half = (
        (6.0 * bound[0] / steps.0).ceil() * steps.0,
        (6.0 * bound[1] / steps.1).ceil() * steps.1,
    );
    let grid = GridSpec::local((theta.t1, theta.t2), half, steps);
    let dict = Dictionary::from_grid(schedule, &grid, &ensemble).unwrap();
    let r = run_mc(schedule, &theta, &NoiseModel::new(sigma, 2024).unwrap(), &dict, 500).unwrap();
    let q = r.empirical_std_over_crb;
    let ok = (0.95..=1.3).contains(&q[1]) && q.iter().all(|&v| v >= 0.8);
    Outcome::check(
        ok,
        format!(
            "empirical std / sqrt(CRB) = T1 {:.3}, T2 {:.3}, M0 {:.3} ({} atoms, T2 needs [0.95, 1.3], all >= 0.8)",
            q[0],
            q[1],
            q[2],
            dict.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let schedule = conventional_schedule(400, 0).unwrap();
    let ensemble = IsochromatEnsemble::uniform(FAST_NV).unwrap();
    let atoms = build_grid(&GridSpec::reference()).unwrap();
    let dict = Dictionary::generate(&schedule, &atoms, &ensemble).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);
    let sample = atoms.len().div_ceil(100);
    let mut hits = 0;
    let mut worst_scale: f64 = 0.0;
    for _ in 0..sample {
        let k = rng.random_range(0..atoms.len());
        let scale = rng.random_range(0.2..2.0);
        let signal: Vec<f64> = dict.trajectory(k).iter().map(|v| scale * v).collect();
        let est = match_signal(&signal, &dict).unwrap();
        if est.index == k {
            hits += 1;
        }
        worst_scale = worst_scale.max((est.m0 - scale).abs() / scale);
    }
    Outcome::check(
        hits == sample && worst_scale < 1e-12,
        format!("{hits}/{sample} atoms recovered of {}, worst relative scale error {worst_scale:.1e}", atoms.len()),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: &str, start: Instant, outcome: Outcome| {
        let tag = match outcome.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failures += 1;
                "FAIL"
            }
            Status::Warn => "WARN",
        };
        println!("criterion {id}: {tag} {} [{:.1} s]", outcome.detail, start.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    report("1", t, criterion_1());
    let t = Instant::now();
    report("2", t, criterion_2());
    let t = Instant::now();
    report("3", t, criterion_3());
    let t = Instant::now();
    report("4", t, criterion_4());

    let t = Instant::now();
    let (_, before, result) = design(200);
    let (ok, detail) = improvement(before, &result, 1.3);
    report("5 (N=200)", t, Outcome::check(ok, detail));

    let t = Instant::now();
    let (config, before, result) = design(400);
    let (ok, detail) = improvement(before, &result, 1.5);
    report("5", t, Outcome::check(ok, detail));

    let t = Instant::now();
    let frac = bang_bang_fraction(&result.schedule, &config);
    let max_step = result
        .schedule
        .alphas()
        .windows(2)
        .skip(1)
        .fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs()));
    let detail = format!(
        "{:.1}% of TRs within 1% of a bound (target 80%), max flip step {:.4} deg",
        100.0 * frac,
        max_step / DEG
    );
    report(
        "6",
        t,
        Outcome {
            status: if frac >= 0.8 { Status::Pass } else { Status::Warn },
            detail,
        },
    );

    let t = Instant::now();
    report("7", t, criterion_7(&result.schedule));
    let t = Instant::now();
    report("8", t, criterion_8());
    println!("criterion 9: EXCLUDED image reconstructions, phantom and in vivo experiments are out of scope");

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
