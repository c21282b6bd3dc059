//! Optimizes a smooth schedule from the conventional initialization and
//! prints per-tissue nCRB before and after.
//!
//! Usage: `cargo run --release -p mrf-core --example design_probe -- [N] [MAX_ITER]`

use std::time::Instant;

use mrf_core::bloch::conventional_schedule;
use mrf_core::design::{bang_bang_fraction, optimize_with, per_tissue_ncrb, DesignConfig, DesignMode};
use mrf_core::mc::snr_to_sigma;

fn main() -> mrf_core::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let n = args.first().copied().unwrap_or(200);
    let sigma = snr_to_sigma(33.0, 0.6)?;
    let mut config = DesignConfig::reference(n, sigma, DesignMode::Smooth);
    if let Some(&it) = args.get(1) {
        config.max_iter = it;
    }
    let init = conventional_schedule(n, 0)?;
    let before = per_tissue_ncrb(&init, &config)?;
    let start = Instant::now();
    let result = optimize_with(&config, &init, |it, cost| {
        if it % 100 == 0 {
            eprintln!("iter {it:6} cost {cost:.6e} t {:.1}s", start.elapsed().as_secs_f64());
        }
    })?;
    println!("iterations {} converged {} time {:.1}s", result.iterations, result.converged, start.elapsed().as_secs_f64());
    for (b, a) in before.iter().zip(&result.per_tissue_ncrb) {
        println!(
            "T1 {:.4} -> {:.4}   T2 {:.4} -> {:.4} (x{:.2})   M0 {:.4} -> {:.4}",
            b[0], a[0], b[1], a[1], b[1] / a[1], b[2], a[2]
        );
    }
    println!("bang-bang fraction {:.3}", bang_bang_fraction(&result.schedule, &config));
    Ok(())
}
