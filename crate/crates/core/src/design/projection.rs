//! Euclidean projection onto `{ z : lo <= z_k <= hi, |z_{k+1} - z_k| <= delta }`.
//!
//! Solved exactly by dynamic programming over the chain: the value function
//! `F_k(z)` (best cost of `z_1..z_k` given `z_k = z`) is convex and
//! piecewise quadratic, so its derivative is kept as a list of linear pieces.
//! Minimizing over a window of width `2 delta` splits the derivative at the
//! minimizer, shifts the two halves apart and inserts a flat piece.

use alloc::vec::Vec;

/// Linear derivative piece `slope * z + offset` on `[start, end]`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    start: f64,
    end: f64,
    slope: f64,
    offset: f64,
}

impl Piece {
    fn at(&self, z: f64) -> f64 {
        self.slope * z + self.offset
    }
}

/// Minimizer of a convex function given by its increasing derivative pieces.
fn argmin(pieces: &[Piece]) -> f64 {
    for p in pieces {
        if p.at(p.start) >= 0.0 {
            return p.start;
        }
        if p.at(p.end) >= 0.0 {
            // slope > 0 here because the derivative changes sign
            return (-p.offset / p.slope).clamp(p.start, p.end);
        }
    }
    pieces.last().map_or(0.0, |p| p.end)
}

fn clip(pieces: Vec<Piece>, lo: f64, hi: f64) -> Vec<Piece> {
    pieces
        .into_iter()
        .filter_map(|p| {
            let start = p.start.max(lo);
            let end = p.end.min(hi);
            (start <= end).then_some(Piece { start, end, ..p })
        })
        .collect()
}

/// Projects `v` onto the box `[lo, hi]` intersected with the chain
/// constraint `|z_{k+1} - z_k| <= delta`. `delta = inf` gives a plain clamp.
pub(crate) fn project_chain(v: &[f64], lo: f64, hi: f64, delta: f64) -> Vec<f64> {
    if !delta.is_finite() || v.len() < 2 {
        return v.iter().map(|x| x.clamp(lo, hi)).collect();
    }
    let n = v.len();
    let mut minimizers = Vec::with_capacity(n);
    let mut pieces = alloc::vec![Piece {
        start: lo,
        end: hi,
        slope: 1.0,
        offset: -v[0],
    }];
    for k in 0..n {
        if k > 0 {
            for p in &mut pieces {
                p.slope += 1.0;
                p.offset -= v[k];
            }
            pieces = clip(pieces, lo, hi);
        }
        let w = argmin(&pieces);
        minimizers.push(w);
        if k + 1 == n {
            break;
        }
        // Window minimization: g(z) = min_{|x - z| <= delta} F(x).
        let mut next = Vec::with_capacity(pieces.len() + 2);
        for p in &pieces {
            if p.end <= w {
                next.push(Piece {
                    start: p.start - delta,
                    end: p.end - delta,
                    slope: p.slope,
                    offset: p.offset + p.slope * delta,
                });
            } else if p.start < w {
                next.push(Piece {
                    start: p.start - delta,
                    end: w - delta,
                    slope: p.slope,
                    offset: p.offset + p.slope * delta,
                });
            }
        }
        next.push(Piece {
            start: w - delta,
            end: w + delta,
            slope: 0.0,
            offset: 0.0,
        });
        for p in &pieces {
            if p.start >= w {
                next.push(Piece {
                    start: p.start + delta,
                    end: p.end + delta,
                    slope: p.slope,
                    offset: p.offset - p.slope * delta,
                });
            } else if p.end > w {
                next.push(Piece {
                    start: w + delta,
                    end: p.end + delta,
                    slope: p.slope,
                    offset: p.offset - p.slope * delta,
                });
            }
        }
        pieces = next;
    }
    let mut z = alloc::vec![0.0; n];
    z[n - 1] = minimizers[n - 1].clamp(lo, hi);
    for k in (0..n - 1).rev() {
        z[k] = minimizers[k].clamp(z[k + 1] - delta, z[k + 1] + delta).clamp(lo, hi);
    }
    repair_chain(&mut z, lo, hi, delta);
    z
}

/// Makes `z` satisfy the constraints exactly in floating point by a forward
/// sweep. A no-op (up to rounding) on points that are already feasible.
pub(crate) fn repair_chain(z: &mut [f64], lo: f64, hi: f64, delta: f64) {
    if let Some(first) = z.first_mut() {
        *first = first.clamp(lo, hi);
    }
    if !delta.is_finite() {
        for x in z.iter_mut() {
            *x = x.clamp(lo, hi);
        }
        return;
    }
    for k in 1..z.len() {
        let prev = z[k - 1];
        let mut x = z[k].clamp(prev - delta, prev + delta).clamp(lo, hi);
        while x - prev > delta {
            x = next_down(x);
        }
        while prev - x > delta {
            x = next_up(x);
        }
        z[k] = x;
    }
}

fn next_up(x: f64) -> f64 {
    libm::nextafter(x, f64::INFINITY)
}

fn next_down(x: f64) -> f64 {
    libm::nextafter(x, f64::NEG_INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feasible(z: &[f64], lo: f64, hi: f64, delta: f64) -> bool {
        z.iter().all(|&x| x >= lo && x <= hi) && z.windows(2).all(|w| (w[1] - w[0]).abs() <= delta)
    }

    /// Random feasible point: a bounded random walk.
    fn random_feasible(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64, delta: f64) -> Vec<f64> {
        let mut z = vec![rng.random_range(lo..=hi)];
        for _ in 1..n {
            let prev = *z.last().unwrap();
            let a = (prev - delta).max(lo);
            let b = (prev + delta).min(hi);
            z.push(rng.random_range(a..=b));
        }
        z
    }

    #[test]
    fn infinite_delta_is_a_clamp() {
        let z = project_chain(&[-1.0, 0.5, 2.0], 0.0, 1.0, f64::INFINITY);
        assert_eq!(z, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn two_point_projection_closed_form() {
        // Only the difference constraint binds: move both ends by half the excess.
        let z = project_chain(&[0.2, 0.8], 0.0, 1.0, 0.2);
        assert!((z[0] - 0.4).abs() < 1e-15 && (z[1] - 0.6).abs() < 1e-15, "{z:?}");
    }

    #[test]
    fn feasible_points_are_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random_feasible(&mut rng, 50, 0.0, 1.0, 0.05);
        let z = project_chain(&v, 0.0, 1.0, 0.05);
        for (a, b) in v.iter().zip(&z) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn projection_satisfies_variational_inequality() {
        // z = P(v) iff (v - z) . (y - z) <= 0 for every feasible y.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..40 {
            let n = 2 + trial * 7;
            let delta = rng.random_range(0.005..0.2);
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..1.5)).collect();
            let z = project_chain(&v, 0.0, 1.0, delta);
            assert!(feasible(&z, 0.0, 1.0, delta), "infeasible projection");
            for _ in 0..50 {
                let y = random_feasible(&mut rng, n, 0.0, 1.0, delta);
                let ip: f64 = v.iter().zip(&z).zip(&y).map(|((v, z), y)| (v - z) * (y - z)).sum();
                assert!(ip <= 1e-10, "variational inequality violated: {ip}");
            }
        }
    }

    #[test]
    fn repair_enforces_exact_feasibility() {
        let mut z = vec![0.1, 0.1 + 0.01 + 1e-9, 0.5, -0.2];
        repair_chain(&mut z, 0.0, 1.0, 0.01);
        assert!(feasible(&z, 0.0, 1.0, 0.01));
    }
}
