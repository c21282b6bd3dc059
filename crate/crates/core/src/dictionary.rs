//! Dictionary generation over a `(T1, T2)` grid and maximum-likelihood
//! pattern matching.
//!
//! Atoms are unit-`M0` trajectories flattened to `2N` real channels and
//! stored contiguously. Under i.i.d. Gaussian noise the ML estimate over the
//! grid maximizes `<d, s> / ||d||`; `M0` is then the least-squares scale
//! `<d, s> / ||d||^2`, clamped at zero.

use alloc::format;
use alloc::vec::Vec;

use crate::bloch::{simulate, AcqSchedule, IsochromatEnsemble, TissueParams};
use crate::error::{Error, Result};
use crate::math::{map_indexed, sqrt};

/// Atoms whose trajectory norm falls below this are rejected.
pub const MIN_ATOM_NORM: f64 = 1e-12;

/// Arithmetic run `start, start + step, ...` up to `end` (inclusive).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Segment {
    pub const fn new(start: f64, end: f64, step: f64) -> Self {
        Self { start, end, step }
    }
}

/// Piecewise-uniform discretization of the T1 and T2 axes.
///
/// Segments are enumerated in order; a value is kept only if it lies
/// strictly above the last value already emitted, so consecutive segments
/// may share an anchor point (e.g. `[20, 1500]` step 10 followed by
/// `[1500, 3000]` step 30 yields `..., 1490, 1500, 1530, 1560, ...`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub t1_segments: Vec<Segment>,
    pub t2_segments: Vec<Segment>,
}

impl GridSpec {
    /// T1 in [20, 3000] ms (10 ms steps to 1500, 30 ms after) and T2 in
    /// [30, 500] ms (1 ms steps to 200, 5 ms after): 199 x 231 atoms.
    pub fn reference() -> Self {
        Self {
            t1_segments: alloc::vec![Segment::new(20.0, 1500.0, 10.0), Segment::new(1500.0, 3000.0, 30.0)],
            t2_segments: alloc::vec![Segment::new(30.0, 200.0, 1.0), Segment::new(200.0, 500.0, 5.0)],
        }
    }

    /// Single-segment grid `center +- half_width` on each axis.
    pub fn local(center: (f64, f64), half_width: (f64, f64), step: (f64, f64)) -> Self {
        Self {
            t1_segments: alloc::vec![Segment::new(center.0 - half_width.0, center.0 + half_width.0, step.0)],
            t2_segments: alloc::vec![Segment::new(center.1 - half_width.1, center.1 + half_width.1, step.1)],
        }
    }

    pub fn t1_values(&self) -> Result<Vec<f64>> {
        expand_axis(&self.t1_segments)
    }

    pub fn t2_values(&self) -> Result<Vec<f64>> {
        expand_axis(&self.t2_segments)
    }
}

/// Enumerates one axis of a grid.
pub fn expand_axis(segments: &[Segment]) -> Result<Vec<f64>> {
    if segments.is_empty() {
        return Err(Error::InvalidGrid("no segments".into()));
    }
    let mut prev_end = f64::NEG_INFINITY;
    let mut values: Vec<f64> = Vec::new();
    for s in segments {
        if !(s.start.is_finite() && s.end.is_finite() && s.step.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite segment {s:?}")));
        }
        if !(s.step > 0.0) || s.start > s.end || s.start <= 0.0 {
            return Err(Error::InvalidGrid(format!(
                "segment needs 0 < start <= end and step > 0, got {s:?}"
            )));
        }
        if s.start < prev_end {
            return Err(Error::InvalidGrid(format!("segment {s:?} overlaps its predecessor")));
        }
        prev_end = s.end;
        let slack = 1e-9 * s.step;
        let mut k = 0u64;
        loop {
            let v = s.start + k as f64 * s.step;
            if v > s.end + slack {
                break;
            }
            if values.last().map_or(true, |&last| v > last) {
                values.push(v);
            }
            k += 1;
        }
    }
    Ok(values)
}

/// Cartesian product of the two axes, T1-major.
pub fn build_grid(spec: &GridSpec) -> Result<Vec<(f64, f64)>> {
    let t1 = spec.t1_values()?;
    let t2 = spec.t2_values()?;
    let mut atoms = Vec::with_capacity(t1.len() * t2.len());
    for &a in &t1 {
        for &b in &t2 {
            atoms.push((a, b));
        }
    }
    Ok(atoms)
}

/// Immutable set of simulated unit-`M0` trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Vec<(f64, f64)>,
    trajectories: Vec<f64>,
    norms: Vec<f64>,
    schedule: AcqSchedule,
    ensemble: IsochromatEnsemble,
    grid: Option<GridSpec>,
}

impl Dictionary {
    /// Simulates every atom.
    pub fn generate(
        schedule: &AcqSchedule,
        atoms: &[(f64, f64)],
        ensemble: &IsochromatEnsemble,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidGrid("no atoms".into()));
        }
        let per_atom = map_indexed(atoms.len(), |i| {
            let (t1, t2) = atoms[i];
            simulate(schedule, &TissueParams::new(t1, t2, 1.0)?, ensemble).map(|m| m.to_flat())
        });
        let stride = 2 * schedule.len();
        let mut trajectories = Vec::with_capacity(stride * atoms.len());
        for traj in per_atom {
            trajectories.extend_from_slice(&traj?);
        }
        Self::from_parts(atoms.to_vec(), trajectories, schedule.clone(), ensemble.clone(), None)
    }

    pub fn from_grid(schedule: &AcqSchedule, grid: &GridSpec, ensemble: &IsochromatEnsemble) -> Result<Self> {
        let mut d = Self::generate(schedule, &build_grid(grid)?, ensemble)?;
        d.grid = Some(grid.clone());
        Ok(d)
    }

    /// Reassembles a dictionary from stored trajectories; norms are
    /// recomputed.
    pub fn from_parts(
        atoms: Vec<(f64, f64)>,
        trajectories: Vec<f64>,
        schedule: AcqSchedule,
        ensemble: IsochromatEnsemble,
        grid: Option<GridSpec>,
    ) -> Result<Self> {
        let stride = 2 * schedule.len();
        if trajectories.len() != stride * atoms.len() {
            return Err(Error::LengthMismatch {
                expected: stride * atoms.len(),
                found: trajectories.len(),
            });
        }
        let mut norms = Vec::with_capacity(atoms.len());
        for (index, traj) in trajectories.chunks_exact(stride).enumerate() {
            let norm = sqrt(traj.iter().map(|v| v * v).sum::<f64>());
            if !(norm >= MIN_ATOM_NORM) {
                let (t1, t2) = atoms[index];
                return Err(Error::DegenerateAtom { index, t1, t2 });
            }
            norms.push(norm);
        }
        Ok(Self {
            atoms,
            trajectories,
            norms,
            schedule,
            ensemble,
            grid,
        })
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Length of each flattened trajectory (`2N`).
    pub fn signal_len(&self) -> usize {
        2 * self.schedule.len()
    }

    pub fn trajectory(&self, index: usize) -> &[f64] {
        let stride = self.signal_len();
        &self.trajectories[index * stride..(index + 1) * stride]
    }

    /// All trajectories, atom-major.
    pub fn trajectories(&self) -> &[f64] {
        &self.trajectories
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn schedule(&self) -> &AcqSchedule {
        &self.schedule
    }

    pub fn ensemble(&self) -> &IsochromatEnsemble {
        &self.ensemble
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        self.grid.as_ref()
    }
}

/// Matched atom and fitted scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub t1: f64,
    pub t2: f64,
    pub m0: f64,
    /// `<d, s> / ||d||` of the winning atom.
    pub score: f64,
    pub index: usize,
}

impl Estimate {
    pub fn to_array(self) -> [f64; 3] {
        [self.t1, self.t2, self.m0]
    }
}

const MATCH_CHUNK: usize = 512;

/// Best atom for a flattened `2N` signal. Ties go to the lowest index.
pub fn match_signal(signal: &[f64], dict: &Dictionary) -> Result<Estimate> {
    let len = dict.signal_len();
    if signal.len() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            found: signal.len(),
        });
    }
    let chunks = dict.len().div_ceil(MATCH_CHUNK);
    // (score, inner product, index) per chunk, first maximum within a chunk.
    let best = map_indexed(chunks, |c| {
        let lo = c * MATCH_CHUNK;
        let hi = (lo + MATCH_CHUNK).min(dict.len());
        let mut best = (f64::NEG_INFINITY, 0.0, lo);
        for i in lo..hi {
            let ip: f64 = dict.trajectory(i).iter().zip(signal).map(|(a, b)| a * b).sum();
            let score = ip / dict.norms[i];
            if score > best.0 {
                best = (score, ip, i);
            }
        }
        best
    });
    let (score, ip, index) = best
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("dictionary is never empty");
    let norm = dict.norms[index];
    let (t1, t2) = dict.atoms[index];
    Ok(Estimate {
        t1,
        t2,
        m0: (ip / (norm * norm)).max(0.0),
        score,
        index,
    })
}
