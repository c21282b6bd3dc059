//! Dictionary container.
//!
//! All integers and floats are little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `MRFDICT\0` | 8 bytes |
//! | format version | u32 |
//! | schedule length `N` | u64 |
//! | atom count `K` | u64 |
//! | isochromat count `Nv` | u64 |
//! | T1 segment count, then `(start, end, step)` per segment | u32, f64 x 3 |
//! | T2 segment count, then `(start, end, step)` per segment | u32, f64 x 3 |
//! | schedule, `(alpha, phi, te, tr)` per TR (rad, rad, ms, ms) | f64 x 4N |
//! | isochromat dephasing angles | f64 x Nv |
//! | atoms `(t1, t2)` | f64 x 2K |
//! | trajectories, atom-major, `(mx, my)` per TR | f64 x 2NK |
//!
//! Segment counts of zero on both axes mean the atoms were given explicitly.
//! A JSON sidecar repeats the header fields and the SHA-256 of the binary.

use std::path::Path;

use serde::Serialize;

use mrf_core::bloch::{AcqParams, AcqSchedule, IsochromatEnsemble};
use mrf_core::dictionary::{Dictionary, GridSpec, Segment};

use crate::error::CliError;
use crate::provenance::{sha256_hex, Provenance};

pub const MAGIC: &[u8; 8] = b"MRFDICT\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_f64s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_segments(out: &mut Vec<u8>, segments: &[Segment]) {
    out.extend_from_slice(&(segments.len() as u32).to_le_bytes());
    for s in segments {
        put_f64s(out, [s.start, s.end, s.step]);
    }
}

pub fn encode(dict: &Dictionary) -> Vec<u8> {
    let n = dict.schedule().len();
    let mut out = Vec::with_capacity(64 + 8 * (dict.trajectories().len() + 2 * dict.len() + 4 * n));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [n, dict.len(), dict.ensemble().nv()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let empty = GridSpec {
        t1_segments: Vec::new(),
        t2_segments: Vec::new(),
    };
    let grid = dict.grid().unwrap_or(&empty);
    put_segments(&mut out, &grid.t1_segments);
    put_segments(&mut out, &grid.t2_segments);
    put_f64s(&mut out, dict.schedule().entries().iter().flat_map(|u| [u.alpha, u.phi, u.te, u.tr]));
    put_f64s(&mut out, dict.ensemble().betas().iter().copied());
    put_f64s(&mut out, dict.atoms().iter().flat_map(|&(a, b)| [a, b]));
    put_f64s(&mut out, dict.trajectories().iter().copied());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], CliError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::Validation("dictionary file is truncated".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<usize, CliError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| CliError::Validation("dictionary size overflows".into()))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>, CliError> {
        let len = count.checked_mul(8).ok_or_else(|| CliError::Validation("dictionary size overflows".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn segments(&mut self) -> Result<Vec<Segment>, CliError> {
        let count = self.u32()? as usize;
        Ok(self.f64s(3 * count)?.chunks_exact(3).map(|s| Segment::new(s[0], s[1], s[2])).collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Dictionary, CliError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(CliError::Validation("not a dictionary file (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(CliError::Validation(format!("unsupported dictionary format version {version}")));
    }
    let n = c.u64()?;
    let count = c.u64()?;
    let nv = c.u64()?;
    let t1_segments = c.segments()?;
    let t2_segments = c.segments()?;
    let grid = if t1_segments.is_empty() && t2_segments.is_empty() {
        None
    } else {
        Some(GridSpec { t1_segments, t2_segments })
    };
    let entries = c
        .f64s(4 * n)?
        .chunks_exact(4)
        .map(|u| AcqParams::new(u[0], u[1], u[2], u[3]))
        .collect::<Result<Vec<_>, _>>()?;
    let schedule = AcqSchedule::new(entries)?;
    let ensemble = IsochromatEnsemble::new(c.f64s(nv)?)?;
    let atoms = c.f64s(2 * count)?.chunks_exact(2).map(|a| (a[0], a[1])).collect();
    let trajectories = c.f64s(2 * n * count)?;
    if c.pos != bytes.len() {
        return Err(CliError::Validation("trailing bytes after dictionary".into()));
    }
    Ok(Dictionary::from_parts(atoms, trajectories, schedule, ensemble, grid)?)
}

#[derive(Debug, Serialize)]
pub struct Sidecar<'a> {
    pub provenance: &'a Provenance,
    pub format_version: u32,
    pub binary: String,
    pub binary_sha256: String,
    pub schedule_length: usize,
    pub atom_count: usize,
    pub isochromats: usize,
    pub grid: Option<&'a GridSpec>,
}

/// Writes `<stem>.bin` and `<stem>.json` into `dir`.
pub fn write(dict: &Dictionary, dir: &Path, stem: &str, provenance: &Provenance) -> Result<(), CliError> {
    let bytes = encode(dict);
    let bin = dir.join(format!("{stem}.bin"));
    std::fs::write(&bin, &bytes).map_err(|e| CliError::io(&bin, e))?;
    let sidecar = Sidecar {
        provenance,
        format_version: FORMAT_VERSION,
        binary: format!("{stem}.bin"),
        binary_sha256: sha256_hex(&bytes),
        schedule_length: dict.schedule().len(),
        atom_count: dict.len(),
        isochromats: dict.ensemble().nv(),
        grid: dict.grid(),
    };
    let json = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(&json, text).map_err(|e| CliError::io(&json, e))
}

pub fn read(path: &Path) -> Result<Dictionary, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrf_core::bloch::conventional_schedule;

    fn sample(grid: bool) -> Dictionary {
        let s = conventional_schedule(30, 1).unwrap();
        let e = IsochromatEnsemble::uniform(6).unwrap();
        if grid {
            let g = GridSpec {
                t1_segments: vec![Segment::new(600.0, 700.0, 50.0)],
                t2_segments: vec![Segment::new(40.0, 60.0, 10.0), Segment::new(60.0, 80.0, 20.0)],
            };
            Dictionary::from_grid(&s, &g, &e).unwrap()
        } else {
            Dictionary::generate(&s, &[(800.0, 70.0)], &e).unwrap()
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for grid in [true, false] {
            let d = sample(grid);
            let bytes = encode(&d);
            let back = decode(&bytes).unwrap();
            assert_eq!(back, d);
            assert_eq!(encode(&back), bytes);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode(&sample(true));
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(decode(&version).is_err());
    }
}
