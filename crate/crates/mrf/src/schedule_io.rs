//! Schedule CSV: header `n,alpha_deg,phi_deg,te_ms,tr_ms`, one row per TR,
//! `n` counting from 1. Lines starting with `#` are comments.

use std::path::Path;

use serde::{Deserialize, Serialize};

use mrf_core::bloch::{AcqParams, AcqSchedule};

use crate::error::CliError;

const DEG: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    n: usize,
    alpha_deg: f64,
    phi_deg: f64,
    te_ms: f64,
    tr_ms: f64,
}

pub fn parse_schedule(text: &str) -> Result<AcqSchedule, CliError> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| CliError::Validation(format!("schedule: {e}")))?;
        if row.n != i + 1 {
            return Err(CliError::Validation(format!("schedule: row {} has n = {}", i + 1, row.n)));
        }
        entries.push(AcqParams::new(row.alpha_deg * DEG, row.phi_deg * DEG, row.te_ms, row.tr_ms)?);
    }
    Ok(AcqSchedule::new(entries)?)
}

pub fn read_schedule(path: &Path) -> Result<AcqSchedule, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_schedule(&text)
}

/// Serializes with an optional leading comment line.
pub fn format_schedule(schedule: &AcqSchedule, comment: &str) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for (i, u) in schedule.entries().iter().enumerate() {
        writer
            .serialize(Row {
                n: i + 1,
                alpha_deg: u.alpha / DEG,
                phi_deg: u.phi / DEG,
                te_ms: u.te,
                tr_ms: u.tr,
            })
            .expect("in-memory write");
    }
    let body = String::from_utf8(writer.into_inner().expect("in-memory write")).expect("csv output is UTF-8");
    format!("{comment}{body}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrf_core::bloch::conventional_schedule;

    #[test]
    fn round_trip_preserves_values() {
        let s = conventional_schedule(50, 3).unwrap();
        let back = parse_schedule(&format_schedule(&s, "# note\n")).unwrap();
        for (a, b) in s.entries().iter().zip(back.entries()) {
            assert!((a.alpha - b.alpha).abs() < 1e-14);
            assert_eq!(a.tr, b.tr);
            assert_eq!(a.te, b.te);
        }
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(parse_schedule("n,alpha_deg,phi_deg,te_ms,tr_ms\n2,10,0,2,12\n").is_err());
        assert!(parse_schedule("n,alpha_deg,phi_deg,te_ms,tr_ms\n1,10,0,13,12\n").is_err());
        assert!(parse_schedule("n,alpha_deg\n1,10\n").is_err());
        assert!(parse_schedule("n,alpha_deg,phi_deg,te_ms,tr_ms\n").is_err());
    }
}
