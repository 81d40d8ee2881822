use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use wassrisk_core::estimate::RiskEstimate;
use wassrisk_core::finance::BoundsRow;
use wassrisk_core::solvers::LogRecord;

use crate::failure::Failure;

/// First line of every CSV written here; readers skip it as a comment.
pub fn schema_line(kind: &str) -> String {
    format!("# wassrisk {kind} v1")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub h: f64,
    pub seed: u64,
    pub value: f64,
    pub stderr: f64,
    pub baseline: f64,
    pub norm: f64,
    pub penalty_paid: f64,
    pub iterations: usize,
    pub flagged: bool,
}

impl ValueRow {
    pub fn new(e: &RiskEstimate, seed: u64) -> Self {
        Self {
            h: e.h,
            seed,
            value: e.value,
            stderr: e.stderr(),
            baseline: e.baseline,
            norm: e.norm,
            penalty_paid: e.penalty_paid,
            iterations: e.iterations,
            flagged: e.flagged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldRow {
    pub h: f64,
    pub seed: u64,
    pub x1: f64,
    pub x2: f64,
    pub theta1: f64,
    pub theta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub h: f64,
    pub seed: u64,
    pub epoch: usize,
    pub raw: f64,
    pub moving_average: f64,
    pub norm: f64,
    pub penalty: f64,
}

impl LogRow {
    pub fn new(h: f64, seed: u64, r: &LogRecord) -> Self {
        Self { h, seed, epoch: r.epoch, raw: r.raw, moving_average: r.moving_average, norm: r.norm, penalty: r.penalty }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsCsvRow {
    pub h: f64,
    pub lower: f64,
    pub upper: f64,
    pub bs_price: f64,
    pub stderr_lower: f64,
    pub stderr_upper: f64,
    pub clipped: bool,
}

impl From<&BoundsRow> for BoundsCsvRow {
    fn from(r: &BoundsRow) -> Self {
        Self {
            h: r.h,
            lower: r.lower,
            upper: r.upper,
            bs_price: r.bs_price,
            stderr_lower: r.stderr_lower,
            stderr_upper: r.stderr_upper,
            clipped: r.clipped,
        }
    }
}

/// Writes `rows` to `path`, replacing any previous file.
pub fn write_csv<T: Serialize>(path: &Path, kind: &str, rows: &[T]) -> Result<(), Failure> {
    let mut file = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    writeln!(file, "{}", schema_line(kind))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut file = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    writeln!(file)?;
    Ok(())
}

/// Reads a values CSV written by `run`, checking its schema line.
pub fn read_values(path: &Path) -> Result<Vec<ValueRow>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != schema_line("values") {
        return Err(Failure::Config(format!("{}: not a values v1 file", path.display())));
    }
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Failure::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("values.csv");
        let rows = vec![
            ValueRow { h: 0.1, seed: 3, value: 0.25, stderr: 0.0, baseline: 0.2, norm: 0.1, penalty_paid: 0.01, iterations: 7, flagged: false },
            ValueRow { h: 1.0 / 3.0, seed: 3, value: 0.1 + 0.2, stderr: 1e-4, baseline: 0.2, norm: 0.3, penalty_paid: 0.02, iterations: 9, flagged: true },
        ];
        write_csv(&path, "values", &rows).unwrap();
        assert_eq!(read_values(&path).unwrap(), rows);
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "h,value\n0.1,0.2\n").unwrap();
        assert!(read_values(&path).is_err());
    }
}
