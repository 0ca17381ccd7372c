//! File formats: curve tables (CSV or the `FSRV1` binary layout), strata,
//! estimates, bands and score tables.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::bands::{band_area, band_area_absolute, ClipDiagnostics, ConfidenceBand};
use crate::bandwidth::BandwidthSelection;
use crate::design::StratumAssignment;
use crate::error::{config, Error, Result};
use crate::estimate::{CovarianceEstimate, MeanEstimate};
use crate::matrix::CurveMatrix;
use crate::numerics::TimeGrid;

pub const BINARY_MAGIC: &[u8; 5] = b"FSRV1";

/// Formatting shared by every CSV writer: shortest round-trip representation.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// One row per curve; the header holds the grid times.
pub fn write_curves_csv(path: &Path, grid: &TimeGrid, curves: &CurveMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(grid.points().iter().map(|t| fmt(*t)))?;
    for row in curves.iter_rows() {
        w.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves_csv(path: &Path) -> Result<(TimeGrid, CurveMatrix)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header = r.headers()?.clone();
    let times = parse_row(&header, path, 0)?;
    let grid = TimeGrid::new(times)?;
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let values = parse_row(&rec, path, i + 1)?;
        if values.len() != grid.len() {
            return config(format!("{}: row {} has {} values, expected {}", path.display(), i + 1, values.len(), grid.len()));
        }
        data.extend(values);
        rows += 1;
    }
    Ok((grid.clone(), CurveMatrix::from_vec(rows, grid.len(), data)?))
}

fn parse_row(rec: &csv::StringRecord, path: &Path, line: usize) -> Result<Vec<f64>> {
    rec.iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("{}: line {}: not a number: {s:?}", path.display(), line + 1)))
        })
        .collect()
}

/// `FSRV1` layout: magic, `u64` row count, `u64` column count, the grid, then
/// the curves row by row; all numbers little-endian.
pub fn write_curves_binary(path: &Path, grid: &TimeGrid, curves: &CurveMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(curves.rows() as u64).to_le_bytes())?;
    w.write_all(&(grid.len() as u64).to_le_bytes())?;
    for v in grid.points().iter().chain(curves.as_slice()) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves_binary(path: &Path) -> Result<(TimeGrid, CurveMatrix)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return config(format!("{}: not an FSRV1 file", path.display()));
    }
    let mut word = [0u8; 8];
    let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let total = cols
        .checked_mul(rows.saturating_add(1))
        .filter(|t| *t <= (1 << 32))
        .ok_or_else(|| Error::Config(format!("{}: implausible dimensions {rows}x{cols}", path.display())))?;
    let mut bytes = vec![0u8; total * 8];
    r.read_exact(&mut bytes)?;
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let grid = TimeGrid::new(values.by_ref().take(cols).collect())?;
    Ok((grid, CurveMatrix::from_vec(rows, cols, values.collect())?))
}

fn is_binary(path: &Path) -> bool {
    matches!(path.extension().and_then(|e| e.to_str()), Some("bin" | "fsrv"))
}

/// Writes CSV, or `FSRV1` when the extension is `.bin` or `.fsrv`.
pub fn write_curves(path: &Path, grid: &TimeGrid, curves: &CurveMatrix) -> Result<()> {
    if is_binary(path) {
        write_curves_binary(path, grid, curves)
    } else {
        write_curves_csv(path, grid, curves)
    }
}

pub fn read_curves(path: &Path) -> Result<(TimeGrid, CurveMatrix)> {
    if is_binary(path) {
        read_curves_binary(path)
    } else {
        read_curves_csv(path)
    }
}

/// `unit,stratum` for every unit.
pub fn write_strata_csv(path: &Path, strata: &StratumAssignment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["unit", "stratum"])?;
    for (k, g) in strata.labels().iter().enumerate() {
        w.write_record([k.to_string(), g.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `stratum,size,allocation`.
pub fn write_allocation_csv(path: &Path, sizes: &[usize], allocation: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["stratum", "size", "allocation"])?;
    for (g, (s, a)) in sizes.iter().zip(allocation).enumerate() {
        w.write_record([g.to_string(), s.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `t,mean`.
pub fn write_mean_csv(path: &Path, mean: &MeanEstimate) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "mean"])?;
    for (t, m) in mean.grid().points().iter().zip(mean.values()) {
        w.write_record([fmt(*t), fmt(*m)])?;
    }
    w.flush()?;
    Ok(())
}

/// Full `d x d` matrix with the grid times as header.
pub fn write_covariance_csv(path: &Path, cov: &CovarianceEstimate) -> Result<()> {
    let d = cov.grid().len();
    let dense = cov.matrix().to_dense();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(cov.grid().points().iter().map(|t| fmt(*t)))?;
    for i in 0..d {
        w.write_record(dense[i * d..(i + 1) * d].iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// `t,center,lower,upper`.
pub fn write_band_csv(path: &Path, band: &ConfidenceBand) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "center", "lower", "upper"])?;
    for (j, t) in band.grid.points().iter().enumerate() {
        let (c, h) = (band.center[j], band.halfwidth[j]);
        w.write_record([fmt(*t), fmt(c), fmt(c - h), fmt(c + h)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BandSummary {
    pub c: f64,
    pub alpha: f64,
    pub replicates: usize,
    pub population_size: usize,
    /// `int 2 c sigma_hat dt`.
    pub area: f64,
    /// `int 2 c sigma_hat / sqrt(N) dt`.
    pub area_absolute: f64,
    pub clip: ClipDiagnostics,
    pub negative_variances: usize,
}

impl From<&ConfidenceBand> for BandSummary {
    fn from(b: &ConfidenceBand) -> Self {
        Self {
            c: b.threshold,
            alpha: b.alpha,
            replicates: b.replicates,
            population_size: b.population_size,
            area: band_area(b),
            area_absolute: band_area_absolute(b),
            clip: b.diagnostics,
            negative_variances: b.negative_variances,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// `h,wcv`.
pub fn write_scores_csv(path: &Path, selection: &BandwidthSelection) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["h", "wcv"])?;
    for (h, s) in &selection.scores {
        w.write_record([fmt(*h), fmt(*s)])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (TimeGrid, CurveMatrix) {
        let grid = TimeGrid::new(vec![0.0, 0.1, 0.35, 1.0]).unwrap();
        let curves = CurveMatrix::from_rows(&[
            vec![1.0, -2.5, 1e-300, 0.1 + 0.2],
            vec![f64::MAX, 3.0, 4.0, -0.0],
        ])
        .unwrap();
        (grid, curves)
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.csv");
        let (grid, curves) = sample();
        write_curves(&path, &grid, &curves).unwrap();
        let (g, c) = read_curves(&path).unwrap();
        assert_eq!(g, grid);
        assert_eq!(c, curves);
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.bin");
        let (grid, curves) = sample();
        write_curves(&path, &grid, &curves).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..5], b"FSRV1");
        assert_eq!(bytes.len(), 5 + 16 + 8 * 4 * 3);
        let (g, c) = read_curves(&path).unwrap();
        assert_eq!(g, grid);
        assert_eq!(c, curves);
    }

    #[test]
    fn malformed_inputs_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "0,0.5,1\n1,2\n").unwrap();
        assert!(read_curves(&bad).is_err());
        std::fs::write(&bad, "0,0.5,1\n1,x,3\n").unwrap();
        assert!(matches!(read_curves(&bad), Err(Error::Config(_))));
        let bin = dir.path().join("bad.bin");
        std::fs::write(&bin, b"NOPE1xxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(read_curves(&bin), Err(Error::Config(_))));
    }
}
